// SPDX-License-Identifier: Apache-2.0
// Serves the toy MLM over the wire protocol.
#include <CLI11.hpp>

#include <iostream>

#include "aspectprobe/error.hpp"
#include "aspectprobe/toy_mlm.hpp"
#include "aspectprobe/wire.hpp"

int main(int argc, char** argv) {
    CLI::App app{"toy masked LM wire server"};
    std::string weights, host = "127.0.0.1";
    int port = 8765;
    double dropout = 0.1;
    app.add_option("--weights", weights, "toy weight JSON")->required();
    app.add_option("--host", host);
    app.add_option("--port", port);
    app.add_option("--dropout", dropout, "dropout rate for /dropout_samples");
    CLI11_PARSE(app, argc, argv);
    try {
        auto toy = aspectprobe::ToyMlm::load(weights);
        toy.set_dropout_rate(dropout);
        aspectprobe::wire::Server server(toy);
        std::cerr << "listening on " << host << ":" << port << '\n';
        server.listen_blocking(host, port);
    } catch (const aspectprobe::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
