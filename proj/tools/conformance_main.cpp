// SPDX-License-Identifier: Apache-2.0
// Runs the backend conformance checks against a wire endpoint.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "aspectprobe/conformance.hpp"
#include "aspectprobe/error.hpp"
#include "aspectprobe/wire.hpp"

int main(int argc, char** argv) {
    CLI::App app{"backend conformance checks"};
    std::string url;
    double tolerance = 1e-5;
    app.add_option("--url", url, "bridge base URL (default: $ASPECTPROBE_BACKEND_URL)");
    app.add_option("--tolerance", tolerance, "identity-substitution tolerance");
    CLI11_PARSE(app, argc, argv);
    if (url.empty()) {
        const char* env = std::getenv("ASPECTPROBE_BACKEND_URL");
        if (env == nullptr) {
            std::cerr << "no --url and ASPECTPROBE_BACKEND_URL unset\n";
            return 1;
        }
        url = env;
    }
    aspectprobe::wire::HttpSession session(url);
    aspectprobe::ConformanceProbe probe;
    probe.tolerance = tolerance;
    const auto report = aspectprobe::check_conformance(session, probe);
    for (const auto& c : report.checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.passed) std::cout << ": " << c.detail;
        std::cout << '\n';
    }
    return report.ok() ? 0 : 2;
}
