// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "aspectprobe/conformance.hpp"
#include "aspectprobe/wire.hpp"
#include "support.hpp"

using namespace aspectprobe;

namespace {
struct Served {
    ToyMlm toy = testing::toy();
    wire::Server server{toy};
    std::string url;
    Served() { url = "http://127.0.0.1:" + std::to_string(server.start("127.0.0.1", 0)); }
};
}  // namespace

TEST_CASE("HTTP client against an in-process toy server") {
    Served s;
    wire::HttpSession client(s.url, 3);
    const auto m = client.meta();
    CHECK(m.n_layers == 4);
    CHECK(m.hidden_size == 16);
    CHECK(m.vocab_size == 64);

    const auto e = client.encode("он abcd", {3, 7});
    const auto d = s.toy.encode("он abcd", {3, 7});
    CHECK(e.token_ids == d.token_ids);
    CHECK(e.target_subtokens == d.target_subtokens);
    CHECK(e.mask_position == d.mask_position);

    MaskQuery q{d.token_ids, d.mask_position, {0, 4}, 8, {d.target_subtokens[0]}, {d.target_subtokens[1]}};
    const auto remote = client.mask_distributions(q);
    const auto local = s.toy.mask_distributions(q);
    REQUIRE(remote.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(remote[i].layer == local[i].layer);
        REQUIRE(remote[i].entries.size() == 8);
        for (std::size_t k = 0; k < 8; ++k) {
            CHECK(remote[i].entries[k].first == local[i].entries[k].first);
            CHECK(std::fabs(remote[i].entries[k].second - local[i].entries[k].second) < 1e-6);
        }
        REQUIRE(remote[i].query_probs.size() == 1);
        CHECK(std::fabs(remote[i].query_probs[0] - local[i].query_probs[0]) < 1e-6);
    }

    const auto h = client.hidden_state(d.token_ids, d.mask_position, 2);
    const auto hl = s.toy.hidden_state(d.token_ids, d.mask_position, 2);
    REQUIRE(h.size() == 16);
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::fabs(h[c] - hl[c]) < 1e-5);

    const auto samples = client.dropout_samples(d.token_ids, d.mask_position, 3);
    CHECK(samples.size() == 3);
}

TEST_CASE("wire errors carry the contract code") {
    Served s;
    wire::HttpSession client(s.url);
    const auto d = s.toy.encode("он abcd", {3, 7});
    try {
        client.hidden_state(d.token_ids, d.mask_position, 9);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == "layer_out_of_range");
    }
    wire::HttpSession nowhere("http://127.0.0.1:1");
    CHECK_THROWS_AS(nowhere.meta(), Error);
}

TEST_CASE("handle() routes without HTTP") {
    auto toy = testing::toy();
    std::mutex lock;
    auto [status, body] = wire::handle(toy, lock, "/meta", nlohmann::json::object());
    CHECK(status == 200);
    CHECK(body["n_layers"] == 4);
    std::tie(status, body) = wire::handle(toy, lock, "/nope", nlohmann::json::object());
    CHECK(status == 404);
    std::tie(status, body) = wire::handle(toy, lock, "/hidden_state", nlohmann::json{{"token_ids", "x"}});
    CHECK(status == 400);
}

TEST_CASE("conformance checks pass on the toy backend, locally and over HTTP") {
    auto toy = testing::toy();
    const auto local = check_conformance(toy);
    for (const auto& c : local.checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
    Served s;
    wire::HttpSession client(s.url);
    const auto remote = check_conformance(client);
    for (const auto& c : remote.checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
    CHECK(remote.checks.size() == 6);
}
