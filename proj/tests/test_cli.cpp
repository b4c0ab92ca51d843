// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "aspectprobe/cli.hpp"
#include "oracle/causal_oracle.hpp"
#include "support.hpp"

using namespace aspectprobe;
using cli::Config;
using cli::ConfigError;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ASPECTPROBE_CLI + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Keeps the first `keep` columns of every line.
std::string first_columns(const std::string& csv, std::size_t keep) {
    std::stringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string cell;
        for (std::size_t i = 0; i < keep && std::getline(ls, cell, ','); ++i) out += (i ? "," : "") + cell;
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("layer specs") {
    using V = std::vector<int>;
    CHECK(cli::parse_layers("all", 3) == V{0, 1, 2, 3});
    CHECK(cli::parse_layers("1-3", 4) == V{1, 2, 3});
    CHECK(cli::parse_layers("0,2", 4) == V{0, 2});
    CHECK(cli::parse_layers(2, 4) == V{2});
    CHECK(cli::parse_layers(nlohmann::json::array({4, 1}), 4) == V{4, 1});
    CHECK_THROWS_AS(cli::parse_layers(5, 4), ConfigError);
    CHECK_THROWS_AS(cli::parse_layers("3-1", 4), ConfigError);
    CHECK_THROWS_AS(cli::parse_layers("x", 4), ConfigError);
    CHECK_THROWS_AS(cli::parse_layers(1.5, 4), ConfigError);
}

TEST_CASE("config access and overrides") {
    Config c;
    CHECK(c.integer("seed") == 0);
    CHECK(c.integer("behavioral.k") == 12000);
    c.apply_override("behavioral.k=7");
    CHECK(c.integer("behavioral.k") == 7);
    c.apply_override("causal.direction=positive");
    CHECK(c.str("causal.direction") == "positive");
    c.apply_override("new.nested.key=[1,2]");
    CHECK(c.at("new.nested.key").size() == 2);
    CHECK_THROWS_AS(c.apply_override("novalue"), ConfigError);
    CHECK_THROWS_AS(c.at("missing.key"), ConfigError);
    CHECK_THROWS_AS(c.integer("causal.direction"), ConfigError);
    CHECK_THROWS_AS(c.path("data.probing"), ConfigError);
}

TEST_CASE("config file paths resolve against the file") {
    const auto c = Config::load(testing::data("toy/config.json"));
    CHECK(c.integer("seed") == 7);
    CHECK(c.path("data.probing") == testing::data("toy/probing.jsonl").lexically_normal());
    CHECK(c.path("data.cues") == testing::data("cues.json").lexically_normal());
    CHECK_THROWS_AS(Config::load(testing::data("missing.json")), ConfigError);
}

TEST_CASE("exit codes") {
    CHECK(cli::run({"aspectprobe"}) == 1);
    CHECK(cli::run({"aspectprobe", "no-such-command"}) == 1);
    CHECK(cli::run({"aspectprobe", "--help"}) == 0);
    const auto cfg = testing::data("toy/config.json").string();
    const auto out = testing::scratch("cli_exit");
    CHECK(cli::run({"aspectprobe", "probe-behavioral", "--config", cfg, "--layers", "9", "--out", out.string()}) == 1);
    CHECK(cli::run({"aspectprobe", "probe-behavioral", "--config", cfg, "--probing", (out / "none.jsonl").string(),
                    "--out", out.string()}) == 2);
    CHECK(cli::run({"aspectprobe", "probe-behavioral", "--config", cfg, "--layers", "4", "--out", out.string()}) == 0);
    CHECK(std::filesystem::exists(out / "layer_sweep.csv"));
    CHECK(std::filesystem::exists(out / "manifest.json"));
}

TEST_CASE("golden causal shift table") {
    const auto out = testing::scratch("cli_golden");
    const int rc = run_cli("probe-causal --config \"" + testing::data("toy/config.json").string() +
                           "\" --direction negative --layer 4 --subspace-file \"" +
                           testing::data("toy/subspace_layer4.json").string() + "\" --out \"" + out.string() + "\"");
    REQUIRE(rc == 0);
    const auto got = first_columns(testing::slurp(out / "causal_shift.csv"), 9);
    const auto golden = testing::slurp(testing::test_data("causal_golden.csv"));
    CHECK(got == golden);

    // The checked-in golden still matches the oracle.
    const oracle::ToyOracle o(testing::data("toy/toy_mlm.json").string());
    const auto fresh = oracle::causal_table(o, testing::toy(), testing::toy_probing(),
                                            load_vocab_map(testing::data("toy/vocab_map.tsv")),
                                            oracle::read_subspace(testing::data("toy/subspace_layer4.json").string()),
                                            true, 16);
    CHECK(fresh == golden);
}
