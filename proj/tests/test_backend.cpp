// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/toy_mlm.hpp"
#include "oracle/toy_oracle.hpp"
#include "support.hpp"

using namespace aspectprobe;

namespace {
const oracle::ToyOracle& ref() {
    static const oracle::ToyOracle o(testing::data("toy/toy_mlm.json").string());
    return o;
}
}  // namespace

TEST_CASE("toy meta") {
    const auto m = testing::toy().meta();
    CHECK(m.n_layers == 4);
    CHECK(m.hidden_size == 16);
    CHECK(m.vocab_size == 64);
    CHECK(m.mask_token_id == 4);
    CHECK(m.max_len == 32);
    CHECK(m.supports_dropout);
}

TEST_CASE("toy tokenizer and encode") {
    const auto t = testing::toy();
    SUBCASE("single vocabulary word") {
        const auto e = t.encode("Он читал книгу.", {3, 8});
        CHECK(e.target_subtokens.size() == 1);
        CHECK(e.token_ids[e.mask_position] == 4);
        CHECK(e.mask_position == 2);
    }
    SUBCASE("abcd splits into two pieces") {
        const auto e = t.encode("он abcd", {3, 7});
        REQUIRE(e.target_subtokens.size() == 2);
        CHECK(e.target_subtokens[0] == t.token_id("ab"));
        CHECK(e.target_subtokens[1] == t.token_id("##cd"));
        CHECK(e.mask_position == 2);
        CHECK(e.token_ids.size() == 4);
    }
    SUBCASE("three pieces") {
        CHECK(t.tokenize_word("прочитать").size() == 3);
    }
    SUBCASE("bad spans") {
        CHECK_THROWS_AS(t.encode("он", {1, 1}), Error);
        CHECK_THROWS_AS(t.encode("он", {0, 5}), Error);
    }
}

TEST_CASE("mask distributions") {
    const auto t = testing::toy();
    const auto e = t.encode("Он всегда читал книгу.", {10, 15});
    MaskQuery q{e.token_ids, e.mask_position, {0, 1, 2, 3, 4}, 64, {}, {}};
    const auto a = t.mask_distributions(q);
    const auto b = t.mask_distributions(q);
    REQUIRE(a.size() == 5);
    for (std::size_t l = 0; l < a.size(); ++l) {
        double sum = 0;
        for (const auto& [id, p] : a[l].entries) sum += p;
        CHECK(std::fabs(sum - 1.0) < 1e-6);
        CHECK(a[l].entries == b[l].entries);
        for (std::size_t i = 1; i < a[l].entries.size(); ++i) CHECK(a[l].entries[i - 1].second >= a[l].entries[i].second);
        // plain-loop oracle
        const auto o = ref().probs(std::vector<int>(e.token_ids.begin(), e.token_ids.end()), e.mask_position,
                                   static_cast<int>(l));
        for (const auto& [id, p] : a[l].entries) CHECK(std::fabs(p - o[static_cast<std::size_t>(id)]) < 1e-9);
    }
    SUBCASE("truncation keeps the top entries") {
        MaskQuery small = q;
        small.top_n = 5;
        const auto s = t.mask_distributions(small);
        REQUIRE(s[0].entries.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) CHECK(s[0].entries[i] == a[0].entries[i]);
    }
    SUBCASE("contract errors") {
        MaskQuery bad = q;
        bad.layers = {5};
        CHECK_THROWS_AS(t.mask_distributions(bad), Error);
        bad = q;
        bad.mask_position = 0;
        CHECK_THROWS_AS(t.mask_distributions(bad), Error);
    }
}

TEST_CASE("hidden states match the oracle") {
    const auto t = testing::toy();
    const auto e = t.encode("Она вдруг спела песню.", {10, 15});
    const std::vector<int> ids(e.token_ids.begin(), e.token_ids.end());
    for (int layer = 0; layer <= 4; ++layer) {
        const auto h = t.hidden_state(e.token_ids, e.mask_position, layer);
        const auto o = ref().states(ids, layer)[e.mask_position];
        REQUIRE(h.size() == 16);
        double err = 0, norm = 0;
        for (std::size_t c = 0; c < 16; ++c) {
            err = std::max(err, std::fabs(h[c] - o[c]));
            norm += h[c] * h[c];
        }
        CHECK(err < 1e-6);
        CHECK(std::isfinite(norm));
        CHECK(norm > 0);
        CHECK(t.hidden_state(e.token_ids, e.mask_position, layer) == h);
    }
}

TEST_CASE("substituted forward") {
    const auto t = testing::toy();
    const auto e = t.encode("Он всегда читал книгу.", {10, 15});
    const std::vector<int> ids(e.token_ids.begin(), e.token_ids.end());
    SUBCASE("identity substitution reproduces the baseline") {
        const auto base = t.mask_distributions({e.token_ids, e.mask_position, {4}, 64, {}, {}});
        for (int layer = 0; layer <= 4; ++layer) {
            const auto h = t.hidden_state(e.token_ids, e.mask_position, layer);
            const auto d = t.forward_substituted({e.token_ids, layer, e.mask_position, h, 64, {}});
            CHECK(d.entries == base[0].entries);
        }
    }
    SUBCASE("zero vector at the last layer is the head applied to zero") {
        const auto d = t.forward_substituted({e.token_ids, 4, e.mask_position, Vector(16, 0.0), 64, {}});
        const auto o = ref().head(oracle::Vec(16, 0.0));
        for (const auto& [id, p] : d.entries) CHECK(std::fabs(p - o[static_cast<std::size_t>(id)]) < 1e-9);
    }
    SUBCASE("mid-layer substitution against the oracle") {
        oracle::Vec v(16);
        for (int i = 0; i < 16; ++i) v[static_cast<std::size_t>(i)] = std::sin(i + 1.0);
        const auto d = t.forward_substituted({e.token_ids, 2, e.mask_position, v, 64, {}});
        const auto o = ref().substituted(ids, e.mask_position, 2, v);
        for (const auto& [id, p] : d.entries) CHECK(std::fabs(p - o[static_cast<std::size_t>(id)]) < 1e-9);
    }
    SUBCASE("wrong dimension") {
        CHECK_THROWS_AS(t.forward_substituted({e.token_ids, 2, e.mask_position, Vector(3, 0.0), 64, {}}), Error);
    }
}

TEST_CASE("dropout samples") {
    auto t = testing::toy();
    const auto e = t.encode("Он всегда читал книгу.", {10, 15});
    t.set_seed(7);
    const auto a = t.dropout_samples(e.token_ids, e.mask_position, 4);
    const auto b = t.dropout_samples(e.token_ids, e.mask_position, 4);
    CHECK(a == b);
    CHECK(a[0] != a[1]);
    t.set_dropout_rate(0.0);
    const auto z = t.dropout_samples(e.token_ids, e.mask_position, 3);
    CHECK(z[0] == z[1]);
    CHECK(z[1] == z[2]);
    CHECK_THROWS_AS(t.set_dropout_rate(1.0), Error);
}

TEST_CASE("insert_prefix contract") {
    const auto m = testing::toy().meta();
    const std::vector<TokenId> ids{2, 35, 4, 5, 3};
    const std::vector<TokenId> prefix{25};
    const auto [out, pos] = contract::insert_prefix(m, ids, 2, prefix);
    CHECK(out == std::vector<TokenId>{2, 35, 25, 4, 5, 3});
    CHECK(pos == 3);
    CHECK_THROWS_AS(contract::insert_prefix(m, ids, 1, prefix), Error);
}

TEST_CASE("resolve_vocab keeps single-token forms") {
    const auto t = testing::toy();
    VocabFeatureMap map;
    map.set_aspect("прочитал", Aspect::Perfective);
    map.set_aspect("читает", Aspect::Imperfective);  // two pieces in the toy vocabulary
    const auto r = resolve_vocab(t, map);
    CHECK(r.aspect.size() == 1);
    CHECK(r.aspect.at(t.token_id("прочитал")) == Aspect::Perfective);
    CHECK(r.segmented_skipped == 1);
}
