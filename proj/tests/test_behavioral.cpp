// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "aspectprobe/behavioral.hpp"
#include "oracle/toy_oracle.hpp"
#include "support.hpp"

using namespace aspectprobe;

namespace {

// Every subtoken gets probability 0.5 at every layer.
class FlatSession final : public Session {
public:
    BackendMeta meta() const override {
        BackendMeta m;
        m.n_layers = 2;
        m.hidden_size = 2;
        m.vocab_size = 10;
        m.mask_token_id = 1;
        m.max_len = 16;
        return m;
    }
    TokenizedTarget encode(const std::string&, CharSpan) const override { return {{0, 1, 2}, {7}, 1}; }
    std::vector<MaskDistribution> mask_distributions(const MaskQuery& q) const override {
        std::vector<MaskDistribution> out;
        for (int l : q.layers) {
            MaskDistribution d;
            d.layer = l;
            d.entries = {{7, 0.5}, {8, 0.5}};
            d.query_probs.assign(q.query_ids.size(), 0.5);
            out.push_back(d);
        }
        return out;
    }
    Vector hidden_state(std::span<const TokenId>, std::size_t, int) const override { return {0, 0}; }
    MaskDistribution forward_substituted(const SubstitutionQuery&) const override { return {}; }
    std::vector<Vector> dropout_samples(std::span<const TokenId>, std::size_t, int) const override { return {}; }
    void set_seed(std::uint64_t) override {}
    std::uint64_t seed() const override { return 0; }
};

const oracle::ToyOracle& ref() {
    static const oracle::ToyOracle o(testing::data("toy/toy_mlm.json").string());
    return o;
}

}  // namespace

TEST_CASE("iterative masking, one subtoken, is the single-pass probability") {
    const auto t = testing::toy();
    const auto inst = testing::instance("x", "Он всегда читал книгу.", 10, 15, "читал", "прочитал", Aspect::Imperfective);
    const auto target = encode_form(t, inst, FormChoice::Expected);
    REQUIRE(target.target_subtokens.size() == 1);
    const auto r = iterative_masking(t, target, {0, 2, 4});
    MaskQuery q{target.token_ids, target.mask_position, {0, 2, 4}, 1, {}, target.target_subtokens};
    const auto single = t.mask_distributions(q);
    for (const auto& d : single) CHECK(r.at(d.layer) == d.query_probs[0]);
}

TEST_CASE("iterative masking, two subtokens, against the oracle chain") {
    const auto t = testing::toy();
    const auto inst = testing::instance("x", "он abcd", 3, 7, "abcd", "ab", Aspect::Imperfective);
    const auto target = encode_form(t, inst, FormChoice::Expected);
    REQUIRE(target.target_subtokens.size() == 2);
    const auto r = iterative_masking(t, target, {1, 3});
    const auto& o = ref();
    const auto cls = o.id("[CLS]"), sep = o.id("[SEP]"), mask = o.id("[MASK]"), on = o.id("он");
    const auto ab = o.id("ab"), cd = o.id("##cd");
    for (int layer : {1, 3}) {
        const double p1 = o.probs({cls, on, mask, sep}, 2, layer)[ab];
        const double p2 = o.probs({cls, on, ab, mask, sep}, 3, layer)[cd];
        CHECK(std::fabs(r.at(layer) - (p1 + p2) / 2) < 1e-9);
    }
}

TEST_CASE("complementary form replaces the target span") {
    const auto t = testing::toy();
    const auto inst = testing::instance("x", "Он всегда читал книгу.", 10, 15, "читал", "прочитал", Aspect::Imperfective);
    const auto c = encode_form(t, inst, FormChoice::Complementary);
    REQUIRE(c.target_subtokens.size() == 1);
    CHECK(c.target_subtokens[0] == t.token_id("прочитал"));
}

TEST_CASE("aspect preference from a hand-built distribution") {
    ResolvedVocab v;
    v.aspect = {{10, Aspect::Perfective}, {11, Aspect::Imperfective}, {12, Aspect::Imperfective}};
    MaskDistribution d;
    d.entries = {{13, 0.35}, {10, 0.30}, {11, 0.20}, {12, 0.15}};
    const auto p = preference_from_distribution(d, v, 64);
    CHECK(p.p_perf == doctest::Approx(0.30).epsilon(1e-12));
    CHECK(p.p_imp == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(compare(p.mass(Aspect::Imperfective), p.mass(Aspect::Perfective)) == Outcome::Correct);
    const auto top2 = preference_from_distribution(d, v, 2);
    CHECK(top2.p_perf == doctest::Approx(0.30));
    CHECK(top2.p_imp == 0.0);
    CHECK(top2.complete_verb_fraction == doctest::Approx(0.5));

    const auto none = preference_from_distribution(d, ResolvedVocab{}, 64);
    CHECK(none.p_perf == 0.0);
    CHECK(none.p_imp == 0.0);
    CHECK(compare(none.p_perf, none.p_imp) == Outcome::Tie);
}

TEST_CASE("all-tie backend gives accuracy 0 and tie rate 1") {
    FlatSession s;
    std::vector<ProbingInstance> insts{
        testing::instance("a", "x", 0, 1, "x", "y", Aspect::Perfective),
        testing::instance("b", "x", 0, 1, "x", "y", Aspect::Imperfective, ContextType::Alternative)};
    SweepParams p;
    p.method = ProbeMethod::Iterative;
    p.layers = {0, 2};
    const auto r = layer_sweep(s, insts, p, nullptr);
    REQUIRE(r.rows.size() == 4);
    for (const auto& row : r.rows) {
        CHECK(row.accuracy == 0.0);
        CHECK(row.tie_rate == 1.0);
    }
    p.method = ProbeMethod::Inference;
    CHECK_THROWS_AS(layer_sweep(s, insts, p, nullptr), Error);
}

TEST_CASE("quartiles with linear interpolation") {
    const auto q = quartiles({0.3, 0.1});
    CHECK(q.min == doctest::Approx(0.1));
    CHECK(q.q1 == doctest::Approx(0.15));
    CHECK(q.median == doctest::Approx(0.2));
    CHECK(q.q3 == doctest::Approx(0.25));
    CHECK(q.max == doctest::Approx(0.3));
    CHECK(q.mean == doctest::Approx(0.2));
}

TEST_CASE("probability differences on the toy backend") {
    const auto t = testing::toy();
    const std::vector<ProbingInstance> insts{
        testing::instance("a", "Он всегда читал книгу.", 10, 15, "читал", "прочитал", Aspect::Imperfective),
        testing::instance("b", "Он вдруг понял.", 9, 14, "понял", "понимал", Aspect::Perfective)};
    const auto rows = probability_difference(t, insts, {4});
    REQUIRE(rows.size() == 1);
    std::vector<double> diffs;
    for (const auto& i : insts) {
        const auto r = iterative_pair(t, i, {4});
        diffs.push_back(r.per_layer.at(4).first - r.per_layer.at(4).second);
    }
    CHECK(rows[0].n == 2);
    CHECK(rows[0].stats.min == doctest::Approx(std::min(diffs[0], diffs[1])));
    CHECK(rows[0].stats.median == doctest::Approx((diffs[0] + diffs[1]) / 2));
}

TEST_CASE("complete-verb profile") {
    const auto t = testing::toy();
    const auto insts = testing::toy_probing();
    const auto none = complete_verb_profile(t, insts, ResolvedVocab{}, {4, 64}, {0, 4});
    REQUIRE_FALSE(none.empty());
    for (const auto& r : none) {
        CHECK(r.complete_fraction == 0.0);
        CHECK(r.perf_fraction == 0.0);
    }
    const auto vocab = resolve_vocab(t, load_vocab_map(testing::data("toy/vocab_map.tsv")));
    for (const auto& r : complete_verb_profile(t, insts, vocab, {64}, {0, 4})) {
        CHECK(r.complete_fraction == doctest::Approx(r.perf_fraction + r.imp_fraction));
        CHECK(r.complete_fraction == doctest::Approx(static_cast<double>(vocab.aspect.size()) / 64));
    }
}

TEST_CASE("layer sweep on the toy set") {
    const auto t = testing::toy();
    const auto insts = testing::toy_probing();
    const auto vocab = resolve_vocab(t, load_vocab_map(testing::data("toy/vocab_map.tsv")));
    SweepParams p;
    p.layers = {0, 1, 2, 3, 4};
    p.k = 16;
    const auto r = layer_sweep(t, insts, p, &vocab);
    CHECK(r.failures.empty());
    CHECK(r.rows.size() == 20);
    for (const auto& row : r.rows) CHECK(row.accuracy + row.tie_rate + row.error_rate == doctest::Approx(1.0));
}
