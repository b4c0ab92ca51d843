// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "aspectprobe/causal.hpp"
#include "aspectprobe/subspace.hpp"
#include "support.hpp"

using namespace aspectprobe;

namespace {
struct Fixture {
    ToyMlm toy = testing::toy();
    std::vector<ProbingInstance> insts = testing::toy_probing();
    VocabFeatureMap map = load_vocab_map(testing::data("toy/vocab_map.tsv"));
    ResolvedVocab vocab = resolve_vocab(toy, map);
};
}  // namespace

TEST_CASE("identity intervention has exactly zero effect at every layer") {
    Fixture f;
    for (auto eval : {ProbeMethod::Inference, ProbeMethod::Iterative}) {
        for (int layer = 0; layer <= 4; ++layer) {
            InterventionParams p;
            p.layer = layer;
            p.kind = InterventionKind::Identity;
            p.k = 16;
            p.evaluation = eval;
            p.bootstrap_resamples = 50;
            const auto r = run_intervention(f.toy, f.insts, BoundednessSubspace{}, f.vocab, p);
            CHECK(r.failures.empty());
            REQUIRE(r.cells.size() == 4);
            for (const auto& c : r.cells) {
                CHECK(c.shift == 0.0);
                CHECK(c.before == c.after);
                CHECK(c.ci_low == 0.0);
                CHECK(c.ci_high == 0.0);
            }
        }
    }
}

TEST_CASE("an empty random subspace changes nothing") {
    Fixture f;
    InterventionParams p;
    p.layer = 3;
    p.kind = InterventionKind::Random;
    p.k = 16;
    p.bootstrap_resamples = 0;
    const auto rc = random_control(f.toy, f.insts, 0, 4.0, 3, 10, f.vocab, p);
    CHECK(rc.runs.size() == 3);
    for (std::size_t i = 0; i < rc.mean.size(); ++i) {
        CHECK(rc.mean[i].shift == 0.0);
        CHECK(rc.shift_sd[i] == 0.0);
    }
    CHECK(rc.runs[1].subspace_seed == std::optional<std::uint64_t>(11));
}

TEST_CASE("subspace layer must match") {
    Fixture f;
    InterventionParams p;
    p.layer = 2;
    const auto s = random_subspace(16, 2, 1, 4.0, 3);
    try {
        run_intervention(f.toy, f.insts, s, f.vocab, p);
        FAIL("expected layer_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == "layer_mismatch");
    }
}

TEST_CASE("bootstrap intervals are seeded and bracket the shift") {
    std::vector<ProbingInstance> insts(6, testing::instance("i", "x", 0, 1, "x", "y", Aspect::Perfective));
    std::vector<std::optional<InterventionOutcome>> out{
        InterventionOutcome{true, false}, InterventionOutcome{true, true},   InterventionOutcome{false, false},
        InterventionOutcome{true, false}, InterventionOutcome{false, true},  std::nullopt};
    const auto a = aggregate_intervention(insts, out, 500, 3);
    const auto b = aggregate_intervention(insts, out, 500, 3);
    REQUIRE(a.size() == 1);
    CHECK(a[0].n == 5);
    CHECK(a[0].before == doctest::Approx(0.6));
    CHECK(a[0].after == doctest::Approx(0.4));
    CHECK(a[0].shift == doctest::Approx(-0.2));
    CHECK(a[0].ci_low <= a[0].shift);
    CHECK(a[0].ci_high >= a[0].shift);
    CHECK(a[0].ci_low == b[0].ci_low);
    CHECK(a[0].ci_high == b[0].ci_high);
}

TEST_CASE("number preference and the number control") {
    ResolvedVocab v;
    v.number = {{1, GrammaticalNumber::Singular}, {2, GrammaticalNumber::Plural}};
    MaskDistribution d;
    d.entries = {{2, 0.5}, {3, 0.3}, {1, 0.2}};
    const auto p = number_preference(d, v, 3);
    CHECK(p.p_sg == doctest::Approx(0.2));
    CHECK(p.p_pl == doctest::Approx(0.5));
    CHECK(number_preference(d, v, 1).p_sg == 0.0);

    Fixture f;
    InterventionParams q;
    q.layer = 4;
    q.kind = InterventionKind::Identity;
    q.k = 64;
    const auto r = number_control(f.toy, f.insts, BoundednessSubspace{}, f.vocab, f.map, q);
    CHECK(r.target == "number");
    for (const auto& c : r.cells) CHECK(c.shift == 0.0);
    CHECK(r.skipped + [&] {
        std::size_t n = 0;
        for (const auto& c : r.cells) n += c.n;
        return n;
    }() == f.insts.size());
}

TEST_CASE("intervention kinds parse") {
    CHECK(parse_intervention("negative") == InterventionKind::Negative);
    CHECK(parse_intervention("identity") == InterventionKind::Identity);
    CHECK_FALSE(parse_intervention("sideways").has_value());
    CHECK(to_string(InterventionKind::Positive) == "positive");
}
