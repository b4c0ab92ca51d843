// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/causal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "aspectprobe/error.hpp"
#include "aspectprobe/rng.hpp"

namespace aspectprobe {

std::string_view to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::Positive: return "positive";
        case InterventionKind::Negative: return "negative";
        case InterventionKind::Random: return "random";
        case InterventionKind::Identity: return "identity";
    }
    return "?";
}

std::optional<InterventionKind> parse_intervention(std::string_view s) {
    for (auto k : {InterventionKind::Positive, InterventionKind::Negative, InterventionKind::Random,
                   InterventionKind::Identity}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

NumberPreference number_preference(const MaskDistribution& dist, const ResolvedVocab& vocab, std::size_t k) {
    NumberPreference p;
    const std::size_t n = std::min(k, dist.entries.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto [id, prob] = dist.entries[i];
        auto it = vocab.number.find(id);
        if (it == vocab.number.end()) continue;
        (it->second == GrammaticalNumber::Singular ? p.p_sg : p.p_pl) += prob;
    }
    return p;
}

namespace {

double percentile(std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

using Transform = std::function<Vector(const Vector&)>;
// Whether the expected side wins on a final-layer distribution.
using Judge = std::function<bool(const MaskDistribution&, const ProbingInstance&)>;

Transform make_transform(const BoundednessSubspace& subspace, const InterventionParams& p, int hidden_size) {
    if (p.kind == InterventionKind::Identity) return [](const Vector& h) { return h; };
    if (subspace.layer != p.layer) {
        throw Error("layer_mismatch", "subspace trained at layer " + std::to_string(subspace.layer) +
                                          " cannot be applied at layer " + std::to_string(p.layer));
    }
    if (subspace.dim != hidden_size) {
        throw Error("dimension_mismatch", "subspace dim " + std::to_string(subspace.dim) + " vs hidden size " +
                                              std::to_string(hidden_size));
    }
    PushDirection dir = PushDirection::Negative;
    if (p.kind == InterventionKind::Positive) dir = PushDirection::Positive;
    if (p.kind == InterventionKind::Random) dir = p.random_push;
    return [&subspace, dir](const Vector& h) { return counterfactual(subspace, h, dir); };
}

// Inference-style evaluation: one baseline distribution and one substituted
// distribution per instance, both read out at the final layer.
InterventionOutcome evaluate_single(const Session& session, const BackendMeta& meta, const ProbingInstance& inst,
                                    const InterventionParams& p, const Transform& transform, const Judge& judge) {
    const auto target = session.encode(inst.text, inst.target_span);
    const std::size_t k_eff = std::min<std::size_t>(p.k, static_cast<std::size_t>(meta.vocab_size));

    MaskQuery q;
    q.token_ids = target.token_ids;
    q.mask_position = target.mask_position;
    q.layers = {meta.n_layers};
    q.top_n = k_eff;
    const auto base = session.mask_distributions(q);
    if (base.size() != 1) throw Error("bad_response", "expected one distribution");

    const auto h = session.hidden_state(target.token_ids, target.mask_position, p.layer);
    SubstitutionQuery s;
    s.token_ids = target.token_ids;
    s.layer = p.layer;
    s.position = target.mask_position;
    s.vector = transform(h);
    s.top_n = k_eff;
    const auto after = session.forward_substituted(s);
    return {judge(base.front(), inst), judge(after, inst)};
}

// Iterative-masking evaluation with the substitution at each pass's mask.
double substituted_chain(const Session& session, const BackendMeta& meta, const TokenizedTarget& t,
                         const InterventionParams& p, const Transform& transform) {
    if (t.target_subtokens.empty()) throw Error("span_invalid", "target has no subtokens");
    double sum = 0.0;
    for (std::size_t i = 0; i < t.target_subtokens.size(); ++i) {
        const std::vector<TokenId> prefix(t.target_subtokens.begin(),
                                          t.target_subtokens.begin() + static_cast<std::ptrdiff_t>(i));
        const auto [ids, pos] = contract::insert_prefix(meta, t.token_ids, t.mask_position, prefix);
        SubstitutionQuery s;
        s.token_ids = ids;
        s.layer = p.layer;
        s.position = pos;
        s.vector = transform(session.hidden_state(ids, pos, p.layer));
        s.top_n = 1;
        s.query_ids = {t.target_subtokens[i]};
        const auto d = session.forward_substituted(s);
        if (d.query_probs.size() != 1 || !std::isfinite(d.query_probs.front())) {
            throw Error("subtoken_prob_unavailable", "no exact probability for subtoken " +
                                                         std::to_string(t.target_subtokens[i]));
        }
        sum += d.query_probs.front();
    }
    return sum / static_cast<double>(t.target_subtokens.size());
}

InterventionOutcome evaluate_iterative(const Session& session, const BackendMeta& meta, const ProbingInstance& inst,
                                       const InterventionParams& p, const Transform& transform) {
    const auto exp = encode_form(session, inst, FormChoice::Expected);
    const auto comp = encode_form(session, inst, FormChoice::Complementary);
    const std::vector<int> last{meta.n_layers};
    const double before_e = iterative_masking(session, exp, last).at(meta.n_layers);
    const double before_c = iterative_masking(session, comp, last).at(meta.n_layers);
    const double after_e = substituted_chain(session, meta, exp, p, transform);
    const double after_c = substituted_chain(session, meta, comp, p, transform);
    return {compare(before_e, before_c) == Outcome::Correct, compare(after_e, after_c) == Outcome::Correct};
}

InterventionResult run(const Session& session, const std::vector<ProbingInstance>& instances,
                       const BoundednessSubspace& subspace, const InterventionParams& p, const Judge* judge,
                       const std::function<bool(const ProbingInstance&)>& eligible) {
    const auto meta = session.meta();
    contract::check_layer(meta, p.layer);
    const Transform transform = make_transform(subspace, p, meta.hidden_size);

    InterventionResult r;
    r.layer = p.layer;
    r.kind = p.kind;
    if (p.kind == InterventionKind::Random) r.subspace_seed = subspace.seed;
    std::vector<std::optional<InterventionOutcome>> outcomes(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        if (!eligible(inst)) {
            ++r.skipped;
            continue;
        }
        try {
            outcomes[i] = judge != nullptr ? evaluate_single(session, meta, inst, p, transform, *judge)
                                           : evaluate_iterative(session, meta, inst, p, transform);
        } catch (const Error& e) {
            r.failures.push_back(inst.id + ": " + e.what());
        }
    }
    r.cells = aggregate_intervention(instances, outcomes, p.bootstrap_resamples, p.seed);
    return r;
}

}  // namespace

std::vector<InterventionCell> aggregate_intervention(const std::vector<ProbingInstance>& instances,
                                                     const std::vector<std::optional<InterventionOutcome>>& outcomes,
                                                     int resamples, std::uint64_t seed) {
    std::vector<InterventionCell> cells;
    std::uint64_t cell_index = 0;
    for (Aspect a : {Aspect::Perfective, Aspect::Imperfective}) {
        for (ContextType c : {ContextType::Alternative, ContextType::NonAlternative}) {
            ++cell_index;
            std::vector<InterventionOutcome> members;
            for (std::size_t i = 0; i < instances.size() && i < outcomes.size(); ++i) {
                if (outcomes[i] && instances[i].expected_aspect == a && instances[i].context_type == c) {
                    members.push_back(*outcomes[i]);
                }
            }
            if (members.empty()) continue;
            InterventionCell cell;
            cell.aspect = a;
            cell.context_type = c;
            cell.n = members.size();
            const double n = static_cast<double>(members.size());
            for (const auto& o : members) {
                cell.before += o.before ? 1.0 : 0.0;
                cell.after += o.after ? 1.0 : 0.0;
            }
            cell.before /= n;
            cell.after /= n;
            cell.shift = cell.after - cell.before;
            cell.ci_low = cell.ci_high = cell.shift;
            if (resamples > 0) {
                SplitMix64 rng(mix_seed(seed, cell_index));
                std::vector<double> shifts;
                shifts.reserve(static_cast<std::size_t>(resamples));
                for (int b = 0; b < resamples; ++b) {
                    double d = 0.0;
                    for (std::size_t j = 0; j < members.size(); ++j) {
                        const auto& o = members[rng.below(members.size())];
                        d += (o.after ? 1.0 : 0.0) - (o.before ? 1.0 : 0.0);
                    }
                    shifts.push_back(d / n);
                }
                cell.ci_low = percentile(shifts, 0.025);
                cell.ci_high = percentile(shifts, 0.975);
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

InterventionResult run_intervention(const Session& session, const std::vector<ProbingInstance>& instances,
                                    const BoundednessSubspace& subspace, const ResolvedVocab& vocab,
                                    const InterventionParams& params) {
    if (params.evaluation == ProbeMethod::Iterative) {
        return run(session, instances, subspace, params, nullptr, [](const ProbingInstance&) { return true; });
    }
    const std::size_t k = params.k;
    const Judge judge = [&vocab, k](const MaskDistribution& d, const ProbingInstance& inst) {
        const auto meta_k = std::max<std::size_t>(1, k);
        const auto pref = preference_from_distribution(d, vocab, meta_k);
        return compare(pref.mass(inst.expected_aspect), pref.mass(inst.complementary_aspect())) == Outcome::Correct;
    };
    return run(session, instances, subspace, params, &judge, [](const ProbingInstance&) { return true; });
}

RandomControl random_control(const Session& session, const std::vector<ProbingInstance>& instances, int m,
                             double alpha, int n_subspaces, std::uint64_t base_seed, const ResolvedVocab& vocab,
                             const InterventionParams& params) {
    if (n_subspaces < 1) throw Error("invalid_argument", "n_subspaces must be >= 1");
    const auto meta = session.meta();
    RandomControl rc;
    InterventionParams p = params;
    p.kind = InterventionKind::Random;
    for (int i = 0; i < n_subspaces; ++i) {
        const auto sub = random_subspace(meta.hidden_size, m, base_seed + static_cast<std::uint64_t>(i), alpha, p.layer);
        rc.runs.push_back(run_intervention(session, instances, sub, vocab, p));
    }

    std::map<std::pair<Aspect, ContextType>, std::vector<const InterventionCell*>> by_cell;
    for (const auto& run : rc.runs) {
        for (const auto& c : run.cells) by_cell[{c.aspect, c.context_type}].push_back(&c);
    }
    for (Aspect a : {Aspect::Perfective, Aspect::Imperfective}) {
        for (ContextType c : {ContextType::Alternative, ContextType::NonAlternative}) {
            auto it = by_cell.find({a, c});
            if (it == by_cell.end()) continue;
            const auto& v = it->second;
            InterventionCell mean;
            mean.aspect = a;
            mean.context_type = c;
            const double n = static_cast<double>(v.size());
            for (const auto* x : v) {
                mean.n = std::max(mean.n, x->n);
                mean.before += x->before / n;
                mean.after += x->after / n;
                mean.shift += x->shift / n;
            }
            double var = 0.0;
            for (const auto* x : v) var += (x->shift - mean.shift) * (x->shift - mean.shift) / n;
            // Interval over subspaces: 2.5th and 97.5th percentile of the run shifts.
            std::vector<double> shifts;
            for (const auto* x : v) shifts.push_back(x->shift);
            mean.ci_low = percentile(shifts, 0.025);
            mean.ci_high = percentile(shifts, 0.975);
            rc.mean.push_back(mean);
            rc.shift_sd.push_back(std::sqrt(var));
        }
    }
    return rc;
}

InterventionResult number_control(const Session& session, const std::vector<ProbingInstance>& instances,
                                  const BoundednessSubspace& subspace, const ResolvedVocab& vocab,
                                  const VocabFeatureMap& vocab_map, const InterventionParams& params) {
    auto gold = [&vocab_map](const ProbingInstance& inst) -> std::optional<GrammaticalNumber> {
        if (inst.number) return inst.number;
        return vocab_map.number(inst.expected_form);
    };
    const std::size_t k = params.k;
    const Judge judge = [&vocab, k, gold](const MaskDistribution& d, const ProbingInstance& inst) {
        const auto g = *gold(inst);
        const auto other = g == GrammaticalNumber::Singular ? GrammaticalNumber::Plural : GrammaticalNumber::Singular;
        const auto pref = number_preference(d, vocab, std::max<std::size_t>(1, k));
        return compare(pref.mass(g), pref.mass(other)) == Outcome::Correct;
    };
    InterventionParams p = params;
    p.evaluation = ProbeMethod::Inference;
    auto r = run(session, instances, subspace, p, &judge,
                 [&gold](const ProbingInstance& inst) { return gold(inst).has_value(); });
    r.target = "number";
    return r;
}

}  // namespace aspectprobe
