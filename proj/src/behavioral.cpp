// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/behavioral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aspectprobe/error.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

std::string_view to_string(ProbeMethod m) { return m == ProbeMethod::Iterative ? "iterative" : "inference"; }

std::optional<ProbeMethod> parse_method(std::string_view s) {
    if (s == "iterative") return ProbeMethod::Iterative;
    if (s == "inference") return ProbeMethod::Inference;
    return std::nullopt;
}

TokenizedTarget encode_form(const Session& session, const ProbingInstance& inst, FormChoice form) {
    if (form == FormChoice::Expected) return session.encode(inst.text, inst.target_span);
    const auto cps = text::decode(inst.text);
    const auto comp = text::decode(inst.complementary_form);
    std::u32string swapped = cps.substr(0, inst.target_span.begin);
    swapped += comp;
    swapped += cps.substr(inst.target_span.end);
    const CharSpan span{inst.target_span.begin, inst.target_span.begin + comp.size()};
    return session.encode(text::encode(swapped), span);
}

std::map<int, double> iterative_masking(const Session& session, const TokenizedTarget& target,
                                        const std::vector<int>& layers) {
    const auto& subtokens = target.target_subtokens;
    if (subtokens.empty()) throw Error("span_invalid", "target has no subtokens");
    std::map<int, double> sums;
    for (int layer : layers) sums[layer] = 0.0;

    for (std::size_t i = 0; i < subtokens.size(); ++i) {
        MaskQuery q;
        q.token_ids = target.token_ids;
        q.mask_position = target.mask_position;
        q.layers = layers;
        q.top_n = 1;
        q.gold_prefix.assign(subtokens.begin(), subtokens.begin() + static_cast<std::ptrdiff_t>(i));
        q.query_ids = {subtokens[i]};
        const auto dists = session.mask_distributions(q);
        if (dists.size() != layers.size()) throw Error("bad_response", "distribution count mismatch");
        for (const auto& d : dists) {
            if (d.query_probs.size() != 1 || !std::isfinite(d.query_probs.front())) {
                throw Error("subtoken_prob_unavailable", "no exact probability for subtoken " + std::to_string(subtokens[i]));
            }
            sums[d.layer] += d.query_probs.front();
        }
    }
    const double n = static_cast<double>(subtokens.size());
    for (auto& [_, v] : sums) v /= n;
    return sums;
}

std::map<int, double> iterative_masking(const Session& session, const ProbingInstance& inst, FormChoice form,
                                        const std::vector<int>& layers) {
    return iterative_masking(session, encode_form(session, inst, form), layers);
}

IterativeMaskingResult iterative_pair(const Session& session, const ProbingInstance& inst,
                                      const std::vector<int>& layers) {
    const auto exp = iterative_masking(session, inst, FormChoice::Expected, layers);
    const auto comp = iterative_masking(session, inst, FormChoice::Complementary, layers);
    IterativeMaskingResult r;
    for (int layer : layers) r.per_layer[layer] = {exp.at(layer), comp.at(layer)};
    return r;
}

AspectPreference preference_from_distribution(const MaskDistribution& dist, const ResolvedVocab& vocab,
                                              std::size_t k) {
    AspectPreference pref;
    pref.layer = dist.layer;
    pref.k = k;
    std::size_t perf = 0;
    std::size_t imp = 0;
    const std::size_t n = std::min(k, dist.entries.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto [id, p] = dist.entries[i];
        auto it = vocab.aspect.find(id);
        if (it == vocab.aspect.end()) continue;
        if (it->second == Aspect::Perfective) {
            pref.p_perf += p;
            ++perf;
        } else {
            pref.p_imp += p;
            ++imp;
        }
    }
    if (k > 0) {
        pref.perf_fraction = static_cast<double>(perf) / static_cast<double>(k);
        pref.imp_fraction = static_cast<double>(imp) / static_cast<double>(k);
        pref.complete_verb_fraction = static_cast<double>(perf + imp) / static_cast<double>(k);
    }
    return pref;
}

std::vector<AspectPreference> aspect_inference(const Session& session, const ProbingInstance& inst,
                                               const ResolvedVocab& vocab, std::size_t k,
                                               const std::vector<int>& layers) {
    if (k < 1) throw Error("invalid_k", "k must be >= 1");
    const auto target = session.encode(inst.text, inst.target_span);
    const auto meta = session.meta();
    const std::size_t k_eff = std::min<std::size_t>(k, static_cast<std::size_t>(meta.vocab_size));
    MaskQuery q;
    q.token_ids = target.token_ids;
    q.mask_position = target.mask_position;
    q.layers = layers;
    q.top_n = k_eff;
    std::vector<AspectPreference> out;
    for (const auto& d : session.mask_distributions(q)) out.push_back(preference_from_distribution(d, vocab, k_eff));
    return out;
}

Outcome compare(double expected_side, double complementary_side) {
    if (expected_side > complementary_side) return Outcome::Correct;
    if (expected_side == complementary_side) return Outcome::Tie;
    return Outcome::Incorrect;
}

std::vector<SweepRow> aggregate_outcomes(const std::vector<ProbingInstance>& instances,
                                         const std::vector<std::vector<Outcome>>& outcomes,
                                         const std::vector<int>& layers) {
    std::vector<SweepRow> rows;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        for (Aspect a : {Aspect::Perfective, Aspect::Imperfective}) {
            for (ContextType c : {ContextType::Alternative, ContextType::NonAlternative}) {
                std::size_t n = 0, correct = 0, ties = 0;
                for (std::size_t i = 0; i < instances.size(); ++i) {
                    if (instances[i].expected_aspect != a || instances[i].context_type != c) continue;
                    if (outcomes[i].empty()) continue;
                    ++n;
                    if (outcomes[i][li] == Outcome::Correct) ++correct;
                    if (outcomes[i][li] == Outcome::Tie) ++ties;
                }
                if (n == 0) continue;
                SweepRow r;
                r.layer = layers[li];
                r.aspect = a;
                r.context_type = c;
                r.n = n;
                r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
                r.tie_rate = static_cast<double>(ties) / static_cast<double>(n);
                r.error_rate = static_cast<double>(n - correct - ties) / static_cast<double>(n);
                rows.push_back(r);
            }
        }
    }
    return rows;
}

SweepResult layer_sweep(const Session& session, const std::vector<ProbingInstance>& instances,
                        const SweepParams& params, const ResolvedVocab* vocab) {
    if (instances.empty()) throw Error("empty_input", "layer sweep needs at least one instance");
    if (params.method == ProbeMethod::Inference && vocab == nullptr) {
        throw Error("missing_vocab", "aspect inference needs a resolved vocabulary map");
    }
    SweepResult result;
    result.layers = params.layers;
    result.outcomes.resize(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        try {
            std::vector<Outcome> per_layer;
            if (params.method == ProbeMethod::Iterative) {
                const auto r = iterative_pair(session, inst, params.layers);
                for (int layer : params.layers) {
                    const auto [pe, pc] = r.per_layer.at(layer);
                    per_layer.push_back(compare(pe, pc));
                }
            } else {
                for (const auto& pref : aspect_inference(session, inst, *vocab, params.k, params.layers)) {
                    per_layer.push_back(compare(pref.mass(inst.expected_aspect), pref.mass(inst.complementary_aspect())));
                }
            }
            result.outcomes[i] = std::move(per_layer);
        } catch (const Error& e) {
            result.failures.push_back(inst.id + ": " + e.what());
        }
    }
    result.rows = aggregate_outcomes(instances, result.outcomes, params.layers);
    return result;
}

Quartiles quartiles(std::vector<double> v) {
    Quartiles q;
    if (v.empty()) return q;
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = static_cast<std::size_t>(std::ceil(pos));
        return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
    };
    q.min = v.front();
    q.max = v.back();
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    q.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return q;
}

std::vector<DifferenceRow> difference_stats(const std::vector<ProbingInstance>& instances,
                                            const std::vector<IterativeMaskingResult>& results) {
    std::map<std::pair<int, ContextType>, std::vector<double>> buckets;
    for (std::size_t i = 0; i < instances.size() && i < results.size(); ++i) {
        for (const auto& [layer, probs] : results[i].per_layer) {
            buckets[{layer, instances[i].context_type}].push_back(probs.first - probs.second);
        }
    }
    std::vector<DifferenceRow> rows;
    for (auto& [key, values] : buckets) {
        DifferenceRow r;
        r.layer = key.first;
        r.context_type = key.second;
        r.n = values.size();
        r.stats = quartiles(std::move(values));
        rows.push_back(r);
    }
    return rows;
}

std::vector<DifferenceRow> probability_difference(const Session& session,
                                                  const std::vector<ProbingInstance>& instances,
                                                  const std::vector<int>& layers) {
    std::vector<ProbingInstance> kept;
    std::vector<IterativeMaskingResult> results;
    for (const auto& inst : instances) {
        try {
            results.push_back(iterative_pair(session, inst, layers));
            kept.push_back(inst);
        } catch (const Error& e) {
            warn(inst.id + ": " + e.what());
        }
    }
    return difference_stats(kept, results);
}

std::vector<CompleteVerbRow> complete_verb_profile(const Session& session,
                                                   const std::vector<ProbingInstance>& instances,
                                                   const ResolvedVocab& vocab, const std::vector<std::size_t>& k_values,
                                                   const std::vector<int>& layers) {
    if (k_values.empty()) return {};
    const auto meta = session.meta();
    const std::size_t vocab_size = static_cast<std::size_t>(meta.vocab_size);
    const std::size_t k_max = std::min(vocab_size, *std::max_element(k_values.begin(), k_values.end()));

    struct Acc {
        double complete = 0, perf = 0, imp = 0;
        std::size_t n = 0;
    };
    std::map<std::tuple<std::size_t, int, ContextType>, Acc> acc;
    for (const auto& inst : instances) {
        TokenizedTarget target;
        std::vector<MaskDistribution> dists;
        try {
            target = session.encode(inst.text, inst.target_span);
            MaskQuery q;
            q.token_ids = target.token_ids;
            q.mask_position = target.mask_position;
            q.layers = layers;
            q.top_n = k_max;
            dists = session.mask_distributions(q);
        } catch (const Error& e) {
            warn(inst.id + ": " + e.what());
            continue;
        }
        for (std::size_t k : k_values) {
            const std::size_t k_eff = std::min(k, vocab_size);
            for (const auto& d : dists) {
                const auto pref = preference_from_distribution(d, vocab, k_eff);
                auto& a = acc[{k, d.layer, inst.context_type}];
                a.complete += pref.complete_verb_fraction;
                a.perf += pref.perf_fraction;
                a.imp += pref.imp_fraction;
                ++a.n;
            }
        }
    }
    std::vector<CompleteVerbRow> rows;
    for (const auto& [key, a] : acc) {
        CompleteVerbRow r;
        std::tie(r.k, r.layer, r.context_type) = key;
        r.n = a.n;
        const double n = static_cast<double>(a.n);
        r.complete_fraction = a.complete / n;
        r.perf_fraction = a.perf / n;
        r.imp_fraction = a.imp / n;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace aspectprobe
