// SPDX-License-Identifier: Apache-2.0
//
// Behavioral probing of a masked LM: iterative masking of segmented targets,
// aspect inference over complete verb forms, and per-layer aggregates.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/dataset.hpp"

namespace aspectprobe {

enum class FormChoice { Expected, Complementary };
enum class ProbeMethod { Iterative, Inference };
std::string_view to_string(ProbeMethod m);
std::optional<ProbeMethod> parse_method(std::string_view s);

enum class Outcome { Correct, Tie, Incorrect };

// Instance text with the target replaced by the chosen form, encoded.
TokenizedTarget encode_form(const Session& session, const ProbingInstance& inst, FormChoice form);

// Mean over i of P(V_i | context, V_1..V_{i-1}) per requested layer. Pass i
// unmasks the gold prefix V_1..V_{i-1} and replaces the rest by one mask.
std::map<int, double> iterative_masking(const Session& session, const ProbingInstance& inst, FormChoice form,
                                        const std::vector<int>& layers);

// Same chain on an already-encoded target; used by the causal engine too.
std::map<int, double> iterative_masking(const Session& session, const TokenizedTarget& target,
                                        const std::vector<int>& layers);

struct IterativeMaskingResult {
    std::map<int, std::pair<double, double>> per_layer;  // layer -> (p_expected, p_complementary)
};
IterativeMaskingResult iterative_pair(const Session& session, const ProbingInstance& inst,
                                      const std::vector<int>& layers);

struct AspectPreference {
    int layer = 0;
    double p_perf = 0.0;
    double p_imp = 0.0;
    std::size_t k = 0;
    double complete_verb_fraction = 0.0;
    double perf_fraction = 0.0;
    double imp_fraction = 0.0;

    double mass(Aspect a) const { return a == Aspect::Perfective ? p_perf : p_imp; }
};

// Preference masses over the first k entries of a distribution.
AspectPreference preference_from_distribution(const MaskDistribution& dist, const ResolvedVocab& vocab,
                                              std::size_t k);

std::vector<AspectPreference> aspect_inference(const Session& session, const ProbingInstance& inst,
                                               const ResolvedVocab& vocab, std::size_t k,
                                               const std::vector<int>& layers);

// Strict comparison; equal values are a tie.
Outcome compare(double expected_side, double complementary_side);

struct SweepParams {
    ProbeMethod method = ProbeMethod::Inference;
    std::vector<int> layers;
    std::size_t k = 12000;
};

struct SweepRow {
    int layer = 0;
    Aspect aspect = Aspect::Perfective;
    ContextType context_type = ContextType::NonAlternative;
    double accuracy = 0.0;
    double tie_rate = 0.0;
    double error_rate = 0.0;
    std::size_t n = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // ordered by layer, aspect (perf, imp), context type (alt, non_alt)
    // outcomes[i][j]: instance i at layers[j]; empty when the instance failed.
    std::vector<std::vector<Outcome>> outcomes;
    std::vector<std::string> failures;  // "id: error"
    std::vector<int> layers;
    static constexpr double kRandomBaseline = 0.5;
};

SweepResult layer_sweep(const Session& session, const std::vector<ProbingInstance>& instances,
                        const SweepParams& params, const ResolvedVocab* vocab);

// Aggregates per-instance outcomes into sweep rows.
std::vector<SweepRow> aggregate_outcomes(const std::vector<ProbingInstance>& instances,
                                         const std::vector<std::vector<Outcome>>& outcomes,
                                         const std::vector<int>& layers);

struct Quartiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};
// Linear-interpolation quantiles; empty input yields zeros.
Quartiles quartiles(std::vector<double> values);

struct DifferenceRow {
    int layer = 0;
    ContextType context_type = ContextType::NonAlternative;
    std::size_t n = 0;
    Quartiles stats;
};

// p_expected - p_complementary, summarized per layer and context type.
std::vector<DifferenceRow> difference_stats(const std::vector<ProbingInstance>& instances,
                                            const std::vector<IterativeMaskingResult>& results);
std::vector<DifferenceRow> probability_difference(const Session& session,
                                                  const std::vector<ProbingInstance>& instances,
                                                  const std::vector<int>& layers);

struct CompleteVerbRow {
    std::size_t k = 0;
    int layer = 0;
    ContextType context_type = ContextType::NonAlternative;
    double complete_fraction = 0.0;
    double perf_fraction = 0.0;
    double imp_fraction = 0.0;
    std::size_t n = 0;
};

std::vector<CompleteVerbRow> complete_verb_profile(const Session& session,
                                                   const std::vector<ProbingInstance>& instances,
                                                   const ResolvedVocab& vocab, const std::vector<std::size_t>& k_values,
                                                   const std::vector<int>& layers);

}  // namespace aspectprobe
