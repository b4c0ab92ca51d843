// SPDX-License-Identifier: Apache-2.0
//
// Counterfactual interventions at the masked target: substitute the pushed
// hidden state at one layer, finish the forward pass, and measure how the
// final-layer aspect (or number) preference changes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/behavioral.hpp"
#include "aspectprobe/subspace.hpp"

namespace aspectprobe {

enum class InterventionKind { Positive, Negative, Random, Identity };
std::string_view to_string(InterventionKind k);
std::optional<InterventionKind> parse_intervention(std::string_view s);

struct InterventionParams {
    int layer = 0;
    InterventionKind kind = InterventionKind::Negative;
    // Push applied by Random subspaces (they carry no orientation).
    PushDirection random_push = PushDirection::Negative;
    std::size_t k = 12000;
    ProbeMethod evaluation = ProbeMethod::Inference;
    int bootstrap_resamples = 1000;
    std::uint64_t seed = 0;
};

struct InterventionCell {
    Aspect aspect = Aspect::Perfective;
    ContextType context_type = ContextType::NonAlternative;
    std::size_t n = 0;
    double before = 0.0;
    double after = 0.0;
    double shift = 0.0;
    double ci_low = 0.0;  // bootstrap 95% interval of the shift
    double ci_high = 0.0;
};

struct InterventionResult {
    int layer = 0;
    InterventionKind kind = InterventionKind::Negative;
    std::string target = "aspect";  // or "number"
    std::optional<std::uint64_t> subspace_seed;
    std::vector<InterventionCell> cells;  // aspect (perf, imp) x context (alt, non_alt)
    std::vector<std::string> failures;    // "id: error"
    std::size_t skipped = 0;              // e.g. no gold number
};

// Per-instance correctness before/after, used for aggregation.
struct InterventionOutcome {
    bool before = false;
    bool after = false;
};

// Throws "layer_mismatch" when the subspace was trained at another layer.
InterventionResult run_intervention(const Session& session, const std::vector<ProbingInstance>& instances,
                                    const BoundednessSubspace& subspace, const ResolvedVocab& vocab,
                                    const InterventionParams& params);

struct RandomControl {
    std::vector<InterventionResult> runs;
    std::vector<InterventionCell> mean;  // shift = mean over runs
    std::vector<double> shift_sd;        // parallel to mean, population sd
};

// Random subspace i uses seed `base_seed + i`.
RandomControl random_control(const Session& session, const std::vector<ProbingInstance>& instances, int m,
                             double alpha, int n_subspaces, std::uint64_t base_seed, const ResolvedVocab& vocab,
                             const InterventionParams& params);

// Gold number comes from the instance, else from the vocab map entry of the
// expected form. Instances without either are skipped and counted.
InterventionResult number_control(const Session& session, const std::vector<ProbingInstance>& instances,
                                  const BoundednessSubspace& subspace, const ResolvedVocab& vocab,
                                  const VocabFeatureMap& vocab_map, const InterventionParams& params);

// Aggregation with paired bootstrap over instances (percentile interval).
std::vector<InterventionCell> aggregate_intervention(const std::vector<ProbingInstance>& instances,
                                                     const std::vector<std::optional<InterventionOutcome>>& outcomes,
                                                     int resamples, std::uint64_t seed);

struct NumberPreference {
    double p_sg = 0.0;
    double p_pl = 0.0;
    double mass(GrammaticalNumber n) const { return n == GrammaticalNumber::Singular ? p_sg : p_pl; }
};
NumberPreference number_preference(const MaskDistribution& dist, const ResolvedVocab& vocab, std::size_t k);

}  // namespace aspectprobe
