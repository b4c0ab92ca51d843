// SPDX-License-Identifier: Apache-2.0
//
// Iterative nullspace projection (INLP) over boundedness cue representations,
// and the counterfactual push along the learned subspace.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/dataset.hpp"

namespace aspectprobe {

// Linear max-margin classifier trained by SGD on the hinge loss with an L2
// penalty. The schedule follows the usual "adaptive" rule: constant eta0 until
// n_iter_no_change epochs pass without improvement, then eta /= 5, stopping
// once eta drops below 1e-6 (or max_iter epochs).
struct SgdParams {
    double eta0 = 0.1;
    double alpha = 1e-4;  // L2 strength
    int max_iter = 1000;
    double tol = 1e-3;
    bool early_stopping = true;
    double validation_fraction = 0.1;
    int n_iter_no_change = 5;
    bool fit_intercept = true;
    std::uint64_t seed = 0;
};

struct LinearSvm {
    Eigen::VectorXd w;
    double b = 0.0;
    int epochs = 0;

    double score(const Eigen::VectorXd& x) const { return w.dot(x) + b; }
    // Fraction of rows whose sign(score) matches y (+1 / -1); score 0 counts as -1.
    double accuracy(const Eigen::MatrixXd& X, const std::vector<int>& y) const;
};

LinearSvm train_linear_svm(const Eigen::MatrixXd& X, const std::vector<int>& y, const SgdParams& params);

double majority_rate(const std::vector<int>& y);

struct BoundednessSubspace {
    int layer = 0;
    std::vector<Eigen::VectorXd> directions;  // orthonormal, bounded side positive
    double alpha = 4.0;
    std::vector<double> classifier_accuracies;
    std::optional<std::uint64_t> seed;  // set for random subspaces
    std::string provenance;
    int dim = 0;

    std::size_t size() const { return directions.size(); }
    Eigen::MatrixXd rowspace_projector() const;
    Eigen::MatrixXd nullspace_projector() const;
};

enum class PushDirection { Positive, Negative };
std::string_view to_string(PushDirection d);
std::optional<PushDirection> parse_push(std::string_view s);

// P_N h + alpha * sum_i |w_i . h| w_i (positive) or minus that sum (negative).
Vector counterfactual(const BoundednessSubspace& subspace, std::span<const double> h, PushDirection direction);

struct InlpParams {
    int m = 20;
    double alpha = 4.0;
    SgdParams sgd;
    // A round whose training accuracy is <= majority rate + epsilon ends training.
    double degenerate_epsilon = 1e-3;
};

// INLP on precomputed features. y: +1 bounded, -1 unbounded.
BoundednessSubspace train_inlp(const Eigen::MatrixXd& X, const std::vector<int>& y, int layer,
                               const InlpParams& params);

struct CueFeatures {
    Eigen::MatrixXd X;
    std::vector<int> y;
    std::vector<std::string> skipped;  // "id: reason"
};

// One row per cue span: the mean hidden state (at `layer`) over the cue's
// subtokens, with the target verb replaced by the mask token.
CueFeatures extract_cue_features(const Session& session, const std::vector<BoundednessInstance>& data, int layer);

BoundednessSubspace train_inlp(const Session& session, const std::vector<BoundednessInstance>& data, int layer,
                               const InlpParams& params);

BoundednessSubspace random_subspace(int d, int m, std::uint64_t seed, double alpha, int layer = 0);

// Modified Gram-Schmidt (two passes) of `v` against `basis`.
Eigen::VectorXd orthogonalize(Eigen::VectorXd v, const std::vector<Eigen::VectorXd>& basis);

nlohmann::json to_json(const BoundednessSubspace& s);
BoundednessSubspace subspace_from_json(const nlohmann::json& j);
void save_subspace(const std::filesystem::path& path, const BoundednessSubspace& s);
BoundednessSubspace load_subspace(const std::filesystem::path& path);

}  // namespace aspectprobe
