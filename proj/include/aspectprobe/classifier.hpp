// SPDX-License-Identifier: Apache-2.0
//
// Two-way aspect head on frozen mask-position representations, per-class
// F0.5, and Monte Carlo dropout uncertainty.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/dataset.hpp"

namespace aspectprobe {

// Class index 0 = perfective, 1 = imperfective.
inline constexpr std::size_t class_index(Aspect a) { return a == Aspect::Perfective ? 0 : 1; }
inline constexpr Aspect class_aspect(std::size_t i) { return i == 0 ? Aspect::Perfective : Aspect::Imperfective; }

struct AspectHead {
    int layer = 0;
    Eigen::Matrix<double, 2, Eigen::Dynamic> weights;
    Eigen::Vector2d bias = Eigen::Vector2d::Zero();
    double dropout_rate = 0.1;
    std::string provenance;

    int dim() const { return static_cast<int>(weights.cols()); }
    Eigen::Vector2d logits(const Eigen::VectorXd& x) const { return weights * x + bias; }
    Eigen::Vector2d probabilities(const Eigen::VectorXd& x) const;
    // Ties go to perfective.
    Aspect predict(const Eigen::VectorXd& x) const;
};

struct HeadParams {
    int epochs = 50;
    double learning_rate = 0.05;
    double l2 = 1e-4;
    double validation_fraction = 0.2;
    double dropout_rate = 0.1;  // stored on the head, used by mc_dropout
    std::uint64_t seed = 0;
};

struct HeadTraining {
    AspectHead head;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_validation = 0;
};

// Softmax regression by per-example SGD over a stratified train/validation
// split. Single-class data throws "single_class".
HeadTraining train_head(const Eigen::MatrixXd& X, const std::vector<Aspect>& y, int layer, const HeadParams& params);

struct MaskFeatures {
    Eigen::MatrixXd X;
    std::vector<std::size_t> rows;  // instance index of each row
    std::vector<std::string> skipped;
};
// Hidden state at the target's mask position, one row per instance.
MaskFeatures mask_features(const Session& session, const std::vector<ProbingInstance>& instances, int layer);

HeadTraining train_head(const Session& session, const std::vector<ProbingInstance>& instances, int layer,
                        const HeadParams& params);

struct Confusion {
    // counts[true][predicted]
    std::array<std::array<std::size_t, 2>, 2> counts{};
    void add(Aspect truth, Aspect predicted) { ++counts[class_index(truth)][class_index(predicted)]; }
};

struct FScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    bool undefined = false;  // some denominator was zero; values set to 0
};

// (1 + b^2) P R / (b^2 P + R); 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta = 0.5);
// One-vs-rest per class, indexed by class_index.
std::array<FScore, 2> f_half(const Confusion& c);

struct Evaluation {
    Confusion confusion;
    std::map<ContextType, Confusion> by_context;
    double accuracy = 0.0;
};
Evaluation evaluate_head(const AspectHead& head, const Eigen::MatrixXd& X, const std::vector<ProbingInstance>& instances,
                         const std::vector<std::size_t>& rows);

struct UncertaintyEstimate {
    std::vector<std::string> ids;
    std::vector<ContextType> context_types;
    std::vector<std::array<double, 2>> mean;
    std::vector<std::array<double, 2>> variance;  // population variance over samples
    int n_samples = 0;

    // Mean per-instance variance (averaged over both classes) per context type.
    std::map<ContextType, double> mean_variance() const;
};

// Input-feature dropout on the head (inverted scaling), per-instance seeds.
UncertaintyEstimate mc_dropout(const AspectHead& head, const Eigen::MatrixXd& X,
                               const std::vector<ProbingInstance>& instances, const std::vector<std::size_t>& rows,
                               int n_samples, std::uint64_t seed);

// Backend dropout. Two-element samples are taken as (perf, imp) scores;
// full-vocabulary samples are reduced to the total perf / imp tagged mass.
UncertaintyEstimate mc_dropout(const Session& session, const std::vector<ProbingInstance>& instances,
                               const ResolvedVocab& vocab, int n_samples);

nlohmann::json to_json(const AspectHead& head);
AspectHead head_from_json(const nlohmann::json& j);
void save_head(const std::filesystem::path& path, const AspectHead& head);
AspectHead load_head(const std::filesystem::path& path);

}  // namespace aspectprobe
