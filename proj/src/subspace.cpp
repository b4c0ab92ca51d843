// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/rng.hpp"

namespace aspectprobe {

using nlohmann::json;

double LinearSvm::accuracy(const Eigen::MatrixXd& X, const std::vector<int>& y) const {
    if (X.rows() == 0) return 0.0;
    std::size_t ok = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int pred = score(X.row(i).transpose()) > 0.0 ? 1 : -1;
        if (pred == y[static_cast<std::size_t>(i)]) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(X.rows());
}

double majority_rate(const std::vector<int>& y) {
    if (y.empty()) return 0.0;
    const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    const auto n = static_cast<double>(y.size());
    return std::max(pos, n - pos) / n;
}

LinearSvm train_linear_svm(const Eigen::MatrixXd& X, const std::vector<int>& y, const SgdParams& p) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("dimension_mismatch", "rows != labels");
    SplitMix64 rng(p.seed);

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    bool early = p.early_stopping;
    if (early) {
        // Stratified hold-out.
        for (int label : {1, -1}) {
            std::vector<std::size_t> cls;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (y[i] == label) cls.push_back(i);
            }
            shuffle(cls.begin(), cls.end(), rng);
            const auto n_val = static_cast<std::size_t>(std::round(p.validation_fraction * static_cast<double>(cls.size())));
            val_idx.insert(val_idx.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_val));
            train_idx.insert(train_idx.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_val), cls.end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        if (val_idx.empty() || train_idx.empty()) early = false;
    }
    if (!early) {
        train_idx.resize(y.size());
        std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
        val_idx.clear();
    }

    LinearSvm m;
    m.w = Eigen::VectorXd::Zero(X.cols());
    double eta = p.eta0;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_loss = std::numeric_limits<double>::infinity();
    int no_improvement = 0;

    auto validation_score = [&] {
        std::size_t ok = 0;
        for (std::size_t i : val_idx) {
            const int pred = m.score(X.row(static_cast<Eigen::Index>(i)).transpose()) > 0.0 ? 1 : -1;
            if (pred == y[i]) ++ok;
        }
        return static_cast<double>(ok) / static_cast<double>(val_idx.size());
    };

    for (int epoch = 0; epoch < p.max_iter; ++epoch) {
        shuffle(train_idx.begin(), train_idx.end(), rng);
        double sumloss = 0.0;
        for (std::size_t i : train_idx) {
            const auto x = X.row(static_cast<Eigen::Index>(i));
            const double yi = y[i];
            const double margin = yi * (x.dot(m.w) + m.b);
            sumloss += std::max(0.0, 1.0 - margin);
            m.w *= std::max(0.0, 1.0 - eta * p.alpha);
            if (margin < 1.0) {
                m.w += eta * yi * x.transpose();
                if (p.fit_intercept) m.b += eta * yi;
            }
        }
        m.epochs = epoch + 1;

        if (early) {
            const double s = validation_score();
            no_improvement = s < best_score + p.tol ? no_improvement + 1 : 0;
            best_score = std::max(best_score, s);
        } else {
            no_improvement = sumloss > best_loss - p.tol * static_cast<double>(train_idx.size()) ? no_improvement + 1 : 0;
            best_loss = std::min(best_loss, sumloss);
        }
        if (no_improvement >= p.n_iter_no_change) {
            if (eta > 1e-6) {
                eta /= 5.0;
                no_improvement = 0;
            } else {
                break;
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd BoundednessSubspace::rowspace_projector() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& w : directions) p += w * w.transpose();
    return p;
}

Eigen::MatrixXd BoundednessSubspace::nullspace_projector() const {
    return Eigen::MatrixXd::Identity(dim, dim) - rowspace_projector();
}

std::string_view to_string(PushDirection d) { return d == PushDirection::Positive ? "positive" : "negative"; }

std::optional<PushDirection> parse_push(std::string_view s) {
    if (s == "positive" || s == "bounded") return PushDirection::Positive;
    if (s == "negative" || s == "unbounded") return PushDirection::Negative;
    return std::nullopt;
}

Vector counterfactual(const BoundednessSubspace& subspace, std::span<const double> h, PushDirection direction) {
    if (h.size() != static_cast<std::size_t>(subspace.dim)) {
        throw Error("dimension_mismatch", std::to_string(h.size()) + " != " + std::to_string(subspace.dim));
    }
    const Eigen::Map<const Eigen::VectorXd> hv(h.data(), static_cast<Eigen::Index>(h.size()));
    Eigen::VectorXd projected = hv;
    Eigen::VectorXd push = Eigen::VectorXd::Zero(hv.size());
    for (const auto& w : subspace.directions) {
        const double c = w.dot(hv);
        projected -= c * w;
        push += std::abs(c) * w;
    }
    const double sign = direction == PushDirection::Positive ? 1.0 : -1.0;
    const Eigen::VectorXd out = projected + sign * subspace.alpha * push;
    return Vector(out.data(), out.data() + out.size());
}

Eigen::VectorXd orthogonalize(Eigen::VectorXd v, const std::vector<Eigen::VectorXd>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) v -= b.dot(v) * b;
    }
    return v;
}

BoundednessSubspace train_inlp(const Eigen::MatrixXd& X, const std::vector<int>& y, int layer,
                               const InlpParams& params) {
    if (params.m < 0) throw Error("invalid_m", "m must be >= 0");
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("dimension_mismatch", "rows != labels");

    BoundednessSubspace s;
    s.layer = layer;
    s.alpha = params.alpha;
    s.dim = static_cast<int>(X.cols());
    const double floor = majority_rate(y) + params.degenerate_epsilon;

    Eigen::MatrixXd projected = X;
    for (int round = 0; round < params.m; ++round) {
        SgdParams sgd = params.sgd;
        sgd.seed = mix_seed(params.sgd.seed, static_cast<std::uint64_t>(round));
        const LinearSvm clf = train_linear_svm(projected, y, sgd);
        const double acc = clf.accuracy(projected, y);
        const double norm = clf.w.norm();
        if (acc <= floor || !(norm > 0.0)) {
            warn("INLP round " + std::to_string(round + 1) + " degenerate (training accuracy " + std::to_string(acc) +
                 "); stopping with " + std::to_string(s.directions.size()) + " directions");
            break;
        }
        Eigen::VectorXd dir = orthogonalize(clf.w / norm, s.directions);
        const double dnorm = dir.norm();
        if (!(dnorm > 1e-12)) {
            warn("INLP round " + std::to_string(round + 1) + " produced a direction inside the existing subspace");
            break;
        }
        dir /= dnorm;
        double bounded_mean = 0.0;
        std::size_t n_bounded = 0;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            if (y[static_cast<std::size_t>(i)] == 1) {
                bounded_mean += X.row(i).dot(dir);
                ++n_bounded;
            }
        }
        if (n_bounded > 0 && bounded_mean < 0.0) dir = -dir;
        s.directions.push_back(dir);
        s.classifier_accuracies.push_back(acc);
        // Project onto the nullspace of every direction found so far.
        projected -= (projected * dir) * dir.transpose();
    }

    json prov{{"method", "inlp"},
              {"classifier", "linear-svm-sgd-hinge"},
              {"m_requested", params.m},
              {"m_found", s.directions.size()},
              {"eta0", params.sgd.eta0},
              {"l2_alpha", params.sgd.alpha},
              {"early_stopping", params.sgd.early_stopping},
              {"sgd_seed", params.sgd.seed},
              {"push", "P_N h +/- alpha * sum_i |w_i.h| w_i"},
              {"push_alpha", params.alpha},
              {"n_rows", X.rows()}};
    s.provenance = prov.dump();
    return s;
}

CueFeatures extract_cue_features(const Session& session, const std::vector<BoundednessInstance>& data, int layer) {
    const auto meta = session.meta();
    contract::check_layer(meta, layer);
    CueFeatures out;
    std::vector<Vector> rows;
    for (const auto& inst : data) {
        try {
            if (auto reason = validate(inst)) throw Error(*reason, "");
            const auto target = session.encode(inst.text, inst.target_span);
            const std::size_t n_target = target.target_subtokens.size();
            for (const auto& cue : inst.cue_spans) {
                const auto cue_enc = session.encode(inst.text, cue);
                const std::size_t n_cue = cue_enc.target_subtokens.size();
                // Tokens before the cue are shared; a target before the cue
                // collapses from n_target tokens to one mask.
                std::size_t start = cue_enc.mask_position;
                if (inst.target_span.begin < cue.begin) start -= n_target - 1;
                if (start + n_cue > target.token_ids.size() ||
                    !std::equal(cue_enc.target_subtokens.begin(), cue_enc.target_subtokens.end(),
                                target.token_ids.begin() + static_cast<std::ptrdiff_t>(start))) {
                    throw Error("cue_alignment_failed", "cue subtokens not found at expected position");
                }
                Vector mean(static_cast<std::size_t>(meta.hidden_size), 0.0);
                for (std::size_t pos = start; pos < start + n_cue; ++pos) {
                    const auto h = session.hidden_state(target.token_ids, pos, layer);
                    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += h[c];
                }
                for (double& v : mean) v /= static_cast<double>(n_cue);
                rows.push_back(std::move(mean));
                out.y.push_back(inst.label == Boundedness::Bounded ? 1 : -1);
            }
        } catch (const Error& e) {
            out.skipped.push_back(inst.id + ": " + e.what());
        }
    }
    out.X.resize(static_cast<Eigen::Index>(rows.size()), meta.hidden_size);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) out.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return out;
}

BoundednessSubspace train_inlp(const Session& session, const std::vector<BoundednessInstance>& data, int layer,
                               const InlpParams& params) {
    const auto features = extract_cue_features(session, data, layer);
    for (const auto& s : features.skipped) warn("INLP feature extraction skipped " + s);
    if (features.X.rows() == 0) throw Error("empty_input", "no usable boundedness instances");
    return train_inlp(features.X, features.y, layer, params);
}

BoundednessSubspace random_subspace(int d, int m, std::uint64_t seed, double alpha, int layer) {
    if (d < 1) throw Error("invalid_dim", std::to_string(d));
    if (m < 0 || m > d) throw Error("m_exceeds_dim", "m=" + std::to_string(m) + " d=" + std::to_string(d));
    SplitMix64 rng(seed);
    BoundednessSubspace s;
    s.layer = layer;
    s.alpha = alpha;
    s.dim = d;
    s.seed = seed;
    while (static_cast<int>(s.directions.size()) < m) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v(i) = rng.normal();
        v = orthogonalize(std::move(v), s.directions);
        const double n = v.norm();
        if (n < 1e-8) continue;
        s.directions.push_back(v / n);
    }
    s.provenance = json{{"method", "random"}, {"seed", seed}, {"m", m}, {"push_alpha", alpha}}.dump();
    return s;
}

json to_json(const BoundednessSubspace& s) {
    json dirs = json::array();
    for (const auto& w : s.directions) {
        json row = json::array();
        for (Eigen::Index i = 0; i < w.size(); ++i) row.push_back(static_cast<double>(static_cast<float>(w(i))));
        dirs.push_back(std::move(row));
    }
    json j{{"layer", s.layer},
           {"alpha", s.alpha},
           {"dim", s.dim},
           {"directions", dirs},
           {"accuracies", s.classifier_accuracies},
           {"provenance", s.provenance}};
    j["seed"] = s.seed ? json(*s.seed) : json(nullptr);
    return j;
}

BoundednessSubspace subspace_from_json(const json& j) {
    BoundednessSubspace s;
    s.layer = j.at("layer").get<int>();
    s.alpha = j.at("alpha").get<double>();
    s.classifier_accuracies = j.value("accuracies", std::vector<double>{});
    s.provenance = j.value("provenance", std::string{});
    if (j.contains("seed") && !j["seed"].is_null()) s.seed = j["seed"].get<std::uint64_t>();
    const auto& dirs = j.at("directions");
    s.dim = j.contains("dim") ? j["dim"].get<int>() : (dirs.empty() ? 0 : static_cast<int>(dirs[0].size()));
    for (const auto& row : dirs) {
        if (static_cast<int>(row.size()) != s.dim) throw Error("malformed_subspace", "direction length != dim");
        Eigen::VectorXd v(s.dim);
        for (int i = 0; i < s.dim; ++i) v(i) = row[static_cast<std::size_t>(i)].get<double>();
        // float32 storage: restore exact orthonormality in double precision.
        v = orthogonalize(std::move(v), s.directions);
        const double n = v.norm();
        if (!(n > 0.5)) throw Error("malformed_subspace", "directions are not orthonormal");
        s.directions.push_back(v / n);
    }
    return s;
}

void save_subspace(const std::filesystem::path& path, const BoundednessSubspace& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << to_json(s).dump(2) << '\n';
}

BoundednessSubspace load_subspace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    return subspace_from_json(json::parse(in));
}

}  // namespace aspectprobe
