// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/rng.hpp"

namespace aspectprobe {

using nlohmann::json;

Eigen::Vector2d AspectHead::probabilities(const Eigen::VectorXd& x) const {
    const Eigen::Vector2d z = logits(x);
    const double m = z.maxCoeff();
    Eigen::Vector2d e = (z.array() - m).exp();
    return e / e.sum();
}

Aspect AspectHead::predict(const Eigen::VectorXd& x) const {
    const Eigen::Vector2d z = logits(x);
    return z(1) > z(0) ? Aspect::Imperfective : Aspect::Perfective;
}

namespace {

double accuracy_on(const AspectHead& head, const Eigen::MatrixXd& X, const std::vector<Aspect>& y,
                   const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i : idx) {
        if (head.predict(X.row(static_cast<Eigen::Index>(i)).transpose()) == y[i]) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(idx.size());
}

}  // namespace

HeadTraining train_head(const Eigen::MatrixXd& X, const std::vector<Aspect>& y, int layer, const HeadParams& p) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("dimension_mismatch", "rows != labels");
    if (y.empty()) throw Error("empty_input", "no training rows");
    const bool has_perf = std::count(y.begin(), y.end(), Aspect::Perfective) > 0;
    const bool has_imp = std::count(y.begin(), y.end(), Aspect::Imperfective) > 0;
    if (!has_perf || !has_imp) throw Error("single_class", "training data holds one aspect only");

    SplitMix64 rng(p.seed);
    std::vector<std::size_t> train, val;
    for (Aspect a : {Aspect::Perfective, Aspect::Imperfective}) {
        std::vector<std::size_t> cls;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == a) cls.push_back(i);
        }
        shuffle(cls.begin(), cls.end(), rng);
        auto n_val = static_cast<std::size_t>(std::round(p.validation_fraction * static_cast<double>(cls.size())));
        n_val = std::min(n_val, cls.size() - 1);  // keep one training row per class
        val.insert(val.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_val));
        train.insert(train.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_val), cls.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());

    HeadTraining out;
    out.head.layer = layer;
    out.head.dropout_rate = p.dropout_rate;
    out.head.weights = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, X.cols());
    out.head.bias.setZero();

    for (int epoch = 0; epoch < p.epochs; ++epoch) {
        shuffle(train.begin(), train.end(), rng);
        for (std::size_t i : train) {
            const Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(i)).transpose();
            Eigen::Vector2d g = out.head.probabilities(x);
            g(static_cast<Eigen::Index>(class_index(y[i]))) -= 1.0;
            out.head.weights *= (1.0 - p.learning_rate * p.l2);
            out.head.weights -= p.learning_rate * g * x.transpose();
            out.head.bias -= p.learning_rate * g;
        }
    }
    out.n_train = train.size();
    out.n_validation = val.size();
    out.train_accuracy = accuracy_on(out.head, X, y, train);
    out.validation_accuracy = accuracy_on(out.head, X, y, val);
    out.head.provenance = json{{"method", "softmax-sgd"},
                               {"epochs", p.epochs},
                               {"learning_rate", p.learning_rate},
                               {"l2", p.l2},
                               {"validation_fraction", p.validation_fraction},
                               {"seed", p.seed},
                               {"n_train", out.n_train},
                               {"n_validation", out.n_validation}}
                              .dump();
    return out;
}

MaskFeatures mask_features(const Session& session, const std::vector<ProbingInstance>& instances, int layer) {
    const auto meta = session.meta();
    contract::check_layer(meta, layer);
    std::vector<Vector> rows;
    MaskFeatures f;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        try {
            const auto t = session.encode(instances[i].text, instances[i].target_span);
            rows.push_back(session.hidden_state(t.token_ids, t.mask_position, layer));
            f.rows.push_back(i);
        } catch (const Error& e) {
            f.skipped.push_back(instances[i].id + ": " + e.what());
        }
    }
    f.X.resize(static_cast<Eigen::Index>(rows.size()), meta.hidden_size);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != static_cast<std::size_t>(meta.hidden_size)) {
            throw Error("dimension_mismatch", "hidden state size differs from meta.hidden_size");
        }
        for (int c = 0; c < meta.hidden_size; ++c) f.X(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
    return f;
}

HeadTraining train_head(const Session& session, const std::vector<ProbingInstance>& instances, int layer,
                        const HeadParams& params) {
    const auto f = mask_features(session, instances, layer);
    for (const auto& s : f.skipped) warn(s);
    std::vector<Aspect> y;
    for (std::size_t i : f.rows) y.push_back(instances[i].expected_aspect);
    return train_head(f.X, y, layer, params);
}

// ---------------------------------------------------------------------------

double f_beta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    if (!(denom > 0.0)) return 0.0;
    return (1.0 + b2) * precision * recall / denom;
}

std::array<FScore, 2> f_half(const Confusion& c) {
    std::array<FScore, 2> out;
    for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t o = 1 - k;
        const double tp = static_cast<double>(c.counts[k][k]);
        const double fp = static_cast<double>(c.counts[o][k]);
        const double fn = static_cast<double>(c.counts[k][o]);
        FScore s;
        if (tp + fp > 0) {
            s.precision = tp / (tp + fp);
        } else {
            s.undefined = true;
        }
        if (tp + fn > 0) {
            s.recall = tp / (tp + fn);
        } else {
            s.undefined = true;
        }
        if (!(0.25 * s.precision + s.recall > 0.0)) s.undefined = true;
        s.f = f_beta(s.precision, s.recall, 0.5);
        out[k] = s;
    }
    return out;
}

Evaluation evaluate_head(const AspectHead& head, const Eigen::MatrixXd& X, const std::vector<ProbingInstance>& instances,
                         const std::vector<std::size_t>& rows) {
    if (static_cast<std::size_t>(X.rows()) != rows.size()) throw Error("dimension_mismatch", "rows != row map");
    Evaluation ev;
    std::size_t ok = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& inst = instances.at(rows[r]);
        const Aspect pred = head.predict(X.row(static_cast<Eigen::Index>(r)).transpose());
        ev.confusion.add(inst.expected_aspect, pred);
        ev.by_context[inst.context_type].add(inst.expected_aspect, pred);
        if (pred == inst.expected_aspect) ++ok;
    }
    ev.accuracy = rows.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(rows.size());
    return ev;
}

// ---------------------------------------------------------------------------

namespace {

void summarize_samples(const std::vector<std::array<double, 2>>& samples, std::array<double, 2>& mean,
                       std::array<double, 2>& var) {
    // Deviations are taken from the first sample so identical samples give exactly 0.
    const double n = static_cast<double>(samples.size());
    for (std::size_t c = 0; c < 2; ++c) {
        const double ref = samples.front()[c];
        double m = 0.0;
        for (const auto& s : samples) m += s[c] - ref;
        m /= n;
        double v = 0.0;
        for (const auto& s : samples) v += (s[c] - ref - m) * (s[c] - ref - m);
        mean[c] = ref + m;
        var[c] = v / n;
    }
}

}  // namespace

std::map<ContextType, double> UncertaintyEstimate::mean_variance() const {
    std::map<ContextType, double> sum;
    std::map<ContextType, std::size_t> count;
    for (std::size_t i = 0; i < variance.size(); ++i) {
        sum[context_types[i]] += 0.5 * (variance[i][0] + variance[i][1]);
        ++count[context_types[i]];
    }
    for (auto& [c, v] : sum) v /= static_cast<double>(count[c]);
    return sum;
}

UncertaintyEstimate mc_dropout(const AspectHead& head, const Eigen::MatrixXd& X,
                               const std::vector<ProbingInstance>& instances, const std::vector<std::size_t>& rows,
                               int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw Error("invalid_argument", "n_samples must be >= 1");
    if (!(head.dropout_rate >= 0.0 && head.dropout_rate < 1.0)) throw Error("invalid_argument", "dropout rate outside [0,1)");
    if (static_cast<std::size_t>(X.rows()) != rows.size()) throw Error("dimension_mismatch", "rows != row map");
    UncertaintyEstimate u;
    u.n_samples = n_samples;
    const double keep = 1.0 - head.dropout_rate;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& inst = instances.at(rows[r]);
        const Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(r)).transpose();
        SplitMix64 rng(mix_seed(seed, r));
        std::vector<std::array<double, 2>> samples;
        for (int s = 0; s < n_samples; ++s) {
            Eigen::VectorXd xd = x;
            if (head.dropout_rate > 0.0) {
                for (Eigen::Index j = 0; j < xd.size(); ++j) xd(j) = rng.uniform() < head.dropout_rate ? 0.0 : xd(j) / keep;
            }
            const Eigen::Vector2d p = head.probabilities(xd);
            samples.push_back({p(0), p(1)});
        }
        std::array<double, 2> mean{}, var{};
        summarize_samples(samples, mean, var);
        u.ids.push_back(inst.id);
        u.context_types.push_back(inst.context_type);
        u.mean.push_back(mean);
        u.variance.push_back(var);
    }
    return u;
}

UncertaintyEstimate mc_dropout(const Session& session, const std::vector<ProbingInstance>& instances,
                               const ResolvedVocab& vocab, int n_samples) {
    if (n_samples < 1) throw Error("invalid_argument", "n_samples must be >= 1");
    if (!session.meta().supports_dropout) throw Error("dropout_unsupported", "backend cannot sample with dropout");
    UncertaintyEstimate u;
    u.n_samples = n_samples;
    for (const auto& inst : instances) {
        const auto t = session.encode(inst.text, inst.target_span);
        const auto raw = session.dropout_samples(t.token_ids, t.mask_position, n_samples);
        std::vector<std::array<double, 2>> samples;
        for (const auto& v : raw) {
            if (v.size() == 2) {
                samples.push_back({v[0], v[1]});
                continue;
            }
            std::array<double, 2> s{0.0, 0.0};
            for (const auto& [id, a] : vocab.aspect) {
                if (id >= 0 && static_cast<std::size_t>(id) < v.size()) s[class_index(a)] += v[static_cast<std::size_t>(id)];
            }
            samples.push_back(s);
        }
        if (samples.empty()) throw Error("bad_response", "no dropout samples returned");
        std::array<double, 2> mean{}, var{};
        summarize_samples(samples, mean, var);
        u.ids.push_back(inst.id);
        u.context_types.push_back(inst.context_type);
        u.mean.push_back(mean);
        u.variance.push_back(var);
    }
    return u;
}

// ---------------------------------------------------------------------------

json to_json(const AspectHead& h) {
    json w = json::array();
    for (Eigen::Index c = 0; c < 2; ++c) {
        json row = json::array();
        for (Eigen::Index j = 0; j < h.weights.cols(); ++j) row.push_back(h.weights(c, j));
        w.push_back(std::move(row));
    }
    return json{{"layer", h.layer},
                {"classes", {"perf", "imp"}},
                {"weights", w},
                {"bias", {h.bias(0), h.bias(1)}},
                {"dropout_rate", h.dropout_rate},
                {"provenance", h.provenance}};
}

AspectHead head_from_json(const json& j) {
    AspectHead h;
    h.layer = j.at("layer").get<int>();
    const auto& w = j.at("weights");
    if (!w.is_array() || w.size() != 2) throw Error("bad_head", "weights must have two rows");
    const auto r0 = w[0].get<std::vector<double>>();
    const auto r1 = w[1].get<std::vector<double>>();
    if (r0.size() != r1.size()) throw Error("bad_head", "weight rows differ in length");
    h.weights.resize(2, static_cast<Eigen::Index>(r0.size()));
    for (std::size_t i = 0; i < r0.size(); ++i) {
        h.weights(0, static_cast<Eigen::Index>(i)) = r0[i];
        h.weights(1, static_cast<Eigen::Index>(i)) = r1[i];
    }
    const auto b = j.at("bias").get<std::vector<double>>();
    if (b.size() != 2) throw Error("bad_head", "bias must have two entries");
    h.bias = {b[0], b[1]};
    h.dropout_rate = j.value("dropout_rate", 0.1);
    h.provenance = j.value("provenance", std::string{});
    if (!h.weights.allFinite() || !h.bias.allFinite()) throw Error("bad_head", "non-finite parameters");
    return h;
}

void save_head(const std::filesystem::path& path, const AspectHead& head) {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << to_json(head).dump(2) << '\n';
}

AspectHead load_head(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    return head_from_json(json::parse(in));
}

}  // namespace aspectprobe
