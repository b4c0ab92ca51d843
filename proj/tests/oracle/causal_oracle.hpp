// SPDX-License-Identifier: Apache-2.0
//
// Oracle for the toy causal shift table: inference-style judgement before and
// after a negative/positive push, recomputed with the plain-loop forward.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectprobe/dataset.hpp"
#include "aspectprobe/lexicon.hpp"
#include "aspectprobe/toy_mlm.hpp"
#include "oracle/toy_oracle.hpp"

namespace oracle {

struct RawSubspace {
    int layer = 0;
    double alpha = 0;
    std::vector<Vec> dirs;
};

inline RawSubspace read_subspace(const std::string& path) {
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    RawSubspace s;
    s.layer = j.at("layer").get<int>();
    s.alpha = j.at("alpha").get<double>();
    // Stored as float32; Gram-Schmidt back to orthonormal.
    for (auto v : j.at("directions").get<std::vector<Vec>>()) {
        for (const auto& u : s.dirs) {
            double c = 0;
            for (std::size_t i = 0; i < v.size(); ++i) c += u[i] * v[i];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
        }
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (auto& x : v) x /= n;
        s.dirs.push_back(v);
    }
    return s;
}

inline Vec push(const RawSubspace& s, const Vec& h, double sign) {
    Vec out = h;
    for (const auto& w : s.dirs) {
        double c = 0;
        for (std::size_t i = 0; i < h.size(); ++i) c += w[i] * h[i];
        for (std::size_t i = 0; i < h.size(); ++i) out[i] += (-c + sign * s.alpha * std::fabs(c)) * w[i];
    }
    return out;
}

// Aspect masses over the top-k entries of a full distribution.
inline std::pair<double, double> masses(const Vec& probs, const std::map<int, aspectprobe::Aspect>& tags,
                                        std::size_t k) {
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    double perf = 0, imp = 0;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
        auto it = tags.find(order[i]);
        if (it == tags.end()) continue;
        (it->second == aspectprobe::Aspect::Perfective ? perf : imp) += probs[order[i]];
    }
    return {perf, imp};
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    std::string s = buf;
    return s == "-0" ? "0" : s;
}

// CSV with columns layer,direction,target,aspect,context_type,n,before,after,shift.
inline std::string causal_table(const ToyOracle& o, const aspectprobe::ToyMlm& tokenizer,
                                const std::vector<aspectprobe::ProbingInstance>& instances,
                                const aspectprobe::VocabFeatureMap& vocab, const RawSubspace& s, bool negative,
                                std::size_t k) {
    using aspectprobe::Aspect;
    using aspectprobe::ContextType;
    std::map<int, Aspect> tags;
    for (const auto& [tok, a] : vocab.aspects()) {
        try {
            tags[o.id(tok)] = a;
        } catch (const std::exception&) {
        }
    }
    struct Acc {
        int n = 0, before = 0, after = 0;
    };
    std::map<std::pair<int, int>, Acc> cells;
    for (const auto& inst : instances) {
        const auto t = tokenizer.encode(inst.text, inst.target_span);
        const std::vector<int> ids(t.token_ids.begin(), t.token_ids.end());
        const auto judge = [&](const Vec& p) {
            const auto [perf, imp] = masses(p, tags, k);
            return inst.expected_aspect == Aspect::Perfective ? perf > imp : imp > perf;
        };
        const bool before = judge(o.probs(ids, t.mask_position, o.n_layers()));
        const Vec h = o.states(ids, s.layer)[t.mask_position];
        const bool after = judge(o.substituted(ids, t.mask_position, s.layer, push(s, h, negative ? -1.0 : 1.0)));
        auto& c = cells[{inst.expected_aspect == Aspect::Perfective ? 0 : 1,
                         inst.context_type == ContextType::Alternative ? 0 : 1}];
        ++c.n;
        c.before += before;
        c.after += after;
    }
    std::string out = "layer,direction,target,aspect,context_type,n,before,after,shift\n";
    for (const auto& [key, c] : cells) {
        const double b = static_cast<double>(c.before) / c.n, a = static_cast<double>(c.after) / c.n;
        out += std::to_string(s.layer) + (negative ? ",negative" : ",positive") + ",aspect," +
               (key.first == 0 ? "perf," : "imp,") + (key.second == 0 ? "alternative," : "non_alternative,") +
               std::to_string(c.n) + "," + fmt(b) + "," + fmt(a) + "," + fmt(a - b) + "\n";
    }
    return out;
}

}  // namespace oracle
