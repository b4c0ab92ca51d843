// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/conformance.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "aspectprobe/error.hpp"

namespace aspectprobe {

bool ConformanceReport::ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

namespace {

double max_abs_diff(const MaskDistribution& a, const MaskDistribution& b) {
    std::map<TokenId, double> pa(a.entries.begin(), a.entries.end());
    double worst = 0.0;
    for (const auto& [id, p] : b.entries) {
        auto it = pa.find(id);
        worst = std::max(worst, std::fabs((it == pa.end() ? 0.0 : it->second) - p));
    }
    return worst;
}

}  // namespace

ConformanceReport check_conformance(const Session& session, const ConformanceProbe& probe) {
    ConformanceReport r;
    auto record = [&](std::string name, auto&& fn) {
        ConformanceCheck c;
        c.name = std::move(name);
        try {
            c.detail = fn();
            c.passed = c.detail.empty();
        } catch (const Error& e) {
            c.detail = e.what();
        }
        r.checks.push_back(std::move(c));
    };

    BackendMeta meta;
    record("meta", [&]() -> std::string {
        meta = session.meta();
        if (meta.n_layers < 1 || meta.hidden_size < 1 || meta.vocab_size < 1 || meta.max_len < 1) {
            return "non-positive dimension in metadata";
        }
        return {};
    });
    if (!r.ok()) return r;

    TokenizedTarget t;
    record("encode", [&]() -> std::string {
        t = session.encode(probe.text, probe.target_span);
        if (t.mask_position >= t.token_ids.size() || t.token_ids[t.mask_position] != meta.mask_token_id) {
            return "mask token not at mask_position";
        }
        if (t.target_subtokens.empty()) return "no target subtokens";
        return {};
    });
    if (!r.ok()) return r;

    const std::size_t wide = std::min<std::size_t>(static_cast<std::size_t>(meta.vocab_size), 12000);
    const std::size_t narrow = std::min<std::size_t>(wide, 10);
    MaskQuery q;
    q.token_ids = t.token_ids;
    q.mask_position = t.mask_position;
    q.layers = {meta.n_layers};
    q.top_n = wide;

    record("determinism", [&]() -> std::string {
        const auto a = session.mask_distributions(q);
        const auto b = session.mask_distributions(q);
        if (a.size() != 1 || b.size() != 1) return "expected one distribution per layer";
        if (a[0].entries != b[0].entries) return "repeated request gave different entries";
        return {};
    });

    record("sorted_truncation", [&]() -> std::string {
        const auto full = session.mask_distributions(q);
        MaskQuery small = q;
        small.top_n = narrow;
        const auto cut = session.mask_distributions(small);
        if (full.at(0).entries.size() != wide) return "top_n entries not honoured";
        if (cut.at(0).entries.size() != narrow) return "truncated request returned the wrong count";
        const auto& e = full[0].entries;
        for (std::size_t i = 1; i < e.size(); ++i) {
            if (e[i - 1].second < e[i].second) return "entries not sorted by descending probability";
        }
        for (std::size_t i = 0; i < narrow; ++i) {
            if (cut[0].entries[i].first != e[i].first) return "truncation is not a prefix of the full ranking";
        }
        return {};
    });

    record("dimensions", [&]() -> std::string {
        for (int layer : {0, meta.n_layers}) {
            const auto h = session.hidden_state(t.token_ids, t.mask_position, layer);
            if (h.size() != static_cast<std::size_t>(meta.hidden_size)) {
                return "hidden_state at layer " + std::to_string(layer) + " has size " + std::to_string(h.size());
            }
        }
        try {
            session.hidden_state(t.token_ids, t.mask_position, meta.n_layers + 1);
            return "layer beyond n_layers accepted";
        } catch (const Error&) {
        }
        return {};
    });

    record("identity_substitution", [&]() -> std::string {
        const auto base = session.mask_distributions(q).at(0);
        for (int layer : {0, meta.n_layers / 2, meta.n_layers}) {
            SubstitutionQuery s;
            s.token_ids = t.token_ids;
            s.layer = layer;
            s.position = t.mask_position;
            s.vector = session.hidden_state(t.token_ids, t.mask_position, layer);
            s.top_n = wide;
            const double d = max_abs_diff(base, session.forward_substituted(s));
            if (!(d <= probe.tolerance)) {
                return "layer " + std::to_string(layer) + " differs by " + std::to_string(d);
            }
        }
        return {};
    });
    return r;
}

}  // namespace aspectprobe
