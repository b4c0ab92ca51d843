// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/backend.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>

#include "aspectprobe/error.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

namespace {
std::mutex g_warn_mutex;
WarningHandler g_warn_handler;
}  // namespace

void set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

void warn(std::string_view message) {
    std::lock_guard lock(g_warn_mutex);
    if (g_warn_handler) {
        g_warn_handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

namespace contract {

std::pair<std::vector<TokenId>, std::size_t> insert_prefix(const BackendMeta& meta, std::span<const TokenId> ids,
                                                          std::size_t mask_position, std::span<const TokenId> prefix) {
    if (mask_position >= ids.size() || ids[mask_position] != meta.mask_token_id) {
        throw Error("mask_position_invalid", "token at mask_position is not the mask token");
    }
    if (std::count(ids.begin(), ids.end(), meta.mask_token_id) != 1) {
        throw Error("mask_count_invalid", "exactly one mask token must be present");
    }
    if (std::find(prefix.begin(), prefix.end(), meta.mask_token_id) != prefix.end()) {
        throw Error("mask_count_invalid", "gold prefix contains the mask token");
    }
    std::vector<TokenId> out;
    out.reserve(ids.size() + prefix.size());
    out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(mask_position));
    out.insert(out.end(), prefix.begin(), prefix.end());
    out.insert(out.end(), ids.begin() + static_cast<std::ptrdiff_t>(mask_position), ids.end());
    if (out.size() > static_cast<std::size_t>(meta.max_len)) {
        throw Error("input_too_long", std::to_string(out.size()) + " > " + std::to_string(meta.max_len));
    }
    return {std::move(out), mask_position + prefix.size()};
}

void check_layer(const BackendMeta& meta, int layer) {
    if (layer < 0 || layer > meta.n_layers) {
        throw Error("layer_out_of_range", "layer " + std::to_string(layer) + " not in [0, " +
                                              std::to_string(meta.n_layers) + "]");
    }
}

void check_position(std::span<const TokenId> ids, std::size_t position) {
    if (position >= ids.size()) throw Error("position_out_of_range", std::to_string(position));
}

std::size_t clip_top_n(const BackendMeta& meta, std::size_t top_n) {
    const auto vocab = static_cast<std::size_t>(meta.vocab_size);
    if (top_n > vocab) {
        warn("top_n " + std::to_string(top_n) + " clipped to vocab_size " + std::to_string(vocab));
        return vocab;
    }
    return top_n;
}

std::vector<std::pair<TokenId, double>> top_entries(std::span<const double> probs, std::size_t top_n) {
    std::vector<TokenId> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = std::min(top_n, probs.size());
    auto cmp = [&](TokenId a, TokenId b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), cmp);
    std::vector<std::pair<TokenId, double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (probs[order[i]] <= 0.0) break;
        out.emplace_back(order[i], probs[order[i]]);
    }
    return out;
}

Vector softmax(std::span<const double> logits) {
    Vector out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace contract

ResolvedVocab resolve_vocab(const Session& session, const VocabFeatureMap& vocab) {
    std::set<std::string> tokens;
    for (const auto& [tok, _] : vocab.aspects()) tokens.insert(tok);
    for (const auto& [tok, _] : vocab.numbers()) tokens.insert(tok);

    std::map<TokenId, std::vector<std::string>> by_id;
    ResolvedVocab out;
    for (const auto& tok : tokens) {
        const auto enc = session.encode(tok, CharSpan{0, text::length(tok)});
        if (enc.target_subtokens.size() != 1) {
            ++out.segmented_skipped;
            continue;
        }
        by_id[enc.target_subtokens.front()].push_back(tok);
    }
    for (const auto& [id, toks] : by_id) {
        // Several strings collapsing onto one id means the tokenizer did not
        // keep them as distinct vocabulary items (e.g. an unknown-token id).
        if (toks.size() != 1) {
            out.segmented_skipped += toks.size();
            continue;
        }
        if (auto a = vocab.aspect(toks.front())) out.aspect.emplace(id, *a);
        if (auto n = vocab.number(toks.front())) out.number.emplace(id, *n);
    }
    return out;
}

}  // namespace aspectprobe
