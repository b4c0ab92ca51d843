// SPDX-License-Identifier: Apache-2.0
//
// Masked-LM session contract. Probing engines talk to a model only through
// `Session`; the toy MLM and the HTTP bridge client both implement it.
//
// Layer indexing: 0 is the embedding output, 1..n_layers are transformer
// blocks. The readout of layer l applies the model's final MLM head (with its
// normalization) to the layer-l hidden state ("head-on-layer").
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aspectprobe/dataset.hpp"
#include "aspectprobe/lexicon.hpp"

namespace aspectprobe {

using TokenId = std::int32_t;
using Vector = std::vector<double>;

inline constexpr std::string_view kReadoutPolicy = "head-on-layer";

struct BackendMeta {
    std::string model_id;
    int n_layers = 1;
    int hidden_size = 1;
    int vocab_size = 1;
    TokenId mask_token_id = 0;
    int max_len = 1;
    bool supports_dropout = false;
    bool concurrent_safe = false;
};

struct TokenizedTarget {
    std::vector<TokenId> token_ids;  // target replaced by one mask
    std::vector<TokenId> target_subtokens;
    std::size_t mask_position = 0;
};

struct MaskDistribution {
    int layer = 0;
    std::vector<std::pair<TokenId, double>> entries;  // descending probability
    std::vector<double> query_probs;                  // parallel to the request's query_ids
};

struct MaskQuery {
    std::vector<TokenId> token_ids;
    std::size_t mask_position = 0;
    std::vector<int> layers;
    std::size_t top_n = 0;
    std::vector<TokenId> gold_prefix;  // inserted right before the mask
    std::vector<TokenId> query_ids;    // exact-probability lookups, unaffected by top_n
};

struct SubstitutionQuery {
    std::vector<TokenId> token_ids;
    int layer = 0;
    std::size_t position = 0;
    Vector vector;
    std::size_t top_n = 0;
    std::vector<TokenId> query_ids;
};

class Session {
public:
    virtual ~Session() = default;

    virtual BackendMeta meta() const = 0;
    virtual TokenizedTarget encode(const std::string& text, CharSpan target_span) const = 0;
    virtual std::vector<MaskDistribution> mask_distributions(const MaskQuery& q) const = 0;
    virtual Vector hidden_state(std::span<const TokenId> token_ids, std::size_t position, int layer) const = 0;
    // Final-layer distribution at `position` after splicing `vector` into the
    // layer-`layer` hidden state at that position.
    virtual MaskDistribution forward_substituted(const SubstitutionQuery& q) const = 0;
    virtual std::vector<Vector> dropout_samples(std::span<const TokenId> token_ids, std::size_t mask_position,
                                                int n_samples) const = 0;

    virtual void set_seed(std::uint64_t seed) = 0;
    virtual std::uint64_t seed() const = 0;
};

// Warning sink shared by the toolkit (stderr by default).
using WarningHandler = std::function<void(std::string_view)>;
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

// Contract helpers shared by backend implementations.
namespace contract {

// Returns the token ids with `prefix` inserted before the mask, and the new
// mask position. Validates the single-mask precondition and max_len.
std::pair<std::vector<TokenId>, std::size_t> insert_prefix(const BackendMeta& meta, std::span<const TokenId> ids,
                                                          std::size_t mask_position, std::span<const TokenId> prefix);

void check_layer(const BackendMeta& meta, int layer);
void check_position(std::span<const TokenId> ids, std::size_t position);
std::size_t clip_top_n(const BackendMeta& meta, std::size_t top_n);

// Descending by probability (ties by ascending id), truncated to top_n,
// zero-probability entries dropped.
std::vector<std::pair<TokenId, double>> top_entries(std::span<const double> probs, std::size_t top_n);

// Softmax of logits (numerically stable).
Vector softmax(std::span<const double> logits);

}  // namespace contract

// Vocabulary feature tags resolved to token ids of the serving model. Only
// forms that encode as exactly one subtoken (complete forms) are kept.
struct ResolvedVocab {
    std::unordered_map<TokenId, Aspect> aspect;
    std::unordered_map<TokenId, GrammaticalNumber> number;
    std::size_t segmented_skipped = 0;
};

ResolvedVocab resolve_vocab(const Session& session, const VocabFeatureMap& vocab);

}  // namespace aspectprobe
