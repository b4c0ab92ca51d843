// SPDX-License-Identifier: Apache-2.0
//
// Deterministic toy masked LM: a small pre-LN transformer encoder whose
// weights ship in-repo (data/toy/toy_mlm.json), plus a whitespace + suffix
// (WordPiece-style, "##" continuation) tokenizer over its 64-entry vocabulary.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "aspectprobe/backend.hpp"

namespace aspectprobe {

struct ToyBlock {
    Eigen::VectorXd ln1_g, ln1_b;
    Eigen::MatrixXd wq, wk, wv, wo;  // [in x out]
    Eigen::VectorXd bq, bk, bv, bo;
    Eigen::VectorXd ln2_g, ln2_b;
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;
};

struct ToyWeights {
    std::string model_id;
    int n_heads = 2;
    int max_len = 32;
    std::vector<std::string> vocab;
    std::string mask_token = "[MASK]";
    std::string unk_token = "[UNK]";
    std::string cls_token = "[CLS]";
    std::string sep_token = "[SEP]";
    Eigen::MatrixXd embeddings;  // [vocab x d]
    Eigen::MatrixXd positions;   // [max_len x d]
    std::vector<ToyBlock> blocks;
    Eigen::VectorXd lnf_g, lnf_b;
    Eigen::VectorXd out_bias;  // [vocab]

    int hidden_size() const { return static_cast<int>(embeddings.cols()); }
};

ToyWeights toy_weights_from_json(const nlohmann::json& j);
nlohmann::json toy_weights_to_json(const ToyWeights& w);

// Seeded construction used to produce the checked-in weight file.
ToyWeights generate_toy_weights(std::uint64_t seed, const std::vector<std::string>& vocab, int hidden_size,
                                int n_layers, int n_heads, int ffn_size, int max_len);

std::vector<std::string> default_toy_vocabulary();

class ToyMlm final : public Session {
public:
    explicit ToyMlm(ToyWeights weights);
    static ToyMlm load(const std::filesystem::path& path);

    BackendMeta meta() const override;
    TokenizedTarget encode(const std::string& text, CharSpan target_span) const override;
    std::vector<MaskDistribution> mask_distributions(const MaskQuery& q) const override;
    Vector hidden_state(std::span<const TokenId> token_ids, std::size_t position, int layer) const override;
    MaskDistribution forward_substituted(const SubstitutionQuery& q) const override;
    std::vector<Vector> dropout_samples(std::span<const TokenId> token_ids, std::size_t mask_position,
                                        int n_samples) const override;

    void set_seed(std::uint64_t seed) override { seed_ = seed; }
    std::uint64_t seed() const override { return seed_; }

    void set_dropout_rate(double rate);
    double dropout_rate() const { return dropout_rate_; }

    std::vector<TokenId> tokenize(std::string_view text) const;
    std::vector<TokenId> tokenize_word(std::string_view lowered_word) const;
    std::string detokenize(std::span<const TokenId> ids) const;
    const std::vector<std::string>& vocabulary() const { return w_.vocab; }
    TokenId token_id(std::string_view token) const;
    const ToyWeights& weights() const { return w_; }

    // Full-vocabulary readout of one hidden vector.
    Vector readout(const Eigen::VectorXd& h) const;

private:
    struct DropoutCtx {
        double rate = 0.0;
        std::uint64_t stream = 0;
    };

    // Hidden states of all positions after `upto_layer` blocks.
    Eigen::MatrixXd run(std::span<const TokenId> ids, int upto_layer, const DropoutCtx* dropout = nullptr) const;
    void run_block(Eigen::MatrixXd& h, const ToyBlock& b, const DropoutCtx* dropout, std::uint64_t salt) const;
    void check_ids(std::span<const TokenId> ids) const;

    ToyWeights w_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId mask_id_ = 0;
    TokenId unk_id_ = 0;
    TokenId cls_id_ = 0;
    TokenId sep_id_ = 0;
    std::uint64_t seed_ = 0;
    double dropout_rate_ = 0.1;
};

}  // namespace aspectprobe
