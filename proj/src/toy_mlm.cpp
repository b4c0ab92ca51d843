// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/toy_mlm.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/rng.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

using nlohmann::json;

namespace {

constexpr double kLayerNormEps = 1e-5;

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) throw Error("malformed_weights", "ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

json to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

json to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean) * inv * g(c) + b(c);
    }
    return out;
}

double gelu(double x) {
    const double k = std::sqrt(2.0 / std::numbers::pi);
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    Eigen::MatrixXd y = x * w;
    y.rowwise() += b.transpose();
    return y;
}

// Values are rounded to float32 so the weight file round-trips exactly.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

ToyWeights toy_weights_from_json(const json& j) {
    ToyWeights w;
    w.model_id = j.at("model_id").get<std::string>();
    w.n_heads = j.at("n_heads").get<int>();
    w.max_len = j.at("max_len").get<int>();
    w.vocab = j.at("vocab").get<std::vector<std::string>>();
    w.mask_token = j.value("mask_token", w.mask_token);
    w.unk_token = j.value("unk_token", w.unk_token);
    w.cls_token = j.value("cls_token", w.cls_token);
    w.sep_token = j.value("sep_token", w.sep_token);
    w.embeddings = matrix_from_json(j.at("embeddings"));
    w.positions = matrix_from_json(j.at("positions"));
    for (const auto& jb : j.at("layers")) {
        ToyBlock b;
        b.ln1_g = vector_from_json(jb.at("ln1_g"));
        b.ln1_b = vector_from_json(jb.at("ln1_b"));
        b.wq = matrix_from_json(jb.at("wq"));
        b.bq = vector_from_json(jb.at("bq"));
        b.wk = matrix_from_json(jb.at("wk"));
        b.bk = vector_from_json(jb.at("bk"));
        b.wv = matrix_from_json(jb.at("wv"));
        b.bv = vector_from_json(jb.at("bv"));
        b.wo = matrix_from_json(jb.at("wo"));
        b.bo = vector_from_json(jb.at("bo"));
        b.ln2_g = vector_from_json(jb.at("ln2_g"));
        b.ln2_b = vector_from_json(jb.at("ln2_b"));
        b.w1 = matrix_from_json(jb.at("w1"));
        b.b1 = vector_from_json(jb.at("b1"));
        b.w2 = matrix_from_json(jb.at("w2"));
        b.b2 = vector_from_json(jb.at("b2"));
        w.blocks.push_back(std::move(b));
    }
    w.lnf_g = vector_from_json(j.at("lnf_g"));
    w.lnf_b = vector_from_json(j.at("lnf_b"));
    w.out_bias = vector_from_json(j.at("out_bias"));

    const auto d = w.embeddings.cols();
    if (static_cast<std::size_t>(w.embeddings.rows()) != w.vocab.size() || w.positions.cols() != d ||
        w.positions.rows() != w.max_len || w.out_bias.size() != w.embeddings.rows() || w.blocks.empty() ||
        d % w.n_heads != 0) {
        throw Error("malformed_weights", "inconsistent toy model shapes");
    }
    return w;
}

json toy_weights_to_json(const ToyWeights& w) {
    json j;
    j["model_id"] = w.model_id;
    j["n_layers"] = w.blocks.size();
    j["hidden_size"] = w.hidden_size();
    j["n_heads"] = w.n_heads;
    j["ffn_size"] = w.blocks.empty() ? 0 : w.blocks.front().w1.cols();
    j["max_len"] = w.max_len;
    j["vocab"] = w.vocab;
    j["mask_token"] = w.mask_token;
    j["unk_token"] = w.unk_token;
    j["cls_token"] = w.cls_token;
    j["sep_token"] = w.sep_token;
    j["embeddings"] = to_json(w.embeddings);
    j["positions"] = to_json(w.positions);
    json layers = json::array();
    for (const auto& b : w.blocks) {
        json jb;
        jb["ln1_g"] = to_json(b.ln1_g);
        jb["ln1_b"] = to_json(b.ln1_b);
        jb["wq"] = to_json(b.wq);
        jb["bq"] = to_json(b.bq);
        jb["wk"] = to_json(b.wk);
        jb["bk"] = to_json(b.bk);
        jb["wv"] = to_json(b.wv);
        jb["bv"] = to_json(b.bv);
        jb["wo"] = to_json(b.wo);
        jb["bo"] = to_json(b.bo);
        jb["ln2_g"] = to_json(b.ln2_g);
        jb["ln2_b"] = to_json(b.ln2_b);
        jb["w1"] = to_json(b.w1);
        jb["b1"] = to_json(b.b1);
        jb["w2"] = to_json(b.w2);
        jb["b2"] = to_json(b.b2);
        layers.push_back(std::move(jb));
    }
    j["layers"] = std::move(layers);
    j["lnf_g"] = to_json(w.lnf_g);
    j["lnf_b"] = to_json(w.lnf_b);
    j["out_bias"] = to_json(w.out_bias);
    return j;
}

std::vector<std::string> default_toy_vocabulary() {
    return {
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", ".", ",",
        // complete verb forms
        "читал", "прочитал", "читали", "прочитали", "делал", "сделал", "делали", "сделали", "писал", "написал",
        "пел", "спел", "понимал", "понял", "толкать", "толкнуть", "гулять", "петь",
        // sub-word pieces
        "ab", "##cd", "чит", "пишет", "##ает", "про", "##чит", "##ать", "гуля", "##ла",
        // context words
        "он", "она", "они", "всегда", "вдруг", "каждый", "новый", "год", "день", "вечер", "начал", "смогла",
        "любила", "забыла", "в", "лесу", "книгу", "письмо", "уже", "часто", "наконец", "быстро", "долго", "и",
        "не", "будет", "за", "минуты", "песню",
    };
}

ToyWeights generate_toy_weights(std::uint64_t seed, const std::vector<std::string>& vocab, int hidden_size,
                                int n_layers, int n_heads, int ffn_size, int max_len) {
    SplitMix64 rng(seed);
    auto gauss_matrix = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f32(scale * rng.normal());
        }
        return m;
    };
    auto gauss_vector = [&](Eigen::Index n, double mean, double scale) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = f32(mean + scale * rng.normal());
        return v;
    };

    ToyWeights w;
    w.model_id = "toy-mlm-v1";
    w.n_heads = n_heads;
    w.max_len = max_len;
    w.vocab = vocab;
    const auto v = static_cast<Eigen::Index>(vocab.size());
    const Eigen::Index d = hidden_size;
    const Eigen::Index f = ffn_size;
    w.embeddings = gauss_matrix(v, d, 0.5);
    w.positions = gauss_matrix(max_len, d, 0.2);
    for (int l = 0; l < n_layers; ++l) {
        ToyBlock b;
        b.ln1_g = gauss_vector(d, 1.0, 0.1);
        b.ln1_b = gauss_vector(d, 0.0, 0.1);
        b.wq = gauss_matrix(d, d, 0.3);
        b.bq = gauss_vector(d, 0.0, 0.05);
        b.wk = gauss_matrix(d, d, 0.3);
        b.bk = gauss_vector(d, 0.0, 0.05);
        b.wv = gauss_matrix(d, d, 0.3);
        b.bv = gauss_vector(d, 0.0, 0.05);
        b.wo = gauss_matrix(d, d, 0.3);
        b.bo = gauss_vector(d, 0.0, 0.05);
        b.ln2_g = gauss_vector(d, 1.0, 0.1);
        b.ln2_b = gauss_vector(d, 0.0, 0.1);
        b.w1 = gauss_matrix(d, f, 0.25);
        b.b1 = gauss_vector(f, 0.0, 0.05);
        b.w2 = gauss_matrix(f, d, 0.18);
        b.b2 = gauss_vector(d, 0.0, 0.05);
        w.blocks.push_back(std::move(b));
    }
    w.lnf_g = gauss_vector(d, 1.0, 0.1);
    w.lnf_b = gauss_vector(d, 0.0, 0.1);
    w.out_bias = gauss_vector(v, 0.0, 0.5);
    return w;
}

// ---------------------------------------------------------------------------

ToyMlm::ToyMlm(ToyWeights weights) : w_(std::move(weights)) {
    for (std::size_t i = 0; i < w_.vocab.size(); ++i) index_.emplace(w_.vocab[i], static_cast<TokenId>(i));
    auto require = [&](const std::string& tok) {
        auto it = index_.find(tok);
        if (it == index_.end()) throw Error("malformed_weights", "special token missing: " + tok);
        return it->second;
    };
    mask_id_ = require(w_.mask_token);
    unk_id_ = require(w_.unk_token);
    cls_id_ = require(w_.cls_token);
    sep_id_ = require(w_.sep_token);
}

ToyMlm ToyMlm::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    return ToyMlm(toy_weights_from_json(json::parse(in)));
}

BackendMeta ToyMlm::meta() const {
    BackendMeta m;
    m.model_id = w_.model_id;
    m.n_layers = static_cast<int>(w_.blocks.size());
    m.hidden_size = w_.hidden_size();
    m.vocab_size = static_cast<int>(w_.vocab.size());
    m.mask_token_id = mask_id_;
    m.max_len = w_.max_len;
    m.supports_dropout = true;
    m.concurrent_safe = true;
    return m;
}

void ToyMlm::set_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("invalid_dropout_rate", std::to_string(rate));
    dropout_rate_ = rate;
}

TokenId ToyMlm::token_id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_id_ : it->second;
}

std::vector<TokenId> ToyMlm::tokenize_word(std::string_view word) const {
    if (auto it = index_.find(std::string(word)); it != index_.end()) return {it->second};
    const auto cps = text::decode(word);
    std::vector<TokenId> out;
    std::size_t start = 0;
    while (start < cps.size()) {
        std::size_t end = cps.size();
        TokenId found = -1;
        while (end > start) {
            std::string piece = text::encode(std::u32string_view(cps).substr(start, end - start));
            if (start > 0) piece = "##" + piece;
            if (auto it = index_.find(piece); it != index_.end()) {
                found = it->second;
                break;
            }
            --end;
        }
        if (found < 0) return {unk_id_};
        out.push_back(found);
        start = end;
    }
    return out;
}

std::vector<TokenId> ToyMlm::tokenize(std::string_view s) const {
    std::vector<TokenId> out;
    for (const auto& piece : text::split_words(s)) {
        const auto ids = tokenize_word(text::to_lower(piece.surface));
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

std::string ToyMlm::detokenize(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id == cls_id_ || id == sep_id_) continue;
        const std::string& tok = w_.vocab.at(static_cast<std::size_t>(id));
        if (tok.rfind("##", 0) == 0) {
            out += tok.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += tok;
        }
    }
    return out;
}

TokenizedTarget ToyMlm::encode(const std::string& s, CharSpan span) const {
    const std::size_t len = text::length(s);
    if (span.begin >= span.end || span.end > len) throw Error("span_invalid", "target span out of range");
    const auto before = tokenize(text::substr(s, 0, span.begin));
    const auto target = tokenize(text::substr(s, span.begin, span.end));
    const auto after = tokenize(text::substr(s, span.end, len));
    if (target.empty()) throw Error("span_invalid", "target span contains no tokens");

    TokenizedTarget t;
    t.token_ids.push_back(cls_id_);
    t.token_ids.insert(t.token_ids.end(), before.begin(), before.end());
    t.mask_position = t.token_ids.size();
    t.token_ids.push_back(mask_id_);
    t.token_ids.insert(t.token_ids.end(), after.begin(), after.end());
    t.token_ids.push_back(sep_id_);
    t.target_subtokens = target;
    if (t.token_ids.size() - 1 + target.size() > static_cast<std::size_t>(w_.max_len)) {
        throw Error("input_too_long", std::to_string(t.token_ids.size() - 1 + target.size()) + " tokens");
    }
    return t;
}

void ToyMlm::check_ids(std::span<const TokenId> ids) const {
    if (ids.empty()) throw Error("empty_input", "");
    if (ids.size() > static_cast<std::size_t>(w_.max_len)) throw Error("input_too_long", std::to_string(ids.size()));
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= w_.vocab.size()) {
            throw Error("token_out_of_range", std::to_string(id));
        }
    }
}

void ToyMlm::run_block(Eigen::MatrixXd& h, const ToyBlock& b, const DropoutCtx* dropout, std::uint64_t salt) const {
    const Eigen::Index d = h.cols();
    const Eigen::Index dh = d / w_.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    std::optional<SplitMix64> rng;
    if (dropout != nullptr && dropout->rate > 0.0) rng.emplace(mix_seed(dropout->stream, salt));
    auto apply_dropout = [&](Eigen::MatrixXd& m) {
        if (!rng) return;
        const double keep = 1.0 - dropout->rate;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng->uniform() < dropout->rate ? 0.0 : m(r, c) / keep;
        }
    };

    const Eigen::MatrixXd a = layer_norm(h, b.ln1_g, b.ln1_b);
    const Eigen::MatrixXd q = affine(a, b.wq, b.bq);
    const Eigen::MatrixXd k = affine(a, b.wk, b.bk);
    const Eigen::MatrixXd v = affine(a, b.wv, b.bv);
    Eigen::MatrixXd ctx(h.rows(), d);
    for (int head = 0; head < w_.n_heads; ++head) {
        const Eigen::Index off = head * dh;
        const Eigen::MatrixXd scores = q.middleCols(off, dh) * k.middleCols(off, dh).transpose() * scale;
        Eigen::MatrixXd attn(scores.rows(), scores.cols());
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
            const double mx = scores.row(r).maxCoeff();
            double sum = 0.0;
            for (Eigen::Index c = 0; c < scores.cols(); ++c) {
                attn(r, c) = std::exp(scores(r, c) - mx);
                sum += attn(r, c);
            }
            attn.row(r) /= sum;
        }
        ctx.middleCols(off, dh) = attn * v.middleCols(off, dh);
    }
    Eigen::MatrixXd attn_out = affine(ctx, b.wo, b.bo);
    apply_dropout(attn_out);
    h += attn_out;

    const Eigen::MatrixXd m = layer_norm(h, b.ln2_g, b.ln2_b);
    Eigen::MatrixXd hidden = affine(m, b.w1, b.b1);
    hidden = hidden.unaryExpr([](double x) { return gelu(x); });
    Eigen::MatrixXd ffn_out = affine(hidden, b.w2, b.b2);
    apply_dropout(ffn_out);
    h += ffn_out;
}

Eigen::MatrixXd ToyMlm::run(std::span<const TokenId> ids, int upto_layer, const DropoutCtx* dropout) const {
    const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
    Eigen::MatrixXd h(n, w_.hidden_size());
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = w_.embeddings.row(ids[static_cast<std::size_t>(i)]) + w_.positions.row(i);
    for (int l = 0; l < upto_layer; ++l) run_block(h, w_.blocks[static_cast<std::size_t>(l)], dropout, static_cast<std::uint64_t>(l));
    return h;
}

Vector ToyMlm::readout(const Eigen::VectorXd& h) const {
    const Eigen::MatrixXd x = layer_norm(h.transpose(), w_.lnf_g, w_.lnf_b);
    const Eigen::VectorXd logits = w_.embeddings * x.row(0).transpose() + w_.out_bias;
    return contract::softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

std::vector<MaskDistribution> ToyMlm::mask_distributions(const MaskQuery& q) const {
    const auto m = meta();
    check_ids(q.token_ids);
    if (!q.gold_prefix.empty()) check_ids(q.gold_prefix);
    auto [ids, mask_pos] = contract::insert_prefix(m, q.token_ids, q.mask_position, q.gold_prefix);
    for (int layer : q.layers) contract::check_layer(m, layer);
    for (TokenId id : q.query_ids) {
        if (id < 0 || id >= m.vocab_size) throw Error("token_out_of_range", std::to_string(id));
    }
    const std::size_t top_n = contract::clip_top_n(m, q.top_n);

    std::vector<MaskDistribution> out;
    out.reserve(q.layers.size());
    const auto n = static_cast<Eigen::Index>(ids.size());
    Eigen::MatrixXd h(n, w_.hidden_size());
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = w_.embeddings.row(ids[static_cast<std::size_t>(i)]) + w_.positions.row(i);
    int at_layer = 0;
    // Layers may be requested in any order; states are recomputed when going backwards.
    for (int layer : q.layers) {
        if (layer < at_layer) {
            h = run(ids, layer);
            at_layer = layer;
        }
        while (at_layer < layer) {
            run_block(h, w_.blocks[static_cast<std::size_t>(at_layer)], nullptr, 0);
            ++at_layer;
        }
        const Vector probs = readout(h.row(static_cast<Eigen::Index>(mask_pos)).transpose());
        MaskDistribution dist;
        dist.layer = layer;
        dist.entries = contract::top_entries(probs, top_n);
        for (TokenId id : q.query_ids) dist.query_probs.push_back(probs[static_cast<std::size_t>(id)]);
        out.push_back(std::move(dist));
    }
    return out;
}

Vector ToyMlm::hidden_state(std::span<const TokenId> token_ids, std::size_t position, int layer) const {
    check_ids(token_ids);
    contract::check_layer(meta(), layer);
    contract::check_position(token_ids, position);
    const Eigen::MatrixXd h = run(token_ids, layer);
    const Eigen::VectorXd row = h.row(static_cast<Eigen::Index>(position)).transpose();
    return Vector(row.data(), row.data() + row.size());
}

MaskDistribution ToyMlm::forward_substituted(const SubstitutionQuery& q) const {
    const auto m = meta();
    check_ids(q.token_ids);
    contract::check_layer(m, q.layer);
    contract::check_position(q.token_ids, q.position);
    if (q.vector.size() != static_cast<std::size_t>(m.hidden_size)) {
        throw Error("dimension_mismatch", std::to_string(q.vector.size()) + " != " + std::to_string(m.hidden_size));
    }
    for (TokenId id : q.query_ids) {
        if (id < 0 || id >= m.vocab_size) throw Error("token_out_of_range", std::to_string(id));
    }
    const std::size_t top_n = contract::clip_top_n(m, q.top_n);

    Eigen::MatrixXd h = run(q.token_ids, q.layer);
    const auto pos = static_cast<Eigen::Index>(q.position);
    for (Eigen::Index c = 0; c < h.cols(); ++c) h(pos, c) = q.vector[static_cast<std::size_t>(c)];
    for (int l = q.layer; l < m.n_layers; ++l) run_block(h, w_.blocks[static_cast<std::size_t>(l)], nullptr, 0);

    const Vector probs = readout(h.row(pos).transpose());
    MaskDistribution dist;
    dist.layer = m.n_layers;
    dist.entries = contract::top_entries(probs, top_n);
    for (TokenId id : q.query_ids) dist.query_probs.push_back(probs[static_cast<std::size_t>(id)]);
    return dist;
}

std::vector<Vector> ToyMlm::dropout_samples(std::span<const TokenId> token_ids, std::size_t mask_position,
                                            int n_samples) const {
    const auto m = meta();
    check_ids(token_ids);
    contract::insert_prefix(m, token_ids, mask_position, {});
    if (n_samples < 1) throw Error("invalid_sample_count", std::to_string(n_samples));
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        DropoutCtx ctx{dropout_rate_, mix_seed(seed_, static_cast<std::uint64_t>(s))};
        const Eigen::MatrixXd h = run(token_ids, m.n_layers, &ctx);
        out.push_back(readout(h.row(static_cast<Eigen::Index>(mask_position)).transpose()));
    }
    return out;
}

}  // namespace aspectprobe
