// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/wire.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"

namespace aspectprobe::wire {

using nlohmann::json;

namespace {

json floats(std::span<const double> v) {
    json out = json::array();
    for (double x : v) out.push_back(static_cast<double>(static_cast<float>(x)));
    return out;
}

Vector doubles(const json& j) {
    if (!j.is_array()) throw Error("bad_request", "expected a numeric array");
    Vector out;
    out.reserve(j.size());
    for (const auto& x : j) out.push_back(x.get<double>());
    return out;
}

std::vector<TokenId> ids_from(const json& j) {
    if (!j.is_array()) throw Error("bad_request", "expected a token id array");
    return j.get<std::vector<TokenId>>();
}

std::vector<TokenId> optional_ids(const json& j, const char* key) {
    return j.contains(key) ? ids_from(j[key]) : std::vector<TokenId>{};
}

}  // namespace

json to_json(const BackendMeta& m) {
    return json{{"model_id", m.model_id},
                {"n_layers", m.n_layers},
                {"hidden_size", m.hidden_size},
                {"vocab_size", m.vocab_size},
                {"mask_token_id", m.mask_token_id},
                {"max_len", m.max_len},
                {"supports_dropout", m.supports_dropout},
                {"concurrent_safe", m.concurrent_safe}};
}

BackendMeta meta_from_json(const json& j) {
    BackendMeta m;
    m.model_id = j.at("model_id").get<std::string>();
    m.n_layers = j.at("n_layers").get<int>();
    m.hidden_size = j.at("hidden_size").get<int>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.mask_token_id = j.at("mask_token_id").get<TokenId>();
    m.max_len = j.at("max_len").get<int>();
    m.supports_dropout = j.value("supports_dropout", false);
    m.concurrent_safe = j.value("concurrent_safe", false);
    if (m.n_layers < 1 || m.hidden_size < 1 || m.vocab_size <= m.mask_token_id || m.mask_token_id < 0) {
        throw Error("bad_meta", "backend metadata violates its invariants");
    }
    return m;
}

json to_json(const MaskDistribution& d) {
    json ids = json::array();
    Vector probs;
    for (const auto& [id, p] : d.entries) {
        ids.push_back(id);
        probs.push_back(p);
    }
    return json{{"layer", d.layer}, {"token_ids", ids}, {"probs", floats(probs)}, {"query_probs", floats(d.query_probs)}};
}

MaskDistribution distribution_from_json(const json& j) {
    MaskDistribution d;
    d.layer = j.at("layer").get<int>();
    const auto ids = ids_from(j.at("token_ids"));
    const auto probs = doubles(j.at("probs"));
    if (ids.size() != probs.size()) throw Error("bad_response", "token_ids/probs length mismatch");
    for (std::size_t i = 0; i < ids.size(); ++i) d.entries.emplace_back(ids[i], probs[i]);
    if (j.contains("query_probs")) d.query_probs = doubles(j["query_probs"]);
    return d;
}

std::pair<int, json> handle(Session& session, std::mutex& lock, const std::string& endpoint, const json& req) {
    std::lock_guard guard(lock);
    try {
        if (!req.is_object()) throw Error("bad_request", "body must be a JSON object");
        if (req.contains("seed")) session.set_seed(req["seed"].get<std::uint64_t>());

        if (endpoint == "/meta") return {200, to_json(session.meta())};
        if (endpoint == "/encode") {
            const auto& span = req.at("target_span");
            const auto t = session.encode(req.at("text").get<std::string>(),
                                          CharSpan{span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()});
            return {200, json{{"token_ids", t.token_ids},
                              {"target_subtokens", t.target_subtokens},
                              {"mask_position", t.mask_position}}};
        }
        if (endpoint == "/mask_distributions") {
            MaskQuery q;
            q.token_ids = ids_from(req.at("token_ids"));
            q.mask_position = req.at("mask_position").get<std::size_t>();
            q.layers = req.at("layers").get<std::vector<int>>();
            q.top_n = req.at("top_n").get<std::size_t>();
            q.gold_prefix = optional_ids(req, "gold_prefix");
            q.query_ids = optional_ids(req, "query_ids");
            json out = json::array();
            for (const auto& d : session.mask_distributions(q)) out.push_back(to_json(d));
            return {200, json{{"distributions", out}}};
        }
        if (endpoint == "/hidden_state") {
            const auto ids = ids_from(req.at("token_ids"));
            const auto v = session.hidden_state(ids, req.at("position").get<std::size_t>(), req.at("layer").get<int>());
            return {200, json{{"vector", floats(v)}}};
        }
        if (endpoint == "/forward_substituted") {
            SubstitutionQuery q;
            q.token_ids = ids_from(req.at("token_ids"));
            q.layer = req.at("layer").get<int>();
            q.position = req.at("position").get<std::size_t>();
            q.vector = doubles(req.at("vector"));
            q.top_n = req.at("top_n").get<std::size_t>();
            q.query_ids = optional_ids(req, "query_ids");
            return {200, json{{"distribution", to_json(session.forward_substituted(q))}}};
        }
        if (endpoint == "/dropout_samples") {
            const auto ids = ids_from(req.at("token_ids"));
            if (!session.meta().supports_dropout) throw Error("dropout_unsupported", "");
            const auto samples = session.dropout_samples(ids, req.at("mask_position").get<std::size_t>(),
                                                         req.at("n_samples").get<int>());
            json out = json::array();
            for (const auto& s : samples) out.push_back(floats(s));
            return {200, json{{"samples", out}}};
        }
        return {404, json{{"error", "unknown_endpoint"}}};
    } catch (const Error& e) {
        return {400, json{{"error", e.code()}, {"detail", e.what()}}};
    } catch (const json::exception& e) {
        return {400, json{{"error", "bad_request"}, {"detail", e.what()}}};
    }
}

// ---------------------------------------------------------------------------

HttpSession::HttpSession(std::string url, std::uint64_t seed) : url_(std::move(url)), seed_(seed) {}

HttpSession::~HttpSession() = default;

json HttpSession::post(const std::string& endpoint, json body) const {
    body["seed"] = seed_;
    std::lock_guard guard(mutex_);
    httplib::Client client(url_);
    client.set_read_timeout(600, 0);
    auto res = client.Post(endpoint, body.dump(), "application/json");
    if (!res) throw Error("transport_failure", endpoint + ": " + httplib::to_string(res.error()));
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error&) {
        throw Error("transport_failure", endpoint + ": non-JSON reply (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status != 200) {
        const auto code = reply.is_object() ? reply.value("error", std::string("backend_error")) : "backend_error";
        throw Error(code, endpoint + " answered HTTP " + std::to_string(res->status));
    }
    return reply;
}

BackendMeta HttpSession::meta() const {
    {
        std::lock_guard guard(mutex_);
        if (meta_cache_) return *meta_cache_;
    }
    auto m = meta_from_json(post("/meta", json::object()));
    std::lock_guard guard(mutex_);
    meta_cache_ = std::make_unique<BackendMeta>(m);
    return m;
}

TokenizedTarget HttpSession::encode(const std::string& text, CharSpan span) const {
    const auto r = post("/encode", json{{"text", text}, {"target_span", {span.begin, span.end}}});
    TokenizedTarget t;
    t.token_ids = ids_from(r.at("token_ids"));
    t.target_subtokens = ids_from(r.at("target_subtokens"));
    t.mask_position = r.at("mask_position").get<std::size_t>();
    return t;
}

std::vector<MaskDistribution> HttpSession::mask_distributions(const MaskQuery& q) const {
    json body{{"token_ids", q.token_ids}, {"mask_position", q.mask_position}, {"layers", q.layers}, {"top_n", q.top_n}};
    if (!q.gold_prefix.empty()) body["gold_prefix"] = q.gold_prefix;
    if (!q.query_ids.empty()) body["query_ids"] = q.query_ids;
    const auto r = post("/mask_distributions", std::move(body));
    std::vector<MaskDistribution> out;
    for (const auto& d : r.at("distributions")) out.push_back(distribution_from_json(d));
    return out;
}

Vector HttpSession::hidden_state(std::span<const TokenId> token_ids, std::size_t position, int layer) const {
    const auto r = post("/hidden_state", json{{"token_ids", std::vector<TokenId>(token_ids.begin(), token_ids.end())},
                                              {"position", position},
                                              {"layer", layer}});
    return doubles(r.at("vector"));
}

MaskDistribution HttpSession::forward_substituted(const SubstitutionQuery& q) const {
    json body{{"token_ids", q.token_ids}, {"layer", q.layer},   {"position", q.position},
              {"vector", floats(q.vector)}, {"top_n", q.top_n}};
    if (!q.query_ids.empty()) body["query_ids"] = q.query_ids;
    return distribution_from_json(post("/forward_substituted", std::move(body)).at("distribution"));
}

std::vector<Vector> HttpSession::dropout_samples(std::span<const TokenId> token_ids, std::size_t mask_position,
                                                 int n_samples) const {
    const auto r = post("/dropout_samples",
                        json{{"token_ids", std::vector<TokenId>(token_ids.begin(), token_ids.end())},
                             {"mask_position", mask_position},
                             {"n_samples", n_samples}});
    std::vector<Vector> out;
    for (const auto& s : r.at("samples")) out.push_back(doubles(s));
    return out;
}

// ---------------------------------------------------------------------------

Server::Server(Session& session) : session_(session), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Server::~Server() { stop(); }

void Server::install_routes() {
    for (const char* ep : {"/meta", "/encode", "/mask_distributions", "/hidden_state", "/forward_substituted",
                           "/dropout_samples"}) {
        const std::string endpoint = ep;
        server_->Post(endpoint, [this, endpoint](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = req.body.empty() ? json::object() : json::parse(req.body);
            } catch (const json::parse_error&) {
                res.status = 400;
                res.set_content(json{{"error", "bad_request"}}.dump(), "application/json");
                return;
            }
            auto [status, reply] = handle(session_, lock_, endpoint, body);
            res.status = status;
            res.set_content(reply.dump(), "application/json");
        });
    }
}

int Server::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("io_error", "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Server::listen_blocking(const std::string& host, int port) {
    if (!server_->listen(host, port)) throw Error("io_error", "cannot listen on " + host + ":" + std::to_string(port));
}

void Server::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace aspectprobe::wire
