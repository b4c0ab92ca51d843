// SPDX-License-Identifier: Apache-2.0
//
// HTTP/JSON wire protocol between the toolkit and a model bridge.
//
//   POST /meta                 {seed}
//   POST /encode               {seed, text, target_span:[s,e]}
//   POST /mask_distributions   {seed, token_ids, mask_position, layers, top_n, gold_prefix?, query_ids?}
//   POST /hidden_state         {seed, token_ids, position, layer}
//   POST /forward_substituted  {seed, token_ids, layer, position, vector, top_n, query_ids?}
//   POST /dropout_samples      {seed, token_ids, mask_position, n_samples}
//
// Distributions travel as {layer, token_ids:[...], probs:[...], query_probs:[...]}.
// Real numbers are serialized with float32 precision. Contract violations
// answer HTTP 400 with {"error": code}.
#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json_fwd.hpp>

#include "aspectprobe/backend.hpp"

namespace httplib {
class Server;
}

namespace aspectprobe::wire {

nlohmann::json to_json(const BackendMeta& m);
BackendMeta meta_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskDistribution& d);
MaskDistribution distribution_from_json(const nlohmann::json& j);

// Dispatches one request body to `session`. Returns (status, response body).
std::pair<int, nlohmann::json> handle(Session& session, std::mutex& lock, const std::string& endpoint,
                                      const nlohmann::json& request);

class HttpSession final : public Session {
public:
    // `url` like "http://127.0.0.1:8080".
    explicit HttpSession(std::string url, std::uint64_t seed = 0);
    ~HttpSession() override;

    BackendMeta meta() const override;
    TokenizedTarget encode(const std::string& text, CharSpan target_span) const override;
    std::vector<MaskDistribution> mask_distributions(const MaskQuery& q) const override;
    Vector hidden_state(std::span<const TokenId> token_ids, std::size_t position, int layer) const override;
    MaskDistribution forward_substituted(const SubstitutionQuery& q) const override;
    std::vector<Vector> dropout_samples(std::span<const TokenId> token_ids, std::size_t mask_position,
                                        int n_samples) const override;

    void set_seed(std::uint64_t seed) override { seed_ = seed; }
    std::uint64_t seed() const override { return seed_; }

private:
    nlohmann::json post(const std::string& endpoint, nlohmann::json body) const;

    std::string url_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    mutable std::unique_ptr<BackendMeta> meta_cache_;
};

// Serves a session over the wire protocol on a background thread.
class Server {
public:
    explicit Server(Session& session);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds to host:port (port 0 = ephemeral) and starts listening; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    // Blocking variant for standalone tools.
    void listen_blocking(const std::string& host, int port);
    void stop();

private:
    void install_routes();

    Session& session_;
    std::mutex lock_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace aspectprobe::wire
