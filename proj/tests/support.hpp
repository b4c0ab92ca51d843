// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/dataset.hpp"
#include "aspectprobe/error.hpp"
#include "aspectprobe/lexicon.hpp"
#include "aspectprobe/toy_mlm.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path data(const std::string& rel) { return fs::path(ASPECTPROBE_DATA_DIR) / rel; }
inline fs::path test_data(const std::string& rel) { return fs::path(ASPECTPROBE_TEST_DATA_DIR) / rel; }

inline aspectprobe::ToyMlm toy() { return aspectprobe::ToyMlm::load(data("toy/toy_mlm.json")); }

inline std::vector<aspectprobe::ProbingInstance> toy_probing() {
    return aspectprobe::load_instances(data("toy/probing.jsonl"), aspectprobe::load_aspect_bank(data("toy/aspect_bank.tsv")))
        .instances;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("aspectprobe_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// A session whose dropout samples alternate between two fixed score vectors.
class TwoPointSession final : public aspectprobe::Session {
public:
    TwoPointSession(aspectprobe::Vector a, aspectprobe::Vector b, bool dropout = true)
        : a_(std::move(a)), b_(std::move(b)), dropout_(dropout) {}

    aspectprobe::BackendMeta meta() const override {
        aspectprobe::BackendMeta m;
        m.model_id = "two-point";
        m.n_layers = 1;
        m.hidden_size = 2;
        m.vocab_size = 8;
        m.mask_token_id = 1;
        m.max_len = 8;
        m.supports_dropout = dropout_;
        return m;
    }
    aspectprobe::TokenizedTarget encode(const std::string&, aspectprobe::CharSpan) const override {
        return {{0, 1, 2}, {5}, 1};
    }
    std::vector<aspectprobe::MaskDistribution> mask_distributions(const aspectprobe::MaskQuery&) const override {
        throw aspectprobe::Error("unsupported", "");
    }
    aspectprobe::Vector hidden_state(std::span<const aspectprobe::TokenId>, std::size_t, int) const override {
        throw aspectprobe::Error("unsupported", "");
    }
    aspectprobe::MaskDistribution forward_substituted(const aspectprobe::SubstitutionQuery&) const override {
        throw aspectprobe::Error("unsupported", "");
    }
    std::vector<aspectprobe::Vector> dropout_samples(std::span<const aspectprobe::TokenId>, std::size_t,
                                                     int n) const override {
        std::vector<aspectprobe::Vector> out;
        for (int i = 0; i < n; ++i) out.push_back(i % 2 == 0 ? a_ : b_);
        return out;
    }
    void set_seed(std::uint64_t) override {}
    std::uint64_t seed() const override { return 0; }

private:
    aspectprobe::Vector a_, b_;
    bool dropout_;
};

inline aspectprobe::ProbingInstance instance(const std::string& id, const std::string& text, std::size_t b,
                                             std::size_t e, const std::string& expected, const std::string& comp,
                                             aspectprobe::Aspect a,
                                             aspectprobe::ContextType c = aspectprobe::ContextType::NonAlternative) {
    aspectprobe::ProbingInstance i;
    i.id = id;
    i.text = text;
    i.target_span = {b, e};
    i.expected_form = expected;
    i.complementary_form = comp;
    i.expected_aspect = a;
    i.context_type = c;
    return i;
}

}  // namespace testing
