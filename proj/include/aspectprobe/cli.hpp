// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 usage or config error,
// 2 runtime error.
#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectprobe/backend.hpp"

namespace aspectprobe::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// JSON config with dotted-path access. Relative paths in the file resolve
// against the file's directory; paths given as flags resolve against the CWD
// (they are stored absolute).
class Config {
public:
    Config();
    static Config load(const std::filesystem::path& path);

    const nlohmann::json& doc() const { return doc_; }
    bool has(const std::string& dotted) const;
    const nlohmann::json& at(const std::string& dotted) const;
    void set(const std::string& dotted, nlohmann::json value);
    // "a.b=value"; value parsed as JSON when possible, else taken as a string.
    void apply_override(const std::string& assignment);

    std::string str(const std::string& dotted) const;
    double num(const std::string& dotted) const;
    long long integer(const std::string& dotted) const;
    std::filesystem::path path(const std::string& dotted) const;  // throws ConfigError when empty

    static nlohmann::json defaults();

private:
    nlohmann::json doc_;
    std::filesystem::path base_;
};

// "all", "a-b", "a,b,c", a single integer, or a JSON array.
std::vector<int> parse_layers(const nlohmann::json& spec, int n_layers);

// ASPECTPROBE_BACKEND_URL wins, then backend.url, then the toy weights.
std::unique_ptr<Session> open_session(const Config& config);

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace aspectprobe::cli
