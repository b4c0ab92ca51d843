// SPDX-License-Identifier: Apache-2.0
//
// Probing instances (alternative / non-alternative contexts) and boundedness
// training instances. Spans are code point ranges [begin, end).
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "aspectprobe/lexicon.hpp"

namespace aspectprobe {

struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool overlaps(const CharSpan& o) const { return begin < o.end && o.begin < end; }
    bool operator==(const CharSpan&) const = default;
};

enum class ContextType { Alternative, NonAlternative };
std::string_view to_string(ContextType c);
std::optional<ContextType> parse_context_type(std::string_view s);

enum class Boundedness { Bounded, Unbounded };
std::string_view to_string(Boundedness b);
std::optional<Boundedness> parse_boundedness(std::string_view s);

struct ProbingInstance {
    std::string id;
    std::string text;
    CharSpan target_span;
    std::string expected_form;
    std::string complementary_form;
    Aspect expected_aspect = Aspect::Perfective;
    ContextType context_type = ContextType::NonAlternative;

    // Optional annotations.
    std::optional<std::string> expected_lemma;
    std::optional<std::string> complementary_lemma;
    std::optional<GrammaticalNumber> number;
    std::optional<std::string> tense;  // "pres" | "past" | "fut"
    std::optional<std::string> mood;   // "ind" | "imp" | "cnd"
    std::optional<std::string> verb_form;  // "fin" | "inf" | "part" | "conv"
    std::optional<std::vector<TokenLemma>> tokens;

    Aspect complementary_aspect() const { return opposite(expected_aspect); }
};

struct BoundednessInstance {
    std::string id;
    std::string text;
    CharSpan target_span;
    std::vector<CharSpan> cue_spans;
    Boundedness label = Boundedness::Bounded;
};

struct Rejection {
    std::size_t line = 0;
    std::string id;
    std::string reason;
};

struct DatasetSummary {
    std::map<std::pair<ContextType, Aspect>, std::size_t> counts;
    std::size_t distinct_pairs = 0;
    std::size_t total = 0;

    std::size_t count(ContextType c, Aspect a) const;
};

struct ProbingSet {
    std::vector<ProbingInstance> instances;
    DatasetSummary summary;
    std::vector<Rejection> rejected;
};

struct BoundednessSet {
    std::vector<BoundednessInstance> instances;
    std::size_t bounded = 0;
    std::size_t unbounded = 0;
    std::vector<Rejection> rejected;
    std::vector<std::string> warnings;
};

// Returns the rejection reason, or nullopt when the instance is valid.
std::optional<std::string> validate(const ProbingInstance& inst, const AspectBank* bank);
std::optional<std::string> validate(const BoundednessInstance& inst);

ProbingInstance probing_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbingInstance& inst);
BoundednessInstance boundedness_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BoundednessInstance& inst);

DatasetSummary summarize(const std::vector<ProbingInstance>& instances);

ProbingSet load_instances(const std::filesystem::path& path, const AspectBank& bank);
BoundednessSet load_boundedness(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<BoundednessInstance>& instances);
void write_jsonl(const std::filesystem::path& path, const std::vector<ProbingInstance>& instances);

}  // namespace aspectprobe
