// SPDX-License-Identifier: Apache-2.0
//
// Aspect bank, vocabulary-level feature tags, and the cue-pattern lexicon.
// All objects here are immutable once loaded.
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aspectprobe {

enum class Aspect { Perfective, Imperfective };
enum class GrammaticalNumber { Singular, Plural };

Aspect opposite(Aspect a);
std::string_view to_string(Aspect a);  // "perf" / "imp"
std::optional<Aspect> parse_aspect(std::string_view s);
std::string_view to_string(GrammaticalNumber n);  // "sg" / "pl"
std::optional<GrammaticalNumber> parse_number(std::string_view s);

enum class CueCategory { Resultative, Duration, Capability, Forget, Inception, Iterative, Like, Forbid };
enum class Polarity { Bounded, Unbounded, Ambiguous };

std::string_view to_string(CueCategory c);
std::optional<CueCategory> parse_category(std::string_view s);
std::string_view to_string(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view s);

class AspectBank {
public:
    struct Entry {
        std::string imperfective;
        std::string perfective;
        bool biaspectual = false;
    };

    AspectBank() = default;
    explicit AspectBank(std::vector<Entry> entries);

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    // Partner lemma of the first entry containing `lemma`.
    std::optional<std::string> pair(std::string_view lemma) const;
    std::optional<Aspect> aspect_of(std::string_view lemma) const;
    bool contains(std::string_view lemma) const;
    bool is_biaspectual(std::string_view lemma) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> by_imperfective_;
    std::unordered_map<std::string, std::size_t> by_perfective_;
};

class VocabFeatureMap {
public:
    void set_aspect(const std::string& token, Aspect a);
    void set_number(const std::string& token, GrammaticalNumber n);

    std::optional<Aspect> aspect(std::string_view token) const;
    std::optional<GrammaticalNumber> number(std::string_view token) const;

    const std::unordered_map<std::string, Aspect>& aspects() const { return aspect_; }
    const std::unordered_map<std::string, GrammaticalNumber>& numbers() const { return number_; }

private:
    std::unordered_map<std::string, Aspect> aspect_;
    std::unordered_map<std::string, GrammaticalNumber> number_;
};

struct CuePattern {
    CueCategory category = CueCategory::Iterative;
    Polarity polarity = Polarity::Unbounded;
    std::vector<std::vector<std::string>> slots;  // normalized lemma alternatives
    int max_interveners = 2;
};

struct CueMatch {
    CueCategory category;
    Polarity polarity;
    std::vector<std::size_t> token_indices;
    std::size_t pattern_index = 0;

    bool operator==(const CueMatch&) const = default;
};

struct TokenLemma {
    std::string surface;
    std::string lemma;
};

struct Lexicons {
    AspectBank bank;
    VocabFeatureMap vocab;
    std::vector<CuePattern> cues;
};

AspectBank load_aspect_bank(const std::filesystem::path& path);
VocabFeatureMap load_vocab_map(const std::filesystem::path& path);
std::vector<CuePattern> load_cue_patterns(const std::filesystem::path& path);
Lexicons load_lexicons(const std::filesystem::path& bank_path, const std::filesystem::path& vocab_map_path,
                       const std::filesystem::path& cue_path);

// Ordered slot matching with at most `max_interveners` tokens between
// consecutive slots. Every match is returned; overlaps are allowed. Ambiguous
// patterns are reported too and it is up to callers to use them only for
// exclusion.
std::vector<CueMatch> match_cues(const std::vector<TokenLemma>& tokens, const std::vector<CuePattern>& patterns);

}  // namespace aspectprobe
