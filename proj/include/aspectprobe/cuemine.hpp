// SPDX-License-Identifier: Apache-2.0
//
// CoNLL-U reading, cue-driven mining of bounded/unbounded training
// instances, and cue-presence statistics over probing contexts.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "aspectprobe/dataset.hpp"
#include "aspectprobe/lexicon.hpp"

namespace aspectprobe {

struct ConlluToken {
    int id = 0;  // 1-based word index
    std::string form;
    std::string lemma;  // normalized
    std::string upos;
    std::string feats;
    int head = 0;
    std::string deprel;  // universal part only ("obl:tmod" -> "obl")
    CharSpan span;

    std::optional<std::string> feature(std::string_view name) const;
};

struct ParsedSentence {
    std::string sent_id;
    std::string text;
    std::vector<ConlluToken> tokens;

    const ConlluToken& token(int id) const { return tokens.at(static_cast<std::size_t>(id - 1)); }
};

struct ConlluCorpus {
    std::vector<ParsedSentence> sentences;
    std::size_t skipped = 0;
    std::vector<std::string> problems;  // "sent_id: reason"
};

// Multiword range lines and empty nodes are skipped (range surface spans are
// given to their words). Offsets come from `# text` when present, otherwise
// the text is rebuilt from forms and SpaceAfter=No.
ConlluCorpus read_conllu(std::istream& in);
ConlluCorpus read_conllu(const std::filesystem::path& path);

// UD relation names that connect cues to targets.
struct MiningRelations {
    std::set<std::string> modifier = {"advmod", "obl"};     // Resultative, Iterative
    std::set<std::string> duration = {"obl"};               // Duration
    std::set<std::string> complement = {"xcomp", "ccomp", "csubj"};  // head-verb categories
    std::string negation_lemma = "не";
};

struct MineLimits {
    std::size_t cap = 8160;  // per class
    std::unordered_set<std::string> exclude_texts;
};

struct MineStats {
    std::size_t sentences = 0;
    std::size_t skipped_unparseable = 0;
    std::size_t candidates = 0;
    std::size_t negated = 0;
    std::size_t ambiguous = 0;
    std::size_t conflicting = 0;
    std::size_t not_in_bank = 0;
    std::size_t excluded_text = 0;
    std::size_t invalid = 0;
    std::size_t capped = 0;
    std::size_t truncated = 0;
};

struct MineResult {
    std::vector<BoundednessInstance> instances;  // corpus order
    MineStats stats;
};

MineResult mine(const ConlluCorpus& corpus, const std::vector<CuePattern>& patterns, const AspectBank& bank,
                const MineLimits& limits, const MiningRelations& relations = {});

// Reads a newline-separated list, or the "text" fields of a JSONL file.
std::unordered_set<std::string> load_exclusion_texts(const std::filesystem::path& path);

struct CueStatistics {
    // group -> category -> aspect -> contexts with at least one match
    std::map<std::string, std::map<CueCategory, std::map<Aspect, std::size_t>>> counts;
    std::map<std::string, std::size_t> contexts;
    std::map<std::string, std::size_t> cueless;

    double cueless_fraction(const std::string& group) const;
};

// Lemmas come from the instance's token annotation when present; otherwise
// the lowercased surface words are used as lemmas. `groups` (one label per
// instance) defaults to the context type.
std::vector<TokenLemma> context_tokens(const ProbingInstance& inst);
CueStatistics cue_statistics(const std::vector<ProbingInstance>& instances, const std::vector<CuePattern>& patterns,
                             const std::vector<std::string>* groups = nullptr);

}  // namespace aspectprobe
