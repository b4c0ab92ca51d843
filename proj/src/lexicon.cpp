// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return cols;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line, const std::string& rule) {
    throw Error("malformed_row", path.string() + ":" + std::to_string(line) + ": " + rule);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    return in;
}

bool is_skippable(const std::string& line) {
    return line.empty() || line.front() == '#' ||
           std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

Aspect opposite(Aspect a) { return a == Aspect::Perfective ? Aspect::Imperfective : Aspect::Perfective; }

std::string_view to_string(Aspect a) { return a == Aspect::Perfective ? "perf" : "imp"; }

std::optional<Aspect> parse_aspect(std::string_view s) {
    if (s == "perf" || s == "perfective") return Aspect::Perfective;
    if (s == "imp" || s == "imperfective") return Aspect::Imperfective;
    return std::nullopt;
}

std::string_view to_string(GrammaticalNumber n) { return n == GrammaticalNumber::Singular ? "sg" : "pl"; }

std::optional<GrammaticalNumber> parse_number(std::string_view s) {
    if (s == "sg" || s == "singular") return GrammaticalNumber::Singular;
    if (s == "pl" || s == "plural") return GrammaticalNumber::Plural;
    return std::nullopt;
}

namespace {
constexpr std::pair<CueCategory, std::string_view> kCategoryNames[] = {
    {CueCategory::Resultative, "Resultative"}, {CueCategory::Duration, "Duration"},
    {CueCategory::Capability, "Capability"},   {CueCategory::Forget, "Forget"},
    {CueCategory::Inception, "Inception"},     {CueCategory::Iterative, "Iterative"},
    {CueCategory::Like, "Like"},               {CueCategory::Forbid, "Forbid"},
};
}  // namespace

std::string_view to_string(CueCategory c) {
    for (const auto& [cat, name] : kCategoryNames) {
        if (cat == c) return name;
    }
    return "?";
}

std::optional<CueCategory> parse_category(std::string_view s) {
    for (const auto& [cat, name] : kCategoryNames) {
        if (name == s) return cat;
    }
    if (s == "Result") return CueCategory::Resultative;
    return std::nullopt;
}

std::string_view to_string(Polarity p) {
    switch (p) {
        case Polarity::Bounded: return "bounded";
        case Polarity::Unbounded: return "unbounded";
        case Polarity::Ambiguous: return "ambiguous";
    }
    return "?";
}

std::optional<Polarity> parse_polarity(std::string_view s) {
    if (s == "bounded") return Polarity::Bounded;
    if (s == "unbounded") return Polarity::Unbounded;
    if (s == "ambiguous") return Polarity::Ambiguous;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

AspectBank::AspectBank(std::vector<Entry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        by_imperfective_.try_emplace(entries_[i].imperfective, i);
        by_perfective_.try_emplace(entries_[i].perfective, i);
    }
}

std::optional<std::string> AspectBank::pair(std::string_view lemma) const {
    const std::string key(lemma);
    if (auto it = by_imperfective_.find(key); it != by_imperfective_.end()) return entries_[it->second].perfective;
    if (auto it = by_perfective_.find(key); it != by_perfective_.end()) return entries_[it->second].imperfective;
    return std::nullopt;
}

std::optional<Aspect> AspectBank::aspect_of(std::string_view lemma) const {
    const std::string key(lemma);
    const bool imp = by_imperfective_.contains(key);
    const bool perf = by_perfective_.contains(key);
    if (imp == perf) return std::nullopt;  // unknown or biaspectual
    return imp ? Aspect::Imperfective : Aspect::Perfective;
}

bool AspectBank::contains(std::string_view lemma) const {
    const std::string key(lemma);
    return by_imperfective_.contains(key) || by_perfective_.contains(key);
}

bool AspectBank::is_biaspectual(std::string_view lemma) const {
    const std::string key(lemma);
    if (auto it = by_imperfective_.find(key); it != by_imperfective_.end() && entries_[it->second].biaspectual) {
        return true;
    }
    if (auto it = by_perfective_.find(key); it != by_perfective_.end() && entries_[it->second].biaspectual) {
        return true;
    }
    return false;
}

void VocabFeatureMap::set_aspect(const std::string& token, Aspect a) {
    if (token.empty()) throw Error("malformed_row", "empty token");
    auto [it, inserted] = aspect_.try_emplace(token, a);
    if (!inserted && it->second != a) throw Error("conflicting_tag", "token '" + token + "' tagged with both aspects");
}

void VocabFeatureMap::set_number(const std::string& token, GrammaticalNumber n) {
    if (token.empty()) throw Error("malformed_row", "empty token");
    auto [it, inserted] = number_.try_emplace(token, n);
    if (!inserted && it->second != n) throw Error("conflicting_tag", "token '" + token + "' tagged with both numbers");
}

std::optional<Aspect> VocabFeatureMap::aspect(std::string_view token) const {
    if (auto it = aspect_.find(std::string(token)); it != aspect_.end()) return it->second;
    return std::nullopt;
}

std::optional<GrammaticalNumber> VocabFeatureMap::number(std::string_view token) const {
    if (auto it = number_.find(std::string(token)); it != number_.end()) return it->second;
    return std::nullopt;
}

// ---------------------------------------------------------------------------

AspectBank load_aspect_bank(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::vector<AspectBank::Entry> entries;
    std::set<std::pair<std::string, std::string>> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip_cr(raw);
        if (is_skippable(line)) continue;
        const auto cols = split_tabs(line);
        if (cols.size() < 2 || cols.size() > 3) malformed(path, line_no, "expected 2 or 3 tab-separated columns");
        AspectBank::Entry e;
        e.imperfective = text::normalize_lemma(cols[0]);
        e.perfective = text::normalize_lemma(cols[1]);
        if (e.imperfective.empty() || e.perfective.empty()) malformed(path, line_no, "empty lemma");
        if (cols.size() == 3) {
            const auto flag = text::to_lower(cols[2]);
            if (flag == "1" || flag == "true" || flag == "biaspectual" || flag == "yes") {
                e.biaspectual = true;
            } else if (flag == "0" || flag == "false" || flag == "no" || flag.empty()) {
                e.biaspectual = false;
            } else {
                malformed(path, line_no, "unrecognized biaspectual flag '" + cols[2] + "'");
            }
        }
        if (e.imperfective == e.perfective && !e.biaspectual) {
            malformed(path, line_no, "same lemma on both sides without biaspectual flag");
        }
        if (!seen.emplace(e.imperfective, e.perfective).second) continue;
        entries.push_back(std::move(e));
    }
    return AspectBank(std::move(entries));
}

VocabFeatureMap load_vocab_map(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    VocabFeatureMap map;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip_cr(raw);
        if (is_skippable(line)) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != 3) malformed(path, line_no, "expected 3 tab-separated columns");
        if (cols[0].empty()) malformed(path, line_no, "empty token");
        try {
            if (cols[1] == "aspect") {
                const auto a = parse_aspect(cols[2]);
                if (!a) malformed(path, line_no, "aspect value must be perf|imp");
                map.set_aspect(cols[0], *a);
            } else if (cols[1] == "number") {
                const auto n = parse_number(cols[2]);
                if (!n) malformed(path, line_no, "number value must be sg|pl");
                map.set_number(cols[0], *n);
            } else {
                malformed(path, line_no, "feature_kind must be aspect|number");
            }
        } catch (const Error& e) {
            if (e.code() == "conflicting_tag") {
                throw Error("conflicting_tag", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
            throw;
        }
    }
    return map;
}

std::vector<CuePattern> load_cue_patterns(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    if (std::all_of(content.begin(), content.end(), [](unsigned char c) { return std::isspace(c); })) return {};

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("malformed_row", path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw Error("malformed_row", path.string() + ": top level must be a JSON array");

    std::vector<CuePattern> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& obj = doc[i];
        const auto where = path.string() + ": pattern " + std::to_string(i);
        if (!obj.is_object()) throw Error("malformed_row", where + ": not an object");
        CuePattern p;
        const auto cat = parse_category(obj.value("category", std::string{}));
        if (!cat) throw Error("malformed_row", where + ": unknown category");
        p.category = *cat;
        const auto pol = parse_polarity(obj.value("polarity", std::string{}));
        if (!pol) throw Error("malformed_row", where + ": unknown polarity");
        p.polarity = *pol;
        p.max_interveners = obj.value("max_interveners", 2);
        if (p.max_interveners < 0) throw Error("malformed_row", where + ": max_interveners must be >= 0");
        if (!obj.contains("slots") || !obj["slots"].is_array() || obj["slots"].empty()) {
            throw Error("malformed_row", where + ": slots must be a non-empty array");
        }
        for (const auto& slot : obj["slots"]) {
            if (!slot.is_array() || slot.empty()) throw Error("malformed_row", where + ": every slot must be non-empty");
            std::vector<std::string> alts;
            for (const auto& lemma : slot) {
                if (!lemma.is_string() || lemma.get<std::string>().empty()) {
                    throw Error("malformed_row", where + ": slot entries must be non-empty strings");
                }
                alts.push_back(text::normalize_lemma(lemma.get<std::string>()));
            }
            p.slots.push_back(std::move(alts));
        }
        out.push_back(std::move(p));
    }
    return out;
}

Lexicons load_lexicons(const std::filesystem::path& bank_path, const std::filesystem::path& vocab_map_path,
                       const std::filesystem::path& cue_path) {
    return Lexicons{load_aspect_bank(bank_path), load_vocab_map(vocab_map_path), load_cue_patterns(cue_path)};
}

// ---------------------------------------------------------------------------

namespace {

bool slot_has(const std::vector<std::string>& slot, const std::string& lemma) {
    return std::find(slot.begin(), slot.end(), lemma) != slot.end();
}

void extend_match(const std::vector<TokenLemma>& tokens, const CuePattern& p, std::size_t pattern_index,
                  std::vector<std::size_t>& path, std::vector<CueMatch>& out) {
    if (path.size() == p.slots.size()) {
        out.push_back({p.category, p.polarity, path, pattern_index});
        return;
    }
    const auto& slot = p.slots[path.size()];
    const std::size_t first = path.back() + 1;
    const std::size_t last = std::min(tokens.size(), first + static_cast<std::size_t>(p.max_interveners) + 1);
    for (std::size_t j = first; j < last; ++j) {
        if (!slot_has(slot, tokens[j].lemma)) continue;
        path.push_back(j);
        extend_match(tokens, p, pattern_index, path, out);
        path.pop_back();
    }
}

}  // namespace

std::vector<CueMatch> match_cues(const std::vector<TokenLemma>& tokens, const std::vector<CuePattern>& patterns) {
    std::vector<CueMatch> out;
    for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
        const auto& p = patterns[pi];
        if (p.slots.empty()) continue;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!slot_has(p.slots.front(), tokens[i].lemma)) continue;
            std::vector<std::size_t> path{i};
            extend_match(tokens, p, pi, path, out);
        }
    }
    return out;
}

}  // namespace aspectprobe
