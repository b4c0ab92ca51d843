// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/cuemine.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

std::optional<std::string> ConlluToken::feature(std::string_view name) const {
    std::stringstream ss(feats);
    std::string item;
    while (std::getline(ss, item, '|')) {
        const auto eq = item.find('=');
        if (eq != std::string::npos && item.compare(0, eq, name) == 0 && eq == name.size()) return item.substr(eq + 1);
    }
    return std::nullopt;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

std::optional<int> to_int(std::string_view s) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

struct RawSentence {
    std::string sent_id;
    std::optional<std::string> text;
    struct Range {
        int first = 0, last = 0;
        std::string form;
        bool space_after = true;
    };
    std::vector<Range> ranges;
    std::vector<std::vector<std::string>> words;
    std::size_t first_line = 0;
};

bool space_after(const std::string& misc) { return misc.find("SpaceAfter=No") == std::string::npos; }

// Throws Error("unparseable") with a reason.
ParsedSentence build(const RawSentence& raw) {
    ParsedSentence s;
    s.sent_id = raw.sent_id;
    const int n = static_cast<int>(raw.words.size());
    if (n == 0) throw Error("unparseable", "no word lines");
    for (int i = 0; i < n; ++i) {
        const auto& cols = raw.words[static_cast<std::size_t>(i)];
        ConlluToken t;
        const auto id = to_int(cols[0]);
        if (!id || *id != i + 1) throw Error("unparseable", "word ids must run 1..n");
        t.id = *id;
        t.form = cols[1];
        t.lemma = text::normalize_lemma(cols[2] == "_" && cols[1] != "_" ? cols[1] : cols[2]);
        t.upos = cols[3];
        t.feats = cols[5] == "_" ? "" : cols[5];
        const auto head = to_int(cols[6]);
        if (!head || *head < 0 || *head > n) throw Error("unparseable", "bad head at word " + cols[0]);
        t.head = *head;
        t.deprel = cols[7].substr(0, cols[7].find(':'));
        s.tokens.push_back(std::move(t));
    }
    // Tree check: every word reaches the root without revisiting.
    int roots = 0;
    for (const auto& t : s.tokens) {
        if (t.head == 0) ++roots;
        int cur = t.id;
        for (int steps = 0; cur != 0; ++steps) {
            if (steps > n) throw Error("unparseable", "cycle through word " + std::to_string(t.id));
            cur = s.token(cur).head;
        }
    }
    if (roots < 1) throw Error("unparseable", "no root");

    // Surface units: a range covers several words.
    struct Unit {
        int first, last;
        std::string form;
        bool space_after;
    };
    std::vector<Unit> units;
    for (int i = 1; i <= n;) {
        auto r = std::find_if(raw.ranges.begin(), raw.ranges.end(), [&](const auto& x) { return x.first == i; });
        if (r != raw.ranges.end()) {
            if (r->last < r->first || r->last > n) throw Error("unparseable", "bad multiword range");
            units.push_back({r->first, r->last, r->form, r->space_after});
            i = r->last + 1;
        } else {
            const auto& cols = raw.words[static_cast<std::size_t>(i - 1)];
            units.push_back({i, i, cols[1], space_after(cols[9])});
            ++i;
        }
    }

    if (raw.text) {
        s.text = *raw.text;
        const auto cps = text::decode(s.text);
        std::size_t cursor = 0;
        for (const auto& u : units) {
            while (cursor < cps.size() && text::is_space(cps[cursor])) ++cursor;
            const auto form = text::decode(u.form);
            if (cps.compare(cursor, form.size(), form) != 0) {
                throw Error("unparseable", "form '" + u.form + "' does not match # text");
            }
            for (int w = u.first; w <= u.last; ++w) {
                s.tokens[static_cast<std::size_t>(w - 1)].span = {cursor, cursor + form.size()};
            }
            cursor += form.size();
        }
    } else {
        std::u32string rebuilt;
        for (std::size_t k = 0; k < units.size(); ++k) {
            const auto form = text::decode(units[k].form);
            for (int w = units[k].first; w <= units[k].last; ++w) {
                s.tokens[static_cast<std::size_t>(w - 1)].span = {rebuilt.size(), rebuilt.size() + form.size()};
            }
            rebuilt += form;
            if (units[k].space_after && k + 1 < units.size()) rebuilt += U' ';
        }
        s.text = text::encode(rebuilt);
    }
    return s;
}

}  // namespace

ConlluCorpus read_conllu(std::istream& in) {
    ConlluCorpus corpus;
    RawSentence raw;
    bool open = false;
    bool broken = false;
    std::string broken_reason;
    std::size_t line_no = 0;
    std::size_t index = 0;

    auto flush = [&] {
        if (!open) return;
        ++index;
        if (raw.sent_id.empty()) raw.sent_id = "s" + std::to_string(index);
        if (broken) {
            ++corpus.skipped;
            corpus.problems.push_back(raw.sent_id + ": " + broken_reason);
        } else {
            try {
                corpus.sentences.push_back(build(raw));
            } catch (const Error& e) {
                ++corpus.skipped;
                corpus.problems.push_back(raw.sent_id + ": " + e.what());
            }
        }
        raw = RawSentence{};
        open = broken = false;
    };

    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (!open) {
            open = true;
            raw.first_line = line_no;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto key = line.substr(1, eq - 1);
            key.erase(std::remove(key.begin(), key.end(), ' '), key.end());
            auto value = line.substr(eq + 1);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            if (key == "text") raw.text = value;
            if (key == "sent_id") raw.sent_id = value;
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 10) {
            broken = true;
            broken_reason = "line " + std::to_string(line_no) + ": expected 10 columns";
            continue;
        }
        if (cols[0].find('.') != std::string::npos) continue;  // empty node
        if (const auto dash = cols[0].find('-'); dash != std::string::npos) {
            const auto a = to_int(std::string_view(cols[0]).substr(0, dash));
            const auto b = to_int(std::string_view(cols[0]).substr(dash + 1));
            if (!a || !b) {
                broken = true;
                broken_reason = "line " + std::to_string(line_no) + ": bad range id";
                continue;
            }
            raw.ranges.push_back({*a, *b, cols[1], space_after(cols[9])});
            continue;
        }
        raw.words.push_back(std::move(cols));
    }
    flush();
    return corpus;
}

ConlluCorpus read_conllu(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    return read_conllu(in);
}

// ---------------------------------------------------------------------------

namespace {

enum class Link { Modifier, Duration, Complement };

Link link_of(CueCategory c) {
    switch (c) {
        case CueCategory::Resultative:
        case CueCategory::Iterative:
            return Link::Modifier;
        case CueCategory::Duration:
            return Link::Duration;
        default:
            return Link::Complement;
    }
}

struct Evidence {
    std::vector<std::size_t> token_indices;  // 0-based
    Polarity polarity;
};

}  // namespace

MineResult mine(const ConlluCorpus& corpus, const std::vector<CuePattern>& patterns, const AspectBank& bank,
                const MineLimits& limits, const MiningRelations& rel) {
    MineResult result;
    result.stats.sentences = corpus.sentences.size() + corpus.skipped;
    result.stats.skipped_unparseable = corpus.skipped;
    std::size_t n_bounded = 0;
    std::size_t n_unbounded = 0;

    for (const auto& s : corpus.sentences) {
        std::vector<TokenLemma> tl;
        tl.reserve(s.tokens.size());
        for (const auto& t : s.tokens) tl.push_back({t.form, t.lemma});

        // target word id -> evidence, in order of first appearance
        std::map<int, std::vector<Evidence>> by_target;
        for (const auto& m : match_cues(tl, patterns)) {
            const auto in_match = [&](int id) {
                return std::find(m.token_indices.begin(), m.token_indices.end(), static_cast<std::size_t>(id - 1)) !=
                       m.token_indices.end();
            };
            const ConlluToken* anchor = nullptr;
            for (std::size_t idx : m.token_indices) {
                const auto& t = s.tokens[idx];
                if (t.head == 0 || !in_match(t.head)) {
                    anchor = &t;
                    break;
                }
            }
            if (anchor == nullptr) continue;

            std::vector<int> targets;
            const Link link = link_of(m.category);
            if (link == Link::Complement) {
                for (const auto& t : s.tokens) {
                    if (t.head == anchor->id && rel.complement.count(t.deprel) && t.upos == "VERB" && !in_match(t.id)) {
                        targets.push_back(t.id);
                    }
                }
            } else {
                const auto& allowed = link == Link::Modifier ? rel.modifier : rel.duration;
                if (anchor->head != 0 && allowed.count(anchor->deprel) && s.token(anchor->head).upos == "VERB") {
                    targets.push_back(anchor->head);
                }
            }
            for (int id : targets) by_target[id].push_back({m.token_indices, m.polarity});
        }

        for (const auto& [id, evidence] : by_target) {
            ++result.stats.candidates;
            const auto& target = s.token(id);
            const bool negated = std::any_of(s.tokens.begin(), s.tokens.end(), [&](const ConlluToken& t) {
                return t.head == id && t.lemma == rel.negation_lemma;
            });
            if (negated) {
                ++result.stats.negated;
                continue;
            }
            bool ambiguous = false, bounded = false, unbounded = false;
            for (const auto& e : evidence) {
                ambiguous |= e.polarity == Polarity::Ambiguous;
                bounded |= e.polarity == Polarity::Bounded;
                unbounded |= e.polarity == Polarity::Unbounded;
            }
            if (ambiguous) {
                ++result.stats.ambiguous;
                continue;
            }
            if (bounded && unbounded) {
                ++result.stats.conflicting;
                continue;
            }
            if (bank.size() > 0 && (!bank.contains(target.lemma) || bank.is_biaspectual(target.lemma))) {
                ++result.stats.not_in_bank;
                continue;
            }
            if (limits.exclude_texts.count(s.text)) {
                ++result.stats.excluded_text;
                continue;
            }

            BoundednessInstance inst;
            inst.id = s.sent_id + "#" + std::to_string(id);
            inst.text = s.text;
            inst.target_span = target.span;
            inst.label = bounded ? Boundedness::Bounded : Boundedness::Unbounded;
            for (const auto& e : evidence) {
                CharSpan span{s.tokens[e.token_indices.front()].span.begin, s.tokens[e.token_indices.back()].span.end};
                if (std::find(inst.cue_spans.begin(), inst.cue_spans.end(), span) == inst.cue_spans.end()) {
                    inst.cue_spans.push_back(span);
                }
            }
            std::sort(inst.cue_spans.begin(), inst.cue_spans.end(),
                      [](const CharSpan& a, const CharSpan& b) { return a.begin != b.begin ? a.begin < b.begin : a.end < b.end; });
            if (validate(inst)) {
                ++result.stats.invalid;
                continue;
            }
            auto& count = bounded ? n_bounded : n_unbounded;
            if (count >= limits.cap) {
                ++result.stats.capped;
                continue;
            }
            ++count;
            result.instances.push_back(std::move(inst));
        }
    }

    // Balance by dropping the tail of the larger class.
    const std::size_t keep = std::min(n_bounded, n_unbounded);
    std::size_t seen_b = 0, seen_u = 0;
    std::vector<BoundednessInstance> balanced;
    for (auto& inst : result.instances) {
        auto& seen = inst.label == Boundedness::Bounded ? seen_b : seen_u;
        if (seen++ < keep) balanced.push_back(std::move(inst));
    }
    result.stats.truncated = result.instances.size() - balanced.size();
    result.instances = std::move(balanced);
    return result;
}

std::unordered_set<std::string> load_exclusion_texts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '{') {
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_object() && j.contains("text") && j["text"].is_string()) {
                out.insert(j["text"].get<std::string>());
                continue;
            }
        }
        out.insert(line);
    }
    return out;
}

// ---------------------------------------------------------------------------

double CueStatistics::cueless_fraction(const std::string& group) const {
    const auto n = contexts.find(group);
    if (n == contexts.end() || n->second == 0) return 0.0;
    const auto c = cueless.find(group);
    return static_cast<double>(c == cueless.end() ? 0 : c->second) / static_cast<double>(n->second);
}

std::vector<TokenLemma> context_tokens(const ProbingInstance& inst) {
    if (inst.tokens) return *inst.tokens;
    std::vector<TokenLemma> out;
    for (const auto& p : text::split_words(inst.text)) out.push_back({p.surface, text::normalize_lemma(p.surface)});
    return out;
}

CueStatistics cue_statistics(const std::vector<ProbingInstance>& instances, const std::vector<CuePattern>& patterns,
                             const std::vector<std::string>* groups) {
    if (groups != nullptr && groups->size() != instances.size()) {
        throw Error("dimension_mismatch", "one group label per instance required");
    }
    CueStatistics st;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const std::string group = groups ? (*groups)[i] : std::string(to_string(inst.context_type));
        ++st.contexts[group];
        st.cueless[group] += 0;
        const auto matches = match_cues(context_tokens(inst), patterns);
        if (matches.empty()) {
            ++st.cueless[group];
            continue;
        }
        std::set<CueCategory> seen;
        for (const auto& m : matches) seen.insert(m.category);
        for (CueCategory c : seen) ++st.counts[group][c][inst.expected_aspect];
    }
    return st;
}

}  // namespace aspectprobe
