// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/dataset.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "aspectprobe/error.hpp"
#include "aspectprobe/text.hpp"

namespace aspectprobe {

using nlohmann::json;

std::string_view to_string(ContextType c) { return c == ContextType::Alternative ? "alternative" : "non_alternative"; }

std::optional<ContextType> parse_context_type(std::string_view s) {
    if (s == "alternative" || s == "alt") return ContextType::Alternative;
    if (s == "non_alternative" || s == "non-alternative" || s == "nonalt") return ContextType::NonAlternative;
    return std::nullopt;
}

std::string_view to_string(Boundedness b) { return b == Boundedness::Bounded ? "bounded" : "unbounded"; }

std::optional<Boundedness> parse_boundedness(std::string_view s) {
    if (s == "bounded") return Boundedness::Bounded;
    if (s == "unbounded") return Boundedness::Unbounded;
    return std::nullopt;
}

std::size_t DatasetSummary::count(ContextType c, Aspect a) const {
    auto it = counts.find({c, a});
    return it == counts.end() ? 0 : it->second;
}

namespace {

CharSpan span_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() || !j[1].is_number_unsigned()) {
        throw Error("malformed_record", "span must be [start, end)");
    }
    CharSpan s{j[0].get<std::size_t>(), j[1].get<std::size_t>()};
    if (s.end < s.begin) throw Error("malformed_record", "span end before start");
    return s;
}

json span_to_json(const CharSpan& s) { return json::array({s.begin, s.end}); }

std::string required_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error("malformed_record", std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

template <typename Parse>
auto required_enum(const json& j, const char* key, Parse parse) {
    const auto raw = required_string(j, key);
    auto v = parse(raw);
    if (!v) throw Error("malformed_record", std::string("bad value for '") + key + "': " + raw);
    return *v;
}

}  // namespace

ProbingInstance probing_from_json(const json& j) {
    if (!j.is_object()) throw Error("malformed_record", "record is not an object");
    ProbingInstance p;
    p.id = required_string(j, "id");
    p.text = required_string(j, "text");
    if (!j.contains("target_span")) throw Error("malformed_record", "missing target_span");
    p.target_span = span_from_json(j["target_span"]);
    p.expected_form = required_string(j, "expected_form");
    p.complementary_form = required_string(j, "complementary_form");
    p.expected_aspect = required_enum(j, "expected_aspect", parse_aspect);
    p.context_type = required_enum(j, "context_type", parse_context_type);
    if (j.contains("expected_lemma")) p.expected_lemma = text::normalize_lemma(j["expected_lemma"].get<std::string>());
    if (j.contains("complementary_lemma")) {
        p.complementary_lemma = text::normalize_lemma(j["complementary_lemma"].get<std::string>());
    }
    if (j.contains("number")) p.number = required_enum(j, "number", parse_number);
    if (j.contains("tense")) p.tense = j["tense"].get<std::string>();
    if (j.contains("mood")) p.mood = j["mood"].get<std::string>();
    if (j.contains("verb_form")) p.verb_form = j["verb_form"].get<std::string>();
    if (j.contains("tokens")) {
        std::vector<TokenLemma> toks;
        for (const auto& t : j["tokens"]) {
            if (!t.is_array() || t.size() != 2) throw Error("malformed_record", "tokens must be [surface, lemma] pairs");
            toks.push_back({t[0].get<std::string>(), text::normalize_lemma(t[1].get<std::string>())});
        }
        p.tokens = std::move(toks);
    }
    return p;
}

json to_json(const ProbingInstance& p) {
    json j;
    j["id"] = p.id;
    j["text"] = p.text;
    j["target_span"] = span_to_json(p.target_span);
    j["expected_form"] = p.expected_form;
    j["complementary_form"] = p.complementary_form;
    j["expected_aspect"] = std::string(to_string(p.expected_aspect));
    j["context_type"] = std::string(to_string(p.context_type));
    if (p.expected_lemma) j["expected_lemma"] = *p.expected_lemma;
    if (p.complementary_lemma) j["complementary_lemma"] = *p.complementary_lemma;
    if (p.number) j["number"] = std::string(to_string(*p.number));
    if (p.tense) j["tense"] = *p.tense;
    if (p.mood) j["mood"] = *p.mood;
    if (p.verb_form) j["verb_form"] = *p.verb_form;
    if (p.tokens) {
        json toks = json::array();
        for (const auto& t : *p.tokens) toks.push_back(json::array({t.surface, t.lemma}));
        j["tokens"] = std::move(toks);
    }
    return j;
}

BoundednessInstance boundedness_from_json(const json& j) {
    if (!j.is_object()) throw Error("malformed_record", "record is not an object");
    BoundednessInstance b;
    b.id = required_string(j, "id");
    b.text = required_string(j, "text");
    if (!j.contains("target_span")) throw Error("malformed_record", "missing target_span");
    b.target_span = span_from_json(j["target_span"]);
    if (!j.contains("cue_spans") || !j["cue_spans"].is_array()) throw Error("malformed_record", "missing cue_spans");
    for (const auto& s : j["cue_spans"]) b.cue_spans.push_back(span_from_json(s));
    b.label = required_enum(j, "label", parse_boundedness);
    return b;
}

json to_json(const BoundednessInstance& b) {
    json j;
    j["id"] = b.id;
    j["text"] = b.text;
    j["target_span"] = span_to_json(b.target_span);
    json cues = json::array();
    for (const auto& s : b.cue_spans) cues.push_back(span_to_json(s));
    j["cue_spans"] = std::move(cues);
    j["label"] = std::string(to_string(b.label));
    return j;
}

std::optional<std::string> validate(const ProbingInstance& p, const AspectBank* bank) {
    if (p.expected_form.empty() || p.complementary_form.empty()) return "empty_form";
    const std::size_t len = text::length(p.text);
    if (p.target_span.end > len || p.target_span.begin >= p.target_span.end) return "target_span_mismatch";
    if (text::substr(p.text, p.target_span.begin, p.target_span.end) != p.expected_form) return "target_span_mismatch";
    if (p.expected_form == p.complementary_form) return "biaspectual_excluded";
    if (p.verb_form && (*p.verb_form == "part" || *p.verb_form == "conv")) return "participle_or_transgressive_excluded";
    // Perfective verbs have no present indicative, so an imperfective present
    // indicative target has no aspectual partner.
    if (p.expected_aspect == Aspect::Imperfective && p.tense && *p.tense == "pres" && (!p.mood || *p.mood == "ind")) {
        return "paradigm_asymmetry";
    }
    if (bank != nullptr && p.expected_lemma) {
        if (bank->is_biaspectual(*p.expected_lemma)) return "biaspectual_excluded";
        if (const auto a = bank->aspect_of(*p.expected_lemma); a && *a != p.expected_aspect) return "aspect_mismatch";
        if (p.complementary_lemma) {
            const auto partner = bank->pair(*p.expected_lemma);
            if (partner && *partner != *p.complementary_lemma) return "aspect_pair_mismatch";
        }
    }
    return std::nullopt;
}

std::optional<std::string> validate(const BoundednessInstance& b) {
    const std::size_t len = text::length(b.text);
    if (b.target_span.begin >= b.target_span.end || b.target_span.end > len) return "target_span_out_of_range";
    if (b.cue_spans.empty()) return "no_cue_spans";
    for (const auto& c : b.cue_spans) {
        if (c.begin >= c.end || c.end > len) return "cue_span_out_of_range";
        if (c.overlaps(b.target_span)) return "cue_target_overlap";
    }
    return std::nullopt;
}

DatasetSummary summarize(const std::vector<ProbingInstance>& instances) {
    DatasetSummary s;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& p : instances) {
        ++s.counts[{p.context_type, p.expected_aspect}];
        const bool lemmas = p.expected_lemma && p.complementary_lemma;
        std::string a = lemmas ? *p.expected_lemma : p.expected_form;
        std::string b = lemmas ? *p.complementary_lemma : p.complementary_form;
        if (b < a) std::swap(a, b);
        pairs.emplace(std::move(a), std::move(b));
    }
    s.total = instances.size();
    s.distinct_pairs = pairs.size();
    return s;
}

namespace {

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        fn(line_no, line);
    }
}

std::string id_hint(const json& j) {
    if (j.is_object() && j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
    return {};
}

}  // namespace

ProbingSet load_instances(const std::filesystem::path& path, const AspectBank& bank) {
    ProbingSet set;
    for_each_jsonl(path, [&](std::size_t line_no, const std::string& line) {
        json j;
        try {
            j = json::parse(line);
            auto inst = probing_from_json(j);
            if (auto reason = validate(inst, &bank)) {
                set.rejected.push_back({line_no, inst.id, *reason});
                return;
            }
            set.instances.push_back(std::move(inst));
        } catch (const json::exception&) {
            set.rejected.push_back({line_no, id_hint(j), "malformed_record"});
        } catch (const Error& e) {
            set.rejected.push_back({line_no, id_hint(j), e.code()});
        }
    });
    set.summary = summarize(set.instances);
    return set;
}

BoundednessSet load_boundedness(const std::filesystem::path& path) {
    BoundednessSet set;
    for_each_jsonl(path, [&](std::size_t line_no, const std::string& line) {
        json j;
        try {
            j = json::parse(line);
            auto inst = boundedness_from_json(j);
            if (auto reason = validate(inst)) {
                set.rejected.push_back({line_no, inst.id, *reason});
                return;
            }
            (inst.label == Boundedness::Bounded ? set.bounded : set.unbounded) += 1;
            set.instances.push_back(std::move(inst));
        } catch (const json::exception&) {
            set.rejected.push_back({line_no, id_hint(j), "malformed_record"});
        } catch (const Error& e) {
            set.rejected.push_back({line_no, id_hint(j), e.code()});
        }
    });
    if (set.instances.empty()) {
        set.warnings.push_back("no boundedness instances loaded from " + path.string());
    } else if (set.bounded != set.unbounded) {
        set.warnings.push_back("unbalanced classes: bounded=" + std::to_string(set.bounded) +
                               " unbounded=" + std::to_string(set.unbounded));
    }
    return set;
}

namespace {
template <typename T>
void write_lines(const std::filesystem::path& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    for (const auto& it : items) out << to_json(it).dump() << '\n';
}
}  // namespace

void write_jsonl(const std::filesystem::path& path, const std::vector<BoundednessInstance>& instances) {
    write_lines(path, instances);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<ProbingInstance>& instances) {
    write_lines(path, instances);
}

}  // namespace aspectprobe
