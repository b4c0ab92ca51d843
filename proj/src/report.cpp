// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "aspectprobe/error.hpp"

namespace aspectprobe::report {

using nlohmann::json;

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
        throw Error("schema_mismatch", name + ": row has " + std::to_string(row.size()) + " cells, expected " +
                                           std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    std::string s = buf;
    if (s == "-0") s = "0";
    return s;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string Manifest::digest() const {
    return fnv1a_hex(config.dump() + "|" + std::to_string(seed) + "|" + backend.dump());
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string cell_text(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) return csv_field(*s);
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    return std::to_string(std::get<std::int64_t>(c));
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << content;
    if (!out) throw Error("io_error", "write failed for " + path.string());
}

Cell str(std::string_view s) { return std::string(s); }
Cell integer(std::size_t v) { return static_cast<std::int64_t>(v); }
Cell integer(int v) { return static_cast<std::int64_t>(v); }

}  // namespace

std::string to_csv(const Table& t, const std::string& digest) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        out += csv_field(t.columns[i]);
        out += ',';
    }
    out += "digest\n";
    for (const auto& row : t.rows) {
        for (const auto& c : row) {
            out += cell_text(c);
            out += ',';
        }
        out += digest;
        out += '\n';
    }
    return out;
}

json meta_json(const BackendMeta& m) {
    return json{{"model_id", m.model_id},       {"n_layers", m.n_layers},
                {"hidden_size", m.hidden_size}, {"vocab_size", m.vocab_size},
                {"mask_token_id", m.mask_token_id}, {"max_len", m.max_len},
                {"supports_dropout", m.supports_dropout}, {"readout", std::string(kReadoutPolicy)}};
}

std::vector<std::filesystem::path> emit(const ExperimentReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("io_error", "cannot create " + out_dir.string() + ": " + ec.message());

    const std::string digest = report.manifest.digest();
    std::vector<std::filesystem::path> written;
    json tables = json::array();
    for (const auto& t : report.tables) {
        const auto path = out_dir / (t.name + ".csv");
        write_file(path, to_csv(t, digest));
        written.push_back(path);
        tables.push_back(json{{"name", t.name}, {"file", t.name + ".csv"}, {"rows", t.rows.size()}});
    }
    json figures = json::array();
    for (const auto& f : report.figures) {
        const auto path = out_dir / (f.name + ".svg");
        write_file(path, f.svg);
        written.push_back(path);
        figures.push_back(f.name + ".svg");
    }
    json manifest{{"command", report.manifest.command},
                  {"seed", report.manifest.seed},
                  {"digest", digest},
                  {"config", report.manifest.config},
                  {"backend", report.manifest.backend},
                  {"tables", tables},
                  {"figures", figures},
                  {"created_at", timestamp()}};
    for (const auto& [k, v] : report.manifest.extra.items()) manifest[k] = v;
    const auto path = out_dir / "manifest.json";
    write_file(path, manifest.dump(2) + "\n");
    written.insert(written.begin(), path);
    return written;
}

// ---------------------------------------------------------------------------

Table sweep_table(const SweepResult& r, std::string name) {
    Table t{std::move(name), {"layer", "aspect", "context_type", "accuracy", "tie_rate", "n"}, {}};
    for (const auto& row : r.rows) {
        t.add({integer(row.layer), str(to_string(row.aspect)), str(to_string(row.context_type)), row.accuracy,
               row.tie_rate, integer(row.n)});
    }
    return t;
}

Table difference_table(const std::vector<DifferenceRow>& rows) {
    Table t{"probability_difference",
            {"layer", "context_type", "n", "min", "q1", "median", "q3", "max", "mean"},
            {}};
    for (const auto& r : rows) {
        t.add({integer(r.layer), str(to_string(r.context_type)), integer(r.n), r.stats.min, r.stats.q1, r.stats.median,
               r.stats.q3, r.stats.max, r.stats.mean});
    }
    return t;
}

Table complete_verb_table(const std::vector<CompleteVerbRow>& rows) {
    Table t{"complete_verbs",
            {"k", "layer", "context_type", "complete_fraction", "perf_fraction", "imp_fraction", "n"},
            {}};
    for (const auto& r : rows) {
        t.add({integer(r.k), integer(r.layer), str(to_string(r.context_type)), r.complete_fraction, r.perf_fraction,
               r.imp_fraction, integer(r.n)});
    }
    return t;
}

Table intervention_table(const std::vector<InterventionResult>& results, std::string name) {
    Table t{std::move(name),
            {"layer", "direction", "target", "aspect", "context_type", "n", "before", "after", "shift", "ci_low",
             "ci_high"},
            {}};
    for (const auto& r : results) {
        for (const auto& c : r.cells) {
            t.add({integer(r.layer), str(to_string(r.kind)), str(r.target), str(to_string(c.aspect)),
                   str(to_string(c.context_type)), integer(c.n), c.before, c.after, c.shift, c.ci_low, c.ci_high});
        }
    }
    return t;
}

Table random_control_table(const std::vector<std::pair<int, RandomControl>>& by_layer) {
    Table t{"random_control",
            {"layer", "aspect", "context_type", "n_subspaces", "before", "after", "shift_mean", "shift_sd"},
            {}};
    for (const auto& [layer, rc] : by_layer) {
        for (std::size_t i = 0; i < rc.mean.size(); ++i) {
            const auto& c = rc.mean[i];
            t.add({integer(layer), str(to_string(c.aspect)), str(to_string(c.context_type)), integer(rc.runs.size()),
                   c.before, c.after, c.shift, rc.shift_sd[i]});
        }
    }
    return t;
}

Table inlp_table(const std::vector<BoundednessSubspace>& subspaces) {
    Table t{"inlp", {"layer", "round", "train_accuracy"}, {}};
    for (const auto& s : subspaces) {
        for (std::size_t i = 0; i < s.classifier_accuracies.size(); ++i) {
            t.add({integer(s.layer), integer(i + 1), s.classifier_accuracies[i]});
        }
    }
    return t;
}

Table fhalf_table(const Evaluation& ev) {
    Table t{"f_half", {"scope", "class", "precision", "recall", "f_half", "undefined"}, {}};
    auto rows_for = [&](const std::string& scope, const Confusion& c) {
        const auto f = f_half(c);
        for (std::size_t k = 0; k < 2; ++k) {
            t.add({scope, str(to_string(class_aspect(k))), f[k].precision, f[k].recall, f[k].f,
                   integer(f[k].undefined ? 1 : 0)});
        }
    };
    rows_for("all", ev.confusion);
    for (const auto& [ctx, c] : ev.by_context) rows_for(std::string(to_string(ctx)), c);
    return t;
}

Table uncertainty_table(const UncertaintyEstimate& u) {
    Table t{"uncertainty", {"id", "context_type", "mean_perf", "mean_imp", "var_perf", "var_imp", "n_samples"}, {}};
    for (std::size_t i = 0; i < u.ids.size(); ++i) {
        t.add({u.ids[i], str(to_string(u.context_types[i])), u.mean[i][0], u.mean[i][1], u.variance[i][0],
               u.variance[i][1], integer(u.n_samples)});
    }
    return t;
}

Table uncertainty_summary_table(const UncertaintyEstimate& u) {
    Table t{"uncertainty_summary", {"context_type", "mean_variance"}, {}};
    for (const auto& [ctx, v] : u.mean_variance()) t.add({str(to_string(ctx)), v});
    return t;
}

Table cue_stats_table(const CueStatistics& st) {
    Table t{"cue_stats", {"group", "category", "aspect", "contexts"}, {}};
    for (const auto& [group, cats] : st.counts) {
        for (const auto& [cat, aspects] : cats) {
            for (const auto& [a, n] : aspects) t.add({group, str(to_string(cat)), str(to_string(a)), integer(n)});
        }
    }
    return t;
}

Table cueless_table(const CueStatistics& st) {
    Table t{"cueless", {"group", "contexts", "cueless", "cueless_fraction"}, {}};
    for (const auto& [group, n] : st.contexts) {
        const auto it = st.cueless.find(group);
        t.add({group, integer(n), integer(it == st.cueless.end() ? 0 : it->second), st.cueless_fraction(group)});
    }
    return t;
}

Table mine_stats_table(const MineStats& s, std::size_t bounded, std::size_t unbounded) {
    Table t{"mine_stats", {"quantity", "count"}, {}};
    const std::vector<std::pair<std::string, std::size_t>> rows = {
        {"sentences", s.sentences},         {"skipped_unparseable", s.skipped_unparseable},
        {"candidates", s.candidates},       {"negated", s.negated},
        {"ambiguous", s.ambiguous},         {"conflicting", s.conflicting},
        {"not_in_bank", s.not_in_bank},     {"excluded_text", s.excluded_text},
        {"invalid", s.invalid},             {"capped", s.capped},
        {"truncated", s.truncated},         {"bounded", bounded},
        {"unbounded", unbounded}};
    for (const auto& [k, v] : rows) t.add({k, integer(v)});
    return t;
}

// ---------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, std::optional<double> reference) {
    const double W = 640, H = 400, left = 60, right = 170, top = 40, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (first) {
                x0 = x1 = x;
                y0 = y1 = y;
                first = false;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    if (reference) {
        y0 = std::min(y0, *reference);
        y1 = std::max(y1, *reference);
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0;
        const double xv = x0 + (x1 - x0) * i / 4.0;
        o << "<text x=\"" << left - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_number(yv) << "</text>\n";
        o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << format_number(xv) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
    o << "<text x=\"15\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << top + ph / 2 << ")\">"
      << xml_escape(y_label) << "</text>\n";
    if (reference) {
        o << "<line x1=\"" << left << "\" y1=\"" << py(*reference) << "\" x2=\"" << left + pw << "\" y2=\"" << py(*reference)
          << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[i].points) o << px(x) << ',' << py(y) << ' ';
        o << "\"/>\n";
        const double ly = top + 12 + 16 * static_cast<double>(i);
        o << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << W - right + 35 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

Figure sweep_figure(const SweepResult& r) {
    std::map<std::string, Series> by_name;
    for (const auto& row : r.rows) {
        const std::string name = std::string(to_string(row.aspect)) + " " + std::string(to_string(row.context_type));
        by_name[name].name = name;
        by_name[name].points.emplace_back(row.layer, row.accuracy);
    }
    std::vector<Series> series;
    for (auto& [_, s] : by_name) series.push_back(std::move(s));
    return {"layer_sweep", line_plot("Accuracy by layer", "layer", "accuracy", series, SweepResult::kRandomBaseline)};
}

Figure intervention_figure(const std::vector<InterventionResult>& results) {
    std::map<std::string, Series> by_name;
    for (const auto& r : results) {
        for (const auto& c : r.cells) {
            const std::string key = std::string(to_string(c.aspect)) + " " + std::string(to_string(c.context_type));
            by_name[key + " before"].name = key + " before";
            by_name[key + " before"].points.emplace_back(r.layer, c.before);
            by_name[key + " after"].name = key + " after";
            by_name[key + " after"].points.emplace_back(r.layer, c.after);
        }
    }
    std::vector<Series> series;
    for (auto& [_, s] : by_name) series.push_back(std::move(s));
    return {"causal_shift", line_plot("Accuracy before / after intervention", "layer", "accuracy", series)};
}

}  // namespace aspectprobe::report
