// SPDX-License-Identifier: Apache-2.0
//
// Experiment artifacts: manifest.json, one CSV per table, optional SVG line
// plots. CSV bytes depend only on config, seed and backend metadata.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspectprobe/backend.hpp"
#include "aspectprobe/behavioral.hpp"
#include "aspectprobe/causal.hpp"
#include "aspectprobe/classifier.hpp"
#include "aspectprobe/cuemine.hpp"
#include "aspectprobe/subspace.hpp"

namespace aspectprobe::report {

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

struct Figure {
    std::string name;
    std::string svg;
};

struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json backend = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object();

    // FNV-1a 64 over config, seed and backend metadata, as 16 hex digits.
    std::string digest() const;
};

struct ExperimentReport {
    Manifest manifest;
    std::vector<Table> tables;
    std::vector<Figure> figures;
};

// %.6g, with -0 printed as 0.
std::string format_number(double v);
std::string fnv1a_hex(std::string_view data);

// Header plus rows; `digest` is appended as a trailing column.
std::string to_csv(const Table& t, const std::string& digest);

// Writes manifest.json (with a creation timestamp), <name>.csv and <name>.svg.
std::vector<std::filesystem::path> emit(const ExperimentReport& report, const std::filesystem::path& out_dir);

nlohmann::json meta_json(const BackendMeta& m);

// --- table builders --------------------------------------------------------
Table sweep_table(const SweepResult& r, std::string name = "layer_sweep");
Table difference_table(const std::vector<DifferenceRow>& rows);
Table complete_verb_table(const std::vector<CompleteVerbRow>& rows);
Table intervention_table(const std::vector<InterventionResult>& results, std::string name = "causal_shift");
Table random_control_table(const std::vector<std::pair<int, RandomControl>>& by_layer);
Table inlp_table(const std::vector<BoundednessSubspace>& subspaces);
Table fhalf_table(const Evaluation& ev);
Table uncertainty_table(const UncertaintyEstimate& u);
Table uncertainty_summary_table(const UncertaintyEstimate& u);
Table cue_stats_table(const CueStatistics& st);
Table cueless_table(const CueStatistics& st);
Table mine_stats_table(const MineStats& s, std::size_t bounded, std::size_t unbounded);

// --- minimal SVG -----------------------------------------------------------
struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, std::optional<double> reference = std::nullopt);

Figure sweep_figure(const SweepResult& r);
Figure intervention_figure(const std::vector<InterventionResult>& results);

}  // namespace aspectprobe::report
