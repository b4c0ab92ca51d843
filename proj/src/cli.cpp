// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "aspectprobe/behavioral.hpp"
#include "aspectprobe/causal.hpp"
#include "aspectprobe/classifier.hpp"
#include "aspectprobe/cuemine.hpp"
#include "aspectprobe/error.hpp"
#include "aspectprobe/report.hpp"
#include "aspectprobe/subspace.hpp"
#include "aspectprobe/toy_mlm.hpp"
#include "aspectprobe/wire.hpp"

namespace aspectprobe::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kPathKeys = {
    "backend.weights", "data.probing",     "data.boundedness", "data.aspect_bank", "data.vocab_map",
    "data.cues",       "causal.subspace_file", "head.file",    "head.train",       "head.eval",
    "mine.corpus",     "mine.exclude_texts",   "output"};

std::vector<std::string> split_dotted(const std::string& dotted) {
    std::vector<std::string> parts;
    std::stringstream ss(dotted);
    std::string p;
    while (std::getline(ss, p, '.')) {
        if (p.empty()) throw ConfigError("bad config key '" + dotted + "'");
        parts.push_back(p);
    }
    if (parts.empty()) throw ConfigError("empty config key");
    return parts;
}

}  // namespace

Config::Config() : doc_(defaults()), base_(fs::current_path()) {}

json Config::defaults() {
    return json{
        {"seed", 0},
        {"output", "out"},
        {"backend", {{"weights", ""}, {"url", ""}, {"dropout_rate", 0.1}}},
        {"data", {{"probing", ""}, {"boundedness", ""}, {"aspect_bank", ""}, {"vocab_map", ""}, {"cues", ""}}},
        {"behavioral", {{"method", "inference"}, {"k", 12000}, {"layers", "all"}, {"k_values", {1200, 12000}}}},
        {"inlp",
         {{"layers", "all"},
          {"m", 20},
          {"alpha", 4.0},
          {"eta0", 0.1},
          {"sgd_alpha", 1e-4},
          {"tol", 1e-3},
          {"validation_fraction", 0.1},
          {"n_iter_no_change", 5},
          {"max_iter", 1000}}},
        {"causal",
         {{"layers", "all"},
          {"direction", "negative"},
          {"control", "none"},
          {"evaluation", "inference"},
          {"subspace_file", ""},
          {"n_random", 20},
          {"random_push", "negative"},
          {"bootstrap", 1000},
          {"k", 12000}}},
        {"head",
         {{"layer", -1},
          {"epochs", 50},
          {"learning_rate", 0.05},
          {"l2", 1e-4},
          {"validation_fraction", 0.2},
          {"dropout_rate", 0.1},
          {"mc_samples", 20},
          {"mc_source", "head"},
          {"file", ""},
          {"train", ""},
          {"eval", ""}}},
        {"cue_stats", {{"group_by", "context_type"}, {"k", 12000}}},
        {"mine", {{"corpus", ""}, {"cap", 8160}, {"exclude_texts", ""}}},
    };
}

Config Config::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json file;
    try {
        file = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config top level must be an object");
    Config c;
    c.doc_.merge_patch(file);
    c.base_ = fs::absolute(path).parent_path();
    return c;
}

bool Config::has(const std::string& dotted) const {
    const json* cur = &doc_;
    for (const auto& p : split_dotted(dotted)) {
        if (!cur->is_object() || !cur->contains(p)) return false;
        cur = &(*cur)[p];
    }
    return true;
}

const json& Config::at(const std::string& dotted) const {
    const json* cur = &doc_;
    for (const auto& p : split_dotted(dotted)) {
        if (!cur->is_object() || !cur->contains(p)) throw ConfigError("missing config key '" + dotted + "'");
        cur = &(*cur)[p];
    }
    return *cur;
}

void Config::set(const std::string& dotted, json value) {
    json* cur = &doc_;
    const auto parts = split_dotted(dotted);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        json& next = (*cur)[parts[i]];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError("config key '" + parts[i] + "' is not an object");
        cur = &next;
    }
    if (kPathKeys.count(dotted) && value.is_string() && !value.get<std::string>().empty()) {
        value = fs::absolute(value.get<std::string>()).lexically_normal().string();
    }
    (*cur)[parts.back()] = std::move(value);
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    set(key, std::move(value));
}

std::string Config::str(const std::string& dotted) const {
    const auto& v = at(dotted);
    if (!v.is_string()) throw ConfigError("config key '" + dotted + "' must be a string");
    return v.get<std::string>();
}

double Config::num(const std::string& dotted) const {
    const auto& v = at(dotted);
    if (!v.is_number()) throw ConfigError("config key '" + dotted + "' must be a number");
    return v.get<double>();
}

long long Config::integer(const std::string& dotted) const {
    const auto& v = at(dotted);
    if (!v.is_number_integer()) throw ConfigError("config key '" + dotted + "' must be an integer");
    return v.get<long long>();
}

fs::path Config::path(const std::string& dotted) const {
    const std::string s = str(dotted);
    if (s.empty()) throw ConfigError("config key '" + dotted + "' (a path) is not set");
    fs::path p(s);
    return p.is_absolute() ? p : (base_ / p).lexically_normal();
}

std::vector<int> parse_layers(const json& spec, int n_layers) {
    std::vector<int> out;
    auto check = [&](long long l) {
        if (l < 0 || l > n_layers) {
            throw ConfigError("layer " + std::to_string(l) + " outside [0, " + std::to_string(n_layers) + "]");
        }
        out.push_back(static_cast<int>(l));
    };
    if (spec.is_number_integer()) {
        check(spec.get<long long>());
    } else if (spec.is_array()) {
        for (const auto& v : spec) {
            if (!v.is_number_integer()) throw ConfigError("layer lists hold integers");
            check(v.get<long long>());
        }
    } else if (spec.is_string()) {
        const auto s = spec.get<std::string>();
        if (s == "all") {
            for (int l = 0; l <= n_layers; ++l) out.push_back(l);
        } else if (const auto dash = s.find('-'); dash != std::string::npos && dash > 0) {
            try {
                const int a = std::stoi(s.substr(0, dash));
                const int b = std::stoi(s.substr(dash + 1));
                if (b < a) throw ConfigError("empty layer range " + s);
                for (int l = a; l <= b; ++l) check(l);
            } catch (const std::logic_error&) {
                throw ConfigError("bad layer range " + s);
            }
        } else {
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    std::size_t used = 0;
                    const int l = std::stoi(item, &used);
                    if (used != item.size()) throw std::invalid_argument(item);
                    check(l);
                } catch (const std::logic_error&) {
                    throw ConfigError("bad layer list " + s);
                }
            }
        }
    } else {
        throw ConfigError("layers must be \"all\", a range, a list or an integer");
    }
    if (out.empty()) throw ConfigError("no layers selected");
    return out;
}

std::unique_ptr<Session> open_session(const Config& config) {
    std::unique_ptr<Session> s;
    const char* env = std::getenv("ASPECTPROBE_BACKEND_URL");
    std::string url = env != nullptr ? env : "";
    if (url.empty() && config.has("backend.url")) url = config.str("backend.url");
    const auto seed = static_cast<std::uint64_t>(config.integer("seed"));
    if (!url.empty()) {
        s = std::make_unique<wire::HttpSession>(url, seed);
    } else {
        auto toy = std::make_unique<ToyMlm>(ToyMlm::load(config.path("backend.weights")));
        toy->set_dropout_rate(config.num("backend.dropout_rate"));
        toy->set_seed(seed);
        s = std::move(toy);
    }
    return s;
}

// ---------------------------------------------------------------------------

namespace {


struct Context {
    Config config;
    std::string command;
    std::unique_ptr<Session> session;
    BackendMeta meta;
    std::optional<fs::path> head_file;  // set by `report`, kept out of the config

    std::uint64_t seed() const { return static_cast<std::uint64_t>(config.integer("seed")); }
    fs::path out() const { return config.path("output"); }

    Session& backend() {
        if (!session) {
            session = open_session(config);
            meta = session->meta();
        }
        return *session;
    }

    report::ExperimentReport new_report() {
        report::ExperimentReport r;
        r.manifest.command = command;
        r.manifest.seed = seed();
        // The output directory is not part of the experiment identity.
        r.manifest.config = config.doc();
        r.manifest.config.erase("output");
        r.manifest.extra["output"] = out().string();
        if (session) r.manifest.backend = report::meta_json(meta);
        return r;
    }

    AspectBank bank() const {
        return config.str("data.aspect_bank").empty() ? AspectBank{} : load_aspect_bank(config.path("data.aspect_bank"));
    }

    std::vector<ProbingInstance> probing(const std::string& key = "data.probing") const {
        auto set = load_instances(config.path(key), bank());
        for (const auto& r : set.rejected) warn("rejected " + r.id + " (line " + std::to_string(r.line) + "): " + r.reason);
        if (set.instances.empty()) throw Error("empty_input", "no valid probing instances in " + config.path(key).string());
        return set.instances;
    }

    ResolvedVocab vocab() {
        const auto map = load_vocab_map(config.path("data.vocab_map"));
        return resolve_vocab(backend(), map);
    }

    InlpParams inlp_params() const {
        InlpParams p;
        p.m = static_cast<int>(config.integer("inlp.m"));
        p.alpha = config.num("inlp.alpha");
        p.sgd.eta0 = config.num("inlp.eta0");
        p.sgd.alpha = config.num("inlp.sgd_alpha");
        p.sgd.tol = config.num("inlp.tol");
        p.sgd.validation_fraction = config.num("inlp.validation_fraction");
        p.sgd.n_iter_no_change = static_cast<int>(config.integer("inlp.n_iter_no_change"));
        p.sgd.max_iter = static_cast<int>(config.integer("inlp.max_iter"));
        p.sgd.seed = seed();
        if (p.m < 0) throw ConfigError("inlp.m must be >= 0");
        return p;
    }
};

void emit(Context& ctx, const report::ExperimentReport& r) {
    const auto files = report::emit(r, ctx.out());
    for (const auto& f : files) std::cout << f.string() << '\n';
}

// --- subcommands -----------------------------------------------------------

void probe_behavioral(Context& ctx) {
    auto& session = ctx.backend();
    const auto instances = ctx.probing();
    SweepParams p;
    const auto method = parse_method(ctx.config.str("behavioral.method"));
    if (!method) throw ConfigError("behavioral.method must be iterative or inference");
    p.method = *method;
    p.k = static_cast<std::size_t>(ctx.config.integer("behavioral.k"));
    if (p.k < 1) throw ConfigError("behavioral.k must be >= 1");
    p.layers = parse_layers(ctx.config.at("behavioral.layers"), ctx.meta.n_layers);

    auto rep = ctx.new_report();
    std::optional<ResolvedVocab> vocab;
    if (p.method == ProbeMethod::Inference) vocab = ctx.vocab();
    const auto sweep = layer_sweep(session, instances, p, vocab ? &*vocab : nullptr);
    for (const auto& f : sweep.failures) warn(f);
    rep.tables.push_back(report::sweep_table(sweep));
    rep.figures.push_back(report::sweep_figure(sweep));
    if (p.method == ProbeMethod::Iterative) {
        rep.tables.push_back(report::difference_table(probability_difference(session, instances, p.layers)));
    } else {
        std::vector<std::size_t> ks;
        for (const auto& v : ctx.config.at("behavioral.k_values")) ks.push_back(v.get<std::size_t>());
        rep.tables.push_back(report::complete_verb_table(complete_verb_profile(session, instances, *vocab, ks, p.layers)));
    }
    rep.manifest.extra["random_baseline"] = SweepResult::kRandomBaseline;
    rep.manifest.extra["failures"] = sweep.failures;
    emit(ctx, rep);
}

BoundednessSubspace train_layer(Context& ctx, const std::vector<BoundednessInstance>& data, int layer) {
    return train_inlp(ctx.backend(), data, layer, ctx.inlp_params());
}

std::vector<BoundednessInstance> boundedness_data(Context& ctx) {
    auto set = load_boundedness(ctx.config.path("data.boundedness"));
    for (const auto& r : set.rejected) warn("rejected " + r.id + ": " + r.reason);
    for (const auto& w : set.warnings) warn(w);
    if (set.instances.empty()) throw Error("empty_input", "no boundedness instances");
    return set.instances;
}

void train_inlp_cmd(Context& ctx) {
    ctx.backend();
    const auto data = boundedness_data(ctx);
    const auto layers = parse_layers(ctx.config.at("inlp.layers"), ctx.meta.n_layers);
    auto rep = ctx.new_report();
    std::vector<BoundednessSubspace> subs;
    fs::create_directories(ctx.out());
    json files = json::array();
    for (int layer : layers) {
        subs.push_back(train_layer(ctx, data, layer));
        const auto path = ctx.out() / ("subspace_layer" + std::to_string(layer) + ".json");
        save_subspace(path, subs.back());
        files.push_back(path.filename().string());
        std::cout << path.string() << '\n';
    }
    rep.tables.push_back(report::inlp_table(subs));
    rep.manifest.extra["subspaces"] = files;
    emit(ctx, rep);
}

BoundednessSubspace subspace_for(Context& ctx, int layer, const std::vector<BoundednessInstance>* data) {
    const std::string tmpl = ctx.config.str("causal.subspace_file");
    if (!tmpl.empty()) {
        std::string p = ctx.config.path("causal.subspace_file").string();
        const auto at = p.find("{layer}");
        if (at != std::string::npos) p.replace(at, 7, std::to_string(layer));
        return load_subspace(p);
    }
    if (data == nullptr) throw ConfigError("causal.subspace_file or data.boundedness is required");
    return train_layer(ctx, *data, layer);
}

void probe_causal(Context& ctx) {
    auto& session = ctx.backend();
    const auto instances = ctx.probing();
    const auto vocab = ctx.vocab();
    const auto layers = parse_layers(ctx.config.at("causal.layers"), ctx.meta.n_layers);
    const auto kind = parse_intervention(ctx.config.str("causal.direction"));
    if (!kind || *kind == InterventionKind::Identity) throw ConfigError("causal.direction must be positive, negative or random");
    const std::string control = ctx.config.str("causal.control");
    if (control != "none" && control != "random" && control != "number" && control != "identity") {
        throw ConfigError("causal.control must be none, random, number or identity");
    }
    const auto eval = parse_method(ctx.config.str("causal.evaluation"));
    if (!eval) throw ConfigError("causal.evaluation must be inference or iterative");
    const auto push = parse_push(ctx.config.str("causal.random_push"));
    if (!push) throw ConfigError("causal.random_push must be positive or negative");

    InterventionParams p;
    p.kind = *kind;
    p.k = static_cast<std::size_t>(ctx.config.integer("causal.k"));
    p.evaluation = *eval;
    p.bootstrap_resamples = static_cast<int>(ctx.config.integer("causal.bootstrap"));
    p.seed = ctx.seed();
    p.random_push = *push;
    const int n_random = static_cast<int>(ctx.config.integer("causal.n_random"));
    const InlpParams inlp = ctx.inlp_params();

    std::optional<std::vector<BoundednessInstance>> data;
    const bool need_trained = *kind != InterventionKind::Random || control == "number";
    if (need_trained && ctx.config.str("causal.subspace_file").empty()) data = boundedness_data(ctx);

    std::vector<InterventionResult> main, controls;
    std::vector<std::pair<int, RandomControl>> randoms;
    for (int layer : layers) {
        p.layer = layer;
        std::optional<BoundednessSubspace> sub;
        if (need_trained) sub = subspace_for(ctx, layer, data ? &*data : nullptr);
        const int m = sub ? static_cast<int>(sub->size()) : std::min(inlp.m, ctx.meta.hidden_size);
        if (*kind == InterventionKind::Random) {
            auto rc = random_control(session, instances, m, inlp.alpha, n_random, ctx.seed(), vocab, p);
            InterventionResult summary;
            summary.layer = layer;
            summary.kind = InterventionKind::Random;
            summary.cells = rc.mean;
            main.push_back(summary);
            randoms.emplace_back(layer, std::move(rc));
        } else {
            main.push_back(run_intervention(session, instances, *sub, vocab, p));
        }
        if (control == "identity") {
            InterventionParams q = p;
            q.kind = InterventionKind::Identity;
            controls.push_back(run_intervention(session, instances, sub ? *sub : BoundednessSubspace{}, vocab, q));
        } else if (control == "number") {
            const auto map = load_vocab_map(ctx.config.path("data.vocab_map"));
            controls.push_back(number_control(session, instances, *sub, vocab, map, p));
        } else if (control == "random" && *kind != InterventionKind::Random) {
            randoms.emplace_back(layer, random_control(session, instances, m, sub->alpha, n_random, ctx.seed(), vocab, p));
        }
    }
    for (const auto& r : main) {
        for (const auto& f : r.failures) warn(f);
    }
    auto rep = ctx.new_report();
    rep.tables.push_back(report::intervention_table(main));
    rep.figures.push_back(report::intervention_figure(main));
    if (!controls.empty()) rep.tables.push_back(report::intervention_table(controls, "control_" + control));
    if (!randoms.empty()) rep.tables.push_back(report::random_control_table(randoms));
    emit(ctx, rep);
}

void mine_cues(Context& ctx) {
    const auto corpus = read_conllu(ctx.config.path("mine.corpus"));
    for (const auto& p : corpus.problems) warn("skipped sentence " + p);
    const auto patterns = load_cue_patterns(ctx.config.path("data.cues"));
    MineLimits limits;
    const auto cap = ctx.config.integer("mine.cap");
    if (cap < 0) throw ConfigError("mine.cap must be >= 0");
    limits.cap = static_cast<std::size_t>(cap);
    if (!ctx.config.str("mine.exclude_texts").empty()) {
        limits.exclude_texts = load_exclusion_texts(ctx.config.path("mine.exclude_texts"));
    }
    const auto result = mine(corpus, patterns, ctx.bank(), limits);
    fs::create_directories(ctx.out());
    const auto out = ctx.out() / "mined.jsonl";
    write_jsonl(out, result.instances);
    std::cout << out.string() << '\n';
    std::size_t b = 0;
    for (const auto& i : result.instances) b += i.label == Boundedness::Bounded ? 1 : 0;
    auto rep = ctx.new_report();
    rep.tables.push_back(report::mine_stats_table(result.stats, b, result.instances.size() - b));
    emit(ctx, rep);
}

HeadParams head_params(const Context& ctx) {
    HeadParams p;
    p.epochs = static_cast<int>(ctx.config.integer("head.epochs"));
    p.learning_rate = ctx.config.num("head.learning_rate");
    p.l2 = ctx.config.num("head.l2");
    p.validation_fraction = ctx.config.num("head.validation_fraction");
    p.dropout_rate = ctx.config.num("head.dropout_rate");
    p.seed = ctx.seed();
    if (p.epochs < 0) throw ConfigError("head.epochs must be >= 0");
    return p;
}

int head_layer(Context& ctx) {
    const auto l = ctx.config.integer("head.layer");
    return l < 0 ? ctx.meta.n_layers : static_cast<int>(l);
}

void train_head_cmd(Context& ctx) {
    auto& session = ctx.backend();
    const auto instances = ctx.probing(ctx.config.str("head.train").empty() ? "data.probing" : "head.train");
    const int layer = head_layer(ctx);
    const auto t = train_head(session, instances, layer, head_params(ctx));
    fs::create_directories(ctx.out());
    const auto path = ctx.config.str("head.file").empty() ? ctx.out() / "head.json" : ctx.config.path("head.file");
    save_head(path, t.head);
    std::cout << path.string() << '\n';
    auto rep = ctx.new_report();
    report::Table tab{"head_training", {"layer", "n_train", "n_validation", "train_accuracy", "validation_accuracy"}, {}};
    tab.add({static_cast<std::int64_t>(layer), static_cast<std::int64_t>(t.n_train),
             static_cast<std::int64_t>(t.n_validation), t.train_accuracy, t.validation_accuracy});
    rep.tables.push_back(std::move(tab));
    emit(ctx, rep);
}

void eval_head_cmd(Context& ctx) {
    auto& session = ctx.backend();
    fs::path path = ctx.config.str("head.file").empty() ? ctx.out() / "head.json" : ctx.config.path("head.file");
    if (ctx.head_file) path = *ctx.head_file;
    const auto head = load_head(path);
    const auto instances = ctx.probing(ctx.config.str("head.eval").empty() ? "data.probing" : "head.eval");
    const auto f = mask_features(session, instances, head.layer);
    if (f.X.cols() != head.dim()) throw Error("dimension_mismatch", "head dim differs from backend hidden size");
    for (const auto& s : f.skipped) warn(s);
    const auto ev = evaluate_head(head, f.X, instances, f.rows);
    const int n = static_cast<int>(ctx.config.integer("head.mc_samples"));
    const std::string source = ctx.config.str("head.mc_source");
    UncertaintyEstimate u;
    if (source == "head") {
        u = mc_dropout(head, f.X, instances, f.rows, n, ctx.seed());
    } else if (source == "backend") {
        u = mc_dropout(session, instances, ctx.vocab(), n);
    } else {
        throw ConfigError("head.mc_source must be head or backend");
    }
    auto rep = ctx.new_report();
    rep.tables.push_back(report::fhalf_table(ev));
    rep.tables.push_back(report::uncertainty_table(u));
    rep.tables.push_back(report::uncertainty_summary_table(u));
    rep.manifest.extra["accuracy"] = ev.accuracy;
    emit(ctx, rep);
}

void cue_stats_cmd(Context& ctx) {
    const auto instances = ctx.probing();
    const auto patterns = load_cue_patterns(ctx.config.path("data.cues"));
    const std::string by = ctx.config.str("cue_stats.group_by");
    CueStatistics st;
    if (by == "context_type") {
        st = cue_statistics(instances, patterns);
    } else if (by == "prediction") {
        // Group by whether the final layer preferred the expected form.
        auto& session = ctx.backend();
        const auto vocab = ctx.vocab();
        SweepParams p;
        p.method = ProbeMethod::Inference;
        p.k = static_cast<std::size_t>(ctx.config.integer("cue_stats.k"));
        p.layers = {ctx.meta.n_layers};
        const auto sweep = layer_sweep(session, instances, p, &vocab);
        std::vector<std::string> groups;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            std::string g = std::string(to_string(instances[i].context_type)) + "/";
            if (sweep.outcomes[i].empty()) {
                g += "failed";
            } else {
                g += sweep.outcomes[i][0] == Outcome::Correct ? "expected" : "complementary";
            }
            groups.push_back(g);
        }
        st = cue_statistics(instances, patterns, &groups);
    } else {
        throw ConfigError("cue_stats.group_by must be context_type or prediction");
    }
    auto rep = ctx.new_report();
    rep.tables.push_back(report::cue_stats_table(st));
    rep.tables.push_back(report::cueless_table(st));
    emit(ctx, rep);
}

// Every pipeline that has its inputs configured, each in its own subdirectory.
void report_cmd(Context& ctx) {
    const fs::path root = ctx.out();
    json ran = json::array();
    auto sub = [&](const std::string& name, void (*fn)(Context&)) {
        Context child{ctx.config, name, nullptr, {}, std::nullopt};
        child.config.set("output", (root / name).string());
        fn(child);
        ran.push_back(name);
    };
    sub("probe-behavioral", probe_behavioral);
    if (!ctx.config.str("data.boundedness").empty()) {
        sub("train-inlp", train_inlp_cmd);
        sub("probe-causal", probe_causal);
    }
    sub("train-head", train_head_cmd);
    {
        Context child{ctx.config, "eval-head", nullptr, {}, std::nullopt};
        child.config.set("output", (root / "eval-head").string());
        if (ctx.config.str("head.file").empty()) child.head_file = root / "train-head" / "head.json";
        eval_head_cmd(child);
        ran.push_back("eval-head");
    }
    if (!ctx.config.str("data.cues").empty()) sub("cue-stats", cue_stats_cmd);
    if (!ctx.config.str("mine.corpus").empty()) sub("mine-cues", mine_cues);
    auto rep = ctx.new_report();
    rep.manifest.extra["pipelines"] = ran;
    emit(ctx, rep);
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"aspectprobe: behavioral and causal probing of masked language models for verbal aspect"};
    app.require_subcommand(1);

    struct Common {
        std::string config;
        std::optional<long long> seed;
        std::string out;
        std::vector<std::string> sets;
        std::vector<std::pair<std::string, std::string>> mapped;  // dotted key, raw value
    };
    std::map<std::string, Common> common;

    auto add = [&](const std::string& name, const std::string& desc) {
        auto* sc = app.add_subcommand(name, desc);
        auto& c = common[name];
        sc->add_option("--config", c.config, "JSON config file");
        sc->add_option("--seed", c.seed, "global seed");
        sc->add_option("--out", c.out, "output directory");
        sc->add_option("--set", c.sets, "override a config field: dotted.key=value");
        return sc;
    };
    // Flags that are shorthands for dotted config keys.
    std::map<std::string, std::map<std::string, std::string>> shorthand;
    auto flag = [&](CLI::App* sc, const std::string& opt, const std::string& key, const std::string& desc) {
        auto& slot = shorthand[sc->get_name()][key];
        sc->add_option(opt, slot, desc);
    };

    auto* behavioral = add("probe-behavioral", "layer sweep by iterative masking or aspect inference");
    flag(behavioral, "--method", "behavioral.method", "iterative | inference");
    flag(behavioral, "--k", "behavioral.k", "top-k for aspect inference");
    flag(behavioral, "--layers", "behavioral.layers", "all | a-b | a,b,c");
    flag(behavioral, "--probing", "data.probing", "probing instances (JSONL)");

    auto* causal = add("probe-causal", "counterfactual interventions with controls");
    flag(causal, "--layer", "causal.layers", "single layer");
    flag(causal, "--layer-range", "causal.layers", "a-b | a,b,c | all");
    flag(causal, "--direction", "causal.direction", "positive | negative | random");
    flag(causal, "--subspace-file", "causal.subspace_file", "subspace JSON ({layer} is substituted)");
    flag(causal, "--control", "causal.control", "none | random | number | identity");
    flag(causal, "--evaluation", "causal.evaluation", "inference | iterative");
    flag(causal, "--k", "causal.k", "top-k for aspect inference");

    auto* inlp = add("train-inlp", "train boundedness subspaces per layer");
    flag(inlp, "--layers", "inlp.layers", "all | a-b | a,b,c");
    flag(inlp, "--m", "inlp.m", "number of INLP rounds");
    flag(inlp, "--boundedness", "data.boundedness", "boundedness instances (JSONL)");

    auto* minec = add("mine-cues", "mine bounded/unbounded instances from CoNLL-U");
    flag(minec, "--corpus", "mine.corpus", "CoNLL-U file");
    flag(minec, "--patterns", "data.cues", "cue lexicon (JSON)");
    flag(minec, "--cap", "mine.cap", "per-class cap");
    flag(minec, "--exclude-texts", "mine.exclude_texts", "texts to exclude (lines or JSONL)");

    auto* th = add("train-head", "train the 2-way aspect head");
    flag(th, "--layer", "head.layer", "representation layer (-1: last)");
    flag(th, "--head-file", "head.file", "where to write the head");

    auto* eh = add("eval-head", "F0.5 and MC-dropout uncertainty of a trained head");
    flag(eh, "--head-file", "head.file", "trained head JSON");
    flag(eh, "--samples", "head.mc_samples", "MC-dropout samples");
    flag(eh, "--mc-source", "head.mc_source", "head | backend");

    auto* cs = add("cue-stats", "cue presence per context type or prediction outcome");
    flag(cs, "--patterns", "data.cues", "cue lexicon (JSON)");
    flag(cs, "--group-by", "cue_stats.group_by", "context_type | prediction");

    add("report", "run every configured pipeline into one output tree");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    Context ctx;
    ctx.command = name;
    try {
        auto& c = common[name];
        ctx.config = c.config.empty() ? Config() : Config::load(c.config);
        for (const auto& s : c.sets) ctx.config.apply_override(s);
        for (const auto& [key, raw] : shorthand[name]) {
            if (!raw.empty()) ctx.config.apply_override(key + "=" + raw);
        }
        if (c.seed) ctx.config.set("seed", *c.seed);
        if (!c.out.empty()) ctx.config.set("output", c.out);
        if (ctx.config.integer("seed") < 0) throw ConfigError("seed must be >= 0");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (name == "probe-behavioral") probe_behavioral(ctx);
        else if (name == "probe-causal") probe_causal(ctx);
        else if (name == "train-inlp") train_inlp_cmd(ctx);
        else if (name == "mine-cues") mine_cues(ctx);
        else if (name == "train-head") train_head_cmd(ctx);
        else if (name == "eval-head") eval_head_cmd(ctx);
        else if (name == "cue-stats") cue_stats_cmd(ctx);
        else if (name == "report") report_cmd(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> copy = args;
    std::vector<char*> argv;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    return run(static_cast<int>(copy.size()), argv.data());
}

}  // namespace aspectprobe::cli
