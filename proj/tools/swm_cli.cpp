// swm: command-line front end for synthesis, analysis, compaction and evaluation.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "swm/cka.h"
#include "swm/error.h"
#include "swm/eval.h"
#include "swm/merge.h"
#include "swm/model_io.h"
#include "swm/parallel.h"
#include "swm/swm.h"
#include "swm/synth.h"
#include "swm/width_prune.h"

namespace {

using namespace swm;

constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

// Raised for flag values that parse but make no sense.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error("usage", message) {}
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("empty number list");
    return out;
}

std::vector<MergeStrategy> parse_strategies(const std::string& text) {
    std::vector<MergeStrategy> out;
    for (const auto& item : split_list(text)) out.push_back(parse_strategy(item));
    if (out.empty()) throw UsageError("empty strategy list");
    return out;
}

std::set<std::uint32_t> parse_layer_set(const std::string& text) {
    std::set<std::uint32_t> out;
    for (const auto& item : split_list(text)) {
        try {
            out.insert(static_cast<std::uint32_t>(std::stoul(item)));
        } catch (const std::exception&) {
            throw UsageError("not a layer id: '" + item + "'");
        }
    }
    return out;
}

std::uint32_t resolve_hi(const std::string& text, const Model& model) {
    if (text == "auto") return SwmConfig::defaults_for(model).hi_bound;
    try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
        throw UsageError("--hi must be 'auto' or a layer id, got '" + text + "'");
    }
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_file(path, text);
    }
}

// Flags shared by every subcommand that runs the sliding-window search.
struct SwmFlags {
    std::uint32_t lo = 2;
    std::string hi = "auto";
    std::string strategy = "diff";
    std::string policy = "last-valid";
    std::string pooling = "flatten-all-tokens";

    void add_to(CLI::App* app, bool with_strategy = true) {
        app->add_option("--lo", lo, "lowest layer id that may be merged")->capture_default_str();
        app->add_option("--hi", hi, "highest mergeable layer id, or 'auto' (n_layers - 2)")
            ->capture_default_str();
        if (with_strategy) {
            app->add_option("--strategy", strategy, "delete | average | diff")->capture_default_str();
        }
        app->add_option("--policy", policy, "last-valid | as-written")->capture_default_str();
        app->add_option("--pooling", pooling, "flatten-all-tokens | final-token")
            ->capture_default_str();
    }

    SwmConfig resolve(const Model& model, double threshold, std::size_t workers) const {
        SwmConfig cfg = SwmConfig::defaults_for(model);
        cfg.threshold = threshold;
        cfg.lo_bound = lo;
        cfg.hi_bound = resolve_hi(hi, model);
        cfg.strategy = parse_strategy(strategy);
        cfg.policy = parse_policy(policy);
        cfg.pooling = parse_pooling(pooling);
        cfg.workers = workers;
        cfg.validate(model);
        return cfg;
    }
};

struct Options {
    std::size_t workers = 0;

    // synth
    std::string config_path;
    std::size_t vocab = 64, d_model = 32, heads = 4, d_ff = 64, layers = 8, max_seq = 64;
    std::string patches = "3:4:0.001";
    double residual_scale = 0.1;
    std::uint64_t seed = 42;
    std::string out;

    // gen-calib
    std::size_t seqs = 10, len = 16;

    // shared inputs
    std::string model, calib, corpus, plan, original;

    // cka
    std::size_t token_cap = kDefaultTokenCap;
    std::string csv, pgm;

    // compact / threshold-search / sweep
    double threshold = 0.9;
    SwmFlags swm;
    std::string thresholds = "0.95,0.9,0.85,0.8,0.75,0.7,0.65";
    std::string strategies = "delete,average,diff";
    std::string table;
    std::size_t target_layers = 0;
    std::string grid = "0.65,0.7,0.75,0.8,0.85,0.9,0.95,0.99";
    std::string out_model;

    // bench
    std::size_t batch = 1, gen = 128, prompt = 12, runs = 20, warmup = 10;

    // width-prune / pipeline
    double head_ratio = 1.0, ffn_ratio = 1.0;
    std::string protect;
    double depth_share = 0.5, target_ratio = 0.35;
    std::string report;
};

CalibSet load_checked_calib(const std::string& path, const Model& model) {
    CalibSet c = load_calib(path);
    c.validate(model.config);
    return c;
}

int cmd_synth(const Options& o) {
    ModelConfig cfg;
    if (!o.config_path.empty()) {
        cfg = config_from_json_text(read_file(o.config_path));
    } else {
        cfg = ModelConfig{o.vocab, o.d_model, o.heads, 0, o.d_ff, o.layers, o.max_seq, 1e-5};
    }
    const Model m = synth_redundant(cfg, parse_patches(o.patches), o.residual_scale, o.seed);
    save_model(m, o.out);
    std::printf("wrote %s: %zu layers, %zu params\n", o.out.c_str(), layer_count(m),
                param_count(m));
    return 0;
}

int cmd_gen_calib(const Options& o) {
    const CalibSet c = random_calib(o.vocab, o.seqs, o.len, o.seed);
    save_calib(c, o.out);
    std::printf("wrote %s: %zu sequences x %zu tokens\n", o.out.c_str(), o.seqs, o.len);
    return 0;
}

int cmd_cka(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet c = load_checked_calib(o.calib, m);
    const CkaMatrix ck = layer_cka_matrix(m, c, o.token_cap, o.workers);
    for (const auto& [i, j] : ck.degenerate_pairs) {
        std::fprintf(stderr, "warning: degenerate representation for pair (%zu, %zu), CKA set to 0\n",
                     i, j);
    }
    if (!o.pgm.empty()) export_heatmap(ck, o.pgm, HeatmapFormat::Pgm);
    if (!o.csv.empty() || o.pgm.empty()) write_or_print(o.csv, heatmap_csv(ck));
    return 0;
}

int cmd_compact(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet c = load_checked_calib(o.calib, m);
    const SwmConfig cfg = o.swm.resolve(m, o.threshold, o.workers);
    const SwmResult r = run_swm(m, cfg, c);
    if (!o.out.empty()) save_model(r.model, o.out);
    if (!o.plan.empty()) save_plan(make_plan_file(r, cfg), o.plan);
    std::printf("threshold %s strategy %s layers %zu -> %zu merged %s\n",
                format_double(cfg.threshold).c_str(), to_string(cfg.strategy).c_str(),
                layer_count(m), layer_count(r.model), format_groups(r.plan).c_str());
    return 0;
}

int cmd_sweep(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet c = load_checked_calib(o.calib, m);
    const CalibSet corpus = o.corpus.empty() ? c : load_checked_calib(o.corpus, m);
    // The threshold in the template is replaced per row; any valid value works here.
    const SwmConfig tmpl = o.swm.resolve(m, 0.5, o.workers);
    const auto rows = threshold_sweep(m, c, parse_doubles(o.thresholds),
                                      parse_strategies(o.strategies), tmpl, corpus);
    write_or_print(o.out, sweep_csv(rows));
    if (!o.table.empty()) write_file(o.table, sweep_table(rows));
    return 0;
}

int cmd_threshold_search(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet c = load_checked_calib(o.calib, m);
    std::vector<double> grid = parse_doubles(o.grid);
    std::sort(grid.begin(), grid.end());
    const SwmConfig tmpl = o.swm.resolve(m, grid.front(), o.workers);
    const auto found = find_threshold(m, c, o.target_layers, grid, tmpl);
    SwmConfig used = tmpl;
    used.threshold = found.threshold;
    if (!o.out.empty()) save_plan(make_plan_file(found.result, used), o.out);
    if (!o.out_model.empty()) save_model(found.result.model, o.out_model);
    std::printf("threshold %s layers %zu merged %s\n", format_double(found.threshold).c_str(),
                layer_count(found.result.model), format_groups(found.result.plan).c_str());
    return 0;
}

int cmd_eval(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet corpus = load_checked_calib(o.corpus, m);
    std::printf("perplexity %s\n", format_double(perplexity(m, corpus, o.workers)).c_str());
    return 0;
}

int cmd_bench(const Options& o) {
    const Model m = load_model(o.model);
    BenchConfig cfg;
    cfg.batch = o.batch;
    cfg.gen_len = o.gen;
    cfg.prompt_len = o.prompt;
    cfg.runs = o.runs;
    cfg.warmup = o.warmup;
    cfg.seed = o.seed;
    std::cout << latency_bench(m, cfg).to_json();
    return 0;
}

int cmd_width_prune(const Options& o) {
    const Model m = load_model(o.model);
    WidthPruneConfig cfg;
    cfg.head_keep_ratio = o.head_ratio;
    cfg.ffn_keep_ratio = o.ffn_ratio;
    cfg.protected_layers = parse_layer_set(o.protect);
    const Model pruned = width_prune(m, cfg);
    save_model(pruned, o.out);
    std::printf("params %zu -> %zu\n", param_count(m), param_count(pruned));
    return 0;
}

int cmd_pipeline(const Options& o) {
    const Model m = load_model(o.model);
    const CalibSet c = load_checked_calib(o.calib, m);
    std::vector<double> grid = parse_doubles(o.grid);
    std::sort(grid.begin(), grid.end());
    const SwmConfig tmpl = o.swm.resolve(m, grid.front(), o.workers);
    WidthPruneConfig width;
    width.protected_layers = parse_layer_set(o.protect);
    const PipelineResult r = pipeline(m, o.depth_share, o.target_ratio, tmpl, grid, width, c);
    if (!o.out.empty()) save_model(r.model, o.out);
    write_or_print(o.report, r.report.to_json());
    return 0;
}

int cmd_verify(const Options& o) {
    const Model original = load_model(o.original);
    const Model pruned = load_model(o.model);
    const PlanFile plan = load_plan(o.plan);
    const Model replayed = plan.policy == CommitPolicy::AsWritten
                               ? replay_log(original, SwmLog{plan.steps, 0, 0}, plan.strategy)
                               : replay_plan(original, plan.plan, plan.strategy);
    if (!(replayed == pruned)) {
        std::fprintf(stderr, "error: verify.replay: replaying %s does not reproduce %s\n",
                     o.plan.c_str(), o.model.c_str());
        return kExitValidation;
    }
    std::printf("replay ok: %zu layers\n", layer_count(pruned));
    if (o.calib.empty()) return 0;
    if (plan.policy == CommitPolicy::AsWritten) {
        std::printf("gate check skipped: as-written plans may commit failing windows\n");
        return 0;
    }
    const CalibSet c = load_checked_calib(o.calib, original);
    const auto sims =
        gate_similarities(original, plan.plan, plan.strategy, c, plan.pooling, o.workers);
    for (std::size_t g = 0; g < sims.size(); ++g) {
        if (!(sims[g] > plan.threshold)) {
            std::fprintf(stderr, "error: verify.gate: group %zu similarity %s is not above %s\n", g,
                         format_double(sims[g]).c_str(), format_double(plan.threshold).c_str());
            return kExitValidation;
        }
    }
    std::printf("gates ok: %zu groups above %s\n", sims.size(),
                format_double(plan.threshold).c_str());
    return 0;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sliding-window layer merging for small transformer models"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--workers", o.workers, "worker threads (0 = available parallelism)")
        ->capture_default_str();

    auto* synth = app.add_subcommand("synth", "generate a random model with redundant patches");
    synth->add_option("--config", o.config_path, "model config JSON (overrides the size flags)");
    synth->add_option("--vocab", o.vocab)->capture_default_str();
    synth->add_option("--d-model", o.d_model)->capture_default_str();
    synth->add_option("--heads", o.heads)->capture_default_str();
    synth->add_option("--d-ff", o.d_ff)->capture_default_str();
    synth->add_option("--layers", o.layers)->capture_default_str();
    synth->add_option("--max-seq", o.max_seq)->capture_default_str();
    synth->add_option("--patches", o.patches, "start:len:eps[,...]")->capture_default_str();
    synth->add_option("--residual-scale", o.residual_scale)->capture_default_str();
    synth->add_option("--seed", o.seed)->capture_default_str();
    synth->add_option("--out", o.out)->required();

    auto* gen_calib = app.add_subcommand("gen-calib", "write a random calibration set (JSONL)");
    gen_calib->add_option("--vocab", o.vocab)->capture_default_str();
    gen_calib->add_option("--seqs", o.seqs)->capture_default_str();
    gen_calib->add_option("--len", o.len)->capture_default_str();
    gen_calib->add_option("--seed", o.seed)->capture_default_str();
    gen_calib->add_option("--out", o.out)->required();

    auto* cka = app.add_subcommand("cka", "layer-pair CKA heatmap");
    cka->add_option("--model", o.model)->required();
    cka->add_option("--calib", o.calib)->required();
    cka->add_option("--token-cap", o.token_cap)->capture_default_str();
    cka->add_option("--csv", o.csv, "CSV output (stdout when neither --csv nor --pgm is given)");
    cka->add_option("--pgm", o.pgm, "binary PGM output");

    auto* compact = app.add_subcommand("compact", "run the sliding-window merge");
    compact->add_option("--model", o.model)->required();
    compact->add_option("--calib", o.calib)->required();
    compact->add_option("--threshold", o.threshold)->capture_default_str();
    o.swm.add_to(compact);
    compact->add_option("--out", o.out, "compacted model");
    compact->add_option("--plan", o.plan, "plan JSON");

    auto* sweep = app.add_subcommand("sweep", "run every threshold x strategy combination");
    sweep->add_option("--model", o.model)->required();
    sweep->add_option("--calib", o.calib)->required();
    sweep->add_option("--corpus", o.corpus, "perplexity corpus (defaults to --calib)");
    sweep->add_option("--thresholds", o.thresholds)->capture_default_str();
    sweep->add_option("--strategies", o.strategies)->capture_default_str();
    o.swm.add_to(sweep, false);
    sweep->add_option("--out", o.out, "CSV output (stdout by default)");
    sweep->add_option("--table", o.table, "plain-text table of merged layers");

    auto* search = app.add_subcommand("threshold-search", "largest grid threshold meeting a layer target");
    search->add_option("--model", o.model)->required();
    search->add_option("--calib", o.calib)->required();
    search->add_option("--target-layers", o.target_layers)->required();
    search->add_option("--grid", o.grid)->capture_default_str();
    o.swm.add_to(search);
    search->add_option("--out", o.out, "plan JSON");
    search->add_option("--out-model", o.out_model, "compacted model");

    auto* eval = app.add_subcommand("eval", "perplexity on a token corpus");
    eval->add_option("--model", o.model)->required();
    eval->add_option("--corpus", o.corpus)->required();

    auto* bench = app.add_subcommand("bench", "greedy generation latency");
    bench->add_option("--model", o.model)->required();
    bench->add_option("--batch", o.batch)->capture_default_str();
    bench->add_option("--gen", o.gen)->capture_default_str();
    bench->add_option("--prompt", o.prompt)->capture_default_str();
    bench->add_option("--runs", o.runs)->capture_default_str();
    bench->add_option("--warmup", o.warmup)->capture_default_str();
    bench->add_option("--seed", o.seed)->capture_default_str();

    auto* width = app.add_subcommand("width-prune", "drop low-norm heads and FFN channels");
    width->add_option("--model", o.model)->required();
    width->add_option("--head-ratio", o.head_ratio, "fraction of heads kept")->capture_default_str();
    width->add_option("--ffn-ratio", o.ffn_ratio, "fraction of FFN channels kept")
        ->capture_default_str();
    width->add_option("--protect", o.protect, "comma-separated layer ids left untouched");
    width->add_option("--out", o.out)->required();

    auto* pipe = app.add_subcommand("pipeline", "depth merge followed by width pruning");
    pipe->add_option("--model", o.model)->required();
    pipe->add_option("--calib", o.calib)->required();
    pipe->add_option("--depth-share", o.depth_share)->capture_default_str();
    pipe->add_option("--target-ratio", o.target_ratio, "fraction of parameters to remove")
        ->capture_default_str();
    pipe->add_option("--grid", o.grid)->capture_default_str();
    o.swm.add_to(pipe);
    pipe->add_option("--protect", o.protect, "layer ids excluded from width pruning");
    pipe->add_option("--out", o.out, "pruned model");
    pipe->add_option("--report", o.report, "report JSON (stdout by default)");

    auto* verify = app.add_subcommand("verify", "replay a plan and re-check its gates");
    verify->add_option("--model", o.model, "compacted model")->required();
    verify->add_option("--plan", o.plan)->required();
    verify->add_option("--original", o.original)->required();
    verify->add_option("--calib", o.calib, "calibration set for the gate check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*gen_calib) return cmd_gen_calib(o);
        if (*cka) return cmd_cka(o);
        if (*compact) return cmd_compact(o);
        if (*sweep) return cmd_sweep(o);
        if (*search) return cmd_threshold_search(o);
        if (*eval) return cmd_eval(o);
        if (*bench) {
            o.workers = 1;
            return cmd_bench(o);
        }
        if (*width) return cmd_width_prune(o);
        if (*pipe) return cmd_pipeline(o);
        if (*verify) return cmd_verify(o);
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
