#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swm/model.h"
#include "swm/swm.h"

namespace swm {

// exp(mean next-token NLL) over every position of every sequence.
double perplexity(const Model& model, const CalibSet& corpus, std::size_t workers = 1);

struct BenchConfig {
    std::size_t batch = 1;
    std::size_t prompt_len = 12;
    std::size_t gen_len = 128;
    std::size_t runs = 20;
    std::size_t warmup = 10;
    std::uint64_t seed = 0;
};

struct BenchResult {
    std::size_t batch = 0;
    std::size_t gen_len = 0;
    std::size_t runs = 0;
    std::size_t warmup = 0;
    double latency_seconds = 0.0;  // mean wall time per measured run
    double throughput_tokens_per_second = 0.0;  // batch * gen_len / latency

    std::string to_json() const;
};

// Greedy generation of `gen_len` tokens for each of `batch` prompts,
// re-running the full sequence for every new token. Warm-up runs are
// executed and discarded. Single-threaded.
BenchResult latency_bench(const Model& model, const BenchConfig& cfg);
BenchResult make_bench_result(const BenchConfig& cfg, double mean_latency_seconds);

struct SweepRow {
    MergeStrategy strategy = MergeStrategy::Diff;
    double threshold = 0.0;
    std::size_t layer_count = 0;
    double cal_sim = 0.0;
    double perplexity = 0.0;
    MergePlan plan;
};

// One SWM run per (threshold, strategy); rows ordered by strategy name, then
// by descending threshold. `corpus` scores perplexity.
std::vector<SweepRow> threshold_sweep(const Model& model, const CalibSet& calib,
                                      const std::vector<double>& thresholds,
                                      const std::vector<MergeStrategy>& strategies,
                                      const SwmConfig& cfg_template, const CalibSet& corpus);

// strategy,threshold,layer_count,cal_sim,perplexity
std::string sweep_csv(const std::vector<SweepRow>& rows);
// Threshold | Num of layers | Merged Layers, one block per strategy.
std::string sweep_table(const std::vector<SweepRow>& rows);

// Jaccard index of two plans' group sets; two empty plans agree fully.
double plan_agreement(const MergePlan& a, const MergePlan& b);

// Mean pairwise plan agreement of run_swm across calibration sets.
double calib_robustness(const Model& model, const SwmConfig& cfg,
                        const std::vector<CalibSet>& calib_sets);

// Uniform random token sequences.
CalibSet random_calib(std::size_t vocab, std::size_t seqs, std::size_t len, std::uint64_t seed);

// Shortest decimal text that reads back as the same double.
std::string format_double(double v);

}  // namespace swm
