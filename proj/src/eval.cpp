#include "swm/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"
#include "swm/parallel.h"
#include "swm/rng.h"

namespace swm {

double perplexity(const Model& model, const CalibSet& corpus, std::size_t workers) {
    if (corpus.sequences.empty()) throw InputError("perplexity: empty corpus");
    for (const auto& s : corpus.sequences)
        if (s.size() < 2) throw InputError("perplexity: sequences need at least 2 tokens");

    std::vector<double> nll(corpus.sequences.size(), 0.0);
    parallel_for(corpus.sequences.size(), workers, [&](std::size_t i) {
        const auto& seq = corpus.sequences[i];
        const Matrix logits = forward_logits(model, seq);
        double total = 0.0;
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
            const auto row = logits.row(t);
            const double mx = *std::max_element(row.begin(), row.end());
            double sum = 0.0;
            for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
            total += mx + std::log(sum) - static_cast<double>(row[seq[t + 1]]);
        }
        nll[i] = total;
    });
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < nll.size(); ++i) {
        total += nll[i];
        count += corpus.sequences[i].size() - 1;
    }
    return std::exp(total / static_cast<double>(count));
}

std::string BenchResult::to_json() const {
    nlohmann::json j{{"M", batch},
                     {"gen_len", gen_len},
                     {"runs", runs},
                     {"warmup", warmup},
                     {"latency_s", latency_seconds},
                     {"tokens_per_s", throughput_tokens_per_second}};
    return j.dump() + "\n";
}

BenchResult make_bench_result(const BenchConfig& cfg, double mean_latency_seconds) {
    BenchResult r;
    r.batch = cfg.batch;
    r.gen_len = cfg.gen_len;
    r.runs = cfg.runs;
    r.warmup = cfg.warmup;
    r.latency_seconds = mean_latency_seconds;
    r.throughput_tokens_per_second =
        static_cast<double>(cfg.batch * cfg.gen_len) / mean_latency_seconds;
    return r;
}

BenchResult latency_bench(const Model& model, const BenchConfig& cfg) {
    if (cfg.runs < 1) throw ConfigError("bench: runs must be >= 1");
    if (cfg.batch < 1 || cfg.gen_len < 1 || cfg.prompt_len < 1) {
        throw ConfigError("bench: batch, prompt and generation lengths must be >= 1");
    }
    if (cfg.prompt_len + cfg.gen_len > model.config.max_seq) {
        throw InputError("bench: prompt + generation (" +
                         std::to_string(cfg.prompt_len + cfg.gen_len) + ") exceeds max_seq " +
                         std::to_string(model.config.max_seq));
    }
    const CalibSet prompts =
        random_calib(model.config.vocab_size, cfg.batch, cfg.prompt_len, cfg.seed);

    std::size_t sink = 0;
    auto one_run = [&] {
        for (const auto& prompt : prompts.sequences) {
            TokenSeq tokens = prompt;
            tokens.reserve(cfg.prompt_len + cfg.gen_len);
            for (std::size_t g = 0; g < cfg.gen_len; ++g) {
                const Matrix logits = forward_logits(model, tokens);
                const auto last = logits.row(logits.rows() - 1);
                const auto best = std::max_element(last.begin(), last.end()) - last.begin();
                tokens.push_back(static_cast<TokenId>(best));
            }
            sink += tokens.back();
        }
    };

    for (std::size_t w = 0; w < cfg.warmup; ++w) one_run();
    double total = 0.0;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const auto start = std::chrono::steady_clock::now();
        one_run();
        const auto stop = std::chrono::steady_clock::now();
        total += std::chrono::duration<double>(stop - start).count();
    }
    // Keeps the generation loop observable.
    if (sink == static_cast<std::size_t>(-1)) std::fputs("", stderr);
    return make_bench_result(cfg, total / static_cast<double>(cfg.runs));
}

std::vector<SweepRow> threshold_sweep(const Model& model, const CalibSet& calib,
                                      const std::vector<double>& thresholds,
                                      const std::vector<MergeStrategy>& strategies,
                                      const SwmConfig& cfg_template, const CalibSet& corpus) {
    if (thresholds.empty()) throw ConfigError("sweep: no thresholds given");
    if (strategies.empty()) throw ConfigError("sweep: no strategies given");

    std::vector<SweepRow> rows;
    for (auto strategy : strategies) {
        for (double t : thresholds) {
            SwmConfig cfg = cfg_template;
            cfg.threshold = t;
            cfg.strategy = strategy;
            const SwmResult r = run_swm(model, cfg, calib);
            SweepRow row;
            row.strategy = strategy;
            row.threshold = t;
            row.layer_count = r.model.layers.size();
            row.cal_sim = cal_sim(model, r.model, calib, cfg.pooling, cfg.workers);
            row.perplexity = perplexity(r.model, corpus, cfg.workers);
            row.plan = r.plan;
            rows.push_back(std::move(row));
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        const auto sa = to_string(a.strategy), sb = to_string(b.strategy);
        if (sa != sb) return sa < sb;
        return a.threshold > b.threshold;
    });
    return rows;
}

std::string format_double(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "strategy,threshold,layer_count,cal_sim,perplexity\n";
    char buf[64];
    for (const auto& r : rows) {
        out += to_string(r.strategy) + "," + format_double(r.threshold) + "," +
               std::to_string(r.layer_count);
        std::snprintf(buf, sizeof buf, ",%.8f,%.6f\n", r.cal_sim, r.perplexity);
        out += buf;
    }
    return out;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::string out;
    std::string current;
    for (const auto& r : rows) {
        const auto name = to_string(r.strategy);
        if (name != current) {
            if (!current.empty()) out += "\n";
            current = name;
            out += "# " + name + "\nThreshold | Num of layers | Merged Layers\n";
        }
        out += format_double(r.threshold) + " | " + std::to_string(r.layer_count) + " | " +
               format_groups(r.plan) + "\n";
    }
    return out;
}

double plan_agreement(const MergePlan& a, const MergePlan& b) {
    const std::set<std::vector<std::uint32_t>> sa(a.groups.begin(), a.groups.end());
    const std::set<std::vector<std::uint32_t>> sb(b.groups.begin(), b.groups.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t common = 0;
    for (const auto& g : sa) common += sb.count(g);
    const std::size_t uni = sa.size() + sb.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

double calib_robustness(const Model& model, const SwmConfig& cfg,
                        const std::vector<CalibSet>& calib_sets) {
    if (calib_sets.size() < 2) throw ConfigError("calibration robustness needs >= 2 sets");
    std::vector<MergePlan> plans;
    plans.reserve(calib_sets.size());
    for (const auto& c : calib_sets) plans.push_back(run_swm(model, cfg, c).plan);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < plans.size(); ++i)
        for (std::size_t j = i + 1; j < plans.size(); ++j) {
            sum += plan_agreement(plans[i], plans[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

CalibSet random_calib(std::size_t vocab, std::size_t seqs, std::size_t len, std::uint64_t seed) {
    if (vocab == 0 || seqs == 0 || len == 0) {
        throw ConfigError("calibration generator needs vocab, seqs and len >= 1");
    }
    const Rng root = Rng(seed).split("calib");
    CalibSet c;
    c.sequences.resize(seqs);
    for (std::size_t s = 0; s < seqs; ++s) {
        Rng r = root.split(s);
        c.sequences[s].resize(len);
        for (auto& t : c.sequences[s]) t = static_cast<TokenId>(r.below(vocab));
    }
    return c;
}

}  // namespace swm
