#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.h"
#include "swm/eval.h"

namespace swm {
namespace {

using testing::fixture_calib;
using testing::patch_fixture;

// Frozen from the first verified run on the seed-42 fixture.
constexpr double kGoldenFixturePerplexity = 107.24419085949258;

double oracle_perplexity(const Model& m, const CalibSet& corpus) {
    double nll = 0;
    std::size_t n = 0;
    for (const auto& seq : corpus.sequences) {
        const Matrix logits = forward(m, seq).logits;
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
            double z = 0;
            for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(double(logits(t, v)));
            nll += -(double(logits(t, seq[t + 1])) - std::log(z));
            ++n;
        }
    }
    return std::exp(nll / double(n));
}

TEST(Perplexity, MatchesOracle) {
    const Model m = patch_fixture(1e-3, 0.1);
    const CalibSet c = fixture_calib();
    const double ppl = perplexity(m, c);
    EXPECT_NEAR(ppl, oracle_perplexity(m, c), 1e-9 * ppl);
    EXPECT_NEAR(ppl, kGoldenFixturePerplexity, 1e-6);
    EXPECT_EQ(perplexity(m, c, 4), ppl);
}

TEST(Perplexity, UniformPredictorScoresVocabSize) {
    Model m = patch_fixture(0.0, 0.1);
    m.lm_head = Matrix(m.lm_head.rows(), m.lm_head.cols());
    EXPECT_NEAR(perplexity(m, fixture_calib()), 64.0, 1e-9);
}

TEST(Perplexity, RejectsBadCorpus) {
    const Model m = patch_fixture(0.0, 0.1);
    EXPECT_THROW(perplexity(m, CalibSet{}), InputError);
    EXPECT_THROW(perplexity(m, CalibSet{{{1}}}), InputError);
}

TEST(Bench, ThroughputIdentity) {
    BenchConfig cfg;
    cfg.batch = 3;
    cfg.gen_len = 128;
    const BenchResult r = make_bench_result(cfg, 0.5);
    EXPECT_EQ(r.throughput_tokens_per_second, 3.0 * 128.0 / 0.5);

    const Model m = patch_fixture(0.0, 0.1);
    BenchConfig small;
    small.prompt_len = 4;
    small.gen_len = 8;
    small.runs = 2;
    small.warmup = 1;
    const BenchResult b = latency_bench(m, small);
    EXPECT_GT(b.latency_seconds, 0.0);
    EXPECT_EQ(b.throughput_tokens_per_second, double(small.batch * small.gen_len) / b.latency_seconds);
    EXPECT_EQ(b.to_json().substr(0, 6), "{\"M\":1");
}

TEST(Bench, RejectsOverlongRuns) {
    const Model m = patch_fixture(0.0, 0.1);
    BenchConfig cfg;  // 12 + 128 > 64
    EXPECT_THROW(latency_bench(m, cfg), InputError);
    cfg.gen_len = 4;
    cfg.runs = 0;
    EXPECT_THROW(latency_bench(m, cfg), ConfigError);
}

TEST(Sweep, RowOrderAndCsv) {
    const Model m = patch_fixture(1e-3, 0.1);
    const CalibSet c = fixture_calib();
    SwmConfig tmpl = SwmConfig::defaults_for(m);
    const auto rows = threshold_sweep(m, c, {0.8, 0.95}, {MergeStrategy::Diff, MergeStrategy::Average},
                                      tmpl, c);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].strategy, MergeStrategy::Average);
    EXPECT_EQ(rows[0].threshold, 0.95);
    EXPECT_EQ(rows[1].threshold, 0.8);
    EXPECT_EQ(rows[2].strategy, MergeStrategy::Diff);
    for (const auto& r : rows) {
        SwmConfig cfg = tmpl;
        cfg.threshold = r.threshold;
        cfg.strategy = r.strategy;
        const SwmResult direct = run_swm(m, cfg, c);
        EXPECT_EQ(r.plan, direct.plan);
        EXPECT_EQ(r.layer_count, direct.model.layers.size());
        EXPECT_EQ(r.perplexity, perplexity(direct.model, c));
    }
    const std::string csv = sweep_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,threshold,layer_count,cal_sim,perplexity");
    EXPECT_NE(csv.find("\naverage,0.95,"), std::string::npos);
    const std::string table = sweep_table(rows);
    EXPECT_NE(table.find("# diff\nThreshold | Num of layers | Merged Layers\n"), std::string::npos);
}

TEST(Sweep, CsvFormatting) {
    SweepRow r;
    r.strategy = MergeStrategy::Delete;
    r.threshold = 0.7;
    r.layer_count = 5;
    r.cal_sim = 0.123456789;
    r.perplexity = 42.5;
    EXPECT_EQ(sweep_csv({r}),
              "strategy,threshold,layer_count,cal_sim,perplexity\ndelete,0.7,5,0.12345679,42.500000\n");
}

TEST(Agreement, Jaccard) {
    MergePlan a{{{5, 6}, {2, 3}}};
    MergePlan b{{{5, 6}}};
    EXPECT_DOUBLE_EQ(plan_agreement(a, a), 1.0);
    EXPECT_DOUBLE_EQ(plan_agreement(a, b), 0.5);
    EXPECT_DOUBLE_EQ(plan_agreement(MergePlan{}, MergePlan{}), 1.0);
    EXPECT_DOUBLE_EQ(plan_agreement(b, MergePlan{}), 0.0);
    EXPECT_DOUBLE_EQ(plan_agreement(MergePlan{{{4, 5, 6}}}, b), 0.0);
}

TEST(Agreement, RobustnessNeedsTwoSets) {
    const Model m = patch_fixture(1e-3, 0.1);
    EXPECT_THROW(calib_robustness(m, SwmConfig::defaults_for(m), {fixture_calib()}), ConfigError);
}

TEST(RandomCalib, DeterministicAndInRange) {
    const CalibSet a = random_calib(64, 10, 16, 7);
    EXPECT_EQ(a.sequences, random_calib(64, 10, 16, 7).sequences);
    EXPECT_NE(a.sequences, random_calib(64, 10, 16, 8).sequences);
    ASSERT_EQ(a.sequences.size(), 10u);
    for (const auto& s : a.sequences) {
        EXPECT_EQ(s.size(), 16u);
        for (auto t : s) EXPECT_LT(t, 64u);
    }
}

TEST(FormatDouble, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.95), "0.95");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

}  // namespace
}  // namespace swm
