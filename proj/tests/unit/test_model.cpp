#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.h"
#include "swm/model.h"

namespace swm {
namespace {

using Vec = std::vector<double>;

// Unbatched reference: one token position and one head at a time, plain loops.
struct NaiveForward {
    const Model& m;

    Vec norm(const Vec& x, const Matrix& gamma) const {
        double ss = 0;
        for (double v : x) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / double(x.size()) + m.config.norm_eps);
        Vec out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gamma(0, i);
        return out;
    }

    static Vec project(const Vec& x, const Matrix& w) {
        Vec out(w.cols(), 0.0);
        for (std::size_t j = 0; j < w.cols(); ++j)
            for (std::size_t i = 0; i < w.rows(); ++i) out[j] += x[i] * w(i, j);
        return out;
    }

    std::vector<Vec> layer(const LayerParams& p, std::vector<Vec> xs) const {
        const std::size_t hd = m.config.resolved_head_dim();
        const std::size_t heads = p.wq.cols() / hd;
        std::vector<Vec> q, k, v;
        for (const auto& x : xs) {
            const Vec h = norm(x, p.attn_norm);
            q.push_back(project(h, p.wq));
            k.push_back(project(h, p.wk));
            v.push_back(project(h, p.wv));
        }
        std::vector<Vec> attn(xs.size());
        for (std::size_t t = 0; t < xs.size(); ++t) {
            Vec ctx(heads * hd, 0.0);
            for (std::size_t head = 0; head < heads; ++head) {
                Vec w(t + 1);
                double mx = -1e300;
                for (std::size_t s = 0; s <= t; ++s) {
                    double dot = 0;
                    for (std::size_t c = 0; c < hd; ++c) dot += q[t][head * hd + c] * k[s][head * hd + c];
                    w[s] = dot / std::sqrt(double(hd));
                    mx = std::max(mx, w[s]);
                }
                double z = 0;
                for (auto& e : w) z += (e = std::exp(e - mx));
                for (std::size_t s = 0; s <= t; ++s)
                    for (std::size_t c = 0; c < hd; ++c) ctx[head * hd + c] += w[s] / z * v[s][head * hd + c];
            }
            attn[t] = project(ctx, p.wo);
        }
        for (std::size_t t = 0; t < xs.size(); ++t)
            for (std::size_t i = 0; i < xs[t].size(); ++i) xs[t][i] += p.residual_scale * attn[t][i];
        for (auto& x : xs) {
            const Vec h = norm(x, p.ffn_norm);
            const Vec g = project(h, p.w_gate);
            const Vec u = project(h, p.w_up);
            Vec a(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) a[i] = g[i] / (1.0 + std::exp(-g[i])) * u[i];
            const Vec f = project(a, p.w_down);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += p.residual_scale * f[i];
        }
        return xs;
    }

    std::vector<Vec> stream_after(const TokenSeq& tokens, std::size_t n_layers) const {
        std::vector<Vec> xs;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            Vec x(m.config.d_model);
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] = double(m.tok_embed(tokens[t], i)) + m.pos_embed(t, i);
            xs.push_back(x);
        }
        for (std::size_t l = 0; l < n_layers; ++l) xs = layer(m.layers[l], xs);
        return xs;
    }
};

Model six_layer_fixture() {
    return synth_redundant(testing::fixture_config(6), {}, 0.5, 42);
}

TEST(Forward, MatchesNaivePerHeadReference) {
    const Model m = six_layer_fixture();
    const TokenSeq tokens{5, 17, 3, 60, 0, 22, 41, 9};
    const HiddenTrace trace = forward(m, tokens);
    ASSERT_EQ(trace.per_layer.size(), 7u);
    const auto want = NaiveForward{m}.stream_after(tokens, 3);
    for (std::size_t t = 0; t < tokens.size(); ++t)
        for (std::size_t i = 0; i < m.config.d_model; ++i)
            EXPECT_NEAR(trace.per_layer[3](t, i), want[t][i], 1e-5);
}

TEST(Forward, IsCausal) {
    const Model m = six_layer_fixture();
    const TokenSeq a{1, 2, 3, 4, 5};
    const TokenSeq b{1, 2, 3, 40, 50};
    const Matrix ha = last_hidden(m, a);
    const Matrix hb = last_hidden(m, b);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < m.config.d_model; ++i) EXPECT_EQ(ha(t, i), hb(t, i));
}

TEST(Forward, ResidualStepEqualsScaledBranches) {
    const Model m = synth_redundant(testing::fixture_config(), {{3, 4, 1e-3}}, 0.1, 42);
    const TokenSeq tokens{7, 8, 9, 10, 11, 12};
    const HiddenTrace trace = forward(m, tokens);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& x = trace.per_layer[l];
        const auto br = block_branches(m.config, m.layers[l], x);
        const float s = m.layers[l].residual_scale;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double step = double(trace.per_layer[l + 1].flat()[i]) - x.flat()[i];
            const double want = s * (double(br.attention.flat()[i]) + br.ffn.flat()[i]);
            EXPECT_NEAR(step, want, 1e-5) << "layer " << l;
        }
    }
}

TEST(Forward, ZeroBranchesLeaveStreamUntouched) {
    Model m = six_layer_fixture();
    for (auto& layer : m.layers) {
        layer.wo = Matrix(layer.wo.rows(), layer.wo.cols());
        layer.w_down = Matrix(layer.w_down.rows(), layer.w_down.cols());
    }
    const HiddenTrace trace = forward(m, {3, 1, 4, 1, 5});
    EXPECT_EQ(trace.per_layer.back(), trace.per_layer.front());
}

TEST(Forward, LogitsAndLastHiddenAgree) {
    const Model m = six_layer_fixture();
    const TokenSeq tokens{9, 9, 2};
    const HiddenTrace trace = forward(m, tokens);
    EXPECT_EQ(forward_logits(m, tokens), trace.logits);
    EXPECT_EQ(matmul(last_hidden(m, tokens), m.lm_head), trace.logits);
    EXPECT_TRUE(trace.logits.all_finite());
}

TEST(Forward, RejectsBadInput) {
    const Model m = six_layer_fixture();
    EXPECT_THROW(forward(m, {}), InputError);
    EXPECT_THROW(forward(m, {64}), InputError);
    EXPECT_THROW(forward(m, TokenSeq(65, 1)), InputError);
}

TEST(ModelConfig, Validation) {
    ModelConfig c = testing::fixture_config();
    EXPECT_NO_THROW(c.validate());
    c.n_heads = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = testing::fixture_config();
    c.d_ff = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Model, ValidateCatchesShapeAndLabelProblems) {
    Model m = six_layer_fixture();
    EXPECT_NO_THROW(m.validate());
    Model bad = m;
    bad.layers[2].wq = Matrix(3, 3);
    EXPECT_THROW(bad.validate(), ShapeError);
    bad = m;
    std::swap(bad.layers[1].original_index, bad.layers[2].original_index);
    EXPECT_THROW(bad.validate(), Error);
}

TEST(ParamCount, MatchesClosedForm) {
    const Model m = six_layer_fixture();
    const std::size_t d = 32, ff = 64, v = 64, seq = 64;
    const std::size_t per_layer = 4 * d * d + 3 * d * ff + 2 * d;
    EXPECT_EQ(layer_param_count(m.layers[0]), per_layer);
    EXPECT_EQ(param_count(m), 6 * per_layer + v * d + seq * d + d + d * v);
    EXPECT_EQ(layer_count(m), 6u);
}

TEST(CalibSet, Validation) {
    const ModelConfig c = testing::fixture_config();
    CalibSet s;
    EXPECT_THROW(s.validate(c), InputError);
    s.sequences = {{1, 2, 3}};
    EXPECT_NO_THROW(s.validate(c));
    EXPECT_EQ(s.total_tokens(), 3u);
    s.sequences.push_back({1});
    EXPECT_THROW(s.validate(c), InputError);
    s.sequences.back() = {1, 99};
    EXPECT_THROW(s.validate(c), InputError);
}

}  // namespace
}  // namespace swm
