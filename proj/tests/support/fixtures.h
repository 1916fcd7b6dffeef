#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "swm/eval.h"
#include "swm/merge.h"
#include "swm/model.h"
#include "swm/rng.h"
#include "swm/swm.h"
#include "swm/synth.h"

namespace swm::testing {

inline ModelConfig fixture_config(std::size_t n_layers = 8) {
    return ModelConfig{64, 32, 4, 0, 64, n_layers, 64, 1e-5};
}

// The 8-layer seed-42 model with one patch starting at layer 3 of length 4.
inline Model patch_fixture(double epsilon, double residual_scale) {
    return synth_redundant(fixture_config(), {{3, 4, epsilon}}, residual_scale, 42);
}

inline CalibSet fixture_calib(std::uint64_t seed = 7) { return random_calib(64, 10, 16, seed); }

inline Matrix random_matrix(Rng rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (float& v : m.flat()) v = static_cast<float>(rng.normal() * stddev);
    return m;
}

inline LayerParams random_layer(Rng rng, std::size_t d, std::size_t attn, std::size_t d_ff,
                                std::uint32_t label = 0) {
    LayerParams l;
    l.wq = random_matrix(rng.split(1), d, attn);
    l.wk = random_matrix(rng.split(2), d, attn);
    l.wv = random_matrix(rng.split(3), d, attn);
    l.wo = random_matrix(rng.split(4), attn, d);
    l.w_gate = random_matrix(rng.split(5), d, d_ff);
    l.w_up = random_matrix(rng.split(6), d, d_ff);
    l.w_down = random_matrix(rng.split(7), d_ff, d);
    l.attn_norm = random_matrix(rng.split(8), 1, d);
    l.ffn_norm = random_matrix(rng.split(9), 1, d);
    l.original_index = label;
    l.residual_scale = 0.5f;
    return l;
}

// Largest |a - b| / max(1, |b|) over two equally shaped matrices.
inline double max_rel_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.flat()[i];
        const double y = b.flat()[i];
        worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
    return worst;
}

inline double max_rel_diff(const LayerParams& a, const LayerParams& b) {
    std::vector<const Matrix*> xs;
    std::vector<const Matrix*> ys;
    a.for_each_tensor([&](const char*, const Matrix& m) { xs.push_back(&m); });
    b.for_each_tensor([&](const char*, const Matrix& m) { ys.push_back(&m); });
    double worst = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) worst = std::max(worst, max_rel_diff(*xs[i], *ys[i]));
    return worst;
}

// Reference sliding-window search written directly from the loop
// description: labels, explicit window merging, and a plain cosine over the
// flattened last hidden states. Shares no code with run_swm beyond forward().
struct OracleRun {
    std::vector<std::vector<std::uint32_t>> groups;
    std::size_t iterations = 0;
};

namespace detail {

inline LayerParams oracle_merge(const std::vector<LayerParams>& w, MergeStrategy s) {
    LayerParams out = w.front();
    if (s == MergeStrategy::Delete) return out;
    std::vector<std::vector<const Matrix*>> tensors(w.size());
    for (std::size_t k = 0; k < w.size(); ++k)
        w[k].for_each_tensor([&](const char*, const Matrix& m) { tensors[k].push_back(&m); });
    std::size_t t = 0;
    out.for_each_tensor([&](const char*, Matrix& m) {
        for (std::size_t e = 0; e < m.size(); ++e) {
            double acc = 0.0;
            if (s == MergeStrategy::Average) {
                for (std::size_t k = 0; k < w.size(); ++k) acc += tensors[k][t]->flat()[e];
                acc /= static_cast<double>(w.size());
            } else {
                const double base = tensors[0][t]->flat()[e];
                acc = base;
                for (std::size_t k = 1; k < w.size(); ++k) acc += tensors[k][t]->flat()[e] - base;
            }
            m.flat()[e] = static_cast<float>(acc);
        }
        ++t;
    });
    return out;
}

inline Model oracle_apply(const Model& m, std::uint32_t lo, std::uint32_t hi, MergeStrategy s) {
    Model out = m;
    out.layers.clear();
    std::vector<LayerParams> window;
    for (const auto& layer : m.layers) {
        if (layer.original_index >= lo && layer.original_index <= hi) {
            window.push_back(layer);
            if (layer.original_index == hi) out.layers.push_back(oracle_merge(window, s));
        } else {
            out.layers.push_back(layer);
        }
    }
    out.config.n_layers = out.layers.size();
    return out;
}

inline double oracle_sim(const Model& a, const Model& b, const CalibSet& calib) {
    double total = 0.0;
    for (const auto& seq : calib.sequences) {
        const Matrix x = last_hidden(a, seq);
        const Matrix y = last_hidden(b, seq);
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xy += static_cast<double>(x.flat()[i]) * y.flat()[i];
            xx += static_cast<double>(x.flat()[i]) * x.flat()[i];
            yy += static_cast<double>(y.flat()[i]) * y.flat()[i];
        }
        total += xy / std::sqrt(xx * yy);
    }
    return total / static_cast<double>(calib.sequences.size());
}

}  // namespace detail

inline OracleRun oracle_swm(const Model& original, const CalibSet& calib, double threshold,
                            std::uint32_t lo_bound, std::uint32_t hi_bound, MergeStrategy s) {
    OracleRun run;
    Model current = original;
    std::int64_t h = hi_bound;
    std::int64_t l = h - 1;
    bool pending = false;
    Model pending_model;
    std::int64_t pending_lo = 0;
    while (l >= static_cast<std::int64_t>(lo_bound)) {
        Model candidate = detail::oracle_apply(current, static_cast<std::uint32_t>(l),
                                               static_cast<std::uint32_t>(h), s);
        ++run.iterations;
        if (detail::oracle_sim(original, candidate, calib) > threshold) {
            pending = true;
            pending_model = candidate;
            pending_lo = l;
            --l;
        } else {
            if (pending) {
                current = pending_model;
                std::vector<std::uint32_t> g;
                for (std::int64_t k = pending_lo; k <= h; ++k) g.push_back(static_cast<std::uint32_t>(k));
                run.groups.push_back(g);
                pending = false;
            }
            h = l;
            l = h - 1;
        }
    }
    if (pending) {
        std::vector<std::uint32_t> g;
        for (std::int64_t k = pending_lo; k <= h; ++k) g.push_back(static_cast<std::uint32_t>(k));
        run.groups.push_back(g);
    }
    return run;
}

}  // namespace swm::testing
