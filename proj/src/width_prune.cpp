#include "swm/width_prune.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace swm {

namespace {

double col_norm(const Matrix& m, std::size_t col) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double v = m(r, col);
        acc += v * v;
    }
    return std::sqrt(acc);
}

double row_norm(const Matrix& m, std::size_t row, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t c = begin; c < begin + count; ++c) {
        const double v = m(row, c);
        acc += v * v;
    }
    return std::sqrt(acc);
}

// L2 norm of a column block [c0, c0 + width) over all rows.
double col_block_norm(const Matrix& m, std::size_t c0, std::size_t width) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = c0; c < c0 + width; ++c) {
            const double v = m(r, c);
            acc += v * v;
        }
    return std::sqrt(acc);
}

double row_block_norm(const Matrix& m, std::size_t r0, std::size_t height) {
    double acc = 0.0;
    for (std::size_t r = r0; r < r0 + height; ++r) {
        const double n = row_norm(m, r, 0, m.cols());
        acc += n * n;
    }
    return std::sqrt(acc);
}

void check_ratio(double r, const char* what) {
    if (!(r > 0.0 && r <= 1.0)) {
        throw ConfigError(std::string(what) + " keep ratio must lie in (0, 1]");
    }
}

std::size_t layer_params_with(std::size_t d, std::size_t heads, std::size_t head_dim,
                              std::size_t ffn) {
    return 4 * d * heads * head_dim + 3 * d * ffn + 2 * d;
}

}  // namespace

std::size_t kept_units(double ratio, std::size_t total) {
    const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(total) - 1e-9));
    return std::clamp<std::size_t>(k, 1, total);
}

std::vector<double> head_importance(const Model& model, std::size_t layer_position) {
    if (layer_position >= model.layers.size()) throw ConfigError("head_importance: bad layer");
    const auto& l = model.layers[layer_position];
    const std::size_t hd = model.config.resolved_head_dim();
    std::vector<double> scores(l.heads(hd));
    for (std::size_t h = 0; h < scores.size(); ++h) {
        scores[h] = col_block_norm(l.wq, h * hd, hd) + col_block_norm(l.wk, h * hd, hd) +
                    col_block_norm(l.wv, h * hd, hd) + row_block_norm(l.wo, h * hd, hd);
    }
    return scores;
}

std::vector<double> ffn_importance(const Model& model, std::size_t layer_position) {
    if (layer_position >= model.layers.size()) throw ConfigError("ffn_importance: bad layer");
    const auto& l = model.layers[layer_position];
    std::vector<double> scores(l.ffn_width());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        scores[c] = col_norm(l.w_gate, c) + col_norm(l.w_up, c) +
                    row_norm(l.w_down, c, 0, l.w_down.cols());
    }
    return scores;
}

std::vector<std::size_t> top_indices(const std::vector<double>& scores, std::size_t keep) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(keep, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

Model width_prune(const Model& model, const WidthPruneConfig& cfg) {
    check_ratio(cfg.head_keep_ratio, "head");
    check_ratio(cfg.ffn_keep_ratio, "ffn");
    model.validate();
    const std::size_t hd = model.config.resolved_head_dim();

    Model out = model;
    std::size_t max_heads = 0, max_ffn = 0;
    for (std::size_t p = 0; p < out.layers.size(); ++p) {
        auto& l = out.layers[p];
        if (!cfg.protected_layers.contains(l.original_index)) {
            const auto heads = top_indices(head_importance(model, p),
                                           kept_units(cfg.head_keep_ratio, l.heads(hd)));
            std::vector<std::size_t> cols;
            for (std::size_t h : heads)
                for (std::size_t c = 0; c < hd; ++c) cols.push_back(h * hd + c);
            l.wq = l.wq.select_cols(cols);
            l.wk = l.wk.select_cols(cols);
            l.wv = l.wv.select_cols(cols);
            l.wo = l.wo.select_rows(cols);

            const auto chans = top_indices(ffn_importance(model, p),
                                           kept_units(cfg.ffn_keep_ratio, l.ffn_width()));
            l.w_gate = l.w_gate.select_cols(chans);
            l.w_up = l.w_up.select_cols(chans);
            l.w_down = l.w_down.select_rows(chans);
        }
        max_heads = std::max(max_heads, l.heads(hd));
        max_ffn = std::max(max_ffn, l.ffn_width());
    }
    out.config.head_dim = hd;
    out.config.n_heads = max_heads;
    out.config.d_ff = max_ffn;
    return out;
}

std::size_t predicted_width_params(const Model& model, const WidthPruneConfig& cfg) {
    const std::size_t d = model.config.d_model;
    const std::size_t hd = model.config.resolved_head_dim();
    std::size_t n = model.tok_embed.size() + model.pos_embed.size() + model.final_norm.size() +
                    model.lm_head.size();
    for (const auto& l : model.layers) {
        if (cfg.protected_layers.contains(l.original_index)) {
            n += layer_param_count(l);
        } else {
            n += layer_params_with(d, kept_units(cfg.head_keep_ratio, l.heads(hd)), hd,
                                   kept_units(cfg.ffn_keep_ratio, l.ffn_width()));
        }
    }
    return n;
}

std::string PipelineReport::to_json() const {
    nlohmann::json j;
    j["original_params"] = original_params;
    j["original_layers"] = original_layers;
    j["target_params"] = target_params;
    j["target_ratio"] = target_ratio;
    j["depth_share"] = depth_share;
    j["depth"] = {
        {"applied", depth_applied},
        {"layers_requested", depth_layers_requested},
        {"threshold", depth_applied ? nlohmann::json(depth_threshold) : nlohmann::json(nullptr)},
        {"groups", depth_plan.groups},
        {"layers", depth_layers},
        {"params", depth_params},
        {"removed_layer_fraction",
         1.0 - static_cast<double>(depth_layers) / static_cast<double>(original_layers)},
        {"removed_param_fraction",
         1.0 - static_cast<double>(depth_params) / static_cast<double>(original_params)},
    };
    j["width"] = {
        {"applied", width_applied},   {"head_keep_ratio", head_keep_ratio},
        {"ffn_keep_ratio", ffn_keep_ratio}, {"heads_kept", heads_kept},
        {"ffn_kept", ffn_kept},
    };
    j["final_params"] = final_params;
    j["final_layers"] = final_layers;
    j["final_reduction"] =
        1.0 - static_cast<double>(final_params) / static_cast<double>(original_params);
    return j.dump(2) + "\n";
}

PipelineResult pipeline(const Model& model, double depth_share, double target_ratio,
                        const SwmConfig& swm_template, const std::vector<double>& grid,
                        const WidthPruneConfig& width_template, const CalibSet& calib) {
    if (!(depth_share >= 0.0 && depth_share <= 1.0)) {
        throw ConfigError("depth share must lie in [0, 1]");
    }
    if (!(target_ratio > 0.0 && target_ratio < 1.0)) {
        throw ConfigError("target reduction ratio must lie in (0, 1)");
    }
    model.validate();

    PipelineResult out;
    auto& rep = out.report;
    rep.original_params = param_count(model);
    rep.original_layers = model.layers.size();
    rep.target_ratio = target_ratio;
    rep.depth_share = depth_share;
    rep.target_params = static_cast<std::size_t>(
        std::llround((1.0 - target_ratio) * static_cast<double>(rep.original_params)));

    // Depth stage: remove ceil(share * budget / per-layer params) layers.
    const double budget = static_cast<double>(rep.original_params - rep.target_params);
    const double per_layer = static_cast<double>(layer_param_count(model.layers.front()));
    rep.depth_layers_requested =
        static_cast<std::size_t>(std::ceil(depth_share * budget / per_layer - 1e-9));
    Model depth_model = model;
    if (rep.depth_layers_requested > 0) {
        if (rep.depth_layers_requested >= model.layers.size()) {
            throw InfeasibleError("depth budget would remove every layer");
        }
        auto found = find_threshold(model, calib, model.layers.size() - rep.depth_layers_requested,
                                    grid, swm_template);
        rep.depth_applied = true;
        rep.depth_threshold = found.threshold;
        rep.depth_plan = found.result.plan;
        depth_model = std::move(found.result.model);
    }
    rep.depth_layers = depth_model.layers.size();
    rep.depth_params = param_count(depth_model);

    Model final_model = depth_model;
    if (depth_share < 1.0) {
        // Uniform head / channel counts over unprotected layers; pick the pair
        // whose closed-form count lands closest to the target.
        const std::size_t hd = depth_model.config.resolved_head_dim();
        const std::size_t n_heads = depth_model.layers.front().heads(hd);
        const std::size_t n_ffn = depth_model.layers.front().ffn_width();
        WidthPruneConfig best = width_template;
        std::size_t best_params = rep.depth_params;
        auto dist = [&](std::size_t p) {
            return p > rep.target_params ? p - rep.target_params : rep.target_params - p;
        };
        for (std::size_t h = n_heads; h >= 1; --h) {
            for (std::size_t f = n_ffn; f >= 1; --f) {
                WidthPruneConfig c = width_template;
                c.head_keep_ratio = static_cast<double>(h) / static_cast<double>(n_heads);
                c.ffn_keep_ratio = static_cast<double>(f) / static_cast<double>(n_ffn);
                const std::size_t p = predicted_width_params(depth_model, c);
                if (dist(p) < dist(best_params)) {
                    best = c;
                    best_params = p;
                    rep.heads_kept = h;
                    rep.ffn_kept = f;
                }
            }
        }
        if (best_params != rep.depth_params) {
            final_model = width_prune(depth_model, best);
            rep.width_applied = true;
            rep.head_keep_ratio = best.head_keep_ratio;
            rep.ffn_keep_ratio = best.ffn_keep_ratio;
        }
        if (!rep.width_applied) {
            rep.heads_kept = n_heads;
            rep.ffn_kept = n_ffn;
        }
        const double miss = std::abs(static_cast<double>(param_count(final_model)) -
                                     static_cast<double>(rep.target_params)) /
                            static_cast<double>(rep.target_params);
        if (miss > kPipelineTolerance) {
            throw InfeasibleError("parameter budget not reachable within 2% (off by " +
                                  std::to_string(miss * 100.0) + "%)");
        }
    }
    rep.final_params = param_count(final_model);
    rep.final_layers = final_model.layers.size();
    out.model = std::move(final_model);
    return out;
}

}  // namespace swm
