#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "swm/model.h"
#include "swm/swm.h"

namespace swm {

struct WidthPruneConfig {
    double head_keep_ratio = 1.0;
    double ffn_keep_ratio = 1.0;
    std::set<std::uint32_t> protected_layers;  // original ids left untouched
};

// Number of units kept for a ratio: ceil(ratio * total), at least 1.
std::size_t kept_units(double ratio, std::size_t total);

// Sum of the L2 norms of a head's wq, wk, wv column slices and its wo row slice.
std::vector<double> head_importance(const Model& model, std::size_t layer_position);
// Sum of the L2 norms of a channel's w_gate and w_up columns and its w_down row.
std::vector<double> ffn_importance(const Model& model, std::size_t layer_position);

// Indices of the `keep` highest scores, returned in ascending index order.
// Ties prefer the lower index.
std::vector<std::size_t> top_indices(const std::vector<double>& scores, std::size_t keep);

Model width_prune(const Model& model, const WidthPruneConfig& cfg);

// Closed-form parameter count after width_prune with `cfg`.
std::size_t predicted_width_params(const Model& model, const WidthPruneConfig& cfg);

struct PipelineReport {
    std::size_t original_params = 0;
    std::size_t original_layers = 0;
    std::size_t target_params = 0;
    double target_ratio = 0.0;
    double depth_share = 0.0;

    // Depth stage.
    std::size_t depth_layers_requested = 0;  // layers the depth budget asked to remove
    bool depth_applied = false;
    double depth_threshold = 0.0;
    MergePlan depth_plan;
    std::size_t depth_layers = 0;
    std::size_t depth_params = 0;

    // Width stage.
    bool width_applied = false;
    double head_keep_ratio = 1.0;
    double ffn_keep_ratio = 1.0;
    std::size_t heads_kept = 0;
    std::size_t ffn_kept = 0;

    std::size_t final_params = 0;
    std::size_t final_layers = 0;

    std::string to_json() const;
};

struct PipelineResult {
    Model model;
    PipelineReport report;
};

inline constexpr double kPipelineTolerance = 0.02;

// Depth stage (SWM threshold search sized to `depth_share` of the removal
// budget, removed-layer count rounded up), then uniform width pruning of the
// unprotected layers to land within 2% of the parameter target.
// `target_ratio` is the fraction of parameters to remove.
PipelineResult pipeline(const Model& model, double depth_share, double target_ratio,
                        const SwmConfig& swm_template, const std::vector<double>& grid,
                        const WidthPruneConfig& width_template, const CalibSet& calib);

}  // namespace swm
