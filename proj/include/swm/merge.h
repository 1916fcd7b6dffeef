#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swm/model.h"

namespace swm {

enum class MergeStrategy { Delete, Average, Diff };

std::string to_string(MergeStrategy s);
// Accepts "delete", "average", "diff" (case-sensitive).
MergeStrategy parse_strategy(const std::string& text);

// Inclusive range of layer positions in the current model.
struct MergeWindow {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

// Folds window_params (lowest original index first) into one block.
//   Delete:  the first block unchanged.
//   Average: elementwise mean of all blocks.
//   Diff:    base + sum_k (block_k - base), evaluated term by term in double.
// The result keeps the first block's original_index and residual_scale.
LayerParams merge_params(const std::vector<const LayerParams*>& window_params,
                         MergeStrategy strategy);
LayerParams merge_params(const std::vector<LayerParams>& window_params, MergeStrategy strategy);

Model apply_merge(const Model& model, MergeWindow window, MergeStrategy strategy);

// Position of the layer labelled `original_index`, if present.
std::optional<std::size_t> position_of(const Model& model, std::uint32_t original_index);

// Translates an inclusive range of original indices into the positions of
// the current layers whose labels fall in it. Both endpoints must be layer
// labels present in the model.
MergeWindow window_for_labels(const Model& model, std::uint32_t lo_label, std::uint32_t hi_label);

// Merges the layers labelled within [lo_label, hi_label].
Model apply_label_merge(const Model& model, std::uint32_t lo_label, std::uint32_t hi_label,
                        MergeStrategy strategy);

}  // namespace swm
