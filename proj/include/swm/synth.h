#pragma once

#include <cstdint>
#include <vector>

#include "swm/model.h"

namespace swm {

// A block of `length` consecutive layers starting at `start` whose
// parameters are copies of the first layer plus epsilon * N(0, 1) noise.
struct Patch {
    std::size_t start = 0;
    std::size_t length = 2;
    double epsilon = 0.0;
};

// Deterministic random model with injected redundant patches.
//
// Layers outside any patch are drawn independently with output projections
// (wo, w_down) scaled by SynthGains::free_branch. The first layer of a patch
// uses the much smaller patch_branch gain, so the patch refines the residual
// stream instead of rewriting it. Every layer uses `base_residual_scale`.
Model synth_redundant(const ModelConfig& config, const std::vector<Patch>& patches,
                      double base_residual_scale, std::uint64_t seed);

// Output-projection gains (wo, w_down) of independent layers and of patch
// layers.
struct SynthGains {
    double free_branch = 16.0;
    double patch_branch = 0.5;
};

Model synth_redundant(const ModelConfig& config, const std::vector<Patch>& patches,
                      double base_residual_scale, std::uint64_t seed, const SynthGains& gains);

// Parses "start:len:eps[,start:len:eps...]". Empty string gives no patches.
std::vector<Patch> parse_patches(const std::string& text);

}  // namespace swm
