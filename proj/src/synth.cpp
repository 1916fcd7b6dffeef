#include "swm/synth.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "swm/rng.h"

namespace swm {

namespace {

Matrix gaussian(Rng rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (float& v : m.flat()) v = static_cast<float>(rng.normal() * stddev);
    return m;
}

Matrix sinusoidal_positions(std::size_t max_seq, std::size_t d) {
    Matrix m(max_seq, d);
    for (std::size_t p = 0; p < max_seq; ++p) {
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                      static_cast<double>(d));
            const double angle = static_cast<double>(p) * rate;
            m(p, i) = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return m;
}

LayerParams random_layer(Rng rng, const ModelConfig& cfg, double branch_gain) {
    const std::size_t d = cfg.d_model;
    const std::size_t attn = cfg.n_heads * cfg.resolved_head_dim();
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    LayerParams l;
    l.wq = gaussian(rng.split("wq"), d, attn, in_std);
    l.wk = gaussian(rng.split("wk"), d, attn, in_std);
    l.wv = gaussian(rng.split("wv"), d, attn, in_std);
    l.wo = gaussian(rng.split("wo"), attn, d, branch_gain / std::sqrt(static_cast<double>(attn)));
    l.w_gate = gaussian(rng.split("w_gate"), d, cfg.d_ff, in_std);
    l.w_up = gaussian(rng.split("w_up"), d, cfg.d_ff, in_std);
    l.w_down = gaussian(rng.split("w_down"), cfg.d_ff, d,
                        branch_gain / std::sqrt(static_cast<double>(cfg.d_ff)));
    l.attn_norm = Matrix(1, d, 1.0f);
    l.ffn_norm = Matrix(1, d, 1.0f);
    return l;
}

}  // namespace

Model synth_redundant(const ModelConfig& config, const std::vector<Patch>& patches,
                      double base_residual_scale, std::uint64_t seed) {
    return synth_redundant(config, patches, base_residual_scale, seed, SynthGains{});
}

Model synth_redundant(const ModelConfig& config, const std::vector<Patch>& patches,
                      double base_residual_scale, std::uint64_t seed, const SynthGains& gains) {
    config.validate();
    if (!(base_residual_scale > 0.0 && base_residual_scale <= 1.0)) {
        throw ConfigError("residual scale must lie in (0, 1]");
    }
    std::vector<int> owner(config.n_layers, -1);
    for (std::size_t p = 0; p < patches.size(); ++p) {
        const auto& patch = patches[p];
        if (patch.length < 2) throw ConfigError("patch length must be >= 2");
        if (!(patch.epsilon >= 0.0)) throw ConfigError("patch epsilon must be >= 0");
        if (patch.start + patch.length > config.n_layers) {
            throw ConfigError("patch starting at " + std::to_string(patch.start) +
                              " runs past layer " + std::to_string(config.n_layers - 1));
        }
        for (std::size_t l = patch.start; l < patch.start + patch.length; ++l) {
            if (owner[l] >= 0) {
                throw ConfigError("patches overlap at layer " + std::to_string(l));
            }
            owner[l] = static_cast<int>(p);
        }
    }

    const Rng root(seed);
    Model m;
    m.config = config;
    m.config.head_dim = config.resolved_head_dim();
    const std::size_t d = config.d_model;
    m.tok_embed = gaussian(root.split("tok_embed"), config.vocab_size, d, 1.0);
    m.pos_embed = sinusoidal_positions(config.max_seq, d);
    m.final_norm = Matrix(1, d, 1.0f);
    m.lm_head = gaussian(root.split("lm_head"), d, config.vocab_size,
                         1.0 / std::sqrt(static_cast<double>(d)));

    const Rng layers_rng = root.split("layers");
    m.layers.reserve(config.n_layers);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const Rng lrng = layers_rng.split(l);
        LayerParams layer;
        if (owner[l] < 0) {
            layer = random_layer(lrng, m.config, gains.free_branch);
        } else {
            const auto& patch = patches[static_cast<std::size_t>(owner[l])];
            if (l == patch.start) {
                layer = random_layer(lrng, m.config, gains.patch_branch);
            } else {
                layer = m.layers[patch.start];
                if (patch.epsilon > 0.0) {
                    const Rng noise = lrng.split("perturb");
                    std::size_t t = 0;
                    layer.for_each_tensor([&](const char*, Matrix& w) {
                        Rng r = noise.split(t++);
                        for (float& v : w.flat())
                            v = static_cast<float>(v + patch.epsilon * r.normal());
                    });
                }
            }
        }
        layer.original_index = static_cast<std::uint32_t>(l);
        layer.residual_scale = static_cast<float>(base_residual_scale);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<Patch> parse_patches(const std::string& text) {
    std::vector<Patch> out;
    std::stringstream all(text);
    std::string item;
    while (std::getline(all, item, ',')) {
        if (item.empty()) continue;
        Patch p;
        char c1 = 0, c2 = 0;
        std::istringstream is(item);
        if (!(is >> p.start >> c1 >> p.length >> c2 >> p.epsilon) || c1 != ':' || c2 != ':' ||
            !(is >> std::ws).eof()) {
            throw ConfigError("bad patch spec '" + item + "', expected start:len:eps");
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace swm
