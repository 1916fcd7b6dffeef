#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swm/tensor.h"

namespace swm {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    // Per-head width. Zero means d_model / n_heads; width pruning keeps it
    // fixed while the head count shrinks.
    std::size_t head_dim = 0;
    std::size_t d_ff = 0;
    std::size_t n_layers = 0;
    std::size_t max_seq = 0;
    double norm_eps = 1e-5;

    std::size_t resolved_head_dim() const { return head_dim != 0 ? head_dim : d_model / n_heads; }
    // Throws ConfigError when counts are zero or heads do not divide d_model.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One transformer block: the unit that layer merging operates on.
struct LayerParams {
    Matrix wq, wk, wv;  // d_model x (heads * head_dim)
    Matrix wo;          // (heads * head_dim) x d_model
    Matrix w_gate, w_up;  // d_model x d_ff
    Matrix w_down;        // d_ff x d_model
    Matrix attn_norm;     // 1 x d_model
    Matrix ffn_norm;      // 1 x d_model
    std::uint32_t original_index = 0;
    float residual_scale = 1.0f;

    std::size_t heads(std::size_t head_dim) const { return wq.cols() / head_dim; }
    std::size_t ffn_width() const { return w_gate.cols(); }

    // Visits every weight tensor in canonical order with its short name.
    void for_each_tensor(const std::function<void(const char*, Matrix&)>& fn);
    void for_each_tensor(const std::function<void(const char*, const Matrix&)>& fn) const;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct Model {
    ModelConfig config;
    Matrix tok_embed;   // vocab x d_model
    Matrix pos_embed;   // max_seq x d_model
    std::vector<LayerParams> layers;
    Matrix final_norm;  // 1 x d_model
    Matrix lm_head;     // d_model x vocab

    // Checks every tensor shape against the config and the label ordering.
    void validate() const;

    friend bool operator==(const Model&, const Model&) = default;
};

struct CalibSet {
    std::vector<TokenSeq> sequences;

    std::size_t total_tokens() const;
    // Non-empty, every sequence of length >= 2 and within the model limits.
    void validate(const ModelConfig& config) const;
};

struct HiddenTrace {
    std::vector<Matrix> per_layer;  // x_0 .. x_L, each seq x d_model
    Matrix logits;                  // seq x vocab
};

HiddenTrace forward(const Model& model, const TokenSeq& tokens);
// Logits only; skips the per-layer copies.
Matrix forward_logits(const Model& model, const TokenSeq& tokens);
// Residual stream after the final RMSNorm (what feeds the LM head).
Matrix last_hidden(const Model& model, const TokenSeq& tokens);

// Branch outputs of a single block on stream `x`, before residual scaling.
// Exposed so the residual decomposition can be checked independently.
struct BlockBranches {
    Matrix attention;
    Matrix ffn;
};
BlockBranches block_branches(const ModelConfig& config, const LayerParams& layer, const Matrix& x);

std::size_t param_count(const Model& model);
std::size_t layer_count(const Model& model);
// Weights and norm gains of one block; the residual scale is not counted.
std::size_t layer_param_count(const LayerParams& layer);

}  // namespace swm
