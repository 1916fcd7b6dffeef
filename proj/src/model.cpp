#include "swm/model.h"

#include <cmath>

namespace swm {

namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads,
                        std::size_t head_dim) {
    const std::size_t seq = q.rows();
    Matrix out(seq, heads * head_dim);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<double> scores(seq);
    std::vector<double> acc(head_dim);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * head_dim;
        for (std::size_t i = 0; i < seq; ++i) {
            const float* qi = q.row(i).data() + off;
            double mx = -INFINITY;
            for (std::size_t j = 0; j <= i; ++j) {
                const float* kj = k.row(j).data() + off;
                double dot = 0.0;
                for (std::size_t c = 0; c < head_dim; ++c)
                    dot += static_cast<double>(qi[c]) * static_cast<double>(kj[c]);
                scores[j] = dot * inv_sqrt;
                mx = std::max(mx, scores[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                sum += scores[j];
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t j = 0; j <= i; ++j) {
                const double p = scores[j] / sum;
                const float* vj = v.row(j).data() + off;
                for (std::size_t c = 0; c < head_dim; ++c) acc[c] += p * static_cast<double>(vj[c]);
            }
            float* oi = out.row(i).data() + off;
            for (std::size_t c = 0; c < head_dim; ++c) oi[c] = static_cast<float>(acc[c]);
        }
    }
    return out;
}

Matrix attention_branch(const ModelConfig& config, const LayerParams& layer, const Matrix& x) {
    const Matrix h = rmsnorm_rows(x, layer.attn_norm.flat(), config.norm_eps);
    const std::size_t head_dim = config.resolved_head_dim();
    const Matrix ctx = causal_attention(matmul(h, layer.wq), matmul(h, layer.wk),
                                        matmul(h, layer.wv), layer.heads(head_dim), head_dim);
    return matmul(ctx, layer.wo);
}

Matrix ffn_branch(const ModelConfig& config, const LayerParams& layer, const Matrix& x) {
    const Matrix h = rmsnorm_rows(x, layer.ffn_norm.flat(), config.norm_eps);
    Matrix gate = matmul(h, layer.w_gate);
    const Matrix up = matmul(h, layer.w_up);
    auto g = gate.flat();
    const auto u = up.flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = silu(g[i]) * u[i];
    return matmul(gate, layer.w_down);
}

Matrix embed(const Model& model, const TokenSeq& tokens) {
    const auto& cfg = model.config;
    if (tokens.empty()) throw InputError("forward: empty token sequence");
    if (tokens.size() > cfg.max_seq) {
        throw InputError("forward: sequence length " + std::to_string(tokens.size()) +
                         " exceeds max_seq " + std::to_string(cfg.max_seq));
    }
    Matrix x(tokens.size(), cfg.d_model);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] >= cfg.vocab_size) {
            throw InputError("forward: token id " + std::to_string(tokens[t]) +
                             " out of range for vocab " + std::to_string(cfg.vocab_size));
        }
        const auto te = model.tok_embed.row(tokens[t]);
        const auto pe = model.pos_embed.row(t);
        auto xr = x.row(t);
        for (std::size_t c = 0; c < cfg.d_model; ++c) xr[c] = te[c] + pe[c];
    }
    return x;
}

void apply_block(const ModelConfig& config, const LayerParams& layer, Matrix& x) {
    add_scaled_inplace(x, attention_branch(config, layer, x), layer.residual_scale);
    add_scaled_inplace(x, ffn_branch(config, layer, x), layer.residual_scale);
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || n_layers == 0 ||
        max_seq == 0) {
        throw ConfigError("model config: all counts must be >= 1");
    }
    if (head_dim == 0 && d_model % n_heads != 0) {
        throw ConfigError("model config: n_heads must divide d_model");
    }
    if (!(norm_eps > 0.0)) throw ConfigError("model config: norm_eps must be positive");
}

void LayerParams::for_each_tensor(const std::function<void(const char*, Matrix&)>& fn) {
    fn("wq", wq);
    fn("wk", wk);
    fn("wv", wv);
    fn("wo", wo);
    fn("w_gate", w_gate);
    fn("w_up", w_up);
    fn("w_down", w_down);
    fn("attn_norm", attn_norm);
    fn("ffn_norm", ffn_norm);
}

void LayerParams::for_each_tensor(
    const std::function<void(const char*, const Matrix&)>& fn) const {
    const_cast<LayerParams*>(this)->for_each_tensor(
        [&](const char* name, Matrix& m) { fn(name, m); });
}

void Model::validate() const {
    config.validate();
    const std::size_t d = config.d_model;
    const std::size_t hd = config.resolved_head_dim();
    expect_shape(tok_embed, config.vocab_size, d, "tok_embed");
    expect_shape(pos_embed, config.max_seq, d, "pos_embed");
    expect_shape(final_norm, 1, d, "final_norm");
    expect_shape(lm_head, d, config.vocab_size, "lm_head");
    if (layers.empty()) throw ConfigError("model has no layers");
    if (layers.size() != config.n_layers) {
        throw ConfigError("model config n_layers " + std::to_string(config.n_layers) +
                          " does not match " + std::to_string(layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = "layer " + std::to_string(i) + ".";
        if (l.wq.cols() == 0 || l.wq.cols() % hd != 0) {
            throw ShapeError(p + "wq: width is not a positive multiple of head_dim");
        }
        const std::size_t attn = l.wq.cols();
        const std::size_t ff = l.w_gate.cols();
        if (ff == 0) throw ShapeError(p + "w_gate: zero FFN width");
        expect_shape(l.wq, d, attn, p + "wq");
        expect_shape(l.wk, d, attn, p + "wk");
        expect_shape(l.wv, d, attn, p + "wv");
        expect_shape(l.wo, attn, d, p + "wo");
        expect_shape(l.w_gate, d, ff, p + "w_gate");
        expect_shape(l.w_up, d, ff, p + "w_up");
        expect_shape(l.w_down, ff, d, p + "w_down");
        expect_shape(l.attn_norm, 1, d, p + "attn_norm");
        expect_shape(l.ffn_norm, 1, d, p + "ffn_norm");
        if (!(l.residual_scale > 0.0f && l.residual_scale <= 1.0f)) {
            throw ConfigError(p + "residual_scale must lie in (0, 1]");
        }
        if (i > 0 && layers[i - 1].original_index >= l.original_index) {
            throw ConfigError("layer original_index labels must be strictly increasing");
        }
    }
}

std::size_t CalibSet::total_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

void CalibSet::validate(const ModelConfig& config) const {
    if (sequences.empty()) throw InputError("calibration set is empty");
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const auto& s = sequences[i];
        if (s.size() < 2) {
            throw InputError("calibration sequence " + std::to_string(i) + " shorter than 2 tokens");
        }
        if (s.size() > config.max_seq) {
            throw InputError("calibration sequence " + std::to_string(i) + " exceeds max_seq");
        }
        for (TokenId t : s) {
            if (t >= config.vocab_size) {
                throw InputError("calibration sequence " + std::to_string(i) +
                                 " has out-of-range token " + std::to_string(t));
            }
        }
    }
}

BlockBranches block_branches(const ModelConfig& config, const LayerParams& layer, const Matrix& x) {
    BlockBranches out;
    out.attention = attention_branch(config, layer, x);
    Matrix mid = x;
    add_scaled_inplace(mid, out.attention, layer.residual_scale);
    out.ffn = ffn_branch(config, layer, mid);
    return out;
}

HiddenTrace forward(const Model& model, const TokenSeq& tokens) {
    HiddenTrace trace;
    Matrix x = embed(model, tokens);
    trace.per_layer.reserve(model.layers.size() + 1);
    trace.per_layer.push_back(x);
    for (const auto& layer : model.layers) {
        apply_block(model.config, layer, x);
        trace.per_layer.push_back(x);
    }
    trace.logits =
        matmul(rmsnorm_rows(x, model.final_norm.flat(), model.config.norm_eps), model.lm_head);
    return trace;
}

Matrix forward_logits(const Model& model, const TokenSeq& tokens) {
    return matmul(last_hidden(model, tokens), model.lm_head);
}

Matrix last_hidden(const Model& model, const TokenSeq& tokens) {
    Matrix x = embed(model, tokens);
    for (const auto& layer : model.layers) apply_block(model.config, layer, x);
    return rmsnorm_rows(x, model.final_norm.flat(), model.config.norm_eps);
}

std::size_t layer_param_count(const LayerParams& layer) {
    std::size_t n = 0;
    layer.for_each_tensor([&](const char*, const Matrix& m) { n += m.size(); });
    return n;
}

std::size_t param_count(const Model& model) {
    std::size_t n = model.tok_embed.size() + model.pos_embed.size() + model.final_norm.size() +
                    model.lm_head.size();
    for (const auto& l : model.layers) n += layer_param_count(l);
    return n;
}

std::size_t layer_count(const Model& model) { return model.layers.size(); }

}  // namespace swm
