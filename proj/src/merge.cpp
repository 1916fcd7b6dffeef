#include "swm/merge.h"

namespace swm {

std::string to_string(MergeStrategy s) {
    switch (s) {
        case MergeStrategy::Delete: return "delete";
        case MergeStrategy::Average: return "average";
        case MergeStrategy::Diff: return "diff";
    }
    return "unknown";
}

MergeStrategy parse_strategy(const std::string& text) {
    if (text == "delete") return MergeStrategy::Delete;
    if (text == "average") return MergeStrategy::Average;
    if (text == "diff") return MergeStrategy::Diff;
    throw ConfigError("unknown merge strategy '" + text + "'");
}

LayerParams merge_params(const std::vector<const LayerParams*>& window_params,
                         MergeStrategy strategy) {
    if (window_params.size() < 2) throw ConfigError("merge: window needs at least 2 layers");
    const LayerParams& base = *window_params.front();

    // Gather every block's tensors in canonical order and check shapes.
    std::vector<std::vector<const Matrix*>> tensors(window_params.size());
    for (std::size_t k = 0; k < window_params.size(); ++k) {
        window_params[k]->for_each_tensor(
            [&](const char*, const Matrix& m) { tensors[k].push_back(&m); });
    }
    for (std::size_t k = 1; k < tensors.size(); ++k) {
        for (std::size_t t = 0; t < tensors[0].size(); ++t) {
            if (!tensors[k][t]->same_shape(*tensors[0][t])) {
                throw ShapeError("merge: layer " +
                                 std::to_string(window_params[k]->original_index) +
                                 " has a different shape from the base layer");
            }
        }
    }

    LayerParams out = base;
    if (strategy == MergeStrategy::Delete) return out;

    const double count = static_cast<double>(window_params.size());
    std::size_t t = 0;
    out.for_each_tensor([&](const char*, Matrix& dst) {
        auto o = dst.flat();
        const auto b = tensors[0][t]->flat();
        for (std::size_t e = 0; e < o.size(); ++e) {
            const double bv = b[e];
            double acc = bv;
            if (strategy == MergeStrategy::Diff) {
                for (std::size_t k = 1; k < tensors.size(); ++k)
                    acc += static_cast<double>(tensors[k][t]->flat()[e]) - bv;
            } else {
                for (std::size_t k = 1; k < tensors.size(); ++k)
                    acc += static_cast<double>(tensors[k][t]->flat()[e]);
                acc /= count;
            }
            o[e] = static_cast<float>(acc);
        }
        ++t;
    });
    return out;
}

LayerParams merge_params(const std::vector<LayerParams>& window_params, MergeStrategy strategy) {
    std::vector<const LayerParams*> ptrs;
    ptrs.reserve(window_params.size());
    for (const auto& l : window_params) ptrs.push_back(&l);
    return merge_params(ptrs, strategy);
}

Model apply_merge(const Model& model, MergeWindow window, MergeStrategy strategy) {
    if (window.lo >= window.hi || window.hi >= model.layers.size()) {
        throw ConfigError("invalid merge window [" + std::to_string(window.lo) + ", " +
                          std::to_string(window.hi) + "] for " +
                          std::to_string(model.layers.size()) + " layers");
    }
    std::vector<const LayerParams*> span;
    for (std::size_t p = window.lo; p <= window.hi; ++p) span.push_back(&model.layers[p]);

    Model out;
    out.config = model.config;
    out.tok_embed = model.tok_embed;
    out.pos_embed = model.pos_embed;
    out.final_norm = model.final_norm;
    out.lm_head = model.lm_head;
    out.layers.reserve(model.layers.size() - (window.hi - window.lo));
    for (std::size_t p = 0; p < window.lo; ++p) out.layers.push_back(model.layers[p]);
    out.layers.push_back(merge_params(span, strategy));
    for (std::size_t p = window.hi + 1; p < model.layers.size(); ++p)
        out.layers.push_back(model.layers[p]);
    out.config.n_layers = out.layers.size();
    return out;
}

std::optional<std::size_t> position_of(const Model& model, std::uint32_t original_index) {
    for (std::size_t p = 0; p < model.layers.size(); ++p)
        if (model.layers[p].original_index == original_index) return p;
    return std::nullopt;
}

MergeWindow window_for_labels(const Model& model, std::uint32_t lo_label, std::uint32_t hi_label) {
    const auto lo = position_of(model, lo_label);
    const auto hi = position_of(model, hi_label);
    if (!lo || !hi) {
        throw PlanError("layers labelled " + std::to_string(lo_label) + ".." +
                        std::to_string(hi_label) + " are not both present in the model");
    }
    if (*lo >= *hi) {
        throw PlanError("label window " + std::to_string(lo_label) + ".." +
                        std::to_string(hi_label) + " does not span two layers");
    }
    return {*lo, *hi};
}

Model apply_label_merge(const Model& model, std::uint32_t lo_label, std::uint32_t hi_label,
                        MergeStrategy strategy) {
    return apply_merge(model, window_for_labels(model, lo_label, hi_label), strategy);
}

}  // namespace swm
