#include "swm/cka.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "swm/parallel.h"

namespace swm {

Matrix gram(const ActivationMatrix& x) {
    if (x.n() < 2) throw InputError("gram: need at least 2 samples");
    return matmul_transposed(x.data, x.data);
}

Matrix center(const Matrix& k) {
    if (k.rows() != k.cols()) throw ShapeError("center: Gram matrix must be square");
    const std::size_t n = k.rows();
    if (n == 0) return k;
    std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = k(i, j);
            row_mean[i] += v;
            col_mean[j] += v;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        grand += row_mean[i];
        row_mean[i] *= inv;
    }
    for (auto& c : col_mean) c *= inv;
    grand *= inv * inv;
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = static_cast<float>(static_cast<double>(k(i, j)) - row_mean[i] -
                                           col_mean[j] + grand);
    return out;
}

double cka_centered(const Matrix& kc, const Matrix& lc) {
    if (!kc.same_shape(lc)) throw ShapeError("cka: sample counts differ");
    const double nk = frobenius_norm(kc);
    const double nl = frobenius_norm(lc);
    if (nk < 1e-10 || nl < 1e-10) throw DegenerateError("cka: constant representation");
    return frobenius_inner(kc, lc) / (nk * nl);
}

double cka(const ActivationMatrix& x, const ActivationMatrix& y) {
    if (x.n() != y.n()) {
        throw ShapeError("cka: sample counts differ (" + std::to_string(x.n()) + " vs " +
                         std::to_string(y.n()) + ")");
    }
    return cka_centered(center(gram(x)), center(gram(y)));
}

std::vector<ActivationMatrix> collect_layer_activations(const Model& model, const CalibSet& calib,
                                                        std::size_t token_cap,
                                                        std::size_t workers) {
    if (calib.sequences.empty()) throw InputError("layer CKA: empty calibration set");
    if (token_cap < 2) throw ConfigError("layer CKA: token cap must be >= 2");
    const std::size_t total = calib.total_tokens();
    if (total < 2) throw InputError("layer CKA: need at least 2 calibration tokens");

    std::vector<HiddenTrace> traces(calib.sequences.size());
    parallel_for(calib.sequences.size(), workers,
                 [&](std::size_t i) { traces[i] = forward(model, calib.sequences[i]); });

    // Flat (sequence, position) index for each kept row.
    const std::size_t keep = std::min(token_cap, total);
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    picks.reserve(keep);
    {
        std::vector<std::pair<std::size_t, std::size_t>> all;
        all.reserve(total);
        for (std::size_t s = 0; s < calib.sequences.size(); ++s)
            for (std::size_t p = 0; p < calib.sequences[s].size(); ++p) all.emplace_back(s, p);
        for (std::size_t i = 0; i < keep; ++i) picks.push_back(all[i * total / keep]);
    }

    const std::size_t boundaries = model.layers.size() + 1;
    std::vector<ActivationMatrix> acts(boundaries);
    for (std::size_t l = 0; l < boundaries; ++l) {
        acts[l].source_layer = l;
        acts[l].data = Matrix(keep, model.config.d_model);
        for (std::size_t r = 0; r < keep; ++r) {
            const auto src = traces[picks[r].first].per_layer[l].row(picks[r].second);
            std::copy(src.begin(), src.end(), acts[l].data.row(r).begin());
        }
    }
    return acts;
}

CkaMatrix layer_cka_matrix(const Model& model, const CalibSet& calib, std::size_t token_cap,
                           std::size_t workers) {
    const auto acts = collect_layer_activations(model, calib, token_cap, workers);
    const std::size_t dim = acts.size();
    std::vector<Matrix> centered(dim);
    parallel_for(dim, workers, [&](std::size_t l) { centered[l] = center(gram(acts[l])); });

    std::vector<double> norms(dim);
    for (std::size_t l = 0; l < dim; ++l) norms[l] = frobenius_norm(centered[l]);

    CkaMatrix out;
    out.values = Matrix(dim, dim);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) pairs.emplace_back(i, j);
    std::vector<double> vals(pairs.size(), 0.0);
    std::vector<char> degenerate(pairs.size(), 0);
    parallel_for(pairs.size(), workers, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        if (norms[i] < 1e-10 || norms[j] < 1e-10) {
            degenerate[p] = 1;
            return;
        }
        vals[p] = frobenius_inner(centered[i], centered[j]) / (norms[i] * norms[j]);
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        out.values(i, j) = out.values(j, i) = static_cast<float>(vals[p]);
        if (degenerate[p]) out.degenerate_pairs.push_back(pairs[p]);
    }
    return out;
}

std::string heatmap_csv(const CkaMatrix& m) {
    std::string out = "layer";
    for (std::size_t j = 0; j < m.dim(); ++j) out += "," + std::to_string(j);
    out += "\n";
    char buf[32];
    for (std::size_t i = 0; i < m.dim(); ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < m.dim(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.6f", static_cast<double>(m.values(i, j)));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string heatmap_pgm(const CkaMatrix& m) {
    const std::size_t dim = m.dim();
    std::string out = "P5\n" + std::to_string(dim) + " " + std::to_string(dim) + "\n255\n";
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = std::clamp(static_cast<double>(m.values(i, j)), 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    return out;
}

void export_heatmap(const CkaMatrix& m, const std::string& path, HeatmapFormat format) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    const std::string body = format == HeatmapFormat::Csv ? heatmap_csv(m) : heatmap_pgm(m);
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw IoError("failed writing '" + path + "'");
}

Matrix parse_heatmap_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw InputError("heatmap csv: missing header");
    std::vector<std::vector<float>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');  // row label
        std::vector<float> r;
        while (std::getline(ls, cell, ',')) r.push_back(std::stof(cell));
        rows.push_back(std::move(r));
    }
    return Matrix::from_rows(rows);
}

}  // namespace swm
