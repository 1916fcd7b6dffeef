#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "swm/model.h"

namespace swm {

// n samples (rows) by d features taken from one layer boundary.
struct ActivationMatrix {
    Matrix data;
    std::size_t source_layer = 0;

    std::size_t n() const { return data.rows(); }
    std::size_t d() const { return data.cols(); }
};

struct CkaMatrix {
    Matrix values;  // dim x dim, dim = n_layers + 1 (row 0 is the embedding output)
    // Pairs whose centered Gram had (near-)zero norm; recorded as 0 in values.
    std::vector<std::pair<std::size_t, std::size_t>> degenerate_pairs;

    std::size_t dim() const { return values.rows(); }
    bool has_warning() const { return !degenerate_pairs.empty(); }
};

// K = X X^T.
Matrix gram(const ActivationMatrix& x);
// H K H with H = I - (1/n) 1 1^T, computed as K - row means - column means + grand mean.
Matrix center(const Matrix& k);

// Linear CKA between two activation matrices with the same sample count.
// Throws DegenerateError when either centered Gram has Frobenius norm < 1e-10.
double cka(const ActivationMatrix& x, const ActivationMatrix& y);
// CKA from already-centered Gram matrices.
double cka_centered(const Matrix& kc, const Matrix& lc);

inline constexpr std::size_t kDefaultTokenCap = 1024;

// Pools per-token hidden states over all calibration sequences (ordered by
// sequence, then position), subsamples to at most `token_cap` rows with a
// uniform stride, and returns activations for x_0 .. x_L.
std::vector<ActivationMatrix> collect_layer_activations(const Model& model, const CalibSet& calib,
                                                        std::size_t token_cap,
                                                        std::size_t workers = 1);

CkaMatrix layer_cka_matrix(const Model& model, const CalibSet& calib,
                           std::size_t token_cap = kDefaultTokenCap, std::size_t workers = 1);

enum class HeatmapFormat { Csv, Pgm };

void export_heatmap(const CkaMatrix& m, const std::string& path, HeatmapFormat format);
std::string heatmap_csv(const CkaMatrix& m);
std::string heatmap_pgm(const CkaMatrix& m);
// Parses the CSV written by heatmap_csv.
Matrix parse_heatmap_csv(const std::string& text);

}  // namespace swm
