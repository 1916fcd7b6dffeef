#include "swm/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace swm {

namespace {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::row_slice(std::size_t begin, std::size_t count) const {
    if (begin + count > rows_) throw ShapeError("row_slice out of range");
    std::vector<float> data(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_));
    return Matrix(count, cols_, std::move(data));
}

Matrix Matrix::select_cols(std::span<const std::size_t> cols) const {
    Matrix out(rows_, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] >= cols_) throw ShapeError("select_cols: column out of range");
    }
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = (*this)(r, cols[c]);
    return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> rows) const {
    Matrix out(rows.size(), cols_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= rows_) throw ShapeError("select_rows: row out of range");
        std::copy_n(row(rows[r]).begin(), cols_, out.row(r).begin());
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a) + " * " + shape_str(b));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix out(m, n);
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const auto arow = a.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        auto orow = out.row(i);
        for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: inner dimensions differ " + shape_str(a) + " * " +
                         shape_str(b) + "^T");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix out(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a.row(i).data();
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b.row(j).data();
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
            out(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_inner");
    const auto x = a.flat();
    const auto y = b.flat();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return acc;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (float v : a.flat()) acc += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(acc);
}

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine: length mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    }
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i], b = v[i];
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    if (nu < 1e-12 || nv < 1e-12) throw DegenerateError("cosine: zero-norm vector");
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

Matrix softmax_rows(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto in = a.row(r);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        std::vector<double> e(in.size());
        for (std::size_t c = 0; c < in.size(); ++c) {
            e[c] = std::exp(static_cast<double>(in[c]) - mx);
            sum += e[c];
        }
        auto o = out.row(r);
        for (std::size_t c = 0; c < in.size(); ++c) o[c] = static_cast<float>(e[c] / sum);
    }
    return out;
}

std::vector<float> rmsnorm(std::span<const float> x, std::span<const float> gamma, double eps) {
    if (x.size() != gamma.size()) throw ShapeError("rmsnorm: gamma length mismatch");
    if (!(eps > 0.0)) throw ConfigError("rmsnorm: eps must be positive");
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * static_cast<double>(v);
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(x[i]) * inv * static_cast<double>(gamma[i]));
    return out;
}

Matrix rmsnorm_rows(const Matrix& x, std::span<const float> gamma, double eps) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto n = rmsnorm(x.row(r), gamma, eps);
        std::copy(n.begin(), n.end(), out.row(r).begin());
    }
    return out;
}

float silu(float x) {
    const double v = x;
    return static_cast<float>(v / (1.0 + std::exp(-v)));
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    auto o = out.flat();
    const auto y = b.flat();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
    return out;
}

Matrix scale(const Matrix& a, float factor) {
    Matrix out = a;
    for (float& v : out.flat()) v *= factor;
    return out;
}

void add_scaled_inplace(Matrix& a, const Matrix& b, float factor) {
    require_same_shape(a, b, "add_scaled_inplace");
    auto o = a.flat();
    const auto y = b.flat();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += factor * y[i];
}

}  // namespace swm
