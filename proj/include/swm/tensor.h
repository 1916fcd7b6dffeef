#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "swm/error.h"

namespace swm {

// Dense row-major matrix of 32-bit floats. Reductions over its elements use
// 64-bit accumulators.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    static Matrix identity(std::size_t n);
    // Builds from nested rows; every row must have the same length.
    static Matrix from_rows(const std::vector<std::vector<float>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<float> flat() noexcept { return data_; }
    std::span<const float> flat() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;

    Matrix transpose() const;
    // Copies rows [begin, begin + count).
    Matrix row_slice(std::size_t begin, std::size_t count) const;
    // Keeps the listed columns (in the order given).
    Matrix select_cols(std::span<const std::size_t> cols) const;
    // Keeps the listed rows (in the order given).
    Matrix select_rows(std::span<const std::size_t> rows) const;

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Row-major i-k-j product with a double accumulator row per output row.
// Summation order over k is ascending and fixed, so results are reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

// a * b^T without materializing the transpose. Same accumulation order rules.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

// Cosine similarity clamped to [-1, 1]. Throws DegenerateError if either
// vector has L2 norm below 1e-12.
double cosine(std::span<const float> u, std::span<const float> v);

Matrix softmax_rows(const Matrix& a);
std::vector<float> rmsnorm(std::span<const float> x, std::span<const float> gamma, double eps);
// Applies rmsnorm to every row of `x`.
Matrix rmsnorm_rows(const Matrix& x, std::span<const float> gamma, double eps);
float silu(float x);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, float factor);
// a += factor * b, in place.
void add_scaled_inplace(Matrix& a, const Matrix& b, float factor);

}  // namespace swm
