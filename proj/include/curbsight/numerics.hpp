#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace curbsight::numerics {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// a.b / (|a| |b|), clamped into [-1, 1] against rounding.
// Throws curbsight::Error on dimension mismatch or zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Dense row-major matrix. All arithmetic in double precision.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Throws on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// W + A*B. Throws on any shape mismatch. When B is all zeros the result
// is W bit-for-bit (the product term is exactly zero).
Matrix lora_merge(const Matrix& w, const Matrix& a, const Matrix& b);

} // namespace curbsight::numerics
