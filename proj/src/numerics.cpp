#include "curbsight/numerics.hpp"

#include "curbsight/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace curbsight::numerics {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error("dot: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error("cosine_similarity: dimension mismatch (" +
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw Error("cosine_similarity: zero-norm input");
    }
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw Error("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                    " vs " + std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix lora_merge(const Matrix& w, const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw Error("lora_merge: A.cols != B.rows (" + std::to_string(a.cols) +
                    " vs " + std::to_string(b.rows) + ")");
    }
    if (w.rows != a.rows || w.cols != b.cols) {
        throw Error("lora_merge: W shape " + std::to_string(w.rows) + "x" +
                    std::to_string(w.cols) + " does not match A*B shape " +
                    std::to_string(a.rows) + "x" + std::to_string(b.cols));
    }
    Matrix out = w;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                const double delta = aik * b.at(k, j);
                if (delta != 0.0) out.at(i, j) += delta;
            }
        }
    }
    return out;
}

} // namespace curbsight::numerics
