#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qxpand/error.hpp"
#include "qxpand/rng.hpp"

namespace qx {

// Dense row-major matrix. Scalar is double in test builds; float is the
// optional fast mode. Row vectors are 1xN matrices.
template <typename S>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;

    Matrix() = default;
    Matrix(int r, int c, S fill = S(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c, S(0)); }

    S& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    S at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }
};

template <typename S>
inline void require_same_shape(const Matrix<S>& a, const Matrix<S>& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <typename S>
inline bool all_finite(const Matrix<S>& m) {
    for (S v : m.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename S>
inline Matrix<S> random_uniform(int rows, int cols, double lo, double hi, SeededRng& rng) {
    Matrix<S> m(rows, cols);
    for (auto& v : m.data) v = static_cast<S>(rng.uniform(lo, hi));
    return m;
}

}  // namespace qx
