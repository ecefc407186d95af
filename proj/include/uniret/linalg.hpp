#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "uniret/error.hpp"

namespace uniret {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small enough at desk scale that hand-rolled loops
/// beat pulling in a linear-algebra dependency.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Vec& v) { return std::sqrt(dot(v, v)); }

/// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& v, double a) {
    for (double& x : v) x *= a;
}

/// m * x for m [rows x cols], x [cols].
inline Vec matvec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols)
        fail("dimension-mismatch", "matvec: vector has " + std::to_string(x.size()) +
                                       " entries, matrix expects " + std::to_string(m.cols));
    Vec out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
        out[i] = s;
    }
    return out;
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace uniret
