#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "imfnd/errors.hpp"

namespace imfnd {

using Vec = std::vector<double>;

// Dense row-major matrix. Everything in this library is small (N <= a few
// hundred rows), so a flat vector is all we need.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Vec row(std::size_t r) const {
        return Vec(data.begin() + static_cast<std::ptrdiff_t>(r * cols),
                   data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    }

    bool operator==(const Mat& other) const = default;
};

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Mat& m) {
    for (double x : m.data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("dot: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

// Scales v to unit Euclidean length; direction is preserved.
inline Vec l2_normalize(const Vec& v) {
    const double n = norm2(v);
    if (n == 0.0) {
        throw ZeroVector("l2_normalize: all-zero input");
    }
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("cosine_similarity: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
    }
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) {
        throw ZeroVector("cosine_similarity: zero-norm operand");
    }
    double s = dot(a, b) / (na * nb);
    // Guard against rounding drift just past the ends of [-1, 1].
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace imfnd
