#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedfv {

// Flat parameter/gradient vector. All arithmetic is double precision:
// projection chains compound round-off and the shrinkage identity tests
// would blur out in single precision.
using Vec = std::vector<double>;

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct ZeroNorm : std::domain_error {
    explicit ZeroNorm(const std::string& what) : std::domain_error(what) {}
};

inline void require_same_dim(const Vec& a, const Vec& b, const char* op) {
    if (a.size() != b.size()) {
        throw DimensionMismatch(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
}

inline double dot(const Vec& a, const Vec& b) {
    require_same_dim(a, b, "dot");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity, clamped to [-1, 1] so round-off excursions cannot leak
// into downstream comparisons.
inline double cosine(const Vec& a, const Vec& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw ZeroNorm("cosine: zero-norm operand");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// Strict sign test; a zero dot product is not a conflict.
inline bool conflicts(const Vec& a, const Vec& b) { return dot(a, b) < 0.0; }

// v minus its component along target; the result is orthogonal to target.
inline Vec project_to_normal_plane(const Vec& v, const Vec& target) {
    require_same_dim(v, target, "project_to_normal_plane");
    const double denom = dot(target, target);
    if (denom == 0.0) throw ZeroNorm("project_to_normal_plane: zero-norm target");
    const double coef = dot(v, target) / denom;
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - coef * target[i];
    return out;
}

// Scales v to the requested Euclidean length. A zero target length yields the
// zero vector; rescaling a zero vector to a positive length is undefined.
inline Vec rescale_to(const Vec& v, double length) {
    if (length < 0.0) throw std::invalid_argument("rescale_to: negative length");
    if (length == 0.0) return Vec(v.size(), 0.0);
    const double n = norm(v);
    if (n == 0.0) throw ZeroNorm("rescale_to: zero-norm vector with positive target length");
    const double coef = length / n;
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = coef * v[i];
    return out;
}

inline void add_scaled(Vec& acc, double coef, const Vec& x) {
    require_same_dim(acc, x, "add_scaled");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += coef * x[i];
}

inline Vec sub(const Vec& a, const Vec& b) {
    require_same_dim(a, b, "sub");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Vec scaled(const Vec& a, double coef) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = coef * a[i];
    return out;
}

inline bool all_finite(const Vec& a) {
    for (double x : a) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace fedfv
