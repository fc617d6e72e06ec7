// Forward-mode dual numbers carrying a full gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nci/linalg.hpp"

namespace nci {

/// Value plus gradient with respect to a fixed set of seed variables.
/// An empty gradient stands for a constant (all-zero gradient).
struct Dual {
    double v = 0.0;
    Vector g;

    Dual() = default;
    Dual(double value) : v(value) {} // NOLINT: constants promote implicitly
    Dual(double value, Vector grad) : v(value), g(std::move(grad)) {}

    /// The k-th of n independent variables.
    static Dual variable(double value, std::size_t k, std::size_t n) {
        Dual d(value, Vector(n, 0.0));
        d.g[k] = 1.0;
        return d;
    }

    /// Gradient padded to length n.
    Vector gradient(std::size_t n) const { return g.empty() ? Vector(n, 0.0) : g; }
};

namespace detail {

// out = a*ga + b*gb, treating empty gradients as zero.
inline Vector combine(double a, const Vector& ga, double b, const Vector& gb) {
    if (ga.empty() && gb.empty()) return {};
    const std::size_t n = std::max(ga.size(), gb.size());
    Vector out(n, 0.0);
    for (std::size_t i = 0; i < ga.size(); ++i) out[i] += a * ga[i];
    for (std::size_t i = 0; i < gb.size(); ++i) out[i] += b * gb[i];
    return out;
}

inline Vector scaled(double a, const Vector& g) {
    Vector out(g);
    for (double& x : out) x *= a;
    return out;
}

} // namespace detail

inline Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, detail::combine(1.0, a.g, 1.0, b.g)}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, detail::combine(1.0, a.g, -1.0, b.g)}; }
inline Dual operator-(const Dual& a) { return {-a.v, detail::scaled(-1.0, a.g)}; }
inline Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, detail::combine(b.v, a.g, a.v, b.g)}; }
inline Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    return {a.v * inv, detail::combine(inv, a.g, -a.v * inv * inv, b.g)};
}
inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }
inline Dual& operator-=(Dual& a, const Dual& b) { return a = a - b; }
inline Dual& operator*=(Dual& a, const Dual& b) { return a = a * b; }

// Chain rule helper: f(a) with f'(a) = d.
inline Dual chain(const Dual& a, double value, double d) { return {value, detail::scaled(d, a.g)}; }

inline Dual sin(const Dual& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
inline Dual cos(const Dual& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
inline Dual tan(const Dual& a) {
    const double c = std::cos(a.v);
    return chain(a, std::tan(a.v), 1.0 / (c * c));
}
inline Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return chain(a, e, e);
}
inline Dual log(const Dual& a) { return chain(a, std::log(a.v), 1.0 / a.v); }
inline Dual sqrt(const Dual& a) {
    const double s = std::sqrt(a.v);
    return chain(a, s, 0.5 / s);
}
inline Dual atan2(const Dual& y, const Dual& x) {
    const double r2 = x.v * x.v + y.v * y.v;
    return {std::atan2(y.v, x.v), detail::combine(x.v / r2, y.g, -y.v / r2, x.g)};
}
inline Dual acos(const Dual& a) { return chain(a, std::acos(a.v), -1.0 / std::sqrt(1.0 - a.v * a.v)); }

/// a^k for integer k (k < 0 allowed when a != 0).
inline Dual ipow(const Dual& a, int k) {
    if (k == 0) return Dual(1.0);
    const double value = std::pow(a.v, k);
    const double d = static_cast<double>(k) * std::pow(a.v, k - 1);
    return chain(a, value, d);
}

} // namespace nci
