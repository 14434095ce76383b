// Adaptive Gauss-Legendre quadrature. Panels are refined by bisection until
// the 7-point value agrees with the sum over the two half-panels.

#pragma once

#include <array>
#include <cmath>
#include <functional>

#include "chd/errors.hpp"

namespace chd {

namespace detail {

// 7-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr std::array<double, 7> kGl7Nodes = {
    -0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
    0.0,
    0.4058451513773972, 0.7415311855993945, 0.9491079123427585};
inline constexpr std::array<double, 7> kGl7Weights = {
    0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189, 0.2797053914892766, 0.1294849661688697};

template <class F>
double gl7(F&& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 7; ++i) s += kGl7Weights[i] * f(mid + half * kGl7Nodes[i]);
    return s * half;
}

template <class F>
double adapt(F&& f, double a, double b, double whole, double tol_abs, int depth,
             int max_depth) {
    const double mid = 0.5 * (a + b);
    const double left = gl7(f, a, mid);
    const double right = gl7(f, mid, b);
    const double err = std::abs(left + right - whole);
    if (err <= tol_abs || b - a < 1e-14 * (1.0 + std::abs(a)))
        return left + right;
    if (depth >= max_depth)
        throw QuadratureFailure("adaptive quadrature: depth budget exhausted on [" +
                                std::to_string(a) + "," + std::to_string(b) + "]");
    return adapt(f, a, mid, left, 0.5 * tol_abs, depth + 1, max_depth) +
           adapt(f, mid, b, right, 0.5 * tol_abs, depth + 1, max_depth);
}

}  // namespace detail

// Integral of f over [a, b] to relative tolerance rel_tol (with a tiny
// absolute floor so that zero integrals terminate).
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-10, int max_depth = 30) {
    if (a == b) return 0.0;
    const double coarse = detail::gl7(f, a, b);
    const double tol_abs = rel_tol * std::max(std::abs(coarse), 1e-30) + 1e-300;
    return detail::adapt(f, a, b, coarse, tol_abs, 0, max_depth);
}

}  // namespace chd
