// Nonlinearity bundles for the coupled system
//   (1 + 2g(rho)) dt(mu) + mu g'(rho) dt(rho) - div(kappa(mu,rho) grad mu) = 0,
//   dt(rho) - lap(rho) + beta(rho) + pi(rho) ∋ mu g'(rho),
// under the structural assumptions: f = f1 + f2 with f1 convex l.s.c. >= 0 and
// beta = ∂f1; f2, g in C^2 with f2', g, g' Lipschitz; g >= 0; kappa bounded by
// 0 < kmin <= kappa <= kmax with |∂r kappa|, |∂r² kappa| <= kmax.

#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "chd/errors.hpp"
#include "chd/monotone.hpp"
#include "chd/quadrature.hpp"

namespace chd {

struct PotentialSpec {
    ScalarGraph graph;  // beta = ∂f1

    std::function<double(double)> f2;        // smooth part of the potential
    std::function<double(double)> pi;        // f2'
    std::function<double(double)> pi_prime;  // f2''

    std::function<double(double)> g;        // coupling, >= 0
    std::function<double(double)> gprime;   // g'
    std::function<double(double)> gsecond;  // g''

    double lip_pi = 0.0;      // Lipschitz constant of f2'
    double lip_g = 0.0;       // Lipschitz constant of g
    double lip_gprime = 0.0;  // Lipschitz constant of g'
};

inline double eval_f1(const PotentialSpec& spec, double x) { return eval_f1(spec.graph, x); }

struct CouplingValues {
    double g, gprime, pi;
};

inline CouplingValues eval_coupling(const PotentialSpec& spec, double rho) {
    return {spec.g(rho), spec.gprime(rho), spec.pi(rho)};
}

struct KFamily {
    double K, K1, K2;
};

// Conductivity kappa(m, r) with its r-derivatives, uniform bounds, and the
// antiderivative family K(m,r) = ∫_0^m kappa(s,r) ds (K1, K2 with kappa', kappa'').
struct ConductivitySpec {
    std::function<double(double, double)> kappa;
    std::function<double(double, double)> kappa_r;
    std::function<double(double, double)> kappa_rr;
    double kmin = 1.0;
    double kmax = 1.0;

    // Analytic K family, used instead of quadrature when present.
    std::function<KFamily(double, double)> closed_form_K;

    double quad_rel_tol = 1e-10;
    int quad_max_depth = 30;
};

inline KFamily eval_K_family(const ConductivitySpec& cond, double m, double r) {
    if (m < 0.0) throw InvalidScenario("eval_K_family: m must be >= 0");
    if (cond.closed_form_K) return cond.closed_form_K(m, r);
    const auto I = [&](const std::function<double(double, double)>& f) {
        return integrate([&](double s) { return f(s, r); }, 0.0, m, cond.quad_rel_tol,
                         cond.quad_max_depth);
    };
    return {I(cond.kappa), I(cond.kappa_r), I(cond.kappa_rr)};
}

}  // namespace chd
