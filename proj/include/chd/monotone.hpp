// Maximal monotone graphs on R, handled through resolvents.
//
// A graph beta (the subdifferential of a convex l.s.c. f1) may be multivalued,
// so the computational handle is the resolvent
//     J_lambda(x) = unique y with  y + lambda*beta(y) ∋ x,
// which is single-valued and nonexpansive for every lambda > 0. The Yosida
// approximation beta_eps = (I - J_eps)/eps is monotone, (1/eps)-Lipschitz and
// satisfies beta_eps(x) ∈ beta(J_eps(x)).

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "chd/errors.hpp"

namespace chd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class GraphKind { Zero, Logarithmic, Polynomial, DoubleObstacle, Custom };

inline const char* to_string(GraphKind k) {
    switch (k) {
        case GraphKind::Zero: return "zero";
        case GraphKind::Logarithmic: return "log";
        case GraphKind::Polynomial: return "poly";
        case GraphKind::DoubleObstacle: return "obstacle";
        case GraphKind::Custom: return "custom";
    }
    return "?";
}

// Descriptor of a maximal monotone graph beta on R. domain_lo/domain_hi are
// the endpoints of the closure of D(beta). For Custom, `custom` must be a
// pointwise monotone single-valued function on the open interior; the graph is
// completed with vertical rays at finite endpoints (maximal extension).
struct ScalarGraph {
    GraphKind kind = GraphKind::Zero;
    double domain_lo = -kInf;
    double domain_hi = kInf;
    double c = 1.0;  // log: multiplicative constant of f1; poly: cubic coefficient

    std::function<double(double)> custom;        // beta on the interior
    std::function<double(double)> custom_prime;  // optional
    std::function<double(double)> custom_f1;     // optional convex antiderivative

    int resolvent_max_iter = 200;
    double resolvent_tol = 1e-12;

    bool in_closure(double x) const { return x >= domain_lo && x <= domain_hi; }

    // True where beta is single-valued and finite.
    bool single_valued_at(double x) const {
        switch (kind) {
            case GraphKind::Zero: return true;
            case GraphKind::Polynomial: return true;
            case GraphKind::Logarithmic: return x > 0.0 && x < 1.0;
            case GraphKind::DoubleObstacle: return x > 0.0 && x < 1.0;
            case GraphKind::Custom: return x > domain_lo && x < domain_hi;
        }
        return false;
    }

    // Pointwise evaluation where single-valued.
    double beta(double x) const {
        switch (kind) {
            case GraphKind::Zero: return 0.0;
            case GraphKind::Polynomial: return c * x * x * x;
            case GraphKind::Logarithmic:
                if (!(x > 0.0 && x < 1.0))
                    throw InvalidScenario("log graph: beta evaluated outside (0,1)");
                return c * std::log(x / (1.0 - x));
            case GraphKind::DoubleObstacle:
                if (!(x > 0.0 && x < 1.0))
                    throw InvalidScenario("obstacle graph: beta evaluated outside (0,1)");
                return 0.0;
            case GraphKind::Custom:
                if (!single_valued_at(x))
                    throw InvalidScenario("custom graph: beta evaluated outside interior");
                return custom(x);
        }
        return 0.0;
    }

    bool has_derivative() const {
        return kind != GraphKind::Custom || static_cast<bool>(custom_prime);
    }

    double beta_prime(double x) const {
        switch (kind) {
            case GraphKind::Zero: return 0.0;
            case GraphKind::Polynomial: return 3.0 * c * x * x;
            case GraphKind::Logarithmic: return c / (x * (1.0 - x));
            case GraphKind::DoubleObstacle: return 0.0;
            case GraphKind::Custom: return custom_prime(x);
        }
        return 0.0;
    }

    // Minimal-norm selection beta^0(x); used to build admissible xi0 from rho0.
    double minimal_section(double x) const {
        if (kind == GraphKind::DoubleObstacle) {
            if (x == 0.0 || x == 1.0) return 0.0;  // rays (-inf,0] resp. [0,inf)
            return beta(x);
        }
        return beta(x);
    }
};

// Convex part f1 of the potential, tied to the graph (beta = ∂f1).
// Returns +inf outside the closure of D(f1). The logarithmic builtin is
// shifted by +c*log(2) so that min f1 = f1(1/2) = 0.
inline double eval_f1(const ScalarGraph& g, double x) {
    auto xlogx = [](double t) { return t > 0.0 ? t * std::log(t) : 0.0; };
    switch (g.kind) {
        case GraphKind::Zero: return 0.0;
        case GraphKind::Polynomial: return 0.25 * g.c * x * x * x * x;
        case GraphKind::Logarithmic:
            if (x < 0.0 || x > 1.0) return kInf;
            return g.c * (xlogx(x) + xlogx(1.0 - x) + std::numbers::ln2);
        case GraphKind::DoubleObstacle: return (x >= 0.0 && x <= 1.0) ? 0.0 : kInf;
        case GraphKind::Custom:
            if (!g.in_closure(x)) return kInf;
            if (g.custom_f1) return g.custom_f1(x);
            throw InvalidScenario("custom graph: no f1 provided");
    }
    return 0.0;
}

// Resolvent solve result: the point J_lambda(x) and the graph selection
// (x - J)/lambda in beta(J). Computing both in one solve keeps the Yosida
// value accurate even where J sits against the domain boundary.
struct ResolventPoint {
    double J;
    double beta_value;
};

namespace detail {

// Logarithmic graph, solved in graph-value space: with t = beta(y) the point
// is y(t) = sigmoid(t/c) and sigma(t) = y(t) + lambda*t - x is strictly
// increasing with the root pinned to [(x-1)/lambda, x/lambda]. This stays
// well-conditioned where y itself would underflow (roots like exp(x/lambda)).
inline ResolventPoint log_resolvent(const ScalarGraph& g, double lambda, double x) {
    const double c = g.c;
    auto sigmoid = [c](double t) { return 1.0 / (1.0 + std::exp(-t / c)); };
    double a = (x - 1.0) / lambda - 1.0;
    double b = x / lambda + 1.0;
    double t = 0.5 * (a + b);
    for (int it = 0; it < g.resolvent_max_iter; ++it) {
        const double y = sigmoid(t);
        const double sigma = y + lambda * t - x;
        if (sigma > 0.0)
            b = t;
        else
            a = t;
        const double mid = 0.5 * (a + b);
        if (mid == a || mid == b) return {sigmoid(mid), mid};

        // Newton accelerated, with forced bisection every other iteration so
        // the bracket provably halves (Newton alone can two-cycle here).
        double t_next = mid;
        const double dsigma = y * (1.0 - y) / c + lambda;
        if (it % 2 == 0 && dsigma > 0.0 && std::isfinite(dsigma)) {
            const double trial = t - sigma / dsigma;
            if (trial > a && trial < b) t_next = trial;
        }
        const double scale = std::abs(y) + lambda * std::abs(t) + std::abs(x) + 1.0;
        if (std::abs(t_next - t) <= 4e-16 * (1.0 + std::abs(t)) &&
            std::abs(sigma) <= 4e-16 * scale)
            return {sigmoid(t_next), t_next};
        t = t_next;
    }
    throw NonConvergence("resolvent: iteration budget exhausted (kind=log, x=" +
                         std::to_string(x) + ")");
}

// Root of phi(y) = y + lambda*beta(y) - x on (lo, hi), phi strictly increasing.
// Endpoint signs act as sentinels (vertical rays of the maximal extension), so
// bisection converges to an endpoint when phi has no interior zero. Newton
// steps accelerate when a derivative is available and the step stays bracketed.
// Converges to machine precision, well inside the documented 1e-12 guarantee;
// the guarantee matters because Yosida values divide the result by eps.
inline double resolvent_root(const ScalarGraph& g, double lambda, double x,
                             double lo, double hi) {
    double a = lo, b = hi;
    double y;
    if (!std::isfinite(a) || !std::isfinite(b)) {
        // Expand a finite bracket around x.
        double w = 1.0 + std::abs(x);
        a = std::isfinite(lo) ? lo : x - w;
        b = std::isfinite(hi) ? hi : x + w;
        int guard = 0;
        while (a > lo && a + lambda * g.beta(a) - x > 0.0) {
            w *= 2.0;
            a = std::max(lo, x - w);
            if (++guard > 200) throw NonConvergence("resolvent: bracket expansion failed (low)");
        }
        guard = 0;
        w = 1.0 + std::abs(x);
        while (b < hi && b + lambda * g.beta(b) - x < 0.0) {
            w *= 2.0;
            b = std::min(hi, x + w);
            if (++guard > 200) throw NonConvergence("resolvent: bracket expansion failed (high)");
        }
    }
    y = 0.5 * (a + b);

    for (int it = 0; it < g.resolvent_max_iter; ++it) {
        const double phi = y + lambda * g.beta(y) - x;
        if (std::isnan(phi))
            throw NonConvergence("resolvent: non-finite graph value, malformed graph (kind=" +
                                 std::string(to_string(g.kind)) + ")");
        if (phi > 0.0)
            b = y;
        else
            a = y;

        const double mid = 0.5 * (a + b);
        if (mid == a || mid == b) return mid;  // bracket exhausted to one ulp

        double y_next = mid;
        if (it % 2 == 0 && g.has_derivative()) {
            const double dphi = 1.0 + lambda * g.beta_prime(y);
            if (dphi > 0.0 && std::isfinite(dphi)) {
                const double trial = y - phi / dphi;
                if (trial > a && trial < b) y_next = trial;
            }
        }
        const double scale = std::abs(y) + lambda * std::abs(phi) + std::abs(x) + 1.0;
        if (std::abs(y_next - y) <= 4e-16 * (1.0 + std::abs(y)) &&
            std::abs(phi) <= 4e-16 * scale)
            return y_next;
        y = y_next;
    }
    throw NonConvergence("resolvent: iteration budget exhausted (kind=" +
                         std::string(to_string(g.kind)) + ", x=" + std::to_string(x) + ")");
}

}  // namespace detail

// Resolvent point J_lambda(x) together with the selection (x - J)/lambda.
inline ResolventPoint resolvent_point(const ScalarGraph& g, double lambda, double x) {
    if (!(lambda > 0.0)) throw InvalidScenario("resolvent: lambda must be > 0");
    switch (g.kind) {
        case GraphKind::Zero: return {x, 0.0};
        case GraphKind::DoubleObstacle: {
            const double J = std::clamp(x, 0.0, 1.0);
            return {J, (x - J) / lambda};
        }
        case GraphKind::Logarithmic: return detail::log_resolvent(g, lambda, x);
        case GraphKind::Polynomial:
        case GraphKind::Custom: {
            const double J = detail::resolvent_root(g, lambda, x, g.domain_lo, g.domain_hi);
            return {J, (x - J) / lambda};
        }
    }
    return {x, 0.0};
}

// J_lambda(x): the unique y with y + lambda*beta(y) ∋ x. Always lands in the
// closure of D(beta).
inline double beta_resolvent(const ScalarGraph& g, double lambda, double x) {
    return resolvent_point(g, lambda, x).J;
}

// Yosida approximation beta_eps(x) = (x - J_eps(x)) / eps.
inline double yosida_eval(const ScalarGraph& g, double eps, double x) {
    if (!(eps > 0.0)) throw InvalidScenario("yosida_eval: eps must be > 0");
    return resolvent_point(g, eps, x).beta_value;
}

// Measurable selection of beta_eps'. Where beta is differentiable at J_eps(x),
//   beta_eps'(x) = beta'(J) / (1 + eps*beta'(J)) = 1 / (1/beta'(J) + eps),
// computed in the inverse form to stay finite when beta' blows up.
inline double yosida_prime(const ScalarGraph& g, double eps, double x) {
    if (!(eps > 0.0)) throw InvalidScenario("yosida_prime: eps must be > 0");
    switch (g.kind) {
        case GraphKind::Zero: return 0.0;
        case GraphKind::DoubleObstacle: return (x < 0.0 || x > 1.0) ? 1.0 / eps : 0.0;
        default: break;
    }
    const double y = beta_resolvent(g, eps, x);
    if (g.kind == GraphKind::Logarithmic) {
        // inverse form stays finite when beta' blows up at the boundary
        const double inv_bp = y * (1.0 - y) / g.c;
        return 1.0 / (inv_bp + eps);
    }
    if (g.has_derivative() && g.single_valued_at(y)) {
        const double bp = g.beta_prime(y);
        if (bp <= 0.0) return 0.0;
        return 1.0 / (1.0 / bp + eps);
    }
    // Fallback: symmetric difference of beta_eps (still monotone in [0,1/eps]).
    const double dh = 1e-6 * (1.0 + std::abs(x));
    const double d = (yosida_eval(g, eps, x + dh) - yosida_eval(g, eps, x - dh)) / (2.0 * dh);
    return std::clamp(d, 0.0, 1.0 / eps);
}

// Moreau envelope of f1: f1_eps(x) = f1(J_eps(x)) + (eps/2)*beta_eps(x)^2.
// Finite on all of R; the natural energy density of the regularized flow.
inline double moreau_f1(const ScalarGraph& g, double eps, double x) {
    const ResolventPoint rp = resolvent_point(g, eps, x);
    double f = eval_f1(g, rp.J);
    if (!std::isfinite(f)) {
        // J sits on the boundary of D(f1) up to resolvent tolerance.
        f = eval_f1(g, std::clamp(rp.J, g.domain_lo, g.domain_hi));
        if (!std::isfinite(f)) f = 0.0;
    }
    return f + 0.5 * eps * rp.beta_value * rp.beta_value;
}

}  // namespace chd
