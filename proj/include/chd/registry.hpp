// Builtin registry: graphs, couplings, smooth potentials, conductivities,
// addressable by the string names used in run configs.
//
//   graphs         log | obstacle | poly | zero
//   couplings      smooth_id | const
//   conductivities const | demo_exp_cos
//   f2 family      f2(r) = a*r*(1-r) + (b/2)*r^2

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "chd/errors.hpp"
#include "chd/potentials.hpp"

namespace chd {

inline ScalarGraph make_graph(const std::string& name, double c = 1.0) {
    ScalarGraph g;
    g.c = c;
    if (name == "log") {
        if (!(c > 0.0)) throw ValidationError("graph log: c must be > 0");
        g.kind = GraphKind::Logarithmic;
        g.domain_lo = 0.0;
        g.domain_hi = 1.0;
    } else if (name == "obstacle") {
        g.kind = GraphKind::DoubleObstacle;
        g.domain_lo = 0.0;
        g.domain_hi = 1.0;
    } else if (name == "poly") {
        if (!(c > 0.0)) throw ValidationError("graph poly: c must be > 0");
        g.kind = GraphKind::Polynomial;
    } else if (name == "zero") {
        g.kind = GraphKind::Zero;
    } else {
        throw ValidationError("unknown graph '" + name + "'");
    }
    return g;
}

// Coupling g. smooth_id is the C^inf nonnegative extension of g(r) = r:
//   g(r) = (r + sqrt(r^2 + delta^2)) / 2.
inline void set_coupling(PotentialSpec& spec, const std::string& name, double param) {
    if (name == "smooth_id") {
        const double delta = param;
        if (!(delta > 0.0)) throw ValidationError("coupling smooth_id: delta must be > 0");
        spec.g = [delta](double r) { return 0.5 * (r + std::sqrt(r * r + delta * delta)); };
        spec.gprime = [delta](double r) {
            return 0.5 * (1.0 + r / std::sqrt(r * r + delta * delta));
        };
        spec.gsecond = [delta](double r) {
            const double s = std::sqrt(r * r + delta * delta);
            return 0.5 * delta * delta / (s * s * s);
        };
        spec.lip_g = 1.0;
        spec.lip_gprime = 0.5 / delta;
    } else if (name == "const") {
        const double v = param;
        if (v < 0.0) throw ValidationError("coupling const: value must be >= 0");
        spec.g = [v](double) { return v; };
        spec.gprime = [](double) { return 0.0; };
        spec.gsecond = [](double) { return 0.0; };
        spec.lip_g = 0.0;
        spec.lip_gprime = 0.0;
    } else {
        throw ValidationError("unknown coupling '" + name + "'");
    }
}

inline void set_f2_family(PotentialSpec& spec, double a, double b) {
    spec.f2 = [a, b](double r) { return a * r * (1.0 - r) + 0.5 * b * r * r; };
    spec.pi = [a, b](double r) { return a * (1.0 - 2.0 * r) + b * r; };
    spec.pi_prime = [a, b](double) { return b - 2.0 * a; };
    spec.lip_pi = std::abs(b - 2.0 * a);
}

inline PotentialSpec make_potential(const std::string& graph_name, double graph_c,
                                    double f2_a, double f2_b,
                                    const std::string& g_name, double g_param) {
    PotentialSpec spec;
    spec.graph = make_graph(graph_name, graph_c);
    set_f2_family(spec, f2_a, f2_b);
    set_coupling(spec, g_name, g_param);
    return spec;
}

// Conductivities. demo_exp_cos is kappa(m,r) = 1 + 0.5 e^{-m} cos^2(r), which
// satisfies the bounds with kmin = 1, kmax = 1.5. It has a closed-form K
// family, deliberately not wired into closed_form_K so the quadrature path
// stays exercised; tests use the closed form as the oracle.
inline ConductivitySpec make_conductivity(const std::string& name, double kmin,
                                          double kmax) {
    ConductivitySpec cond;
    if (name == "const") {
        const double k0 = kmin;
        if (!(k0 > 0.0)) throw ValidationError("conductivity const: value must be > 0");
        if (kmax != kmin) throw ValidationError("conductivity const: kmin and kmax must agree");
        cond.kappa = [k0](double, double) { return k0; };
        cond.kappa_r = [](double, double) { return 0.0; };
        cond.kappa_rr = [](double, double) { return 0.0; };
        cond.kmin = k0;
        cond.kmax = k0;
        cond.closed_form_K = [k0](double m, double) { return KFamily{k0 * m, 0.0, 0.0}; };
    } else if (name == "demo_exp_cos") {
        if (!(kmin > 0.0)) throw ValidationError("conductivity: kmin must be > 0");
        if (!(kmax >= kmin)) throw ValidationError("conductivity: kmax must be >= kmin");
        cond.kappa = [](double m, double r) {
            const double cr = std::cos(r);
            return 1.0 + 0.5 * std::exp(-m) * cr * cr;
        };
        cond.kappa_r = [](double m, double r) { return -0.5 * std::exp(-m) * std::sin(2.0 * r); };
        cond.kappa_rr = [](double m, double r) { return -std::exp(-m) * std::cos(2.0 * r); };
        cond.kmin = kmin;
        cond.kmax = kmax;
    } else {
        throw ValidationError("unknown conductivity '" + name + "'");
    }
    return cond;
}

inline const std::vector<std::string>& graph_names() {
    static const std::vector<std::string> v = {"log", "obstacle", "poly", "zero"};
    return v;
}
inline const std::vector<std::string>& coupling_names() {
    static const std::vector<std::string> v = {"smooth_id", "const"};
    return v;
}
inline const std::vector<std::string>& conductivity_names() {
    static const std::vector<std::string> v = {"const", "demo_exp_cos"};
    return v;
}

}  // namespace chd
