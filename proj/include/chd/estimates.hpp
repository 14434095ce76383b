// Runtime auditors: discrete analogues of the scheme's a priori estimates,
// evaluated along a trajectory.
//
// Continuous identities become one-sided discrete inequalities (implicit Euler
// only adds dissipation); each audit documents its direction and tolerance.
// Every audit is a pure function of (trajectory, specs, tolerances), and every
// verdict is recomputable from the series it emits, which is what cmd_verify
// relies on.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chd/errors.hpp"
#include "chd/grid.hpp"
#include "chd/potentials.hpp"
#include "chd/scheme.hpp"

namespace chd {

struct AuditOptions {
    double weighted_rel = 1e-6;      // W^k + 2D^k <= W^0 + weighted_rel*W^0
    double nonneg_floor = -1e-12;    // min mu over all cells/steps
    double xi_rel = 1e-8;            // ||xi||_6 <= ||h||_6 + xi_rel*(1 + ||h||_6)
    double gronwall_C = 10.0;        // E^k <= E^0 + C*(1 + sup ||T_tau mu||_2^2)
    double drift_C = 10.0;           // |I^k - I^0|/I^0 <= C*h on constant data
    double id_coeff = 1.0;           // grad-K identity: res <= coeff*spacing*scale
    std::vector<double> trunc_levels;  // truncation levels; default built from the run
};

// Canonical per-step series. Backward-difference quantities are 0 at step 0
// and audits start at step 1.
struct StepSeries {
    std::vector<double> time;
    std::vector<double> weighted_energy;   // W^k = sum (1+2g(rho)) mu^2 vol
    std::vector<double> cum_dissipation;   // D^k = sum_{j<=k} h * kappa-flux-energy(mu^j)
    std::vector<double> phase_energy;      // E^k, with the Moreau envelope of f1
    std::vector<double> min_mu, max_mu;
    std::vector<double> dtrho_L2;          // ||(rho^k - rho^{k-1})/h||_2
    std::vector<double> xi_L6;
    std::vector<double> h_L6;              // h^k = -dtrho - pi(rho) + (T_tau mu) g'(rho) + src
    std::vector<double> gradK_L2;          // ||grad K(mu,rho)||_2
    std::vector<double> dtmu_L2_cum;       // sum_{j<=k} h ||(mu^j - mu^{j-1})/h||_2^2
    std::vector<double> dtrho_H1_cum;      // sum_{j<=k} h |(rho^j - rho^{j-1})/h|_{H1}^2
    std::vector<double> tmu_L2;            // ||T_tau mu at step k||_2
    std::vector<double> gradK_id_res;      // ||grad K - (kappa_f grad mu + K1_f grad rho)||_2
    std::vector<double> gradK_id_tol;
    std::vector<double> newton_res, picard_delta;

    int steps() const { return static_cast<int>(time.size()); }
};

namespace detail {

inline const Field& delayed_mu(const Trajectory& traj, int k) {
    return k <= traj.cfg.M ? traj.mu.front() : traj.mu[static_cast<size_t>(k - traj.cfg.M)];
}

}  // namespace detail

inline StepSeries compute_step_series(const Trajectory& traj, const PotentialSpec& spec,
                                      const ConductivitySpec& cond,
                                      const AuditOptions& opts = {}) {
    StepSeries s;
    const Grid& g = traj.grid;
    const double vol = g.cell_volume();
    const double h = traj.cfg.h();
    const double eps = traj.cfg.eps_eff();
    const int K = traj.steps();

    double cumD = 0.0, cum_dtmu = 0.0, cum_dtrho_h1 = 0.0;
    Field Kfield(g), K1field(g), kcells(g), hfield(g), dtrho(g);

    for (int k = 0; k < K; ++k) {
        const Field& mu = traj.mu[k];
        const Field& rho = traj.rho[k];
        const Field& xi = traj.xi[k];

        double W = 0.0, Ephase = 0.0;
        for (int i = 0; i < mu.size(); ++i) {
            W += (1.0 + 2.0 * spec.g(rho[i])) * mu[i] * mu[i];
            Ephase += moreau_f1(spec.graph, eps, rho[i]) + spec.f2(rho[i]);
        }
        W *= vol;
        const double grad_rho = h1_seminorm(rho);
        Ephase = Ephase * vol + 0.5 * grad_rho * grad_rho;

        for (int i = 0; i < mu.size(); ++i) {
            const double m = std::max(mu[i], 0.0);
            const KFamily kf = eval_K_family(cond, m, rho[i]);
            Kfield.v[i] = kf.K;
            K1field.v[i] = kf.K1;
            kcells.v[i] = cond.kappa(m, rho[i]);
        }

        const Field& mu_d = detail::delayed_mu(traj, k);

        s.time.push_back(traj.times[k]);
        s.weighted_energy.push_back(W);
        s.phase_energy.push_back(Ephase);
        s.min_mu.push_back(mu.min());
        s.max_mu.push_back(mu.max());
        s.xi_L6.push_back(norm_lp(xi, 6.0));
        s.gradK_L2.push_back(h1_seminorm(Kfield));
        s.tmu_L2.push_back(norm_l2(mu_d));
        s.newton_res.push_back(traj.stats[k].newton_residual);
        s.picard_delta.push_back(traj.stats[k].picard_delta);

        // grad-K chain-rule identity, face-averaged coefficients
        double id_res2 = 0.0;
        for_each_face(g, [&](int l, int r, double hf, double fv) {
            const double kbar = 0.5 * (kcells[l] + kcells[r]);
            const double k1bar = 0.5 * (K1field[l] + K1field[r]);
            const double lhs = (Kfield[r] - Kfield[l]) / hf;
            const double rhs = kbar * (mu[r] - mu[l]) / hf + k1bar * (rho[r] - rho[l]) / hf;
            id_res2 += (lhs - rhs) * (lhs - rhs) * fv;
        });
        const double spacing = g.dim == 2 ? std::max(g.dx, g.dy) : g.dx;
        const double id_scale =
            cond.kmax * (h1_seminorm(mu) + std::max(1.0, norm_linf(mu)) * grad_rho);
        s.gradK_id_res.push_back(std::sqrt(id_res2));
        s.gradK_id_tol.push_back(opts.id_coeff * spacing * (id_scale + 1e-14));

        if (k == 0) {
            s.cum_dissipation.push_back(0.0);
            s.dtrho_L2.push_back(0.0);
            s.h_L6.push_back(0.0);
            s.dtmu_L2_cum.push_back(0.0);
            s.dtrho_H1_cum.push_back(0.0);
            continue;
        }

        cumD += h * kappa_flux_energy(kcells, mu);
        s.cum_dissipation.push_back(cumD);

        const Field& rho_prev = traj.rho[k - 1];
        const Field& mu_prev = traj.mu[k - 1];
        double dtmu2 = 0.0;
        for (int i = 0; i < mu.size(); ++i) {
            dtrho.v[i] = (rho[i] - rho_prev[i]) / h;
            const double dm = (mu[i] - mu_prev[i]) / h;
            dtmu2 += dm * dm;
            hfield.v[i] = -dtrho[i] - spec.pi(rho[i]) + mu_d[i] * spec.gprime(rho[i]);
            if (!traj.rho_src.empty()) hfield.v[i] += traj.rho_src[k][i];
        }
        s.dtrho_L2.push_back(norm_l2(dtrho));
        s.h_L6.push_back(norm_lp(hfield, 6.0));
        cum_dtmu += h * dtmu2 * vol;
        s.dtmu_L2_cum.push_back(cum_dtmu);
        const double dtrho_h1 = h1_seminorm(dtrho);
        cum_dtrho_h1 += h * dtrho_h1 * dtrho_h1;
        s.dtrho_H1_cum.push_back(cum_dtrho_h1);
    }
    return s;
}

struct AuditResult {
    std::string name;
    bool pass = false;
    double tolerance = 0.0;
    int worst_step = -1;
    std::vector<std::pair<std::string, std::vector<double>>> series;
    std::vector<std::pair<std::string, double>> extras;

    const std::vector<double>& col(const std::string& key) const {
        for (const auto& [k, v] : series)
            if (k == key) return v;
        throw FormatError("audit '" + name + "': missing series '" + key + "'");
    }
    double extra(const std::string& key) const {
        for (const auto& [k, v] : extras)
            if (k == key) return v;
        throw FormatError("audit '" + name + "': missing extra '" + key + "'");
    }
};

// Recompute pass/worst_step from the stored series alone. Shared by the
// in-process audits and cmd_verify.
inline void reverdict(AuditResult& r) {
    r.pass = true;
    r.worst_step = -1;
    double worst_margin = -kInf;
    auto offend = [&](int k, double margin) {
        if (margin > worst_margin) {
            worst_margin = margin;
            r.worst_step = k;
        }
        if (margin > 0.0) r.pass = false;
    };

    if (r.name == "weighted_energy") {
        const auto& W = r.col("weighted_energy");
        const auto& D = r.col("cum_dissipation");
        const double W0 = W.empty() ? 0.0 : W.front();
        for (size_t k = 0; k < W.size(); ++k)
            offend(static_cast<int>(k), W[k] + 2.0 * D[k] - W0 - r.tolerance);
    } else if (r.name == "nonnegativity") {
        const auto& m = r.col("min_mu");
        for (size_t k = 0; k < m.size(); ++k)
            offend(static_cast<int>(k), -r.tolerance - m[k]);
    } else if (r.name == "phase_energy") {
        const auto& E = r.col("phase_energy");
        const auto& dtr = r.col("dtrho_L2");
        for (size_t k = 0; k < E.size(); ++k) {
            if (!std::isfinite(E[k]) || !std::isfinite(dtr[k])) {
                offend(static_cast<int>(k), kInf);
                continue;
            }
            offend(static_cast<int>(k), E[k] - r.tolerance);
        }
    } else if (r.name == "xi_l6") {
        const auto& xi = r.col("xi_L6");
        const auto& hh = r.col("h_L6");
        for (size_t k = 1; k < xi.size(); ++k)
            offend(static_cast<int>(k), xi[k] - hh[k] - r.tolerance * (1.0 + hh[k]));
    } else if (r.name == "gradk") {
        const auto& res = r.col("gradK_id_res");
        const auto& tol = r.col("gradK_id_tol");
        for (size_t k = 0; k < res.size(); ++k)
            offend(static_cast<int>(k), res[k] - tol[k]);
    } else if (r.name == "linf_truncation") {
        const auto& levels = r.col("levels");
        const auto& y = r.col("y");
        const double mu0_max = r.extra("mu0_max");
        for (size_t k = 0; k < levels.size(); ++k) {
            offend(static_cast<int>(k), mu0_max - levels[k] - 1e-12);
            if (k > 0) offend(static_cast<int>(k), y[k] - y[k - 1] - 1e-14 * (1.0 + y[k - 1]));
        }
        if (!y.empty()) offend(static_cast<int>(y.size()) - 1, y.back() - 1e-30);
    } else if (r.name == "homogeneous_invariant") {
        const auto& I = r.col("invariant");
        const double I0 = I.empty() ? 0.0 : I.front();
        const double scale = std::abs(I0) > 0.0 ? std::abs(I0) : 1.0;
        for (size_t k = 0; k < I.size(); ++k)
            offend(static_cast<int>(k), std::abs(I[k] - I0) / scale - r.tolerance);
    } else {
        throw FormatError("unknown audit '" + r.name + "'");
    }
}

inline AuditResult audit_weighted_energy(const StepSeries& s, const AuditOptions& opts) {
    AuditResult r;
    r.name = "weighted_energy";
    const double W0 = s.weighted_energy.empty() ? 0.0 : s.weighted_energy.front();
    r.tolerance = opts.weighted_rel * W0;
    r.series.emplace_back("weighted_energy", s.weighted_energy);
    r.series.emplace_back("cum_dissipation", s.cum_dissipation);
    reverdict(r);
    return r;
}

inline AuditResult audit_nonnegativity(const StepSeries& s, const AuditOptions& opts) {
    AuditResult r;
    r.name = "nonnegativity";
    r.tolerance = -opts.nonneg_floor;
    r.series.emplace_back("min_mu", s.min_mu);
    reverdict(r);
    return r;
}

inline AuditResult audit_phase_energy(const StepSeries& s, const AuditOptions& opts) {
    AuditResult r;
    r.name = "phase_energy";
    const double E0 = s.phase_energy.empty() ? 0.0 : s.phase_energy.front();
    double sup_tmu2 = 0.0;
    for (double t : s.tmu_L2) sup_tmu2 = std::max(sup_tmu2, t * t);
    r.tolerance = E0 + opts.gronwall_C * (1.0 + sup_tmu2);
    r.series.emplace_back("phase_energy", s.phase_energy);
    r.series.emplace_back("dtrho_L2", s.dtrho_L2);
    r.extras.emplace_back("E0", E0);
    r.extras.emplace_back("sup_tmu_sq", sup_tmu2);
    r.extras.emplace_back("gronwall_C", opts.gronwall_C);
    reverdict(r);
    return r;
}

inline AuditResult audit_xi_l6(const StepSeries& s, const AuditOptions& opts) {
    AuditResult r;
    r.name = "xi_l6";
    r.tolerance = opts.xi_rel;
    r.series.emplace_back("xi_L6", s.xi_L6);
    r.series.emplace_back("h_L6", s.h_L6);
    reverdict(r);
    return r;
}

inline AuditResult audit_gradK(const StepSeries& s, const AuditOptions& opts) {
    AuditResult r;
    r.name = "gradk";
    r.tolerance = opts.id_coeff;
    r.series.emplace_back("gradK_id_res", s.gradK_id_res);
    r.series.emplace_back("gradK_id_tol", s.gradK_id_tol);
    r.series.emplace_back("gradK_L2", s.gradK_L2);
    r.series.emplace_back("dtmu_L2_cum", s.dtmu_L2_cum);
    reverdict(r);
    return r;
}

// y(level) = sup over steps of sum |(mu - level)^+|^2 * vol, on levels that
// must all sit at or above max(mu0). The cap is the empirical overshoot
// Delta = max(0, sup mu - max mu0), and y(max mu0 + Delta) = 0 by construction;
// what the study checks is the stability of the cap across tau refinements.
inline AuditResult audit_linf_truncation(const Trajectory& traj,
                                         const AuditOptions& opts = {}) {
    AuditResult r;
    r.name = "linf_truncation";
    r.tolerance = 0.0;
    const double vol = traj.grid.cell_volume();
    const double mu0_max = traj.mu.front().max();
    double global_max = mu0_max;
    for (const Field& mu : traj.mu) global_max = std::max(global_max, mu.max());
    const double cap = std::max(0.0, global_max - mu0_max);

    std::vector<double> levels = opts.trunc_levels;
    if (levels.empty())
        for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) levels.push_back(mu0_max + f * cap);
    for (double lv : levels)
        if (lv < mu0_max - 1e-12)
            throw InvalidScenario("linf_truncation: level below max(mu0)");

    std::vector<double> y;
    for (double lv : levels) {
        double sup = 0.0;
        for (const Field& mu : traj.mu) {
            double s = 0.0;
            for (double x : mu.v) {
                const double p = std::max(x - lv, 0.0);
                s += p * p;
            }
            sup = std::max(sup, s * vol);
        }
        y.push_back(sup);
    }
    r.series.emplace_back("levels", levels);
    r.series.emplace_back("y", y);
    r.extras.emplace_back("cap", cap);
    r.extras.emplace_back("mu0_max", mu0_max);
    r.extras.emplace_back("k_top", mu0_max + cap);
    reverdict(r);
    return r;
}

// Exact 0D conservation law: with grad mu = 0 the mu-equation integrates to
// mu*sqrt(1+2g(rho)) = const; the discrete drift is O(h).
inline double homogeneous_invariant(double mu, double rho, const PotentialSpec& spec) {
    return mu * std::sqrt(1.0 + 2.0 * spec.g(rho));
}

inline AuditResult audit_homogeneous_invariant(const Trajectory& traj,
                                               const PotentialSpec& spec,
                                               const AuditOptions& opts = {}) {
    auto spread = [](const Field& f) { return f.max() - f.min(); };
    if (spread(traj.mu.front()) > 1e-12 * (1.0 + std::abs(traj.mu.front().max())) ||
        spread(traj.rho.front()) > 1e-12 * (1.0 + std::abs(traj.rho.front().max())))
        throw InvalidScenario("homogeneous_invariant: initial data not spatially constant");

    AuditResult r;
    r.name = "homogeneous_invariant";
    r.tolerance = opts.drift_C * traj.cfg.h();
    std::vector<double> inv;
    for (int k = 0; k < traj.steps(); ++k)
        inv.push_back(homogeneous_invariant(traj.mu[k][0], traj.rho[k][0], spec));
    r.series.emplace_back("invariant", inv);
    r.series.emplace_back("time", traj.times);
    r.extras.emplace_back("I0", inv.front());
    reverdict(r);
    return r;
}

inline void require_pass(const AuditResult& r) {
    if (!r.pass)
        throw AuditFailure("audit '" + r.name + "' failed at step " +
                           std::to_string(r.worst_step));
}

struct DiagnosticsReport {
    StepSeries series;
    std::vector<AuditResult> audits;

    bool all_pass() const {
        for (const auto& a : audits)
            if (!a.pass) return false;
        return true;
    }
};

inline const std::vector<std::string>& audit_names() {
    static const std::vector<std::string> v = {"weighted_energy", "nonnegativity",
                                               "phase_energy",    "xi_l6",
                                               "gradk",           "linf_truncation"};
    return v;
}

// Run the requested audits (default: all spatial ones; homogeneous_invariant
// is opt-in since it requires constant data).
inline DiagnosticsReport run_audits(const Trajectory& traj, const PotentialSpec& spec,
                                    const ConductivitySpec& cond,
                                    const AuditOptions& opts = {},
                                    std::vector<std::string> which = {}) {
    if (which.empty()) which = audit_names();
    DiagnosticsReport rep;
    rep.series = compute_step_series(traj, spec, cond, opts);
    for (const auto& name : which) {
        if (name == "weighted_energy")
            rep.audits.push_back(audit_weighted_energy(rep.series, opts));
        else if (name == "nonnegativity")
            rep.audits.push_back(audit_nonnegativity(rep.series, opts));
        else if (name == "phase_energy")
            rep.audits.push_back(audit_phase_energy(rep.series, opts));
        else if (name == "xi_l6")
            rep.audits.push_back(audit_xi_l6(rep.series, opts));
        else if (name == "gradk")
            rep.audits.push_back(audit_gradK(rep.series, opts));
        else if (name == "linf_truncation")
            rep.audits.push_back(audit_linf_truncation(traj, opts));
        else if (name == "homogeneous_invariant")
            rep.audits.push_back(audit_homogeneous_invariant(traj, spec, opts));
        else
            throw ValidationError("unknown audit '" + name + "'");
    }
    return rep;
}

}  // namespace chd
