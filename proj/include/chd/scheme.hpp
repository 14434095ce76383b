// Time-delay approximation scheme for the coupled system
//
//   (1 + 2g(rho)) dt(mu) + mu g'(rho) dt(rho) - div(kappa(mu,rho) grad mu) = 0,
//   dt(rho) - lap(rho) + beta_eps(rho) + pi(rho) = (T_tau mu) g'(rho),
//
// with T_tau the history translation (T_tau v)(t) = v(t - tau) for t > tau and
// mu0 for t <= tau. The delay decouples the system: over each window the
// rho-equation sees only known history, so every inner implicit-Euler step
// solves rho first (semismooth Newton on the Yosida-regularized inclusion) and
// then mu (Picard-iterated SPD solves with frozen conductivity).
//
// The mu-step uses the discrete chain-rule form
//   (1+2g(rho)) (mu+ - mu)/h + mu+ (g(rho+) - g(rho))/h - div(kappa grad mu+) = 0,
// chosen so that testing with mu+ reproduces the weighted-energy product rule
// exactly at the discrete level:
//   (1+2g(rho)) (mu+ - mu) mu+ + (g(rho+) - g(rho)) (mu+)^2
//     = [ (1+2g(rho+))(mu+)^2 - (1+2g(rho))mu^2 ] / 2 + (1+2g(rho)) (mu+ - mu)^2 / 2.
// Its reaction diagonal (1 + g(rho) + g(rho+))/h is positive whenever g >= 0,
// so the flux M-matrix keeps mu+ >= 0 for mu >= 0 unconditionally.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chd/cg.hpp"
#include "chd/errors.hpp"
#include "chd/grid.hpp"
#include "chd/monotone.hpp"
#include "chd/potentials.hpp"

namespace chd {

enum class PicardInit { Previous, Zero };

struct DelayConfig {
    double T = 0.25;
    int N = 16;        // delay count, tau = T/N
    int M = 4;         // inner steps per delay window, h = tau/M
    double eps = 0.0;  // Yosida parameter; <= 0 means the default schedule eps = tau

    double newton_tol = 1e-10;
    double picard_tol = 1e-12;
    int newton_max = 50;
    int picard_max = 200;
    double cg_tol = 1e-12;
    int cg_max = 100000;

    PicardInit picard_init = PicardInit::Previous;
    double newton_damping = 1.0;  // initial line-search step

    double tau() const { return T / N; }
    double h() const { return tau() / M; }
    double eps_eff() const { return eps > 0.0 ? eps : tau(); }

    void validate() const {
        if (!(T > 0.0)) throw ValidationError("delay.T must be > 0");
        if (N < 1) throw ValidationError("delay.N must be >= 1");
        if (M < 1) throw ValidationError("delay.M must be >= 1");
        if (!(newton_tol > 0.0)) throw ValidationError("delay.newton_tol must be > 0");
        if (!(picard_tol > 0.0)) throw ValidationError("delay.picard_tol must be > 0");
        if (!(cg_tol > 0.0)) throw ValidationError("delay.cg_tol must be > 0");
        if (newton_max < 1) throw ValidationError("delay.newton_max must be >= 1");
        if (picard_max < 1) throw ValidationError("delay.picard_max must be >= 1");
        if (!(newton_damping > 0.0) || newton_damping > 1.0)
            throw ValidationError("delay.newton_damping must be in (0, 1]");
    }
};

struct InitialData {
    Field mu0;
    Field rho0;
    Field xi0;

    void validate(const ScalarGraph& graph) const {
        require_same_grid(mu0, rho0, "initial data");
        require_same_grid(mu0, xi0, "initial data");
        if (!mu0.all_finite() || !rho0.all_finite() || !xi0.all_finite())
            throw ValidationError("initial data: non-finite values");
        if (mu0.min() < 0.0) throw ValidationError("initial data: mu0 must be >= 0");
        for (int i = 0; i < rho0.size(); ++i) {
            if (!graph.in_closure(rho0[i]))
                throw ValidationError("initial data: rho0 outside closure of D(beta) at cell " +
                                      std::to_string(i));
            if (graph.single_valued_at(rho0[i]) &&
                std::abs(xi0[i] - graph.beta(rho0[i])) > 1e-9)
                throw ValidationError("initial data: xi0 not a selection of beta(rho0) at cell " +
                                      std::to_string(i));
        }
    }
};

// xi0 from the minimal section of beta; requires rho0 where the graph admits one.
inline InitialData make_initial_data(const Field& mu0, const Field& rho0,
                                     const ScalarGraph& graph) {
    InitialData d;
    d.mu0 = mu0;
    d.rho0 = rho0;
    d.xi0 = Field(rho0.grid, 0.0);
    for (int i = 0; i < rho0.size(); ++i) {
        if (graph.kind == GraphKind::Logarithmic && !graph.single_valued_at(rho0[i]))
            throw ValidationError("initial data: log graph needs rho0 strictly inside (0,1)");
        d.xi0.v[i] = graph.minimal_section(rho0[i]);
    }
    return d;
}

struct StepStats {
    int newton_iters = 0;
    int picard_iters = 0;
    int substeps = 1;
    double newton_residual = 0.0;
    double picard_delta = 0.0;
};

struct Trajectory {
    Grid grid;
    DelayConfig cfg;
    std::vector<double> times;
    std::vector<Field> mu, rho, xi;
    std::vector<Field> rho_src;  // populated only in manufactured mode
    std::vector<StepStats> stats;

    int steps() const { return static_cast<int>(times.size()); }
};

// Per-cell, per-time source fields for manufactured-solution runs.
struct ManufacturedSources {
    std::function<double(double x, double y, double t)> mu_src;
    std::function<double(double x, double y, double t)> rho_src;
};

// (T_tau v)(t): mu0 for t <= tau (the single point t = tau is measure-zero and
// mapped to mu0), otherwise the nearest stored level at or below t - tau.
inline Field translate(const std::vector<double>& times, const std::vector<Field>& mu_hist,
                       double tau, double t, const Field& mu0) {
    const double tiny = 1e-12 * (std::abs(t) + tau + 1.0);
    if (t <= tau + tiny) return mu0;
    const double target = t - tau;
    if (times.size() < 2) {
        if (target <= tiny && !times.empty()) return mu_hist.front();
        throw HistoryGap("translate: required level at t - tau not yet stored");
    }
    const double h_stored = times[1] - times[0];
    const auto required = static_cast<long long>(std::floor((target + tiny) / h_stored));
    if (required >= static_cast<long long>(times.size()))
        throw HistoryGap("translate: required level at t - tau not yet stored");
    return mu_hist[static_cast<size_t>(required)];
}

inline Field translate(const Trajectory& traj, double tau, double t, const Field& mu0) {
    return translate(traj.times, traj.mu, tau, t, mu0);
}

namespace detail {

inline Field eval_source(const std::function<double(double, double, double)>& f,
                         const Grid& g, double t) {
    Field out(g, 0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            out.v[g.id(i, j)] = f(g.xc(i), g.dim == 2 ? g.yc(j) : 0.0, t);
    return out;
}

}  // namespace detail

struct RhoStepResult {
    Field rho;
    Field xi;
    int newton_iters = 0;
    double residual = 0.0;
    int cg_iters = 0;
};

// One implicit-Euler step of the regularized phase equation:
//   (rho+ - rho)/h - lap(rho+) + beta_eps(rho+) + pi(rho+) = mu_d g'(rho+) + src,
// solved by damped semismooth Newton; returns rho+ and xi+ = beta_eps(rho+).
inline RhoStepResult rho_step(const Field& rho_prev, const Field& mu_delayed, double h,
                              const PotentialSpec& spec, double eps,
                              const DelayConfig& cfg, const Field* src = nullptr) {
    require_same_grid(rho_prev, mu_delayed, "rho_step");
    if (!(h > 0.0)) throw InvalidScenario("rho_step: h must be > 0");
    const Grid& g = rho_prev.grid;
    const ScalarGraph& graph = spec.graph;

    Field rho = rho_prev;
    Field residual(g), beta_vals(g), weight(g);

    auto compute_residual = [&](const Field& r, Field& out, Field& bv) {
        Field lap = laplacian_neumann(r);
        for (int i = 0; i < r.size(); ++i) {
            bv.v[i] = yosida_eval(graph, eps, r[i]);
            out.v[i] = (r[i] - rho_prev[i]) / h - lap[i] + bv[i] + spec.pi(r[i]) -
                       mu_delayed[i] * spec.gprime(r[i]);
            if (src) out.v[i] -= (*src)[i];
        }
    };

    compute_residual(rho, residual, beta_vals);
    double res_norm = norm_l2(residual);
    int total_cg = 0;

    for (int it = 0; it < cfg.newton_max; ++it) {
        if (res_norm <= cfg.newton_tol)
            return {std::move(rho), std::move(beta_vals), it, res_norm, total_cg};

        for (int i = 0; i < rho.size(); ++i) {
            weight.v[i] = yosida_prime(graph, eps, rho[i]) + spec.pi_prime(rho[i]) -
                          mu_delayed[i] * spec.gsecond(rho[i]);
            if (1.0 / h + weight[i] <= 0.0)
                throw IndefiniteJacobian("rho_step: Jacobian diagonal non-positive at cell " +
                                         std::to_string(i));
        }
        auto apply_jacobian = [&](const Field& d, Field& out) {
            out = laplacian_neumann(d);
            for (int i = 0; i < d.size(); ++i)
                out.v[i] = d[i] / h - out[i] + weight[i] * d[i];
        };
        Field neg_res(g);
        for (int i = 0; i < neg_res.size(); ++i) neg_res.v[i] = -residual[i];

        CgResult cgres;
        try {
            cgres = cg_solve(apply_jacobian, neg_res, cfg.cg_tol, cfg.cg_max);
        } catch (const CgBreakdown& e) {
            throw IndefiniteJacobian(std::string("rho_step: ") + e.what());
        }
        total_cg += cgres.iterations;

        // Line search on the residual norm.
        double lambda = cfg.newton_damping;
        Field trial(g), trial_res(g), trial_beta(g);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            for (int i = 0; i < rho.size(); ++i) trial.v[i] = rho[i] + lambda * cgres.x[i];
            compute_residual(trial, trial_res, trial_beta);
            const double trial_norm = norm_l2(trial_res);
            if (trial_norm <= (1.0 - 1e-4 * lambda) * res_norm) {
                rho = trial;
                residual = trial_res;
                beta_vals = trial_beta;
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted)
            throw NewtonNoConvergence("rho_step: line search stalled at residual " +
                                      std::to_string(res_norm));
    }
    if (res_norm <= cfg.newton_tol)
        return {std::move(rho), std::move(beta_vals), cfg.newton_max, res_norm, total_cg};
    throw NewtonNoConvergence("rho_step: iteration budget exhausted, residual " +
                              std::to_string(res_norm));
}

struct MuStepResult {
    Field mu;
    int picard_iters = 0;
    double picard_delta = 0.0;
    int cg_iters = 0;
};

// One implicit-Euler step of the mu-equation (see file header). Picard freezes
// kappa at the previous iterate; each pass is one SPD CG solve. kappa is
// evaluated at m clamped to 0 (the extension to negative m), inert once the
// M-matrix property holds.
inline MuStepResult mu_step(const Field& mu_prev, const Field& rho_prev,
                            const Field& rho_next, double h, const PotentialSpec& spec,
                            const ConductivitySpec& cond, const DelayConfig& cfg,
                            const Field* src = nullptr) {
    require_same_grid(mu_prev, rho_prev, "mu_step");
    require_same_grid(mu_prev, rho_next, "mu_step");
    if (!(h > 0.0)) throw InvalidScenario("mu_step: h must be > 0");
    const Grid& g = mu_prev.grid;

    Field react(g), rhs(g);
    for (int i = 0; i < mu_prev.size(); ++i) {
        const double gp = spec.g(rho_prev[i]);
        const double gn = spec.g(rho_next[i]);
        react.v[i] = (1.0 + gp + gn) / h;
        if (!(react[i] > 0.0))
            throw LostPositivity("mu_step: reaction diagonal 1 + g(rho) + g(rho+) <= 0 at cell " +
                                 std::to_string(i) + "; M-matrix condition violated");
        rhs.v[i] = (1.0 + 2.0 * gp) * mu_prev[i] / h;
        if (src) rhs.v[i] += (*src)[i];
    }

    Field mu_iter = cfg.picard_init == PicardInit::Previous ? mu_prev : Field(g, 0.0);
    Field kappa_cells(g), jacobi(g);
    int total_cg = 0;

    for (int p = 1; p <= cfg.picard_max; ++p) {
        for (int i = 0; i < mu_iter.size(); ++i)
            kappa_cells.v[i] = cond.kappa(std::max(mu_iter[i], 0.0), rho_next[i]);

        auto apply = [&](const Field& u, Field& out) {
            out = div_kappa_grad(kappa_cells, u);
            for (int i = 0; i < u.size(); ++i) out.v[i] = react[i] * u[i] - out[i];
        };
        jacobi = react;
        for_each_face(g, [&](int l, int r, double hf, double) {
            const double kf = 0.5 * (kappa_cells[l] + kappa_cells[r]);
            jacobi.v[l] += kf / (hf * hf);
            jacobi.v[r] += kf / (hf * hf);
        });

        CgOptions opts;
        opts.x0 = &mu_iter;
        opts.jacobi_diag = &jacobi;
        CgResult cgres = cg_solve(apply, rhs, cfg.cg_tol, cfg.cg_max, opts);
        total_cg += cgres.iterations;

        double delta = 0.0;
        for (int i = 0; i < mu_iter.size(); ++i) {
            const double d = cgres.x[i] - mu_iter[i];
            delta += d * d;
        }
        delta = std::sqrt(delta * g.cell_volume());
        mu_iter = std::move(cgres.x);

        if (delta <= cfg.picard_tol) {
            if (mu_iter.min() < -1e-12)
                throw LostPositivity("mu_step: min mu = " + std::to_string(mu_iter.min()) +
                                     " < -1e-12");
            return {std::move(mu_iter), p, delta, total_cg};
        }
    }
    throw PicardNoConvergence("mu_step: no convergence in " + std::to_string(cfg.picard_max) +
                              " passes");
}

namespace detail {

// Indefiniteness fallback: redo the step as 2^r substeps landing on the same
// grid time; only the landing state is recorded. Delayed history within the
// substep window keeps the nearest-at-or-below rule.
inline RhoStepResult rho_step_with_retry(const Trajectory& traj, const Field& rho_prev,
                                         double t_new, double h, const PotentialSpec& spec,
                                         double eps, const DelayConfig& cfg,
                                         const ManufacturedSources* srcs, int& substeps_used) {
    const double tau = cfg.tau();
    for (int attempt = 0; attempt <= 3; ++attempt) {
        const int nsub = 1 << attempt;
        const double hs = h / nsub;
        try {
            Field rho = rho_prev;
            RhoStepResult last;
            int newton_total = 0, cg_total = 0;
            for (int s = 1; s <= nsub; ++s) {
                const double ts = t_new - h + s * hs;
                Field mu_d = translate(traj.times, traj.mu, tau, ts, traj.mu.front());
                std::optional<Field> src;
                if (srcs) src = eval_source(srcs->rho_src, rho_prev.grid, ts);
                last = rho_step(rho, mu_d, hs, spec, eps, cfg, src ? &*src : nullptr);
                newton_total += last.newton_iters;
                cg_total += last.cg_iters;
                rho = last.rho;
            }
            last.rho = std::move(rho);
            last.newton_iters = newton_total;
            last.cg_iters = cg_total;
            substeps_used = nsub;
            return last;
        } catch (const IndefiniteJacobian&) {
            if (attempt == 3) throw;
        }
    }
    throw NewtonNoConvergence("rho_step_with_retry: unreachable");
}

}  // namespace detail

// March t = 0 .. T. Outer loop over the delay windows I_n = [0, n*tau]
// (each window appends its new segment; earlier segments are already final),
// inner implicit-Euler steps of size h = tau/M. Within every step rho comes
// first, from the delayed history only, then mu.
inline Trajectory solve(const DelayConfig& cfg, const InitialData& data,
                        const PotentialSpec& spec, const ConductivitySpec& cond,
                        const ManufacturedSources* sources = nullptr) {
    cfg.validate();
    data.validate(spec.graph);

    const Grid& g = data.mu0.grid;
    const double h = cfg.h();
    const double eps = cfg.eps_eff();

    Trajectory traj;
    traj.grid = g;
    traj.cfg = cfg;
    traj.times.push_back(0.0);
    traj.mu.push_back(data.mu0);
    traj.rho.push_back(data.rho0);
    traj.xi.push_back(data.xi0);
    traj.stats.push_back({});
    if (sources) traj.rho_src.push_back(Field(g, 0.0));

    for (int n = 1; n <= cfg.N; ++n) {
        for (int m = 1; m <= cfg.M; ++m) {
            const int k = (n - 1) * cfg.M + m;
            const double t = k * h;
            try {
                StepStats st;
                RhoStepResult rs = detail::rho_step_with_retry(
                    traj, traj.rho.back(), t, h, spec, eps, cfg, sources, st.substeps);
                std::optional<Field> mu_src;
                if (sources) mu_src = detail::eval_source(sources->mu_src, g, t);
                MuStepResult ms = mu_step(traj.mu.back(), traj.rho.back(), rs.rho, h, spec,
                                          cond, cfg, mu_src ? &*mu_src : nullptr);
                st.newton_iters = rs.newton_iters;
                st.newton_residual = rs.residual;
                st.picard_iters = ms.picard_iters;
                st.picard_delta = ms.picard_delta;

                traj.times.push_back(t);
                traj.rho.push_back(std::move(rs.rho));
                traj.xi.push_back(std::move(rs.xi));
                traj.mu.push_back(std::move(ms.mu));
                traj.stats.push_back(st);
                if (sources)
                    traj.rho_src.push_back(detail::eval_source(sources->rho_src, g, t));
            } catch (const Error& e) {
                throw Error(e.code(), "step " + std::to_string(k) + " (t = " +
                                          std::to_string(t) + "): " + e.what());
            }
        }
    }
    return traj;
}

// tau-refinement Cauchy study: solve for N, 2N, 4N, ... (h = tau/M refines in
// a fixed ratio) and report pairwise differences on the coarser time grid.
// The Yosida parameter is frozen at its base-level value so every level
// discretizes the same regularized system; with the default schedule eps = tau
// the equation itself would drift across levels and spoil the comparison.
struct StudyPair {
    int N_coarse = 0, N_fine = 0;
    double diff_mu_l2q = 0.0;   // ||mu_fine - mu_coarse|| in discrete L2(Q)
    double diff_rho_linfq = 0.0;  // in Linf(Q)
};

struct ConvergenceTable {
    std::vector<int> Ns;
    std::vector<Trajectory> trajectories;
    std::vector<StudyPair> pairs;
};

inline ConvergenceTable refine_study(const DelayConfig& base_cfg, const InitialData& data,
                                     const PotentialSpec& spec, const ConductivitySpec& cond,
                                     int levels,
                                     const ManufacturedSources* sources = nullptr) {
    if (levels < 2) throw InvalidScenario("refine_study: levels must be >= 2");
    ConvergenceTable table;
    for (int l = 0; l < levels; ++l) {
        DelayConfig cfg = base_cfg;
        cfg.eps = base_cfg.eps_eff();
        cfg.N = base_cfg.N << l;
        table.Ns.push_back(cfg.N);
        table.trajectories.push_back(solve(cfg, data, spec, cond, sources));
    }
    for (int l = 0; l + 1 < levels; ++l) {
        const Trajectory& coarse = table.trajectories[l];
        const Trajectory& fine = table.trajectories[l + 1];
        const double hc = coarse.cfg.h();
        StudyPair pair;
        pair.N_coarse = table.Ns[l];
        pair.N_fine = table.Ns[l + 1];
        double acc = 0.0, linf = 0.0;
        for (int j = 1; j < coarse.steps(); ++j) {
            const int jf = 2 * j;
            double s2 = 0.0;
            for (int i = 0; i < coarse.mu[j].size(); ++i) {
                const double d = fine.mu[jf][i] - coarse.mu[j][i];
                s2 += d * d;
                linf = std::max(linf, std::abs(fine.rho[jf][i] - coarse.rho[j][i]));
            }
            acc += hc * s2 * coarse.grid.cell_volume();
        }
        pair.diff_mu_l2q = std::sqrt(acc);
        pair.diff_rho_linfq = linf;
        table.pairs.push_back(pair);
    }
    return table;
}

// Manufactured 1D case built from
//   mu*(x,t) = 2 + cos(pi x) e^{-t},  rho*(x,t) = 1/2 + (1/4) cos(pi x) e^{-t}
// (zero Neumann flux). The rho-source uses the delayed mu*, so the pair is an
// exact solution of the delayed continuous system for the config's tau.
struct ManufacturedCase {
    ManufacturedSources sources;
    std::function<double(double, double)> mu_exact;   // (x, t)
    std::function<double(double, double)> rho_exact;  // (x, t)
};

inline ManufacturedCase make_manufactured_1d(const PotentialSpec& spec,
                                             const ConductivitySpec& cond,
                                             const DelayConfig& cfg) {
    const double pi_c = std::numbers::pi;
    const double tau = cfg.tau();
    const double eps = cfg.eps_eff();
    const ScalarGraph graph = spec.graph;

    auto mu_e = [pi_c](double x, double t) { return 2.0 + std::cos(pi_c * x) * std::exp(-t); };
    auto rho_e = [pi_c](double x, double t) {
        return 0.5 + 0.25 * std::cos(pi_c * x) * std::exp(-t);
    };

    ManufacturedCase mc;
    mc.mu_exact = mu_e;
    mc.rho_exact = rho_e;

    // Copies keep the case self-contained.
    mc.sources.mu_src = [pi_c, cond, g = spec.g, gp = spec.gprime](double x, double, double t) {
        const double c = std::cos(pi_c * x), s = std::sin(pi_c * x), e = std::exp(-t);
        const double mu = 2.0 + c * e, rho = 0.5 + 0.25 * c * e;
        const double mu_t = -c * e, rho_t = -0.25 * c * e;
        const double mu_x = -pi_c * s * e, rho_x = -0.25 * pi_c * s * e;
        const double mu_xx = -pi_c * pi_c * c * e;
        const double dm = 1e-6 * (1.0 + std::abs(mu));
        const double kappa_m = (cond.kappa(mu + dm, rho) - cond.kappa(mu - dm, rho)) / (2.0 * dm);
        const double kappa_x = kappa_m * mu_x + cond.kappa_r(mu, rho) * rho_x;
        const double diffusion = kappa_x * mu_x + cond.kappa(mu, rho) * mu_xx;
        return (1.0 + 2.0 * g(rho)) * mu_t + mu * gp(rho) * rho_t - diffusion;
    };

    mc.sources.rho_src = [pi_c, tau, eps, graph, mu_e, pi_fn = spec.pi,
                          gp = spec.gprime](double x, double, double t) {
        const double c = std::cos(pi_c * x), e = std::exp(-t);
        const double rho = 0.5 + 0.25 * c * e;
        const double rho_t = -0.25 * c * e;
        const double rho_xx = -0.25 * pi_c * pi_c * c * e;
        const double mu_delayed = t > tau ? mu_e(x, t - tau) : mu_e(x, 0.0);
        return rho_t - rho_xx + yosida_eval(graph, eps, rho) + pi_fn(rho) -
               mu_delayed * gp(rho);
    };
    return mc;
}

}  // namespace chd
