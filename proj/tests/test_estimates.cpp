#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chd/estimates.hpp"
#include "chd/registry.hpp"
#include "chd/scheme.hpp"

using namespace chd;

namespace {

InitialData cosine_data_1d(const Grid& g, const ScalarGraph& graph, double mu_base = 2.0,
                           double mu_amp = 1.0, double rho_base = 0.5,
                           double rho_amp = 0.2) {
    Field mu0(g), rho0(g);
    for (int i = 0; i < g.nx; ++i) {
        const double c = std::cos(std::numbers::pi * g.xc(i) / g.Lx);
        mu0.v[i] = mu_base + mu_amp * c;
        rho0.v[i] = rho_base + rho_amp * c;
    }
    return make_initial_data(mu0, rho0, graph);
}

struct SmallRun {
    PotentialSpec spec;
    ConductivitySpec cond;
    DelayConfig cfg;
    Trajectory traj;
};

SmallRun default_small_run(int cells = 32, double T = 0.1, int N = 8, int M = 2) {
    SmallRun run;
    run.spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    run.cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    run.cfg.T = T;
    run.cfg.N = N;
    run.cfg.M = M;
    Grid g = Grid::line(cells);
    run.traj = solve(run.cfg, cosine_data_1d(g, run.spec.graph), run.spec, run.cond);
    return run;
}

}  // namespace

TEST_CASE("weighted energy: constants are steady, W0 normalization") {
    Grid g = Grid::box(8, 8);
    PotentialSpec spec = make_potential("zero", 1.0, 0.0, 0.0, "const", 0.0);  // g == 0
    ConductivitySpec cond = make_conductivity("const", 1.0, 1.0);
    DelayConfig cfg;
    cfg.T = 0.2;
    cfg.N = 4;
    cfg.M = 2;
    InitialData data = make_initial_data(Field(g, 1.0), Field(g, 0.3), spec.graph);
    Trajectory traj = solve(cfg, data, spec, cond);
    StepSeries s = compute_step_series(traj, spec, cond);

    CHECK(s.weighted_energy.front() == doctest::Approx(1.0).epsilon(1e-13));
    for (int k = 0; k < s.steps(); ++k) {
        CHECK(s.weighted_energy[k] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.cum_dissipation[k] <= 1e-14);
    }
    AuditResult a = audit_weighted_energy(s, {});
    CHECK(a.pass);
}

TEST_CASE("weighted energy: default scenario passes and telescopes step by step") {
    SmallRun run = default_small_run();
    StepSeries s = compute_step_series(run.traj, run.spec, run.cond);
    AuditResult a = audit_weighted_energy(s, {});
    CHECK(a.pass);

    // step-by-step summation oracle for the discrete chain rule: testing the
    // mu-step with mu^k telescopes exactly, leaving only the implicit-Euler
    // dissipation weighted at the old level,
    //   (W + 2D)^k - (W + 2D)^{k-1} = -sum_i (1+2g(rho^{k-1})) (dmu_i)^2 vol.
    const Trajectory& t = run.traj;
    const double vol = t.grid.cell_volume();
    for (int k = 1; k < t.steps(); ++k) {
        double rhs = 0.0;
        for (int i = 0; i < t.grid.cells(); ++i) {
            const double a_old = 1.0 + 2.0 * run.spec.g(t.rho[k - 1][i]);
            const double dmu = t.mu[k][i] - t.mu[k - 1][i];
            rhs -= a_old * dmu * dmu * vol;
        }
        const double lhs = s.weighted_energy[k] + 2.0 * s.cum_dissipation[k] -
                           s.weighted_energy[k - 1] - 2.0 * s.cum_dissipation[k - 1];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7).scale(1.0 + s.weighted_energy[0]));
        CHECK(lhs <= 1e-9);  // every step dissipates
    }
}

TEST_CASE("phase energy: gradient flow dissipates, minimum is steady") {
    Grid g = Grid::line(24);
    PotentialSpec spec = make_potential("zero", 1.0, 0.0, 1.0, "const", 0.0);  // f2 = rho^2/2
    ConductivitySpec cond = make_conductivity("const", 1.0, 1.0);
    DelayConfig cfg;
    cfg.T = 0.2;
    cfg.N = 4;
    cfg.M = 4;
    Field mu0(g, 0.0), rho0(g);
    for (int i = 0; i < g.nx; ++i)
        rho0.v[i] = 0.4 + 0.3 * std::cos(std::numbers::pi * g.xc(i));
    Trajectory traj = solve(cfg, make_initial_data(mu0, rho0, spec.graph), spec, cond);
    StepSeries s = compute_step_series(traj, spec, cond);
    for (int k = 1; k < s.steps(); ++k)
        CHECK(s.phase_energy[k] <= s.phase_energy[k - 1] + 1e-12);
    CHECK(audit_phase_energy(s, {}).pass);

    // constant rho0 at the minimum of f = f1 + f2: E constant
    Trajectory steady =
        solve(cfg, make_initial_data(Field(g, 0.0), Field(g, 0.0), spec.graph), spec, cond);
    StepSeries s2 = compute_step_series(steady, spec, cond);
    for (int k = 0; k < s2.steps(); ++k)
        CHECK(s2.phase_energy[k] == doctest::Approx(s2.phase_energy[0]).epsilon(1e-12));
}

TEST_CASE("phase energy: default scenario within the Gronwall-style bound") {
    SmallRun run = default_small_run();
    StepSeries s = compute_step_series(run.traj, run.spec, run.cond);
    AuditResult a = audit_phase_energy(s, {});
    CHECK(a.pass);
    CHECK(a.extra("E0") == doctest::Approx(s.phase_energy.front()));
}

TEST_CASE("phase energy bound and weighted defect are stable across tau halvings") {
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    Grid g = Grid::line(32);
    InitialData data = cosine_data_1d(g, spec.graph);
    DelayConfig base;
    base.T = 0.1;
    base.N = 4;
    base.M = 2;
    base.eps = 1e-2;
    ConvergenceTable table = refine_study(base, data, spec, cond, 3);

    std::vector<double> supE, defect;
    for (const auto& traj : table.trajectories) {
        StepSeries s = compute_step_series(traj, spec, cond);
        double se = 0.0;
        for (double e : s.phase_energy) se = std::max(se, e);
        supE.push_back(se);
        defect.push_back(s.weighted_energy.front() - s.weighted_energy.back() -
                         2.0 * s.cum_dissipation.back());
    }
    for (size_t l = 0; l + 1 < supE.size(); ++l)
        CHECK(std::abs(supE[l] - supE[l + 1]) <= 0.10 * std::max(supE[l], supE[l + 1]));

    // the weighted-energy equality defect is pure implicit-Euler dissipation:
    // nonnegative and O(h)
    for (double d : defect) CHECK(d >= 0.0);
    for (size_t l = 0; l + 1 < defect.size(); ++l) {
        const double ratio = defect[l] / defect[l + 1];
        CHECK(ratio >= 1.5);
        CHECK(ratio <= 2.5);
    }
}

TEST_CASE("nonnegativity: zero stays zero, default passes") {
    Grid g = Grid::line(16);
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    DelayConfig cfg;
    cfg.T = 0.1;
    cfg.N = 4;
    cfg.M = 2;
    Trajectory traj =
        solve(cfg, make_initial_data(Field(g, 0.0), Field(g, 0.4), spec.graph), spec, cond);
    StepSeries s = compute_step_series(traj, spec, cond);
    for (int k = 0; k < s.steps(); ++k) {
        CHECK(s.min_mu[k] >= -1e-12);
        CHECK(s.max_mu[k] <= 1e-12);
    }
    CHECK(audit_nonnegativity(s, {}).pass);

    SmallRun run = default_small_run();
    CHECK(audit_nonnegativity(compute_step_series(run.traj, run.spec, run.cond), {}).pass);
}

TEST_CASE("linf truncation: no-coupling run has zero cap, y is monotone") {
    Grid g = Grid::line(24);
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "const", 0.3);  // g' == 0
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    DelayConfig cfg;
    cfg.T = 0.1;
    cfg.N = 4;
    cfg.M = 2;
    Trajectory traj = solve(cfg, cosine_data_1d(g, spec.graph), spec, cond);
    AuditResult a = audit_linf_truncation(traj, {});
    CHECK(a.pass);
    CHECK(a.extra("cap") <= 1e-12);
    for (double y : a.col("y")) CHECK(y <= 1e-20);

    SmallRun run = default_small_run();
    AuditResult b = audit_linf_truncation(run.traj, {});
    CHECK(b.pass);
    const auto& y = b.col("y");
    for (size_t i = 1; i < y.size(); ++i) CHECK(y[i] <= y[i - 1] + 1e-14);
    CHECK(y.back() == 0.0);

    AuditOptions bad;
    bad.trunc_levels = {0.5};  // below max(mu0)
    CHECK_THROWS_AS(audit_linf_truncation(run.traj, bad), InvalidScenario);
}

TEST_CASE("linf truncation: a genuine overshoot yields a positive, audited cap") {
    // rho0 high with a steep smooth part pulls rho down; g then decreases and
    // the 0D-like update mu+ = mu (1+2g)/(1+g+g+') pushes mu above max(mu0).
    Grid g = Grid::line(8);
    PotentialSpec spec = make_potential("log", 1.0, 0.0, 3.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("const", 1.0, 1.0);
    DelayConfig cfg;
    cfg.T = 0.2;
    cfg.N = 8;
    cfg.M = 2;
    cfg.eps = 1e-2;
    Trajectory traj =
        solve(cfg, make_initial_data(Field(g, 1.0), Field(g, 0.9), spec.graph), spec, cond);
    double global_max = 0.0;
    for (const auto& mu : traj.mu) global_max = std::max(global_max, mu.max());
    REQUIRE(global_max > 1.0 + 1e-6);

    AuditResult a = audit_linf_truncation(traj, {});
    CHECK(a.pass);
    CHECK(a.extra("cap") == doctest::Approx(global_max - 1.0).epsilon(1e-12));
    const auto& y = a.col("y");
    CHECK(y.front() > 0.0);  // level max(mu0) is genuinely exceeded
    for (size_t i = 1; i < y.size(); ++i) CHECK(y[i] <= y[i - 1] + 1e-14);
    CHECK(y.back() == 0.0);
}

TEST_CASE("all audits pass on a nonconstant 2D run") {
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    Grid g = Grid::box(12, 12);
    Field mu0(g), rho0(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const double c = std::cos(std::numbers::pi * g.xc(i)) *
                             std::cos(std::numbers::pi * g.yc(j));
            mu0.v[g.id(i, j)] = 2.0 + c;
            rho0.v[g.id(i, j)] = 0.5 + 0.2 * c;
        }
    DelayConfig cfg;
    cfg.T = 0.1;
    cfg.N = 4;
    cfg.M = 2;
    Trajectory traj = solve(cfg, make_initial_data(mu0, rho0, spec.graph), spec, cond);
    DiagnosticsReport rep = run_audits(traj, spec, cond);
    for (const auto& a : rep.audits) CHECK(a.pass);
}

TEST_CASE("xi L6: zero graph trivial, single-cell equality, default inequality") {
    Grid g1 = Grid::line(1);
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("const", 1.0, 1.0);
    DelayConfig cfg;
    cfg.T = 0.05;
    cfg.N = 5;
    cfg.M = 2;
    Trajectory traj =
        solve(cfg, make_initial_data(Field(g1, 1.0), Field(g1, 0.3), spec.graph), spec, cond);
    StepSeries s = compute_step_series(traj, spec, cond);
    for (int k = 1; k < s.steps(); ++k)
        CHECK(s.xi_L6[k] == doctest::Approx(s.h_L6[k]).epsilon(1e-7));
    CHECK(audit_xi_l6(s, {}).pass);

    PotentialSpec zero_spec = make_potential("zero", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    Grid g = Grid::line(16);
    Trajectory tz = solve(cfg, make_initial_data(Field(g, 1.0), Field(g, 0.4), zero_spec.graph),
                          zero_spec, cond);
    StepSeries sz = compute_step_series(tz, zero_spec, cond);
    for (int k = 0; k < sz.steps(); ++k) CHECK(sz.xi_L6[k] == 0.0);
    CHECK(audit_xi_l6(sz, {}).pass);

    SmallRun run = default_small_run();
    StepSeries sd = compute_step_series(run.traj, run.spec, run.cond);
    AuditResult a = audit_xi_l6(sd, {});
    CHECK(a.pass);

    // independent norm recomputation of both sides at a few steps
    const Trajectory& t = run.traj;
    const double h = run.cfg.h();
    for (int k : {1, 5, t.steps() - 1}) {
        const Field& mu_d = k <= run.cfg.M ? t.mu.front() : t.mu[k - run.cfg.M];
        double xi6 = 0.0, h6 = 0.0;
        for (int i = 0; i < t.grid.cells(); ++i) {
            xi6 += std::pow(std::abs(t.xi[k][i]), 6.0);
            const double hv = -(t.rho[k][i] - t.rho[k - 1][i]) / h - run.spec.pi(t.rho[k][i]) +
                              mu_d[i] * run.spec.gprime(t.rho[k][i]);
            h6 += std::pow(std::abs(hv), 6.0);
        }
        xi6 = std::pow(xi6 * t.grid.cell_volume(), 1.0 / 6.0);
        h6 = std::pow(h6 * t.grid.cell_volume(), 1.0 / 6.0);
        CHECK(xi6 == doctest::Approx(sd.xi_L6[k]).epsilon(1e-12));
        CHECK(h6 == doctest::Approx(sd.h_L6[k]).epsilon(1e-12));
        CHECK(xi6 <= h6 + 1e-8 * (1.0 + h6));
    }
}

TEST_CASE("xi L6 tolerance absorbs Newton-sized perturbations") {
    SmallRun run = default_small_run();
    Trajectory perturbed = run.traj;
    for (auto& xi : perturbed.xi)
        for (auto& v : xi.v) v += 1e-11;
    StepSeries s = compute_step_series(perturbed, run.spec, run.cond);
    CHECK(audit_xi_l6(s, {}).pass);
}

TEST_CASE("gradK identity: exact for constant kappa, holds on the default run") {
    SmallRun run = default_small_run();
    ConductivitySpec one = make_conductivity("const", 1.0, 1.0);
    StepSeries s1 = compute_step_series(run.traj, run.spec, one);
    for (int k = 0; k < s1.steps(); ++k) CHECK(s1.gradK_id_res[k] <= 1e-12);

    StepSeries s2 = compute_step_series(run.traj, run.spec, run.cond);
    AuditResult a = audit_gradK(s2, {});
    CHECK(a.pass);
}

TEST_CASE("gradK identity: K1 term vanishes for spatially constant rho") {
    // g' == 0 and zero graph keep rho exactly constant while mu diffuses
    Grid g = Grid::line(24);
    PotentialSpec spec = make_potential("zero", 1.0, 0.0, 0.0, "const", 0.2);
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    DelayConfig cfg;
    cfg.T = 0.1;
    cfg.N = 4;
    cfg.M = 2;
    Field mu0(g);
    for (int i = 0; i < g.nx; ++i)
        mu0.v[i] = 2.0 + std::cos(std::numbers::pi * g.xc(i));
    Trajectory traj = solve(cfg, make_initial_data(mu0, Field(g, 0.3), spec.graph), spec, cond);
    for (const auto& rho : traj.rho) CHECK(rho.max() - rho.min() <= 1e-13);
    StepSeries s = compute_step_series(traj, spec, cond);
    CHECK(audit_gradK(s, {}).pass);
}

TEST_CASE("gradK identity residual decreases at least first order in spacing") {
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    ConductivitySpec cond = make_conductivity("demo_exp_cos", 1.0, 1.5);
    auto frozen_res = [&](int n) {
        Grid g = Grid::line(n);
        Trajectory t;
        t.grid = g;
        t.cfg = DelayConfig{};
        t.times = {0.0};
        Field mu(g), rho(g), xi(g, 0.0);
        for (int i = 0; i < n; ++i) {
            mu.v[i] = 2.0 + std::sin(2.0 * std::numbers::pi * g.xc(i)) * 0.7;
            rho.v[i] = 0.5 + 0.3 * std::cos(std::numbers::pi * g.xc(i));
        }
        t.mu = {mu};
        t.rho = {rho};
        t.xi = {xi};
        t.stats = {{}};
        return compute_step_series(t, spec, cond).gradK_id_res[0];
    };
    const double r1 = frozen_res(32), r2 = frozen_res(64), r3 = frozen_res(128);
    CHECK(r1 / r2 >= 1.8);
    CHECK(r2 / r3 >= 1.8);
}

TEST_CASE("homogeneous invariant: constant coupling is exact, formula pins I0") {
    Grid g = Grid::line(2);
    PotentialSpec spec = make_potential("log", 1.0, 3.0, 0.0, "const", 0.2);
    ConductivitySpec cond = make_conductivity("const", 1.0, 1.0);
    DelayConfig cfg;
    cfg.T = 0.1;
    cfg.N = 4;
    cfg.M = 2;
    Trajectory traj =
        solve(cfg, make_initial_data(Field(g, 1.0), Field(g, 0.3), spec.graph), spec, cond);
    AuditResult a = audit_homogeneous_invariant(traj, spec, {});
    CHECK(a.pass);
    CHECK(a.extra("I0") == doctest::Approx(std::sqrt(1.4)).epsilon(1e-12));
    for (double v : a.col("invariant"))
        CHECK(v == doctest::Approx(std::sqrt(1.4)).epsilon(1e-12));

    PotentialSpec live = make_potential("log", 1.0, 3.0, 0.0, "smooth_id", 0.1);
    Trajectory t2 =
        solve(cfg, make_initial_data(Field(g, 1.0), Field(g, 0.3), live.graph), live, cond);
    AuditResult b = audit_homogeneous_invariant(t2, live, {});
    CHECK(b.pass);

    Field mu0(g);
    mu0.v[0] = 1.0;
    mu0.v[1] = 1.5;
    Trajectory t3 = solve(cfg, make_initial_data(mu0, Field(g, 0.3), live.graph), live, cond);
    CHECK_THROWS_AS(audit_homogeneous_invariant(t3, live, {}), InvalidScenario);
}

TEST_CASE("audits are pure: identical reruns, reverdict reproduces") {
    SmallRun run = default_small_run(16, 0.05, 4, 2);
    DiagnosticsReport r1 = run_audits(run.traj, run.spec, run.cond);
    DiagnosticsReport r2 = run_audits(run.traj, run.spec, run.cond);
    REQUIRE(r1.audits.size() == r2.audits.size());
    for (size_t i = 0; i < r1.audits.size(); ++i) {
        CHECK(r1.audits[i].pass == r2.audits[i].pass);
        CHECK(r1.audits[i].worst_step == r2.audits[i].worst_step);
        REQUIRE(r1.audits[i].series.size() == r2.audits[i].series.size());
        for (size_t s = 0; s < r1.audits[i].series.size(); ++s)
            for (size_t k = 0; k < r1.audits[i].series[s].second.size(); ++k)
                CHECK(r1.audits[i].series[s].second[k] == r2.audits[i].series[s].second[k]);
        AuditResult copy = r1.audits[i];
        copy.pass = !copy.pass;  // stale verdict must be recomputable
        reverdict(copy);
        CHECK(copy.pass == r1.audits[i].pass);
        CHECK(copy.worst_step == r1.audits[i].worst_step);
    }
    CHECK(r1.all_pass());
}

TEST_CASE("audit failure reporting names the first offending step") {
    SmallRun run = default_small_run(16, 0.05, 4, 2);
    StepSeries s = compute_step_series(run.traj, run.spec, run.cond);
    s.min_mu[3] = -1.0;  // corrupt
    AuditResult a = audit_nonnegativity(s, {});
    CHECK(!a.pass);
    CHECK(a.worst_step == 3);
    CHECK_THROWS_AS(require_pass(a), AuditFailure);
}
