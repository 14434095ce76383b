// Command orchestration behind the CLI: build run inputs from a config,
// dispatch solve / study / verify, write artifacts, map failures to exit
// codes (0 pass, 2 audit failure, 3 solver failure, 4 config/format error).

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <future>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "chd/config.hpp"
#include "chd/errors.hpp"
#include "chd/estimates.hpp"
#include "chd/io.hpp"
#include "chd/registry.hpp"
#include "chd/scheme.hpp"

namespace chd {

inline constexpr int kExitPass = 0;
inline constexpr int kExitAuditFailure = 2;
inline constexpr int kExitSolverFailure = 3;
inline constexpr int kExitConfigError = 4;

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunInputs {
    Grid grid;
    PotentialSpec spec;
    ConductivitySpec cond;
    DelayConfig delay;
    InitialData data;
    AuditOptions audit_opts;
    std::vector<std::string> audits;
};

inline Field cosine_profile(const Grid& g, double base, double amp) {
    Field f(g, base);
    const double pi = std::numbers::pi;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double v = std::cos(pi * g.xc(i) / g.Lx);
            if (g.dim == 2) v *= std::cos(pi * g.yc(j) / g.Ly);
            f.v[g.id(i, j)] = base + amp * v;
        }
    return f;
}

inline RunInputs build_inputs(const RunConfig& cfg,
                              const std::filesystem::path& base_dir = ".") {
    RunInputs in;
    in.grid = cfg.dim == 1 ? Grid::line(cfg.cells[0], cfg.lengths[0])
                           : Grid::box(cfg.cells[0], cfg.cells[1], cfg.lengths[0],
                                       cfg.lengths[1]);
    in.spec = make_potential(cfg.graph, cfg.graph_c, cfg.f2_a, cfg.f2_b, cfg.g, cfg.g_param);
    in.cond = make_conductivity(cfg.kappa, cfg.kappa_kmin, cfg.kappa_kmax);
    in.delay = cfg.delay;

    if (cfg.profile == "cosine") {
        in.data = make_initial_data(cosine_profile(in.grid, cfg.mu0_base, cfg.mu0_amp),
                                    cosine_profile(in.grid, cfg.rho0_base, cfg.rho0_amp),
                                    in.spec.graph);
    } else if (cfg.profile == "constant") {
        in.data = make_initial_data(Field(in.grid, cfg.mu0_base), Field(in.grid, cfg.rho0_base),
                                    in.spec.graph);
    } else {
        Field mu0 = read_field_csv(base_dir / cfg.mu0_file);
        Field rho0 = read_field_csv(base_dir / cfg.rho0_file);
        if (!(mu0.grid == in.grid) || !(rho0.grid == in.grid))
            throw ValidationError("initial data files do not match the configured grid");
        if (!cfg.xi0_file.empty()) {
            in.data.mu0 = mu0;
            in.data.rho0 = rho0;
            in.data.xi0 = read_field_csv(base_dir / cfg.xi0_file);
        } else {
            in.data = make_initial_data(mu0, rho0, in.spec.graph);
        }
    }

    in.audit_opts.weighted_rel = cfg.tol_weighted;
    in.audit_opts.nonneg_floor = -cfg.tol_nonneg;
    in.audit_opts.xi_rel = cfg.tol_xi;
    in.audit_opts.gronwall_C = cfg.gronwall_C;
    in.audit_opts.drift_C = cfg.drift_C;
    in.audit_opts.id_coeff = cfg.id_coeff;
    in.audits = cfg.audits_enable.empty() ? audit_names() : cfg.audits_enable;
    return in;
}

inline int exit_code_for(const Error& e) {
    const std::string& c = e.code();
    if (c == "ParseError" || c == "ValidationError" || c == "FormatError")
        return kExitConfigError;
    if (c == "AuditFailure") return kExitAuditFailure;
    return kExitSolverFailure;
}

inline void emit_error(const Error& e, const std::filesystem::path& out_dir,
                       std::ostream& log) {
    const std::string j = error_json(e.code(), e.what());
    log << j << "\n";
    try {
        atomic_write(out_dir / "error.json", j + "\n");
    } catch (...) {
        // out_dir may not be writable; stdout already has the payload
    }
}

namespace detail {

inline std::string snap_name(const char* what, int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05d.csv", what, k);
    return buf;
}

inline void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj,
                             const StepSeries& series, const std::string& config_text,
                             int stride) {
    Json index;
    index["format"] = "chd-trajectory-v1";
    index["stride"] = stride;
    index["times"] = traj.times;
    Json steps = Json::array();
    for (int k = 0; k < traj.steps(); ++k) {
        if (k % stride != 0 && k != traj.steps() - 1) continue;
        Json s;
        s["k"] = k;
        s["t"] = traj.times[k];
        s["mu"] = snap_name("mu", k);
        s["rho"] = snap_name("rho", k);
        s["xi"] = snap_name("xi", k);
        steps.push_back(s);
        write_field_csv(dir / snap_name("mu", k), traj.mu[k]);
        write_field_csv(dir / snap_name("rho", k), traj.rho[k]);
        write_field_csv(dir / snap_name("xi", k), traj.xi[k]);
    }
    index["steps"] = steps;
    index["series"] = "series.csv";
    index["report"] = "report.json";
    index["config_text"] = config_text;
    write_series_csv(dir / "series.csv", series);
    atomic_write(dir / "index.json", index.dump(2) + "\n");
}

}  // namespace detail

// solve <config>: run, audit, write snapshots (stride-decimated), series.csv
// (full resolution), report.json. Exit 0 iff all requested audits pass.
inline int run_solve(const RunConfig& cfg, std::ostream& log) {
    const std::filesystem::path dir = cfg.out_dir;
    try {
        RunInputs in = build_inputs(cfg);
        Trajectory traj = solve(in.delay, in.data, in.spec, in.cond);
        DiagnosticsReport rep = run_audits(traj, in.spec, in.cond, in.audit_opts, in.audits);

        detail::write_trajectory(dir, traj, rep.series, cfg.source_text, cfg.stride);
        atomic_write(dir / "report.json",
                     report_to_json(rep.audits, timestamp_utc()).dump(2) + "\n");

        for (const auto& a : rep.audits)
            log << (a.pass ? "[pass] " : "[FAIL] ") << a.name
                << (a.pass ? "" : " (worst step " + std::to_string(a.worst_step) + ")")
                << "\n";
        return rep.all_pass() ? kExitPass : kExitAuditFailure;
    } catch (const Error& e) {
        emit_error(e, dir, log);
        return exit_code_for(e);
    }
}

struct StudyLevelInfo {
    int N = 0;
    double tau = 0.0, h = 0.0;
    double cap = 0.0;
    double sup_dtrho = 0.0, cum_dtrho_h1 = 0.0;
    double sup_gradK = 0.0, cum_dtmu = 0.0;
    bool audits_pass = true;
};

inline double rel_change(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / scale;
}

// study <config> --levels k: tau-refinement Cauchy study. Exit 0 iff the
// pairwise differences decrease monotonically (pairs below the solver-noise
// floor are exempt) and the caps/monitors are stable within the declared
// percentages (10% for the truncation cap, 15% for the estimate monitors).
inline int run_study(const RunConfig& cfg, int levels, std::ostream& log) {
    const std::filesystem::path dir = cfg.out_dir;
    constexpr double kDiffFloor = 1e-10;
    try {
        if (levels < 2) throw ValidationError("study: levels must be >= 2");
        RunInputs in = build_inputs(cfg);

        std::vector<std::future<Trajectory>> futs;
        for (int l = 0; l < levels; ++l) {
            DelayConfig dc = in.delay;
            dc.eps = in.delay.eps_eff();  // same regularized system on every level
            dc.N = in.delay.N << l;
            futs.push_back(std::async(std::launch::async, [dc, &in] {
                return solve(dc, in.data, in.spec, in.cond);
            }));
        }
        std::vector<Trajectory> trajs;
        for (auto& f : futs) trajs.push_back(f.get());

        std::vector<StudyLevelInfo> info(levels);
        std::vector<StudyPair> pairs;
        for (int l = 0; l < levels; ++l) {
            const Trajectory& traj = trajs[l];
            DiagnosticsReport rep = run_audits(traj, in.spec, in.cond, in.audit_opts,
                                               in.audits);
            StudyLevelInfo& li = info[l];
            li.N = traj.cfg.N;
            li.tau = traj.cfg.tau();
            li.h = traj.cfg.h();
            li.audits_pass = rep.all_pass();
            for (const auto& a : rep.audits)
                if (a.name == "linf_truncation") li.cap = a.extra("cap");
            for (double v : rep.series.dtrho_L2) li.sup_dtrho = std::max(li.sup_dtrho, v);
            for (double v : rep.series.gradK_L2) li.sup_gradK = std::max(li.sup_gradK, v);
            li.cum_dtrho_h1 = rep.series.dtrho_H1_cum.back();
            li.cum_dtmu = rep.series.dtmu_L2_cum.back();
        }
        for (int l = 0; l + 1 < levels; ++l) {
            const Trajectory& coarse = trajs[l];
            const Trajectory& fine = trajs[l + 1];
            StudyPair p;
            p.N_coarse = info[l].N;
            p.N_fine = info[l + 1].N;
            double acc = 0.0, linf = 0.0;
            const double hc = coarse.cfg.h();
            for (int j = 1; j < coarse.steps(); ++j) {
                double s2 = 0.0;
                for (int i = 0; i < coarse.mu[j].size(); ++i) {
                    const double d = fine.mu[2 * j][i] - coarse.mu[j][i];
                    s2 += d * d;
                    linf = std::max(linf, std::abs(fine.rho[2 * j][i] - coarse.rho[j][i]));
                }
                acc += hc * s2 * coarse.grid.cell_volume();
            }
            p.diff_mu_l2q = std::sqrt(acc);
            p.diff_rho_linfq = linf;
            pairs.push_back(p);
        }

        {
            std::ostringstream os;
            os << "level,N,tau,h,diff_mu_L2Q,diff_rho_LinfQ,order_mu,cap,sup_dtrho_L2,"
                  "cum_dtrho_H1,sup_gradK_L2,cum_dtmu_L2\n";
            for (int l = 0; l < levels; ++l) {
                const auto& li = info[l];
                std::string order;
                if (l > 1 && pairs[l - 1].diff_mu_l2q > 0.0)
                    order = fmt_double(
                        std::log2(pairs[l - 2].diff_mu_l2q / pairs[l - 1].diff_mu_l2q));
                os << l << "," << li.N << "," << fmt_double(li.tau) << "," << fmt_double(li.h)
                   << "," << (l > 0 ? fmt_double(pairs[l - 1].diff_mu_l2q) : "")
                   << "," << (l > 0 ? fmt_double(pairs[l - 1].diff_rho_linfq) : "") << ","
                   << order << "," << fmt_double(li.cap) << "," << fmt_double(li.sup_dtrho)
                   << "," << fmt_double(li.cum_dtrho_h1) << "," << fmt_double(li.sup_gradK)
                   << "," << fmt_double(li.cum_dtmu) << "\n";
            }
            atomic_write(dir / "study.csv", os.str());
        }

        for (size_t p = 0; p + 1 < pairs.size(); ++p) {
            const double a = pairs[p].diff_mu_l2q, b = pairs[p + 1].diff_mu_l2q;
            if (a > kDiffFloor && !(b < a))
                throw AuditFailure("study: mu differences not decreasing between pairs (" +
                                   std::to_string(pairs[p].N_coarse) + "," +
                                   std::to_string(pairs[p].N_fine) + ") and (" +
                                   std::to_string(pairs[p + 1].N_coarse) + "," +
                                   std::to_string(pairs[p + 1].N_fine) + ")");
        }
        for (int l = 0; l + 1 < levels; ++l) {
            if (rel_change(info[l].cap, info[l + 1].cap) > 0.10)
                throw AuditFailure("study: truncation cap unstable between N=" +
                                   std::to_string(info[l].N) + " and N=" +
                                   std::to_string(info[l + 1].N));
            for (double rc :
                 {rel_change(info[l].sup_dtrho, info[l + 1].sup_dtrho),
                  rel_change(info[l].cum_dtrho_h1, info[l + 1].cum_dtrho_h1),
                  rel_change(info[l].sup_gradK, info[l + 1].sup_gradK),
                  rel_change(info[l].cum_dtmu, info[l + 1].cum_dtmu)})
                if (rc > 0.15)
                    throw AuditFailure("study: estimate monitor unstable between N=" +
                                       std::to_string(info[l].N) + " and N=" +
                                       std::to_string(info[l + 1].N));
        }
        for (const auto& li : info)
            if (!li.audits_pass)
                throw AuditFailure("study: audits failed at level N=" + std::to_string(li.N));

        log << "study: " << levels << " levels, differences decreasing, monitors stable\n";
        return kExitPass;
    } catch (const Error& e) {
        emit_error(e, dir, log);
        return exit_code_for(e);
    }
}

// verify <dir>: recompute the audits of a saved run from disk and check the
// verdicts reproduce. With stride 1 the full series is rebuilt from the
// snapshots as well. Writes verify_report.json next to the originals.
inline int run_verify(const std::filesystem::path& dir,
                      const std::vector<std::string>& which, std::ostream& log) {
    try {
        Json index;
        try {
            index = Json::parse(read_text(dir / "index.json"));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw FormatError("index.json: " + std::string(e.what()));
        }
        if (!index.contains("format") || index["format"] != "chd-trajectory-v1" ||
            !index.contains("steps") || !index.contains("config_text"))
            throw FormatError("index.json: not a chd-trajectory-v1 index");

        const RunConfig cfg = parse_config(index["config_text"].get<std::string>());
        RunInputs in = build_inputs(cfg);

        StepSeries series = read_series_csv(dir / index["series"].get<std::string>());
        const int expected_steps = cfg.delay.N * cfg.delay.M + 1;
        if (series.steps() != expected_steps)
            throw FormatError("series.csv: expected " + std::to_string(expected_steps) +
                              " rows, got " + std::to_string(series.steps()));

        Json report;
        try {
            report = Json::parse(read_text(dir / index["report"].get<std::string>()));
        } catch (const std::exception& e) {
            throw FormatError("report.json: " + std::string(e.what()));
        }

        // Snapshot pass: formats valid, grids match, consistent with the series.
        std::vector<int> stored_ks;
        Trajectory traj;
        traj.grid = in.grid;
        traj.cfg = cfg.delay;
        for (const auto& s : index["steps"]) {
            const int k = s["k"].get<int>();
            stored_ks.push_back(k);
            Field mu = read_field_csv(dir / s["mu"].get<std::string>());
            Field rho = read_field_csv(dir / s["rho"].get<std::string>());
            Field xi = read_field_csv(dir / s["xi"].get<std::string>());
            if (!(mu.grid == in.grid) || !(rho.grid == in.grid) || !(xi.grid == in.grid))
                throw FormatError("snapshot grid mismatch at step " + std::to_string(k));
            if (std::abs(mu.min() - series.min_mu[k]) > 1e-12 * (1.0 + std::abs(mu.min())))
                throw FormatError("snapshot mu_" + std::to_string(k) +
                                  " inconsistent with series.csv");
            traj.times.push_back(index["times"][k].get<double>());
            traj.mu.push_back(std::move(mu));
            traj.rho.push_back(std::move(rho));
            traj.xi.push_back(std::move(xi));
            traj.stats.push_back({});
        }

        // Full-field recomputation when every step is on disk.
        if (index["stride"].get<int>() == 1 &&
            static_cast<int>(stored_ks.size()) == expected_steps) {
            StepSeries redo = compute_step_series(traj, in.spec, in.cond, in.audit_opts);
            auto stored_cols = series_fields(series);
            auto redo_cols = series_fields(redo);
            const auto& names = series_columns();
            for (size_t c = 0; c < names.size(); ++c) {
                if (names[c] == "newton_res" || names[c] == "picard_delta") continue;
                for (int k = 0; k < expected_steps; ++k) {
                    const double a = (*stored_cols[c])[k], b = (*redo_cols[c])[k];
                    if (std::abs(a - b) > 1e-9 * (1.0 + std::abs(a)))
                        throw FormatError("series.csv column '" + names[c] +
                                          "' does not reproduce from snapshots at step " +
                                          std::to_string(k));
                }
            }
        }

        // Re-verdict every stored audit from its own series.
        std::vector<AuditResult> redone;
        bool verdicts_match = true, all_pass = true;
        for (const auto& aj : report.at("audits")) {
            AuditResult stored = audit_from_json(aj);
            if (!which.empty() &&
                std::find(which.begin(), which.end(), stored.name) == which.end())
                continue;
            AuditResult fresh = stored;
            reverdict(fresh);
            if (fresh.pass != stored.pass || fresh.worst_step != stored.worst_step)
                verdicts_match = false;
            all_pass = all_pass && fresh.pass;
            redone.push_back(std::move(fresh));
            log << (redone.back().pass ? "[pass] " : "[FAIL] ") << redone.back().name << "\n";
        }
        atomic_write(dir / "verify_report.json",
                     report_to_json(redone, timestamp_utc()).dump(2) + "\n");

        if (!verdicts_match)
            throw AuditFailure("verify: stored verdicts do not reproduce");
        return all_pass ? kExitPass : kExitAuditFailure;
    } catch (const Error& e) {
        emit_error(e, dir, log);
        return exit_code_for(e);
    } catch (const std::exception& e) {
        // malformed-but-parseable artifacts (wrong JSON types, missing keys)
        FormatError fe("verify: " + std::string(e.what()));
        emit_error(fe, dir, log);
        return kExitConfigError;
    }
}

}  // namespace chd
