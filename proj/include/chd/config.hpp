// Run configuration: flat key-path INI-style text with typed sections.
// Unknown keys are a hard error; validation aggregates every violation with
// its key path before reporting.

#pragma once

#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chd/errors.hpp"
#include "chd/scheme.hpp"

namespace chd {

struct RunConfig {
    // [grid]
    int dim = 1;
    std::vector<int> cells = {64};
    std::vector<double> lengths = {1.0};

    // [physics]
    std::string graph = "log";
    double graph_c = 1.0;
    double f2_a = 3.0;
    double f2_b = 0.0;
    std::string g = "smooth_id";
    double g_param = 0.1;
    std::string kappa = "demo_exp_cos";
    double kappa_kmin = 1.0;
    double kappa_kmax = 1.5;

    // [delay]
    DelayConfig delay;
    bool eps_auto = true;

    // [initial]
    std::string profile = "cosine";  // cosine | constant | files
    double mu0_base = 2.0, mu0_amp = 1.0;
    double rho0_base = 0.5, rho0_amp = 0.2;
    std::string mu0_file, rho0_file, xi0_file;

    // [audits]
    std::vector<std::string> audits_enable;  // empty = default set
    double tol_weighted = 1e-6;
    double tol_nonneg = 1e-12;
    double tol_xi = 1e-8;
    double gronwall_C = 10.0;
    double drift_C = 10.0;
    double id_coeff = 1.0;

    // [output]
    std::string out_dir = "out";
    int stride = 8;

    std::string source_text;  // verbatim config document, echoed into artifacts
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct ConfigCursor {
    std::map<std::string, std::string> kv;  // "section.key" -> raw value
    std::set<std::string> consumed;
    std::vector<std::string> violations;

    void complain(const std::string& path, const std::string& msg) {
        violations.push_back(path + ": " + msg);
    }

    bool has(const std::string& path) const { return kv.count(path) > 0; }

    std::string take(const std::string& path, const std::string& fallback) {
        auto it = kv.find(path);
        if (it == kv.end()) return fallback;
        consumed.insert(path);
        return it->second;
    }

    double take_double(const std::string& path, double fallback) {
        auto it = kv.find(path);
        if (it == kv.end()) return fallback;
        consumed.insert(path);
        try {
            size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            complain(path, "not a number: '" + it->second + "'");
            return fallback;
        }
    }

    int take_int(const std::string& path, int fallback) {
        auto it = kv.find(path);
        if (it == kv.end()) return fallback;
        consumed.insert(path);
        try {
            size_t pos = 0;
            long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return static_cast<int>(v);
        } catch (...) {
            complain(path, "not an integer: '" + it->second + "'");
            return fallback;
        }
    }

    std::vector<std::string> take_list(const std::string& path) {
        auto it = kv.find(path);
        if (it == kv.end()) return {};
        consumed.insert(path);
        std::vector<std::string> out;
        std::istringstream iss(it->second);
        std::string tok;
        while (iss >> tok) out.push_back(tok);
        return out;
    }
};

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
    detail::ConfigCursor cur;

    // --- syntax pass ---
    std::istringstream iss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(iss, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("line " + std::to_string(lineno) + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ParseError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError("line " + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ParseError("line " + std::to_string(lineno) + ": key outside any section");
        const std::string path = section + "." + key;
        if (cur.kv.count(path))
            throw ParseError("line " + std::to_string(lineno) + ": duplicate key " + path);
        cur.kv[path] = val;
    }

    // --- semantic pass ---
    RunConfig cfg;
    cfg.source_text = text;

    cfg.dim = cur.take_int("grid.dim", 1);
    if (cfg.dim != 1 && cfg.dim != 2) cur.complain("grid.dim", "must be 1 or 2");
    {
        auto cells = cur.take_list("grid.cells");
        if (!cells.empty()) {
            cfg.cells.clear();
            for (const auto& c : cells) {
                try {
                    cfg.cells.push_back(std::stoi(c));
                } catch (...) {
                    cur.complain("grid.cells", "not an integer: '" + c + "'");
                }
            }
        }
        auto lengths = cur.take_list("grid.lengths");
        if (!lengths.empty()) {
            cfg.lengths.clear();
            for (const auto& l : lengths) {
                try {
                    cfg.lengths.push_back(std::stod(l));
                } catch (...) {
                    cur.complain("grid.lengths", "not a number: '" + l + "'");
                }
            }
        }
        if (cfg.dim == 2 && cfg.cells.size() == 1) cfg.cells.push_back(cfg.cells[0]);
        if (cfg.dim == 2 && cfg.lengths.size() == 1) cfg.lengths.push_back(cfg.lengths[0]);
        if (static_cast<int>(cfg.cells.size()) != cfg.dim)
            cur.complain("grid.cells", "expected " + std::to_string(cfg.dim) + " entries");
        if (static_cast<int>(cfg.lengths.size()) != cfg.dim)
            cur.complain("grid.lengths", "expected " + std::to_string(cfg.dim) + " entries");
        for (int c : cfg.cells)
            if (c < 1) cur.complain("grid.cells", "cells per axis must be >= 1");
        for (double l : cfg.lengths)
            if (!(l > 0.0)) cur.complain("grid.lengths", "lengths must be > 0");
    }

    cfg.graph = cur.take("physics.graph", cfg.graph);
    cfg.graph_c = cur.take_double("physics.graph.c", cfg.graph_c);
    cfg.f2_a = cur.take_double("physics.f2.a", cfg.f2_a);
    cfg.f2_b = cur.take_double("physics.f2.b", cfg.f2_b);
    cfg.g = cur.take("physics.g", cfg.g);
    cfg.g_param = cur.take_double("physics.g.param", cfg.g_param);
    cfg.kappa = cur.take("physics.kappa", cfg.kappa);
    cfg.kappa_kmin = cur.take_double("physics.kappa.kmin", cfg.kappa_kmin);
    cfg.kappa_kmax = cur.take_double("physics.kappa.kmax", cfg.kappa_kmax);
    if (cfg.kappa == "const" && !cur.has("physics.kappa.kmax")) cfg.kappa_kmax = cfg.kappa_kmin;

    cfg.delay.T = cur.take_double("delay.T", cfg.delay.T);
    cfg.delay.N = cur.take_int("delay.N", cfg.delay.N);
    cfg.delay.M = cur.take_int("delay.M", cfg.delay.M);
    {
        std::string eps = cur.take("delay.eps", "auto");
        if (eps == "auto") {
            cfg.eps_auto = true;
            cfg.delay.eps = 0.0;
        } else {
            cfg.eps_auto = false;
            try {
                cfg.delay.eps = std::stod(eps);
            } catch (...) {
                cur.complain("delay.eps", "expected 'auto' or a number");
            }
            if (!(cfg.delay.eps > 0.0)) cur.complain("delay.eps", "must be > 0");
        }
    }
    cfg.delay.newton_tol = cur.take_double("delay.newton_tol", cfg.delay.newton_tol);
    cfg.delay.picard_tol = cur.take_double("delay.picard_tol", cfg.delay.picard_tol);
    cfg.delay.newton_max = cur.take_int("delay.newton_max", cfg.delay.newton_max);
    cfg.delay.picard_max = cur.take_int("delay.picard_max", cfg.delay.picard_max);
    cfg.delay.cg_tol = cur.take_double("delay.cg_tol", cfg.delay.cg_tol);
    cfg.delay.cg_max = cur.take_int("delay.cg_max", cfg.delay.cg_max);
    {
        std::string pi = cur.take("delay.picard_init", "previous");
        if (pi == "previous")
            cfg.delay.picard_init = PicardInit::Previous;
        else if (pi == "zero")
            cfg.delay.picard_init = PicardInit::Zero;
        else
            cur.complain("delay.picard_init", "expected 'previous' or 'zero'");
    }
    cfg.delay.newton_damping = cur.take_double("delay.newton_damping", cfg.delay.newton_damping);
    if (!(cfg.delay.T > 0.0)) cur.complain("delay.T", "must be > 0");
    if (cfg.delay.N < 1) cur.complain("delay.N", "must be >= 1");
    if (cfg.delay.M < 1) cur.complain("delay.M", "must be >= 1");
    if (!(cfg.delay.newton_tol > 0.0)) cur.complain("delay.newton_tol", "must be > 0");
    if (!(cfg.delay.picard_tol > 0.0)) cur.complain("delay.picard_tol", "must be > 0");
    if (!(cfg.delay.cg_tol > 0.0)) cur.complain("delay.cg_tol", "must be > 0");
    if (!(cfg.delay.newton_damping > 0.0) || cfg.delay.newton_damping > 1.0)
        cur.complain("delay.newton_damping", "must be in (0, 1]");

    cfg.profile = cur.take("initial.profile", cfg.profile);
    cfg.mu0_base = cur.take_double("initial.mu0.base", cfg.mu0_base);
    cfg.mu0_amp = cur.take_double("initial.mu0.amp", cfg.mu0_amp);
    cfg.rho0_base = cur.take_double("initial.rho0.base", cfg.rho0_base);
    cfg.rho0_amp = cur.take_double("initial.rho0.amp", cfg.rho0_amp);
    cfg.mu0_file = cur.take("initial.mu0.file", "");
    cfg.rho0_file = cur.take("initial.rho0.file", "");
    cfg.xi0_file = cur.take("initial.xi0.file", "");
    if (cfg.profile != "cosine" && cfg.profile != "constant" && cfg.profile != "files")
        cur.complain("initial.profile", "expected 'cosine', 'constant' or 'files'");
    if (cfg.profile == "files" && (cfg.mu0_file.empty() || cfg.rho0_file.empty()))
        cur.complain("initial.profile", "profile 'files' needs initial.mu0.file and initial.rho0.file");

    cfg.audits_enable = cur.take_list("audits.enable");
    cfg.tol_weighted = cur.take_double("audits.tol.weighted", cfg.tol_weighted);
    cfg.tol_nonneg = cur.take_double("audits.tol.nonneg", cfg.tol_nonneg);
    cfg.tol_xi = cur.take_double("audits.tol.xi", cfg.tol_xi);
    cfg.gronwall_C = cur.take_double("audits.gronwall_C", cfg.gronwall_C);
    cfg.drift_C = cur.take_double("audits.drift_C", cfg.drift_C);
    cfg.id_coeff = cur.take_double("audits.id_coeff", cfg.id_coeff);
    for (const auto& t : {cfg.tol_weighted, cfg.tol_nonneg, cfg.tol_xi})
        if (!(t > 0.0)) cur.complain("audits.tol", "tolerances must be > 0");

    cfg.out_dir = cur.take("output.dir", cfg.out_dir);
    cfg.stride = cur.take_int("output.stride", cfg.stride);
    if (cfg.stride < 1) cur.complain("output.stride", "must be >= 1");

    // registry names (checked here so the diagnostic carries the key path)
    if (cfg.graph != "log" && cfg.graph != "obstacle" && cfg.graph != "poly" &&
        cfg.graph != "zero")
        cur.complain("physics.graph", "unknown graph '" + cfg.graph + "'");
    if (cfg.g != "smooth_id" && cfg.g != "const")
        cur.complain("physics.g", "unknown coupling '" + cfg.g + "'");
    if (cfg.kappa != "const" && cfg.kappa != "demo_exp_cos")
        cur.complain("physics.kappa", "unknown conductivity '" + cfg.kappa + "'");
    if (!(cfg.kappa_kmin > 0.0)) cur.complain("physics.kappa.kmin", "must be > 0");
    if (cfg.kappa_kmax < cfg.kappa_kmin) cur.complain("physics.kappa.kmax", "must be >= kmin");
    for (const auto& a : cfg.audits_enable) {
        static const std::set<std::string> known = {
            "weighted_energy", "nonnegativity", "phase_energy",
            "xi_l6",           "gradk",         "linf_truncation",
            "homogeneous_invariant"};
        if (!known.count(a)) cur.complain("audits.enable", "unknown audit '" + a + "'");
    }

    for (const auto& [path, val] : cur.kv)
        if (!cur.consumed.count(path)) cur.complain(path, "unknown key");

    if (!cur.violations.empty()) {
        std::string msg = "invalid config:";
        for (const auto& v : cur.violations) msg += "\n  " + v;
        throw ValidationError(msg);
    }
    return cfg;
}

}  // namespace chd
