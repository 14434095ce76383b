// Matrix-free conjugate gradients for SPD operators on Fields, with an
// optional Jacobi preconditioner. Convergence is declared on the true
// (recomputed) residual, ||b - Ax||_2 <= tol * ||b||_2.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "chd/grid.hpp"

namespace chd {

struct CgOptions {
    const Field* x0 = nullptr;          // initial guess (zero if absent)
    const Field* jacobi_diag = nullptr; // diagonal of A, enables Jacobi preconditioning
    bool debug_sym_check = false;       // probabilistic symmetry test of the operator
    unsigned debug_seed = 0x5eed;
};

struct CgResult {
    Field x;
    int iterations = 0;
    double residual = 0.0;  // relative to ||b||
};

template <class Op>
CgResult cg_solve(Op&& apply, const Field& rhs, double tol, int max_iter,
                  const CgOptions& opts = {}) {
    const Grid& g = rhs.grid;
    const double normb = norm_l2(rhs);
    if (normb == 0.0) return {Field(g, 0.0), 0, 0.0};

    if (opts.debug_sym_check) {
        std::mt19937_64 rng(opts.debug_seed);
        std::normal_distribution<double> dist;
        Field u(g), w(g);
        for (auto& x : u.v) x = dist(rng);
        for (auto& x : w.v) x = dist(rng);
        Field Au(g), Aw(g);
        apply(u, Au);
        apply(w, Aw);
        const double lhs = dot(Au, w), rhs2 = dot(u, Aw);
        const double scale = norm_l2(Au) * norm_l2(w) + norm_l2(u) * norm_l2(Aw) + 1e-300;
        if (std::abs(lhs - rhs2) > 1e-10 * scale)
            throw CgBreakdown("cg_solve: operator failed the symmetry check");
    }

    Field x = opts.x0 ? *opts.x0 : Field(g, 0.0);
    Field r(g), Ap(g);
    apply(x, Ap);
    for (int i = 0; i < r.size(); ++i) r.v[i] = rhs[i] - Ap[i];
    if (norm_l2(r) <= tol * normb) return {std::move(x), 0, norm_l2(r) / normb};

    auto precond = [&](const Field& in, Field& out) {
        if (opts.jacobi_diag)
            for (int i = 0; i < in.size(); ++i) out.v[i] = in[i] / (*opts.jacobi_diag)[i];
        else
            out = in;
    };

    Field z(g);
    precond(r, z);
    Field p = z;
    double rz = dot(r, z);

    for (int it = 1; it <= max_iter; ++it) {
        apply(p, Ap);
        const double pAp = dot(p, Ap);
        if (!(pAp > 0.0))
            throw CgBreakdown("cg_solve: non-positive curvature (p'Ap = " +
                              std::to_string(pAp) + "), operator not SPD");
        const double alpha = rz / pAp;
        for (int i = 0; i < x.size(); ++i) {
            x.v[i] += alpha * p[i];
            r.v[i] -= alpha * Ap[i];
        }
        if (norm_l2(r) <= tol * normb) {
            // confirm on the recomputed residual to guard against drift
            apply(x, Ap);
            double tr = 0.0;
            for (int i = 0; i < r.size(); ++i) {
                r.v[i] = rhs[i] - Ap[i];
                tr += r.v[i] * r.v[i];
            }
            tr = std::sqrt(tr * g.cell_volume());
            if (tr <= tol * normb) return {std::move(x), it, tr / normb};
            precond(r, z);
            p = z;
            rz = dot(r, z);
            continue;
        }
        precond(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < p.size(); ++i) p.v[i] = z[i] + beta * p[i];
    }
    throw CgNoConvergence("cg_solve: no convergence in " + std::to_string(max_iter) +
                          " iterations");
}

}  // namespace chd
