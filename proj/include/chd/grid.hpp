// Cell-centered uniform grids on 1D/2D boxes with homogeneous Neumann closure.
//
// Differential operators are written in flux form with zero boundary-face
// flux, so the discrete divergence theorem holds exactly: the cell-volume
// weighted sum of any operator output is zero. Face conductivities use
// arithmetic means.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "chd/errors.hpp"

namespace chd {

struct Grid {
    int dim = 1;
    int nx = 1, ny = 1;
    double Lx = 1.0, Ly = 1.0;
    double dx = 1.0, dy = 1.0;

    static Grid line(int nx, double Lx = 1.0) {
        if (nx < 1) throw ValidationError("grid: nx must be >= 1");
        if (!(Lx > 0.0)) throw ValidationError("grid: Lx must be > 0");
        Grid g;
        g.dim = 1;
        g.nx = nx;
        g.Lx = Lx;
        g.dx = Lx / nx;
        return g;
    }

    static Grid box(int nx, int ny, double Lx = 1.0, double Ly = 1.0) {
        if (nx < 1 || ny < 1) throw ValidationError("grid: cells per axis must be >= 1");
        if (!(Lx > 0.0) || !(Ly > 0.0)) throw ValidationError("grid: lengths must be > 0");
        Grid g;
        g.dim = 2;
        g.nx = nx;
        g.ny = ny;
        g.Lx = Lx;
        g.Ly = Ly;
        g.dx = Lx / nx;
        g.dy = Ly / ny;
        return g;
    }

    int cells() const { return nx * ny; }
    double cell_volume() const { return dim == 1 ? dx : dx * dy; }
    int id(int i, int j) const { return i + nx * j; }
    double xc(int i) const { return (i + 0.5) * dx; }
    double yc(int j) const { return (j + 0.5) * dy; }

    bool operator==(const Grid& o) const {
        return dim == o.dim && nx == o.nx && ny == o.ny && Lx == o.Lx && Ly == o.Ly;
    }
};

struct Field {
    Grid grid;
    std::vector<double> v;

    Field() = default;
    explicit Field(const Grid& g, double fill = 0.0) : grid(g), v(g.cells(), fill) {}

    int size() const { return static_cast<int>(v.size()); }
    double& operator[](int i) { return v[i]; }
    double operator[](int i) const { return v[i]; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
    double min() const {
        double m = v[0];
        for (double x : v) m = std::min(m, x);
        return m;
    }
    double max() const {
        double m = v[0];
        for (double x : v) m = std::max(m, x);
        return m;
    }
};

inline void require_same_grid(const Field& a, const Field& b, const char* where) {
    if (!(a.grid == b.grid)) throw InvalidScenario(std::string(where) + ": grid mismatch");
}

// Visit interior faces: fn(left_cell, right_cell, spacing, face_volume) where
// face_volume is the control volume attached to the face flux (dx*dy in 2D,
// dx in 1D), so that sum over faces of kappa*(du/spacing)^2*face_volume equals
// <-div(kappa grad u), u>.
template <class Fn>
void for_each_face(const Grid& g, Fn&& fn) {
    const double vol = g.cell_volume();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i)
            fn(g.id(i, j), g.id(i + 1, j), g.dx, vol);
    if (g.dim == 2)
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                fn(g.id(i, j), g.id(i, j + 1), g.dy, vol);
}

// Standard 3/5-point Laplacian with zero-flux boundary faces.
inline Field laplacian_neumann(const Field& u) {
    Field out(u.grid, 0.0);
    for_each_face(u.grid, [&](int l, int r, double h, double) {
        const double flux = (u[r] - u[l]) / h;  // flux per unit face area
        out.v[l] += flux / h;
        out.v[r] -= flux / h;
    });
    return out;
}

// div(kappa grad u) with arithmetic-mean face conductivity and zero boundary
// flux; reduces to laplacian_neumann when kappa == 1. The induced matrix is
// symmetric negative semidefinite.
inline Field div_kappa_grad(const Field& kappa_cells, const Field& u) {
    require_same_grid(kappa_cells, u, "div_kappa_grad");
    for (double k : kappa_cells.v)
        if (!(k > 0.0))
            throw NonPositiveConductivity("div_kappa_grad: conductivity cell <= 0");
    Field out(u.grid, 0.0);
    for_each_face(u.grid, [&](int l, int r, double h, double) {
        const double kf = 0.5 * (kappa_cells[l] + kappa_cells[r]);
        const double flux = kf * (u[r] - u[l]) / h;
        out.v[l] += flux / h;
        out.v[r] -= flux / h;
    });
    return out;
}

// Cell-volume weighted inner product and derived norms.
inline double dot(const Field& a, const Field& b) {
    require_same_grid(a, b, "dot");
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * a.grid.cell_volume();
}

inline double norm_l2(const Field& a) { return std::sqrt(dot(a, a)); }

inline double norm_lp(const Field& a, double p) {
    double s = 0.0;
    for (double x : a.v) s += std::pow(std::abs(x), p);
    return std::pow(s * a.grid.cell_volume(), 1.0 / p);
}

inline double norm_linf(const Field& a) {
    double m = 0.0;
    for (double x : a.v) m = std::max(m, std::abs(x));
    return m;
}

// sum over faces of kappa_f * (du/h)^2 * face_volume; equals
// <-div_kappa_grad(kappa, u), u> exactly.
inline double kappa_flux_energy(const Field& kappa_cells, const Field& u) {
    require_same_grid(kappa_cells, u, "kappa_flux_energy");
    double s = 0.0;
    for_each_face(u.grid, [&](int l, int r, double h, double vol) {
        const double kf = 0.5 * (kappa_cells[l] + kappa_cells[r]);
        const double d = (u[r] - u[l]) / h;
        s += kf * d * d * vol;
    });
    return s;
}

inline double h1_seminorm(const Field& u) {
    double s = 0.0;
    for_each_face(u.grid, [&](int l, int r, double h, double vol) {
        const double d = (u[r] - u[l]) / h;
        s += d * d * vol;
    });
    return std::sqrt(s);
}

struct Norms {
    double l1, l2, linf, l4, l6, h1_semi;
};

inline Norms norms(const Field& u) {
    return {norm_lp(u, 1.0), norm_l2(u), norm_linf(u), norm_lp(u, 4.0), norm_lp(u, 6.0),
            h1_seminorm(u)};
}

}  // namespace chd
