#include "dsilab/dpe.hpp"

#include "dsilab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dsi {

void PdeGrid::validate() const {
    if (nx < 16) throw std::invalid_argument("PdeGrid: nx must be at least 16");
    if (nt < 1) throw std::invalid_argument("PdeGrid: nt must be at least 1");
    if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max)) {
        throw std::invalid_argument("PdeGrid: need x_min < x_max");
    }
    if (!(T > 0.0)) throw std::invalid_argument("PdeGrid: T must be positive");
}

bool PdeGrid::stable(double sigma) const { return dt() <= dx() * dx() / (sigma * sigma) * (1.0 + 1e-12); }

PdeGrid PdeGrid::around(double s0, const MarketParams& params, std::size_t nx, double width_sd, double safety) {
    if (!(s0 > 0.0)) throw std::invalid_argument("PdeGrid::around: s0 must be positive");
    if (!(safety > 0.0 && safety <= 1.0)) throw std::invalid_argument("PdeGrid::around: safety must lie in (0, 1]");
    PdeGrid g;
    const double half = width_sd * params.sigma * std::sqrt(params.T);
    g.x_min = std::log(s0) - half;
    g.x_max = std::log(s0) + half;
    g.nx = nx;
    g.T = params.T;
    g.nt = 1;
    g.validate();
    const double dt_max = safety * g.dx() * g.dx() / (params.sigma * params.sigma);
    g.nt = static_cast<std::size_t>(std::ceil(params.T / dt_max));
    return g;
}

bool grid_covers(const PdeGrid& grid, double s, const MarketParams& params, double margin_sd) {
    const double m = margin_sd * params.sigma * std::sqrt(params.T);
    const double x = std::log(s);
    return x - m >= grid.x_min && x + m <= grid.x_max;
}

const char* to_string(ActiveConstraint c) {
    switch (c) {
    case ActiveConstraint::none: return "none";
    case ActiveConstraint::lower: return "lower";
    case ActiveConstraint::upper: return "upper";
    }
    return "?";
}

namespace {

// v_x / s and v_xx - v_x on one row; boundary rows are linear in s, so s^2 v_ss = 0 there.
void derivatives(const double* v, std::size_t nx, double dx, const std::vector<double>& s, double* vs,
                 double* a) {
    for (std::size_t i = 1; i + 1 < nx; ++i) {
        const double d1 = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        const double d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
        vs[i] = d1 / s[i];
        a[i] = d2 - d1;
    }
    vs[0] = (v[1] - v[0]) / (s[1] - s[0]);
    a[0] = 0.0;
    vs[nx - 1] = (v[nx - 1] - v[nx - 2]) / (s[nx - 1] - s[nx - 2]);
    a[nx - 1] = 0.0;
}

} // namespace

DpeSolution solve_dpe(const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params,
                      const PdeGrid& grid) {
    grid.validate();
    if (std::abs(grid.T - params.T) > 1e-12 * params.T) {
        throw std::invalid_argument("solve_dpe: grid horizon differs from the market horizon");
    }
    if (!grid.stable(params.sigma)) {
        throw std::invalid_argument("solve_dpe: explicit scheme unstable, need dt <= dx^2 / sigma^2 (dt = " +
                                    std::to_string(grid.dt()) + ", dx = " + std::to_string(grid.dx()) + ")");
    }
    const std::size_t nx = grid.nx, nt = grid.nt;
    const double dx = grid.dx(), dt = grid.dt();
    const double half_var = 0.5 * params.sigma * params.sigma;

    DpeSolution sol;
    sol.grid = grid;
    sol.sigma = params.sigma;
    sol.band = band;
    sol.s.resize(nx);
    for (std::size_t i = 0; i < nx; ++i) sol.s[i] = std::exp(grid.x(i));
    const std::size_t total = (nt + 1) * nx;
    sol.v.assign(total, 0.0);
    sol.v_s.assign(total, 0.0);
    sol.s2v_ss.assign(total, 0.0);
    sol.alpha.assign(total, 0.0);
    sol.active.assign(total, ActiveConstraint::none);
    sol.constraint_tol = 5.0 * (dx + dt) * params.sigma * params.sigma;

    const PayoffSpec terminal = face_lift(payoff, band, sol.s);
    for (std::size_t i = 0; i < nx; ++i) sol.v[sol.index(nt, i)] = terminal(sol.s[i]);
    derivatives(&sol.v[sol.index(nt, 0)], nx, dx, sol.s, &sol.v_s[sol.index(nt, 0)], &sol.s2v_ss[sol.index(nt, 0)]);

    for (std::size_t n = nt; n-- > 0;) {
        const double* next = &sol.v[sol.index(n + 1, 0)];
        const double* a_next = &sol.s2v_ss[sol.index(n + 1, 0)];
        double* cur = &sol.v[sol.index(n, 0)];
        ActiveConstraint* flag = &sol.active[sol.index(n, 0)];
        for (std::size_t i = 1; i + 1 < nx; ++i) {
            double a = a_next[i];
            if (band.has_lower() && a < *band.lower()) {
                a = *band.lower();
                flag[i] = ActiveConstraint::lower;
            }
            if (band.has_upper() && a > *band.upper()) {
                a = *band.upper();
                flag[i] = ActiveConstraint::upper;
            }
            cur[i] = next[i] + dt * half_var * a;
        }
        const auto& sv = sol.s;
        cur[0] = std::max(cur[1] + (cur[1] - cur[2]) * (sv[0] - sv[1]) / (sv[1] - sv[2]), 0.0);
        cur[nx - 1] = std::max(cur[nx - 2] + (cur[nx - 2] - cur[nx - 3]) * (sv[nx - 1] - sv[nx - 2]) /
                                                 (sv[nx - 2] - sv[nx - 3]),
                               0.0);
        derivatives(cur, nx, dx, sol.s, &sol.v_s[sol.index(n, 0)], &sol.s2v_ss[sol.index(n, 0)]);
    }

    // diagnostics
    for (std::size_t n = 0; n < nt; ++n) {
        const bool early = sol.time(n) <= 0.5 * grid.T;
        for (std::size_t i = 1; i + 1 < nx; ++i) {
            const std::size_t k = sol.index(n, i);
            if (band.has_upper() && sol.s2v_ss[k] > *band.upper() + sol.constraint_tol) ++sol.upper_violations;
            if (sol.active[k] == ActiveConstraint::upper) continue;
            const double vt = (sol.v[sol.index(n + 1, i)] - sol.v[k]) / dt;
            const double r = std::abs(dpe_operator_Fhat(vt, sol.s2v_ss[k], params.sigma, band));
            sol.residual_max = std::max(sol.residual_max, r);
            if (early) sol.residual_early = std::max(sol.residual_early, r);
        }
    }

    // drift of u = v_s along the price: forward time difference, spatial derivatives of u
    for (std::size_t n = 0; n <= nt; ++n) {
        const std::size_t n1 = n < nt ? n + 1 : n;
        const std::size_t n0 = n < nt ? n : n - 1;
        for (std::size_t i = 1; i + 1 < nx; ++i) {
            const double ut = (sol.v_s[sol.index(n1, i)] - sol.v_s[sol.index(n0, i)]) / dt;
            const double* u = &sol.v_s[sol.index(n, 0)];
            const double ux = (u[i + 1] - u[i - 1]) / (2.0 * dx);
            const double uxx = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
            const double a = ut + half_var * (uxx - ux);
            sol.alpha[sol.index(n, i)] = a;
            sol.alpha_max = std::max(sol.alpha_max, std::abs(a));
        }
        sol.alpha[sol.index(n, 0)] = sol.alpha[sol.index(n, 1)];
        sol.alpha[sol.index(n, nx - 1)] = sol.alpha[sol.index(n, nx - 2)];
    }
    return sol;
}

Greeks greeks(const DpeSolution& sol, double t, double s) {
    const PdeGrid& g = sol.grid;
    if (!(t >= 0.0 && t <= g.T) || !(s > 0.0)) throw std::out_of_range("greeks: (t, s) outside the grid");
    const double x = std::log(s);
    if (x < g.x_min - 1e-12 || x > g.x_max + 1e-12) throw std::out_of_range("greeks: (t, s) outside the grid");
    const double ft = std::clamp(t / g.dt(), 0.0, static_cast<double>(g.nt));
    const double fx = std::clamp((x - g.x_min) / g.dx(), 0.0, static_cast<double>(g.nx - 1));
    std::size_t n = std::min(static_cast<std::size_t>(ft), g.nt - 1);
    std::size_t i = std::min(static_cast<std::size_t>(fx), g.nx - 2);
    const double wt = ft - static_cast<double>(n), wx = fx - static_cast<double>(i);
    auto lerp2 = [&](const std::vector<double>& f) {
        const double a = f[sol.index(n, i)], b = f[sol.index(n, i + 1)];
        const double c = f[sol.index(n + 1, i)], d = f[sol.index(n + 1, i + 1)];
        return (1.0 - wt) * ((1.0 - wx) * a + wx * b) + wt * ((1.0 - wx) * c + wx * d);
    };
    return {lerp2(sol.v), lerp2(sol.v_s), lerp2(sol.s2v_ss), lerp2(sol.alpha)};
}

double price_at(const DpeSolution& sol, double s) { return greeks(sol, 0.0, s).v; }

void export_surface_csv(const DpeSolution& sol, std::ostream& out, std::size_t time_stride) {
    if (time_stride == 0) time_stride = 1;
    CsvWriter csv(out, {"t", "s", "v", "v_s", "s2v_ss", "active"});
    for (std::size_t n = 0; n <= sol.grid.nt; ++n) {
        if (n % time_stride != 0 && n != sol.grid.nt) continue;
        for (std::size_t i = 0; i < sol.grid.nx; ++i) {
            const std::size_t k = sol.index(n, i);
            csv.field(sol.time(n)).field(sol.s[i]).field(sol.v[k]).field(sol.v_s[k]).field(sol.s2v_ss[k]);
            csv.field(std::string_view(to_string(sol.active[k])));
            csv.end_row();
        }
    }
}

} // namespace dsi
