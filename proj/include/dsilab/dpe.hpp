#pragma once

#include "dsilab/market.hpp"
#include "dsilab/matcore.hpp"

#include <cstdint>
#include <ostream>
#include <vector>

namespace dsi {

/// Log-price grid x_i = x_min + i dx, times t_n = n dt, n = 0..nt, with nt dt = T.
struct PdeGrid {
    double x_min = 0.0;
    double x_max = 0.0;
    std::size_t nx = 0;
    std::size_t nt = 0;
    double T = 1.0;

    double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
    double dt() const { return T / static_cast<double>(nt); }
    double x(std::size_t i) const { return x_min + dx() * static_cast<double>(i); }

    /// Throws std::invalid_argument for nx < 16, nt < 1, x_max <= x_min or T <= 0.
    void validate() const;
    /// dt <= dx^2 / sigma^2.
    bool stable(double sigma) const;

    /// nx nodes over log s0 +- width_sd sigma sqrt(T); nt from the stability bound with the
    /// given safety factor.
    static PdeGrid around(double s0, const MarketParams& params, std::size_t nx = 400,
                          double width_sd = 6.0, double safety = 0.9);
};

/// True when log s lies at least margin_sd sigma sqrt(T) inside the grid.
bool grid_covers(const PdeGrid& grid, double s, const MarketParams& params, double margin_sd = 4.0);

enum class ActiveConstraint : std::uint8_t { none = 0, lower = 1, upper = 2 };

const char* to_string(ActiveConstraint c);

struct DpeSolution {
    PdeGrid grid;
    double sigma = 0.0;
    GammaBand band = GammaBand::unconstrained();
    std::vector<double> s;  // e^{x_i}

    // (nt + 1) x nx, row n at time t_n
    std::vector<double> v;
    std::vector<double> v_s;     // v_x / s
    std::vector<double> s2v_ss;  // v_xx - v_x
    /// Ito drift of v_s along S: u_t + sigma^2 (u_xx - u_x) / 2 for u = v_s.
    std::vector<double> alpha;
    /// Branch that bound in the step producing row n (none on the terminal row).
    std::vector<ActiveConstraint> active;

    /// max |F̂(v_t, s^2 v_ss)| over interior nodes of rows n < nt, with s^2 v_ss taken on
    /// row n and v_t the backward difference; upper-clamped nodes excluded.
    double residual_max = 0.0;
    /// residual measured only over t <= T/2, away from the terminal kink layer
    double residual_early = 0.0;
    /// 5 (dx + dt) sigma^2
    double constraint_tol = 0.0;
    /// Nodes (any row before the terminal one) with s^2 v_ss > upper + constraint_tol.
    std::size_t upper_violations = 0;
    double alpha_max = 0.0;

    std::size_t index(std::size_t n, std::size_t i) const { return n * grid.nx + i; }
    double time(std::size_t n) const { return grid.dt() * static_cast<double>(n); }
    double value(std::size_t n, std::size_t i) const { return v[index(n, i)]; }
    std::size_t rows() const { return grid.nt + 1; }
};

/// Explicit backward scheme from the face-lifted terminal slice. Throws
/// std::invalid_argument when the grid violates the stability bound.
DpeSolution solve_dpe(const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params,
                      const PdeGrid& grid);

struct Greeks {
    double v = 0.0;
    double v_s = 0.0;
    double s2v_ss = 0.0;
    double alpha = 0.0;
};

/// Bilinear interpolation in (t, log s). Throws std::out_of_range outside the grid.
Greeks greeks(const DpeSolution& sol, double t, double s);

/// Linear interpolation of v(0, .) in log s.
double price_at(const DpeSolution& sol, double s);

/// CSV t,s,v,v_s,s2v_ss,active for every time_stride-th row (the terminal row always).
void export_surface_csv(const DpeSolution& sol, std::ostream& out, std::size_t time_stride = 1);

} // namespace dsi
