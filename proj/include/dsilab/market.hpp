#pragma once

#include "dsilab/matcore.hpp"
#include "dsilab/paths.hpp"
#include "dsilab/stochint.hpp"

#include <json.hpp>

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace dsi {

/// Zero-drift, zero-rate lognormal market.
struct MarketParams {
    double sigma = 0.2;
    double T = 1.0;

    MarketParams() = default;
    /// Throws std::invalid_argument unless sigma > 0 and T > 0 (both finite).
    MarketParams(double sigma, double T);
};

/// Nonnegative terminal payoff g(S(T)).
class PayoffSpec {
public:
    enum class Kind { call, put, piecewise_linear, tabulated };

    static PayoffSpec call(double K);
    static PayoffSpec put(double K);
    /// g(s) = value0 + slopes[0] s on [0, b_1], then slope slopes[i] on [b_i, b_{i+1}].
    /// slopes has breakpoints.size() + 1 entries.
    static PayoffSpec piecewise_linear(double value0, std::vector<double> breakpoints,
                                       std::vector<double> slopes);
    /// Linear in log s between nodes; outside, the end segment is continued in log s and
    /// floored at 0.
    static PayoffSpec tabulated(std::vector<double> s, std::vector<double> values);

    double operator()(double s) const;
    Kind kind() const { return kind_; }
    std::string name() const;

    double strike() const { return strike_; }
    double value0() const { return value0_; }
    std::span<const double> breakpoints() const { return breakpoints_; }
    std::span<const double> slopes() const { return slopes_; }
    /// Tabulated nodes.
    std::span<const double> nodes() const { return s_; }
    std::span<const double> values() const { return values_; }

    /// lim g(s) as s -> 0 (may be +inf for a tabulated payoff rising to the left).
    double value_at_zero() const;
    /// lim g(s) / s as s -> infinity.
    double asymptotic_slope() const;

    nlohmann::json to_json() const;

private:
    PayoffSpec() = default;

    Kind kind_ = Kind::call;
    double strike_ = 0.0;
    double value0_ = 0.0;
    std::vector<double> breakpoints_, slopes_;
    std::vector<double> s_, x_, values_;  // x_ = log s_
};

/// S(t_k) = s0 exp(sigma W(t_k) - sigma^2 t_k / 2) for one path; times include t = 0.
/// w holds W at the bundle grid points; out has trace_times(grid).size() entries.
void gbm_path(std::span<const double> w, const TimeGrid& grid, double s0, double sigma,
              std::span<double> out);

/// Exact exponential mapping of every path of a one-dimensional bundle, on trace_times(grid).
PathValues simulate_gbm(const BrownianBundle& bundle, double s0, const MarketParams& params,
                        Exec exec = {});

/// E g(S_{t,s}(T)). Call and put in closed form; piecewise-linear payoffs as a call
/// combination; tabulated payoffs by exact segment-wise lognormal integrals.
double bs_price(const PayoffSpec& payoff, double s, double t, const MarketParams& params);

struct QuadratureResult {
    double value = 0.0;
    std::size_t nodes = 0;
    bool converged = false;
};

/// Gauss-Hermite cross-check of bs_price: doubles the node count from 8 up to max_nodes
/// until two successive levels agree to rel_tol.
QuadratureResult bs_price_quadrature(const PayoffSpec& payoff, double s, double t,
                                     const MarketParams& params, double rel_tol = 1e-8,
                                     std::size_t max_nodes = 1024);

/// Smallest majorant of g with s^2 g_ss <= band.upper: g + upper log s is replaced by its
/// concave envelope in s. Returned as a tabulated payoff on s_grid. The lower bound plays no
/// role. Without an upper bound the input is returned unchanged.
PayoffSpec face_lift(const PayoffSpec& payoff, const GammaBand& band, std::span<const double> s_grid);

/// n points geometrically spaced over [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t n);

/// CSV s,g.
void export_payoff_csv(const PayoffSpec& payoff, std::span<const double> s_grid, std::ostream& out);
/// Reads s,g rows (header required) into a tabulated payoff.
PayoffSpec import_payoff_csv(std::istream& in);

} // namespace dsi
