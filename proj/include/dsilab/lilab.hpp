#pragma once

#include "dsilab/matcore.hpp"
#include "dsilab/parallel.hpp"
#include "dsilab/paths.hpp"
#include "dsilab/stats.hpp"
#include "dsilab/stochint.hpp"

#include <json.hpp>

#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace dsi {

enum class RatioKind {
    h_normalized,  // 2V / h(t), h(t) = 2t loglog(1/t)
    t_normalized,  // 2V / t
    example36,     // V / (t loglog(1/t) / logloglog(1/t))
};

const char* to_string(RatioKind kind);

/// Normalizing rate for a ratio kind, with the factor 2 folded in: ratio = V / rate.
/// Throws std::domain_error outside the rate's domain.
double ratio_rate(RatioKind kind, double t);

struct RatioOptions {
    RatioKind kind = RatioKind::h_normalized;
    bool absolute = false;
    /// Only grid times in [t_lo, t_hi] enter the sup.
    double t_lo = 0.0;
    double t_hi = std::numeric_limits<double>::infinity();
};

struct LilEstimate {
    RatioKind kind = RatioKind::h_normalized;
    bool absolute = false;
    std::vector<double> per_path_sup;
    std::optional<GeometricGrid> grid;
    double t_min = 0.0;  // smallest time entering the sup
    double t_max = 0.0;
    Summary summary;
};

/// Per path, sup over trace times of V(t_k) / rate(t_k) (or |V| / rate).
LilEstimate ratio_sup(const PathValues& v, const RatioOptions& options,
                      std::optional<GeometricGrid> grid = std::nullopt);
LilEstimate ratio_sup(const DoubleIntegralTrace& trace, const RatioOptions& options,
                      std::optional<GeometricGrid> grid = std::nullopt);

/// Sup over the geometric level times of grid only (all points when the grid has no
/// geometric part). v must be laid out on trace_times(grid).
LilEstimate ratio_sup(const PathValues& v, const RatioOptions& options, const TimeGrid& grid);
LilEstimate ratio_sup(const DoubleIntegralTrace& trace, const RatioOptions& options, const TimeGrid& grid);

/// Outer values of a trace as plain series.
PathValues outer_values(const DoubleIntegralTrace& trace);

/// exp(-lambda d T) (1 - 2 lambda T)^{-d/2}; requires lambda > 0 and 2 lambda T < 1.
double moment_identity(double lambda, double T, std::size_t d);

/// Conditional expectation E[exp(2 lambda Z(T)) | Y(t) = y, Z(t) = z] for b = I_d.
double moment_f(double lambda, double T, double t, std::span<const double> y, double z);

struct MomentReport {
    double lambda = 0.0;
    double T = 0.0;
    std::size_t d = 0;
    std::string integrand;
    double mc_mean = 0.0;
    double se = 0.0;
    double closed_form = 0.0;
    /// (closed_form - mc_mean) / se; +inf when se = 0 and the inequality holds.
    double dominance_margin = 0.0;
    std::size_t path_count = 0;
};

/// Monte Carlo estimate of E exp(2 lambda V^b(T)) with T the bundle's final time.
/// b must declare a bound <= 1.
MomentReport moment_dominance(const BrownianBundle& bundle, const IntegrandSpec& b, double lambda,
                              Exec exec = {});

enum class LambdaRule { optimized, fixed_eta };

struct TailRow {
    double alpha = 0.0;
    double lambda = 0.0;
    double bound = 0.0;
    double exceedance = 0.0;
    double binomial_se = 0.0;
    bool flagged = false;  // exceedance > bound + 3 SE
};

struct TailReport {
    double T = 0.0;
    std::size_t d = 0;
    std::string integrand;
    std::size_t path_count = 0;
    std::vector<TailRow> rows;
    bool any_flagged() const;
};

/// exp(-lambda alpha) E exp(2 lambda V^{I_d}(T)).
double tail_bound(double lambda, double alpha, double T, std::size_t d);

/// Golden-section minimizer of tail_bound over lambda in (0, 1/(2T)).
double optimal_lambda(double alpha, double T, std::size_t d, double tol = 1e-10);

/// Empirical P[sup_k 2V(t_k) >= alpha] against the analytic bound.
TailReport tail_bound_check(const BrownianBundle& bundle, const IntegrandSpec& b,
                            std::span<const double> alphas,
                            LambdaRule rule = LambdaRule::optimized, double eta = 0.1,
                            Exec exec = {});

struct ErgodicReport {
    std::size_t levels = 0;  // N, grid times e^{-n} for n = 1..N
    double delta = 0.0;
    /// Bundle average of (1/n) sum_{j <= n} 1[Y(j) <= delta], n = 1..N.
    std::vector<double> running_frequency;
    double final_frequency = 0.0;
    double reference_probability = 0.0;
    bool reference_exact = true;  // false when estimated by Monte Carlo
    std::vector<double> per_path_min;
    std::vector<double> per_path_frequency;
};

/// P[|X^T beta X| <= delta] for X ~ N(0, I_d): exact for multiples of the identity,
/// otherwise a fixed-seed Monte Carlo estimate with 10^6 draws.
double ergodic_reference(const SymMatrix& beta, double delta, bool* exact = nullptr);

/// Requires a bundle on the geometric grid t_n = e^{-n}, n = 1..N, without substeps.
ErgodicReport ergodic_liminf(const BrownianBundle& bundle, const SymMatrix& beta, double delta,
                             Exec exec = {});

struct Example36Report {
    LilEstimate ratio;  // V / rate36 with b(t) = 1/logloglog(1/t)
    LilEstimate proxy;  // (W^2 b / 2) / rate36
    /// |median(ratio) - median(proxy)| / median(proxy)
    double median_gap = 0.0;
};

/// The bundle must be one-dimensional with every time below e^{-e}.
Example36Report example36_rate(const BrownianBundle& bundle, double t_lo, double t_hi,
                               Exec exec = {});

struct MartingaleProxyRow {
    double t = 0.0;
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean of f(t, Y^{I_d}(t), Z^{I_d}(t)) at each trace time; T is the bundle's final time.
std::vector<MartingaleProxyRow> martingale_proxy(const BrownianBundle& bundle, double lambda,
                                                 Exec exec = {});

/// CSV path,sup.
void write_sup_csv(const LilEstimate& est, std::ostream& out);

nlohmann::json to_json(const Summary& s);
nlohmann::json to_json(const LilEstimate& est);
nlohmann::json to_json(const MomentReport& r);
nlohmann::json to_json(const TailReport& r);
nlohmann::json to_json(const ErgodicReport& r);

} // namespace dsi
