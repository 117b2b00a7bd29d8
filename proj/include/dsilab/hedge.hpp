#pragma once

#include "dsilab/dpe.hpp"
#include "dsilab/market.hpp"
#include "dsilab/parallel.hpp"
#include "dsilab/paths.hpp"
#include "dsilab/stats.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <ostream>
#include <vector>

namespace dsi {

/// Controls (alpha, gamma) for Y(r) = y0 + int alpha du + int gamma dS.
class StrategySpec {
public:
    enum class Source { zero, constant, dpe, function };
    using Fn = std::function<double(double t, double s)>;

    /// alpha = gamma = 0.
    static StrategySpec hold(double y0);
    static StrategySpec constant(double y0, double alpha, double gamma);
    /// y0 = v_s(0, s0), gamma = v_ss and alpha = drift of v_s, both read off the surface.
    /// Declared bounds are the grid maxima of |alpha| and |v_ss|.
    static StrategySpec from_dpe(std::shared_ptr<const DpeSolution> surface, double s0);
    /// Throws std::invalid_argument unless both bounds are finite and nonnegative.
    static StrategySpec functions(double y0, Fn alpha, Fn gamma, double alpha_bound, double gamma_bound);

    double y0() const { return y0_; }
    Source alpha_source() const { return alpha_source_; }
    Source gamma_source() const { return gamma_source_; }
    double alpha_bound() const { return alpha_bound_; }
    double gamma_bound() const { return gamma_bound_; }
    const std::shared_ptr<const DpeSolution>& surface() const { return surface_; }

    /// Raw controls at (t, s), already cut to the declared bounds; gamma not yet banded.
    /// off_grid is set when s had to be pulled onto the DPE grid.
    double alpha(double t, double s, bool* off_grid = nullptr) const;
    double gamma(double t, double s, bool* off_grid = nullptr) const;

    nlohmann::json to_json() const;

private:
    StrategySpec() = default;

    double y0_ = 0.0;
    Source alpha_source_ = Source::zero, gamma_source_ = Source::zero;
    double alpha_const_ = 0.0, gamma_const_ = 0.0;
    Fn alpha_fn_, gamma_fn_;
    double alpha_bound_ = 0.0, gamma_bound_ = 0.0;
    std::shared_ptr<const DpeSolution> surface_;
};

const char* to_string(StrategySpec::Source s);

struct HedgeReport {
    double x0 = 0.0;
    double s0 = 0.0;
    std::size_t steps = 0;
    std::vector<double> s_T;
    std::vector<double> x_T;
    std::vector<double> shortfall;  // X(T) - g(S(T))
    Summary summary;
    double mean_x_T = 0.0;
    double se_x_T = 0.0;
    /// (path, step) pairs where S^2 gamma left the band by more than clamp_tol.
    std::size_t gamma_clamps = 0;
    /// pairs where a DPE read had to pull S onto the solution grid
    std::size_t off_grid = 0;
    double clamp_tol = 0.0;

    std::size_t path_count() const { return shortfall.size(); }
    double clamp_rate() const;
    /// Fraction of paths with shortfall >= 0.
    double success_rate() const;
    double prob_negative() const { return 1.0 - success_rate(); }
};

struct HedgeOptions {
    /// Band excursions of S^2 gamma below this are roundoff from interpolation and are not
    /// counted as clamp events (they are still clamped).
    double clamp_tol = 1e-6;
    Exec exec{};
};

/// Left-point Euler scheme on the bundle grid:
///   X_{k+1} = X_k + Y_k dS_k,  Y_{k+1} = Y_k + alpha_k dt_k + gamma_k dS_k,
/// with S^2 gamma_k clamped into the band. The bundle must be one-dimensional with a grid
/// ending at params.T.
HedgeReport simulate_hedge(const BrownianBundle& bundle, double s0, double x0, const StrategySpec& strategy,
                           const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params,
                           const HedgeOptions& options = {});

struct GapReport {
    double bs_price = 0.0;
    double dpe_price = 0.0;
    double gap = 0.0;  // dpe_price - bs_price
    double cushion = 1.0;
    HedgeReport bs_funded;
    HedgeReport dpe_funded;
};

struct GapOptions {
    /// DPE-funded run starts from cushion * v(0, s0).
    double cushion = 1.01;
    std::size_t nx = 400;
    HedgeOptions hedge{};
};

/// Solves the DPE around s0 and runs the constrained DPE strategy from both prices.
GapReport replication_gap(const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params, double s0,
                          const BrownianBundle& bundle, const GapOptions& options = {});

/// CSV path,S_T,X_T,shortfall.
void write_shortfall_csv(const HedgeReport& r, std::ostream& out);

nlohmann::json to_json(const HedgeReport& r);
nlohmann::json to_json(const GapReport& r);

} // namespace dsi
