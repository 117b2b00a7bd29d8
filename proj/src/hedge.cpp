#include "dsilab/hedge.hpp"

#include "dsilab/csv.hpp"
#include "dsilab/lilab.hpp"
#include "dsilab/stochint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dsi {

StrategySpec StrategySpec::hold(double y0) {
    StrategySpec s;
    s.y0_ = y0;
    return s;
}

StrategySpec StrategySpec::constant(double y0, double alpha, double gamma) {
    if (!std::isfinite(alpha) || !std::isfinite(gamma)) {
        throw std::invalid_argument("StrategySpec::constant: controls must be finite");
    }
    StrategySpec s;
    s.y0_ = y0;
    s.alpha_source_ = s.gamma_source_ = Source::constant;
    s.alpha_const_ = alpha;
    s.gamma_const_ = gamma;
    s.alpha_bound_ = std::abs(alpha);
    s.gamma_bound_ = std::abs(gamma);
    return s;
}

StrategySpec StrategySpec::from_dpe(std::shared_ptr<const DpeSolution> surface, double s0) {
    if (!surface) throw std::invalid_argument("StrategySpec::from_dpe: null surface");
    StrategySpec s;
    s.y0_ = greeks(*surface, 0.0, s0).v_s;
    s.alpha_source_ = s.gamma_source_ = Source::dpe;
    const std::size_t nx = surface->grid.nx;
    double gmax = 0.0;
    for (std::size_t k = 0; k < surface->s2v_ss.size(); ++k) {
        const double si = surface->s[k % nx];
        gmax = std::max(gmax, std::abs(surface->s2v_ss[k]) / (si * si));
    }
    s.alpha_bound_ = surface->alpha_max;
    s.gamma_bound_ = gmax;
    if (!std::isfinite(s.alpha_bound_) || !std::isfinite(s.gamma_bound_)) {
        throw std::invalid_argument("StrategySpec::from_dpe: surface controls are not bounded");
    }
    s.surface_ = std::move(surface);
    return s;
}

StrategySpec StrategySpec::functions(double y0, Fn alpha, Fn gamma, double alpha_bound, double gamma_bound) {
    if (!(alpha_bound >= 0.0) || !(gamma_bound >= 0.0) || !std::isfinite(alpha_bound) ||
        !std::isfinite(gamma_bound)) {
        throw std::invalid_argument("StrategySpec::functions: bounds must be finite and nonnegative");
    }
    if (!alpha || !gamma) throw std::invalid_argument("StrategySpec::functions: empty control");
    StrategySpec s;
    s.y0_ = y0;
    s.alpha_source_ = s.gamma_source_ = Source::function;
    s.alpha_fn_ = std::move(alpha);
    s.gamma_fn_ = std::move(gamma);
    s.alpha_bound_ = alpha_bound;
    s.gamma_bound_ = gamma_bound;
    return s;
}

namespace {

Greeks read_surface(const DpeSolution& sol, double t, double s, bool* off_grid) {
    const PdeGrid& g = sol.grid;
    const double x = std::log(s);
    const double xc = std::clamp(x, g.x_min, g.x_max);
    if (off_grid && xc != x) *off_grid = true;
    return greeks(sol, std::clamp(t, 0.0, g.T), std::exp(xc));
}

} // namespace

double StrategySpec::alpha(double t, double s, bool* off_grid) const {
    double a = 0.0;
    switch (alpha_source_) {
    case Source::zero: return 0.0;
    case Source::constant: a = alpha_const_; break;
    case Source::dpe: a = read_surface(*surface_, t, s, off_grid).alpha; break;
    case Source::function: a = alpha_fn_(t, s); break;
    }
    return std::clamp(a, -alpha_bound_, alpha_bound_);
}

double StrategySpec::gamma(double t, double s, bool* off_grid) const {
    double g = 0.0;
    switch (gamma_source_) {
    case Source::zero: return 0.0;
    case Source::constant: g = gamma_const_; break;
    case Source::dpe: {
        const double xc = std::clamp(std::log(s), surface_->grid.x_min, surface_->grid.x_max);
        g = read_surface(*surface_, t, s, off_grid).s2v_ss / std::exp(2.0 * xc);
        break;
    }
    case Source::function: g = gamma_fn_(t, s); break;
    }
    return std::clamp(g, -gamma_bound_, gamma_bound_);
}

const char* to_string(StrategySpec::Source s) {
    switch (s) {
    case StrategySpec::Source::zero: return "zero";
    case StrategySpec::Source::constant: return "constant";
    case StrategySpec::Source::dpe: return "dpe";
    case StrategySpec::Source::function: return "function";
    }
    return "?";
}

nlohmann::json StrategySpec::to_json() const {
    return {{"y0", y0_},
            {"alpha_source", to_string(alpha_source_)},
            {"gamma_source", to_string(gamma_source_)},
            {"alpha_bound", alpha_bound_},
            {"gamma_bound", gamma_bound_}};
}

double HedgeReport::clamp_rate() const {
    const double pairs = static_cast<double>(path_count()) * static_cast<double>(steps);
    return pairs > 0 ? static_cast<double>(gamma_clamps) / pairs : 0.0;
}

double HedgeReport::success_rate() const { return shortfall.empty() ? 0.0 : fraction_at_least(shortfall, 0.0); }

HedgeReport simulate_hedge(const BrownianBundle& bundle, double s0, double x0, const StrategySpec& strategy,
                           const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params,
                           const HedgeOptions& options) {
    if (bundle.dim() != 1) throw std::invalid_argument("simulate_hedge: bundle must be one-dimensional");
    if (!(s0 > 0.0)) throw std::invalid_argument("simulate_hedge: s0 must be positive");
    const TimeGrid& grid = bundle.grid();
    if (std::abs(grid.back() - params.T) > 1e-12 * params.T) {
        throw std::invalid_argument("simulate_hedge: bundle grid must end at T");
    }
    const std::vector<double> times = trace_times(grid);
    const std::size_t n = times.size();
    const std::size_t P = bundle.path_count();

    HedgeReport r;
    r.x0 = x0;
    r.s0 = s0;
    r.steps = n - 1;
    r.clamp_tol = options.clamp_tol;
    r.s_T.resize(P);
    r.x_T.resize(P);
    r.shortfall.resize(P);
    std::vector<std::size_t> clamps(P, 0), off(P, 0);

    for_each_path(bundle, options.exec, [&](std::size_t p, std::span<const double> w) {
        std::vector<double> s(n);
        gbm_path(w, grid, s0, params.sigma, s);
        double x = x0, y = strategy.y0();
        std::size_t c = 0, o = 0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double ds = s[k + 1] - s[k];
            const double dt = times[k + 1] - times[k];
            bool outside = false;
            const double a = strategy.alpha(times[k], s[k], &outside);
            double g = strategy.gamma(times[k], s[k], &outside);
            const double s2 = s[k] * s[k];
            const double banded = band.clamp(s2 * g);
            if (std::abs(banded - s2 * g) > options.clamp_tol) ++c;
            g = banded / s2;
            o += outside;
            x += y * ds;
            y += a * dt + g * ds;
        }
        r.s_T[p] = s.back();
        r.x_T[p] = x;
        r.shortfall[p] = x - payoff(s.back());
        clamps[p] = c;
        off[p] = o;
    });
    for (std::size_t p = 0; p < P; ++p) {
        r.gamma_clamps += clamps[p];
        r.off_grid += off[p];
    }
    if (P > 0) {
        r.summary = summarize(r.shortfall);
        const MeanSe m = mean_se(r.x_T);
        r.mean_x_T = m.mean;
        r.se_x_T = m.se;
    }
    return r;
}

GapReport replication_gap(const PayoffSpec& payoff, const GammaBand& band, const MarketParams& params, double s0,
                          const BrownianBundle& bundle, const GapOptions& options) {
    if (!band.has_upper() && !band.has_lower()) {
        throw std::invalid_argument("replication_gap: band has no active constraint");
    }
    GapReport g;
    g.cushion = options.cushion;
    auto sol = std::make_shared<const DpeSolution>(
        solve_dpe(payoff, band, params, PdeGrid::around(s0, params, options.nx)));
    g.bs_price = bs_price(payoff, s0, 0.0, params);
    g.dpe_price = price_at(*sol, s0);
    g.gap = g.dpe_price - g.bs_price;
    const StrategySpec strategy = StrategySpec::from_dpe(sol, s0);
    g.bs_funded = simulate_hedge(bundle, s0, g.bs_price, strategy, payoff, band, params, options.hedge);
    g.dpe_funded =
        simulate_hedge(bundle, s0, options.cushion * g.dpe_price, strategy, payoff, band, params, options.hedge);
    return g;
}

void write_shortfall_csv(const HedgeReport& r, std::ostream& out) {
    CsvWriter csv(out, {"path", "S_T", "X_T", "shortfall"});
    for (std::size_t p = 0; p < r.path_count(); ++p) {
        csv.field(p).field(r.s_T[p]).field(r.x_T[p]).field(r.shortfall[p]);
        csv.end_row();
    }
}

nlohmann::json to_json(const HedgeReport& r) {
    return {{"x0", r.x0},
            {"s0", r.s0},
            {"steps", r.steps},
            {"paths", r.path_count()},
            {"shortfall", to_json(r.summary)},
            {"success_rate", r.success_rate()},
            {"prob_negative", r.prob_negative()},
            {"mean_X_T", r.mean_x_T},
            {"se_X_T", r.se_x_T},
            {"gamma_clamps", r.gamma_clamps},
            {"clamp_rate", r.clamp_rate()},
            {"off_grid", r.off_grid}};
}

nlohmann::json to_json(const GapReport& r) {
    return {{"bs_price", r.bs_price},
            {"dpe_price", r.dpe_price},
            {"gap", r.gap},
            {"cushion", r.cushion},
            {"bs_funded", to_json(r.bs_funded)},
            {"dpe_funded", to_json(r.dpe_funded)}};
}

} // namespace dsi
