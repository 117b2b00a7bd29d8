#include "experiments.hpp"

#include "dsilab/csv.hpp"
#include "dsilab/dpe.hpp"
#include "dsilab/hedge.hpp"
#include "dsilab/lilab.hpp"
#include "dsilab/market.hpp"
#include "dsilab/paths.hpp"
#include "dsilab/stats.hpp"
#include "dsilab/stochint.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

namespace dsi::cli {

namespace {

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

std::string fmt(double x) { return format_double(x); }

// Library constructors report bad inputs with std::invalid_argument / std::domain_error;
// inside input building those are configuration errors on a known key.
template <class Fn>
auto as_config(const std::string& key, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key, e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(key, e.what());
    }
}

struct Context {
    const RunConfig& cfg;
    std::string section;
    Exec exec;

    std::string key(const std::string& k) const { return section + "." + k; }
    double real(const std::string& k) const { return cfg.real(k); }
    std::size_t integer(const std::string& k) const { return cfg.integer(k); }

    std::size_t positive(const std::string& k) const {
        const std::size_t v = cfg.integer(k);
        require(v > 0, key(k), "must be positive");
        return v;
    }
    double positive_real(const std::string& k) const {
        const double v = cfg.real(k);
        require(v > 0.0, key(k), "must be positive");
        return v;
    }
    double unit_open(const std::string& k) const {
        const double v = cfg.real(k);
        require(v > 0.0 && v < 1.0, key(k), "must lie in (0, 1)");
        return v;
    }
};

MarketParams market(const Context& c) {
    c.positive_real("sigma");
    c.positive_real("T");
    c.positive_real("s0");
    return MarketParams(c.real("sigma"), c.real("T"));
}

PayoffSpec payoff(const Context& c) {
    const std::string& kind = c.cfg.text("payoff");
    if (kind == "call" || kind == "put") {
        c.positive_real("strike");
        const double K = c.real("strike");
        return kind == "call" ? PayoffSpec::call(K) : PayoffSpec::put(K);
    }
    if (kind == "piecewise") {
        return as_config(c.key("slopes"), [&] {
            return PayoffSpec::piecewise_linear(c.real("value0"), c.cfg.real_list("breakpoints"),
                                                c.cfg.real_list("slopes"));
        });
    }
    const std::string& file = c.cfg.text("payoff_file");
    require(!file.empty(), c.key("payoff_file"), "required for payoff = table");
    std::ifstream in(file);
    require(static_cast<bool>(in), c.key("payoff_file"), "cannot open " + file);
    return as_config(c.key("payoff_file"), [&] { return import_payoff_csv(in); });
}

GammaBand band(const Context& c) {
    return as_config(c.key("upper"), [&] { return GammaBand(c.cfg.optional_real("lower"), c.cfg.optional_real("upper")); });
}

IntegrandSpec integrand(const Context& c, const std::string& name_key, const std::string& params_key,
                        std::size_t d) {
    return as_config(c.key(name_key), [&] {
        const auto p = c.cfg.real_list(params_key);
        return make_integrand(c.cfg.text(name_key), d, p);
    });
}

std::size_t dimension(const Context& c) {
    const std::size_t d = c.positive("d");
    require(d <= 64, c.key("d"), "at most 64");
    return d;
}

std::string capture(const std::function<void(std::ostream&)>& write) {
    std::ostringstream os;
    write(os);
    return os.str();
}

bool symmetric_constant(const IntegrandSpec& b) {
    if (!b.is_constant()) return false;
    const Matrix& m = b.constant_value();
    for (std::size_t i = 0; i < m.dim(); ++i)
        for (std::size_t j = i + 1; j < m.dim(); ++j)
            if (m(i, j) != m(j, i)) return false;
    return true;
}

// ---------------------------------------------------------------------------

void run_lil_sup(const Context& c, bool compute, RunOutput& out) {
    const std::size_t d = dimension(c);
    const auto b = integrand(c, "integrand", "params", d);
    const auto compare_params = c.cfg.real_list("compare_params");
    std::optional<IntegrandSpec> b2;
    if (!compare_params.empty()) {
        b2 = as_config(c.key("compare_params"),
                       [&] { return make_integrand(c.cfg.text("integrand"), d, compare_params); });
    }
    const GeometricGrid gg{c.positive_real("t0"), c.unit_open("theta"), c.positive("levels"), c.positive("substeps")};
    const RatioKind kind = c.cfg.text("kind") == "h" ? RatioKind::h_normalized : RatioKind::t_normalized;
    if (kind == RatioKind::h_normalized) require(gg.t0 < std::exp(-1.0), c.key("t0"), "h(t) needs t0 < 1/e");
    const std::size_t paths = c.positive("paths");
    const double eta = c.real("eta");
    require(eta >= 0.0, c.key("eta"), "must be nonnegative");
    const auto grid = as_config(c.key("levels"), [&] { return make_grid(gg); });
    if (!compute) return;

    const auto bundle = sample_bundle(d, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const RatioOptions opt{kind, c.cfg.flag("absolute")};
    auto estimate = [&](const IntegrandSpec& spec, std::string& method) {
        if (symmetric_constant(spec)) {
            method = "closed_form";
            return ratio_sup(closed_form_constant(bundle, SymMatrix(spec.constant_value()), c.exec), opt,
                             bundle.grid());
        }
        method = "ito_sums";
        return ratio_sup(integrate_double(bundle, spec, c.exec), opt, bundle.grid());
    };
    std::string method;
    const LilEstimate est = estimate(b, method);
    out.results["estimate"] = to_json(est);
    out.results["method"] = method;
    out.results["integrand_bound"] = b.bound() ? nlohmann::json(*b.bound()) : nlohmann::json(nullptr);
    out.csvs.push_back({"lil-sup_sup.csv", capture([&](std::ostream& os) { write_sup_csv(est, os); })});

    if (kind == RatioKind::h_normalized && b.bound() && *b.bound() <= 1.0) {
        const double envelope = (1.0 + eta) * (1.0 + eta) / gg.theta;
        const double violations = fraction_at_least(est.per_path_sup, std::nextafter(envelope, INFINITY));
        out.results["envelope"] = envelope;
        out.results["violation_rate"] = violations;
        out.checks.push_back({"envelope_q99", est.summary.q99 < envelope,
                              "q99 " + fmt(est.summary.q99) + " vs envelope " + fmt(envelope)});
        const double max_rate = c.real("max_violation_rate");
        out.checks.push_back({"envelope_violation_rate", violations < max_rate,
                              "rate " + fmt(violations) + " vs " + fmt(max_rate)});
    }
    if (b2) {
        std::string m2;
        const LilEstimate est2 = estimate(*b2, m2);
        out.results["compare"] = to_json(est2);
        out.csvs.push_back({"lil-sup_compare_sup.csv", capture([&](std::ostream& os) { write_sup_csv(est2, os); })});
        out.checks.push_back({"ordering", est2.summary.median > est.summary.median,
                              "median " + fmt(est2.summary.median) + " vs " + fmt(est.summary.median)});
    }
}

void run_moment(const Context& c, bool compute, RunOutput& out) {
    const std::size_t d = dimension(c);
    const auto b = integrand(c, "integrand", "params", d);
    require(b.bound() && *b.bound() <= 1.0, c.key("integrand"), "needs a declared bound <= 1");
    const double lambda = c.positive_real("lambda");
    const double T = c.positive_real("T");
    require(2.0 * lambda * T < 1.0, c.key("lambda"), "needs 2 lambda T < 1");
    const std::size_t paths = c.positive("paths");
    const auto grid = make_grid(UniformGrid{T, c.positive("steps")});
    if (!compute) return;

    const auto bundle = sample_bundle(d, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const MomentReport r = moment_dominance(bundle, b, lambda, c.exec);
    out.results = to_json(r);
    if (b.name() == "identity") {
        const double dev = std::abs(r.mc_mean - r.closed_form);
        out.checks.push_back({"closed_form_3se", dev <= 3.0 * r.se,
                              "|mc - closed| = " + fmt(dev) + " vs 3 SE = " + fmt(3.0 * r.se)});
    } else {
        out.checks.push_back({"dominance_2se", r.mc_mean <= r.closed_form + 2.0 * r.se,
                              "mc " + fmt(r.mc_mean) + " vs closed + 2 SE " + fmt(r.closed_form + 2.0 * r.se)});
    }
    out.csvs.push_back({"moment_summary.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"lambda", "T", "d", "paths", "mc_mean", "se", "closed_form", "margin_se"});
                            w.field(r.lambda).field(r.T).field(r.d).field(r.path_count).field(r.mc_mean).field(r.se);
                            w.field(r.closed_form).field(r.dominance_margin);
                            w.end_row();
                        })});
}

void run_tail_bound(const Context& c, bool compute, RunOutput& out) {
    const std::size_t d = dimension(c);
    const auto b = integrand(c, "integrand", "params", d);
    require(b.bound() && *b.bound() <= 1.0, c.key("integrand"), "needs a declared bound <= 1");
    const double T = c.positive_real("T");
    const auto alphas = c.cfg.real_list("alphas");
    require(!alphas.empty(), c.key("alphas"), "needs at least one threshold");
    for (double a : alphas) require(a >= 0.0, c.key("alphas"), "thresholds must be nonnegative");
    const LambdaRule rule = c.cfg.text("lambda_rule") == "optimized" ? LambdaRule::optimized : LambdaRule::fixed_eta;
    const double eta = c.real("eta");
    require(eta > 0.0, c.key("eta"), "must be positive");
    const std::size_t paths = c.positive("paths");
    const auto grid = make_grid(UniformGrid{T, c.positive("steps")});
    if (!compute) return;

    const auto bundle = sample_bundle(d, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const TailReport r = tail_bound_check(bundle, b, alphas, rule, eta, c.exec);
    out.results = to_json(r);
    std::string flagged;
    for (const auto& row : r.rows)
        if (row.flagged) flagged += (flagged.empty() ? "" : ",") + fmt(row.alpha);
    out.checks.push_back({"bound_holds", !r.any_flagged(),
                          flagged.empty() ? "no threshold above bound + 3 SE" : "flagged alphas " + flagged});
    out.csvs.push_back({"tail-bound_table.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"alpha", "lambda", "bound", "exceedance", "binomial_se", "flagged"});
                            for (const auto& row : r.rows) {
                                w.field(row.alpha).field(row.lambda).field(row.bound).field(row.exceedance);
                                w.field(row.binomial_se).field(row.flagged ? 1 : 0);
                                w.end_row();
                            }
                        })});
}

void run_ergodic(const Context& c, bool compute, RunOutput& out) {
    const std::size_t d = dimension(c);
    const auto diag = c.cfg.real_list("beta");
    require(diag.size() == d, c.key("beta"), "needs d diagonal entries");
    const double delta = c.positive_real("delta");
    const std::size_t N = c.positive("levels");
    const std::size_t paths = c.positive("paths");
    const double tol = c.positive_real("tolerance");
    const SymMatrix beta = SymMatrix::diagonal(diag);
    const auto grid = make_grid(GeometricGrid{std::exp(-1.0), std::exp(-1.0), N - 1, 1});
    if (!compute) return;

    const auto bundle = sample_bundle(d, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const ErgodicReport r = ergodic_liminf(bundle, beta, delta, c.exec);
    out.results = to_json(r);
    const double dev = std::abs(r.final_frequency - r.reference_probability);
    out.checks.push_back({"frequency", dev <= tol,
                          "|" + fmt(r.final_frequency) + " - " + fmt(r.reference_probability) + "| = " + fmt(dev) +
                              " vs " + fmt(tol)});
    out.csvs.push_back({"ergodic_running.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"n", "frequency"});
                            for (std::size_t n = 0; n < r.running_frequency.size(); ++n) {
                                w.field(n + 1).field(r.running_frequency[n]);
                                w.end_row();
                            }
                        })});
    out.csvs.push_back({"ergodic_paths.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"path", "min_Y", "frequency"});
                            for (std::size_t p = 0; p < r.per_path_min.size(); ++p) {
                                w.field(p).field(r.per_path_min[p]).field(r.per_path_frequency[p]);
                                w.end_row();
                            }
                        })});
}

void run_example36(const Context& c, bool compute, RunOutput& out) {
    const GeometricGrid gg{c.positive_real("t0"), c.unit_open("theta"), c.positive("levels"), c.positive("substeps")};
    require(gg.t0 < std::exp(-std::exp(1.0)), c.key("t0"), "needs t0 < e^-e");
    const double t_lo = c.real("t_lo"), t_hi = c.real("t_hi");
    require(t_lo >= 0.0 && t_hi > t_lo, c.key("t_hi"), "needs 0 <= t_lo < t_hi");
    const auto lo = c.cfg.optional_real("golden_lo"), hi = c.cfg.optional_real("golden_hi");
    require(lo.has_value() == hi.has_value(), c.key("golden_hi"), "golden_lo and golden_hi come together");
    const std::size_t paths = c.positive("paths");
    const auto grid = as_config(c.key("levels"), [&] { return make_grid(gg); });
    if (!compute) return;

    const auto bundle = sample_bundle(1, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const Example36Report r = example36_rate(bundle, t_lo, t_hi, c.exec);
    out.results["ratio"] = to_json(r.ratio);
    out.results["proxy"] = to_json(r.proxy);
    out.results["median_gap"] = r.median_gap;
    // the neglected -(1/2) int b / rate term is about 1 / (2 loglog(1/t)) at the window end
    out.results["predicted_gap"] = 0.5 / std::log(std::log(1.0 / std::min(t_hi, gg.t0)));
    bool finite = true;
    for (double v : r.ratio.per_path_sup) finite = finite && std::isfinite(v);
    for (double v : r.proxy.per_path_sup) finite = finite && std::isfinite(v);
    out.checks.push_back({"finite_sups", finite, "every per-path sup finite"});
    if (lo) {
        const double m = r.proxy.summary.median;
        out.checks.push_back({"proxy_golden", m >= *lo && m <= *hi,
                              "median " + fmt(m) + " in [" + fmt(*lo) + ", " + fmt(*hi) + "]"});
    }
    out.csvs.push_back({"example36_ratio.csv", capture([&](std::ostream& os) { write_sup_csv(r.ratio, os); })});
    out.csvs.push_back({"example36_proxy.csv", capture([&](std::ostream& os) { write_sup_csv(r.proxy, os); })});
}

void run_prop39(const Context& c, bool compute, RunOutput& out) {
    const std::size_t d = dimension(c);
    const double a = c.real("a");
    require(std::isfinite(a), c.key("a"), "must be finite");
    const auto m = integrand(c, "m", "m_params", d);
    const double eps = c.real("eps");
    require(eps > 0.0 && eps <= 1.0, c.key("eps"), "must lie in (0, 1]");
    const std::size_t K = c.positive("levels"), window = c.positive("window");
    require(K >= 2 * window, c.key("window"), "needs levels >= 2 window");
    const GeometricGrid gg{c.positive_real("t0"), c.unit_open("theta"), K, c.positive("substeps")};
    const std::size_t paths = c.positive("paths");
    const auto grid = as_config(c.key("levels"), [&] { return make_grid(gg); });
    const std::vector<double> drift(d, a);
    const DriftSpec spec = DriftSpec::constant(drift);
    if (!compute) return;

    const auto bundle = sample_bundle(d, grid, paths, c.cfg.seed, {.materialize = false, .exec = c.exec});
    const DriftIntegral res = drift_integral(bundle, spec, m, eps, c.exec);
    const auto lv = bundle.grid().level_indices();
    const std::size_t shift = bundle.grid().starts_at_zero() ? 0 : 1;
    struct Row {
        double t_min, t_max, median;
    };
    std::vector<Row> rows;
    for (std::size_t w = 0; w + window <= K; w += window) {
        const std::size_t hi = lv[K - w] + shift + 1;
        const std::size_t lo = lv[K - w - window] + shift;
        std::vector<double> best(paths, 0.0);
        for (std::size_t p = 0; p < paths; ++p)
            for (std::size_t k = lo; k < hi; ++k) best[p] = std::max(best[p], std::abs(res.scaled[p][k]));
        rows.push_back({res.scaled.times()[lo], res.scaled.times()[hi - 1], quantile(best, 0.5)});
    }
    bool decreasing = true;
    std::string trail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && !(rows[i].median < rows[i - 1].median)) decreasing = false;
        trail += (i ? " > " : "") + fmt(rows[i].median);
    }
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : rows) jr.push_back({{"t_min", r.t_min}, {"t_max", r.t_max}, {"median", r.median}});
    out.results["eps"] = eps;
    out.results["windows"] = jr;
    out.checks.push_back({"median_decreasing", decreasing, "window medians " + trail});
    out.csvs.push_back({"prop39_windows.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"window", "t_min", "t_max", "median"});
                            for (std::size_t i = 0; i < rows.size(); ++i) {
                                w.field(i).field(rows[i].t_min).field(rows[i].t_max).field(rows[i].median);
                                w.end_row();
                            }
                        })});
}

void run_bs_price(const Context& c, bool compute, RunOutput& out) {
    const MarketParams mp = market(c);
    const PayoffSpec g = payoff(c);
    const double s0 = c.real("s0"), t = c.real("t");
    require(t >= 0.0 && t < mp.T, c.key("t"), "must lie in [0, T)");
    const std::size_t nodes = c.positive("quadrature_nodes");
    const double qtol = c.positive_real("quadrature_tolerance");
    const double lo = c.positive_real("curve_lo"), hi = c.real("curve_hi");
    require(hi > lo, c.key("curve_hi"), "must exceed curve_lo");
    const std::size_t n = c.integer("curve_points");
    require(n >= 2, c.key("curve_points"), "needs at least 2 points");
    if (!compute) return;

    const double price = bs_price(g, s0, t, mp);
    const QuadratureResult q = bs_price_quadrature(g, s0, t, mp, 1e-8, nodes);
    out.results["payoff"] = g.to_json();
    out.results["price"] = price;
    out.results["quadrature"] = {{"value", q.value}, {"nodes", q.nodes}, {"converged", q.converged}};
    const double diff = std::abs(price - q.value);
    const double tol = qtol * std::max(1.0, std::abs(price));
    out.checks.push_back({"quadrature_agreement", diff <= tol, "|exact - quadrature| = " + fmt(diff) + " vs " + fmt(tol)});
    out.csvs.push_back({"bs-price_curve.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"s", "price", "payoff"});
                            for (double s : log_grid(lo, hi, n)) {
                                w.field(s).field(bs_price(g, s, t, mp)).field(g(s));
                                w.end_row();
                            }
                        })});
}

PdeGrid pde_grid(const Context& c, const MarketParams& mp, double width_sd = 6.0, double safety = 0.9) {
    const std::size_t nx = c.integer("nx");
    require(nx >= 16, c.key("nx"), "needs at least 16 nodes");
    return as_config(c.key("nx"), [&] { return PdeGrid::around(c.real("s0"), mp, nx, width_sd, safety); });
}

void run_dpe_price(const Context& c, bool compute, RunOutput& out) {
    const MarketParams mp = market(c);
    const PayoffSpec g = payoff(c);
    const GammaBand gb = band(c);
    const double width = c.positive_real("width_sd");
    const double safety = c.real("safety");
    require(safety > 0.0 && safety <= 1.0, c.key("safety"), "must lie in (0, 1]");
    const PdeGrid grid = pde_grid(c, mp, width, safety);
    const double s0 = c.real("s0");
    const double bs_tol = c.positive_real("bs_tolerance");
    if (!compute) return;

    const DpeSolution sol = solve_dpe(g, gb, mp, grid);
    const double v = price_at(sol, s0);
    const double bs = bs_price(g, s0, 0.0, mp);
    std::size_t lower = 0, upper = 0;
    for (auto a : sol.active) {
        lower += a == ActiveConstraint::lower;
        upper += a == ActiveConstraint::upper;
    }
    out.results["payoff"] = g.to_json();
    out.results["price"] = v;
    out.results["bs_price"] = bs;
    out.results["gap"] = v - bs;
    out.results["relative_bs_error"] = std::abs(v - bs) / std::abs(bs);
    out.results["grid"] = {{"nx", grid.nx}, {"nt", grid.nt}, {"dx", grid.dx()}, {"dt", grid.dt()},
                           {"s_min", sol.s.front()}, {"s_max", sol.s.back()}};
    out.results["active_nodes"] = {{"lower", lower}, {"upper", upper}};
    out.results["residual_early"] = sol.residual_early;
    out.results["upper_violations"] = sol.upper_violations;
    out.results["alpha_max"] = sol.alpha_max;

    // the band is inactive when the face-lift leaves g alone and no node was clamped
    const PayoffSpec lift = face_lift(g, gb, sol.s);
    bool lifted = false;
    const double up = gb.has_upper() ? std::abs(*gb.upper()) : 0.0;
    for (double s : sol.s) {
        // lifting g + upper log s costs roundoff of order upper |log s| eps
        const double tol = 1e-9 * std::max(1.0, std::abs(g(s))) + 1e-14 * up * (1.0 + std::abs(std::log(s)));
        lifted = lifted || std::abs(lift(s) - g(s)) > tol;
    }
    out.results["face_lift_active"] = lifted;
    if (lower + upper == 0 && !lifted) {
        const double rel = std::abs(v - bs) / std::abs(bs);
        out.checks.push_back({"bs_relative_error", rel < bs_tol, "relative error " + fmt(rel) + " vs " + fmt(bs_tol)});
    } else {
        // grid tolerance: discretization error of the unconstrained solve on the same grid
        const DpeSolution unc = solve_dpe(g, GammaBand::unconstrained(), mp, grid);
        double tol = 0.0, worst = INFINITY;
        for (std::size_t i = 1; i + 1 < grid.nx; ++i) {
            const double ref = bs_price(g, sol.s[i], 0.0, mp);
            tol = std::max(tol, std::abs(unc.value(0, i) - ref));
            worst = std::min(worst, sol.value(0, i) - ref);
        }
        out.results["grid_tolerance"] = tol;
        out.results["min_gap_interior"] = worst;
        out.checks.push_back({"dominates_bs", worst >= -tol, "min(v - bs) " + fmt(worst) + " vs -" + fmt(tol)});
        if (gb.has_upper()) {
            out.checks.push_back({"upper_respected", sol.upper_violations == 0,
                                  std::to_string(sol.upper_violations) + " nodes above upper + tol"});
        }
    }
    std::size_t stride = c.integer("time_stride");
    if (stride == 0) stride = std::max<std::size_t>(1, grid.nt / 20);
    out.csvs.push_back({"dpe-price_slice.csv", capture([&](std::ostream& os) {
                            CsvWriter w(os, {"s", "v", "bs", "v_s", "s2v_ss"});
                            for (std::size_t i = 0; i < grid.nx; ++i) {
                                const std::size_t k = sol.index(0, i);
                                w.field(sol.s[i]).field(sol.v[k]).field(bs_price(g, sol.s[i], 0.0, mp));
                                w.field(sol.v_s[k]).field(sol.s2v_ss[k]);
                                w.end_row();
                            }
                        })});
    out.csvs.push_back({"dpe-price_surface.csv",
                        capture([&](std::ostream& os) { export_surface_csv(sol, os, stride); })});
}

BrownianBundle hedge_bundle(const Context& c, const MarketParams& mp) {
    return sample_bundle(1, make_grid(UniformGrid{mp.T, c.positive("steps")}), c.positive("paths"), c.cfg.seed,
                         {.materialize = false, .exec = c.exec});
}

void run_hedge(const Context& c, bool compute, RunOutput& out) {
    const MarketParams mp = market(c);
    const PayoffSpec g = payoff(c);
    const GammaBand gb = band(c);
    const PdeGrid grid = pde_grid(c, mp);
    const std::string& strategy = c.cfg.text("strategy");
    const std::string& funding = c.cfg.text("funding");
    const double cushion = c.positive_real("cushion");
    const double target = c.real("success_target");
    const double max_clamp = c.real("max_clamp_rate");
    c.positive("steps");
    c.positive("paths");
    if (strategy == "constant") {
        as_config(c.key("gamma"), [&] { return StrategySpec::constant(c.real("y0"), c.real("alpha"), c.real("gamma")); });
    }
    if (!compute) return;

    const double s0 = c.real("s0");
    std::shared_ptr<const DpeSolution> sol;
    if (strategy == "dpe" || funding == "dpe") sol = std::make_shared<const DpeSolution>(solve_dpe(g, gb, mp, grid));
    const StrategySpec spec = strategy == "dpe"        ? StrategySpec::from_dpe(sol, s0)
                              : strategy == "constant" ? StrategySpec::constant(c.real("y0"), c.real("alpha"), c.real("gamma"))
                                                       : StrategySpec::hold(c.real("y0"));
    const double bs = bs_price(g, s0, 0.0, mp);
    const double x0 = funding == "dpe" ? cushion * price_at(*sol, s0) : funding == "bs" ? cushion * bs : c.real("x0");
    const auto bundle = hedge_bundle(c, mp);
    const HedgeReport r = simulate_hedge(bundle, s0, x0, spec, g, gb, mp, {.exec = c.exec});

    out.results["strategy"] = spec.to_json();
    out.results["bs_price"] = bs;
    if (sol) out.results["dpe_price"] = price_at(*sol, s0);
    out.results["report"] = to_json(r);
    const double dev = std::abs(r.mean_x_T - x0);
    out.checks.push_back({"wealth_martingale", dev <= 4.0 * r.se_x_T,
                          "|mean X_T - x0| = " + fmt(dev) + " vs 4 SE = " + fmt(4.0 * r.se_x_T)});
    if (strategy == "dpe" && funding == "dpe") {
        out.checks.push_back({"super_replication", r.success_rate() >= target,
                              "success " + fmt(r.success_rate()) + " vs " + fmt(target)});
    }
    if (strategy == "dpe" && !gb.has_lower()) {
        out.checks.push_back({"clamp_rate", r.clamp_rate() < max_clamp,
                              "clamp rate " + fmt(r.clamp_rate()) + " vs " + fmt(max_clamp)});
    }
    out.csvs.push_back({"hedge_shortfall.csv", capture([&](std::ostream& os) { write_shortfall_csv(r, os); })});
}

void run_gap(const Context& c, bool compute, RunOutput& out) {
    const MarketParams mp = market(c);
    const PayoffSpec g = payoff(c);
    const GammaBand gb = band(c);
    require(gb.has_lower() || gb.has_upper(), c.key("upper"), "gap needs an active constraint");
    pde_grid(c, mp);
    const double cushion = c.positive_real("cushion");
    const double target = c.real("success_target");
    const double min_prob = c.real("min_bs_shortfall_prob");
    c.positive("steps");
    c.positive("paths");
    if (!compute) return;

    const auto bundle = hedge_bundle(c, mp);
    GapOptions opt;
    opt.cushion = cushion;
    opt.nx = c.integer("nx");
    opt.hedge.exec = c.exec;
    const GapReport r = replication_gap(g, gb, mp, c.real("s0"), bundle, opt);
    out.results = to_json(r);
    out.checks.push_back({"gap_positive", r.gap > 0.0, "v - bs = " + fmt(r.gap)});
    out.checks.push_back({"dpe_funded_super_replicates", r.dpe_funded.success_rate() >= target,
                          "success " + fmt(r.dpe_funded.success_rate()) + " vs " + fmt(target)});
    out.checks.push_back({"bs_funded_shortfall", r.bs_funded.prob_negative() >= min_prob,
                          "P[shortfall < 0] " + fmt(r.bs_funded.prob_negative()) + " vs " + fmt(min_prob)});
    out.csvs.push_back({"gap_bs_funded.csv", capture([&](std::ostream& os) { write_shortfall_csv(r.bs_funded, os); })});
    out.csvs.push_back({"gap_dpe_funded.csv", capture([&](std::ostream& os) { write_shortfall_csv(r.dpe_funded, os); })});
}

using Runner = void (*)(const Context&, bool, RunOutput&);

const std::map<std::string, Runner>& runners() {
    static const std::map<std::string, Runner> r{
        {"bs-price", run_bs_price}, {"dpe-price", run_dpe_price}, {"ergodic", run_ergodic},
        {"example36", run_example36}, {"gap", run_gap}, {"hedge", run_hedge},
        {"lil-sup", run_lil_sup}, {"moment", run_moment}, {"prop39", run_prop39},
        {"tail-bound", run_tail_bound},
    };
    return r;
}

void dispatch(const RunConfig& config, bool compute, RunOutput& out) {
    const auto it = runners().find(config.experiment);
    if (it == runners().end()) throw ConfigError("experiment", "no runner for " + config.experiment);
    const Context ctx{config, config.experiment, Exec{config.workers}};
    it->second(ctx, compute, out);
}

} // namespace

bool RunOutput::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void validate(const RunConfig& config) {
    RunOutput scratch;
    dispatch(config, false, scratch);
}

RunOutput execute(const RunConfig& config) {
    RunOutput out;
    dispatch(config, true, out);
    return out;
}

nlohmann::json summary_json(const RunConfig& config, const RunOutput& out) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : config.params) params[k] = v;
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : out.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto& a : out.csvs) artifacts.push_back(a.filename);
    return {{"version", kVersion},
            {"config_hash", hex64(config_hash(config))},
            {"experiment", config.experiment},
            {"seed", config.seed},
            {"parameters", params},
            {"results", out.results},
            {"checks", checks},
            {"passed", out.passed()},
            {"artifacts", artifacts}};
}

std::vector<std::string> write_artifacts(const RunConfig& config, const RunOutput& out) {
    namespace fs = std::filesystem;
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& content) {
        const fs::path p = dir / name;
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        f << content;
        written.push_back(p.string());
    };
    put(config.experiment + ".json", summary_json(config, out).dump(2) + "\n");
    for (const auto& a : out.csvs) put(a.filename, a.content);
    return written;
}

std::string list_catalog() {
    std::vector<std::string> lines;
    for (const auto& e : integrand_catalog()) lines.push_back("integrand " + e.name + ": " + e.serves + " [" + e.description + "]");
    lines.push_back("strategy constant: bounded constant controls, wealth martingale checks [alpha, gamma fixed; S^2 gamma clamped into the band]");
    lines.push_back("strategy dpe: super-replication of the face-lifted payoff [y0 = v_s(0, s0), gamma = v_ss, alpha = drift of v_s, read off the DPE surface]");
    lines.push_back("strategy hold: constant-shares identity X(T) = x0 + y0 (S(T) - s0) [alpha = gamma = 0]");
    std::sort(lines.begin(), lines.end());
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

int command_run(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    RunOutput result;
    try {
        cfg = load_config(config_path, overrides);
        result = execute(cfg);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    }
    for (const auto& path : write_artifacts(cfg, result)) out << "wrote " << path << "\n";
    for (const auto& c : result.checks) {
        (c.passed ? out : err) << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    }
    return result.passed() ? 0 : 1;
}

int command_validate(const std::string& config_path, const Overrides& overrides, std::ostream& out,
                     std::ostream& err) {
    try {
        const RunConfig cfg = load_config(config_path, overrides);
        validate(cfg);
        out << "config ok: " << cfg.experiment << " (hash " << hex64(config_hash(cfg)) << ")\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace dsi::cli
