#include "dsilab/lilab.hpp"

#include "dsilab/csv.hpp"
#include "dsilab/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dsi {

const char* to_string(RatioKind kind) {
    switch (kind) {
    case RatioKind::h_normalized: return "h";
    case RatioKind::t_normalized: return "t";
    case RatioKind::example36: return "example36";
    }
    return "?";
}

double ratio_rate(RatioKind kind, double t) {
    switch (kind) {
    case RatioKind::h_normalized:
        return 0.5 * lil_normalizer(t);
    case RatioKind::t_normalized:
        if (!(t > 0.0)) throw std::domain_error("ratio_rate: t must be positive");
        return 0.5 * t;
    case RatioKind::example36: {
        if (!(t > 0.0 && t < std::exp(-std::numbers::e))) {
            throw std::domain_error("ratio_rate: the example36 rate needs 0 < t < e^{-e}");
        }
        const double ll = std::log(-std::log(t));
        return t * ll / std::log(ll);
    }
    }
    throw std::logic_error("ratio_rate: unknown kind");
}

PathValues outer_values(const DoubleIntegralTrace& trace) {
    PathValues out(std::vector<double>(trace.times().begin(), trace.times().end()), trace.path_count());
    for (std::size_t p = 0; p < trace.path_count(); ++p) {
        const auto v = trace.outer(p);
        std::copy(v.begin(), v.end(), out[p].begin());
    }
    return out;
}

namespace {

LilEstimate sup_over(const PathValues& v, const RatioOptions& options, std::optional<GeometricGrid> grid,
                     std::span<const std::size_t> candidates) {
    const auto times = v.times();
    std::vector<std::size_t> used;
    std::vector<double> rate;
    for (std::size_t k : candidates) {
        const double t = times[k];
        if (t == 0.0 || t < options.t_lo || t > options.t_hi) continue;
        used.push_back(k);
        rate.push_back(ratio_rate(options.kind, t));
    }
    if (used.empty()) throw std::invalid_argument("ratio_sup: no grid time inside the requested range");
    LilEstimate est;
    est.kind = options.kind;
    est.absolute = options.absolute;
    est.grid = grid;
    est.t_min = times[used.front()];
    est.t_max = times[used.back()];
    est.per_path_sup.resize(v.path_count());
    for (std::size_t p = 0; p < v.path_count(); ++p) {
        const auto x = v[p];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < used.size(); ++i) {
            const double val = options.absolute ? std::abs(x[used[i]]) : x[used[i]];
            best = std::max(best, val / rate[i]);
        }
        est.per_path_sup[p] = best;
    }
    est.summary = summarize(est.per_path_sup);
    return est;
}

} // namespace

LilEstimate ratio_sup(const PathValues& v, const RatioOptions& options, std::optional<GeometricGrid> grid) {
    std::vector<std::size_t> all(v.times().size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return sup_over(v, options, grid, all);
}

LilEstimate ratio_sup(const PathValues& v, const RatioOptions& options, const TimeGrid& grid) {
    const std::size_t offset = v.times().size() - grid.size();
    if (offset > 1 || v.times()[offset] != grid[0]) {
        throw std::invalid_argument("ratio_sup: values are not laid out on this grid");
    }
    std::vector<std::size_t> idx;
    if (grid.level_indices().empty()) {
        idx.resize(v.times().size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
    } else {
        for (std::size_t k : grid.level_indices()) idx.push_back(k + offset);
    }
    return sup_over(v, options, grid.geometric(), idx);
}

LilEstimate ratio_sup(const DoubleIntegralTrace& trace, const RatioOptions& options, const TimeGrid& grid) {
    return ratio_sup(outer_values(trace), options, grid);
}

LilEstimate ratio_sup(const DoubleIntegralTrace& trace, const RatioOptions& options,
                      std::optional<GeometricGrid> grid) {
    return ratio_sup(outer_values(trace), options, grid);
}

// --- moments -------------------------------------------------------------------

double moment_identity(double lambda, double T, std::size_t d) {
    if (!(lambda > 0.0) || !(T > 0.0)) throw std::domain_error("moment_identity: need lambda > 0, T > 0");
    if (!(2.0 * lambda * T < 1.0)) throw std::domain_error("moment_identity: requires 2 lambda T < 1");
    const double dd = static_cast<double>(d);
    return std::exp(-lambda * dd * T - 0.5 * dd * std::log1p(-2.0 * lambda * T));
}

double moment_f(double lambda, double T, double t, std::span<const double> y, double z) {
    if (!(t <= T)) throw std::domain_error("moment_f: t must not exceed T");
    const double tau = T - t;
    if (!(2.0 * lambda * tau < 1.0)) throw std::domain_error("moment_f: requires 2 lambda (T - t) < 1");
    const double mu = 1.0 / (1.0 - 2.0 * lambda * tau);
    double y2 = 0.0;
    for (double v : y) y2 += v * v;
    const double d = static_cast<double>(y.size());
    return std::exp(0.5 * d * std::log(mu) + 2.0 * lambda * z - d * lambda * tau +
                    2.0 * mu * lambda * lambda * tau * y2);
}

MomentReport moment_dominance(const BrownianBundle& bundle, const IntegrandSpec& b, double lambda, Exec exec) {
    if (!b.bound() || *b.bound() > 1.0 + 1e-12) {
        throw std::invalid_argument("moment_dominance: integrand '" + b.name() + "' needs a declared bound <= 1");
    }
    MomentReport r;
    r.lambda = lambda;
    r.T = bundle.grid().back();
    r.d = bundle.dim();
    r.integrand = b.name();
    r.closed_form = moment_identity(lambda, r.T, r.d);
    std::vector<double> x(bundle.path_count());
    for_each_double_integral(bundle, b, exec, [&](std::size_t p, const PathIntegral& path) {
        x[p] = std::exp(2.0 * lambda * path.outer.back());
    });
    const auto ms = mean_se(x);
    r.mc_mean = ms.mean;
    r.se = ms.se;
    r.path_count = x.size();
    const double gap = r.closed_form - r.mc_mean;
    if (r.se > 0.0) {
        r.dominance_margin = gap / r.se;
    } else {
        r.dominance_margin = gap >= 0.0 ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity();
    }
    return r;
}

// --- tail bound ------------------------------------------------------------------

double tail_bound(double lambda, double alpha, double T, std::size_t d) {
    return std::exp(-lambda * alpha) * moment_identity(lambda, T, d);
}

double optimal_lambda(double alpha, double T, std::size_t d, double tol) {
    if (!(T > 0.0)) throw std::domain_error("optimal_lambda: T must be positive");
    const double dd = static_cast<double>(d);
    // log of the bound; finite on the open interval
    auto f = [&](double l) { return -l * (alpha + dd * T) - 0.5 * dd * std::log1p(-2.0 * l * T); };
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 0.5 / T;
    double c = b - invphi * (b - a), e = a + invphi * (b - a);
    double fc = f(c), fe = f(e);
    while (b - a > tol * std::max(1.0, b)) {
        if (fc < fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + invphi * (b - a);
            fe = f(e);
        }
    }
    return std::clamp(0.5 * (a + b), std::numeric_limits<double>::min(), 0.5 / T * (1.0 - 1e-15));
}

bool TailReport::any_flagged() const {
    return std::any_of(rows.begin(), rows.end(), [](const TailRow& r) { return r.flagged; });
}

TailReport tail_bound_check(const BrownianBundle& bundle, const IntegrandSpec& b,
                            std::span<const double> alphas, LambdaRule rule, double eta, Exec exec) {
    if (!b.bound() || *b.bound() > 1.0 + 1e-12) {
        throw std::invalid_argument("tail_bound_check: integrand '" + b.name() + "' needs a declared bound <= 1");
    }
    TailReport rep;
    rep.T = bundle.grid().back();
    rep.d = bundle.dim();
    rep.integrand = b.name();
    rep.path_count = bundle.path_count();
    std::vector<double> sup(bundle.path_count());
    for_each_double_integral(bundle, b, exec, [&](std::size_t p, const PathIntegral& path) {
        sup[p] = 2.0 * *std::max_element(path.outer.begin(), path.outer.end());
    });
    const double n = static_cast<double>(sup.size());
    for (double alpha : alphas) {
        TailRow row;
        row.alpha = alpha;
        row.lambda = rule == LambdaRule::optimized ? optimal_lambda(alpha, rep.T, rep.d)
                                                   : 1.0 / (2.0 * rep.T * (1.0 + eta));
        row.bound = tail_bound(row.lambda, alpha, rep.T, rep.d);
        row.exceedance = fraction_at_least(sup, alpha);
        row.binomial_se = std::sqrt(row.exceedance * (1.0 - row.exceedance) / n);
        row.flagged = row.exceedance > row.bound + 3.0 * row.binomial_se;
        rep.rows.push_back(row);
    }
    return rep;
}

// --- ergodic frequency -------------------------------------------------------------

double ergodic_reference(const SymMatrix& beta, double delta, bool* exact) {
    const std::size_t d = beta.dim();
    bool scalar = true;
    const double c = beta(0, 0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (beta(i, j) != (i == j ? c : 0.0)) scalar = false;
    if (exact) *exact = scalar;
    if (scalar) {
        if (c == 0.0) return delta >= 0.0 ? 1.0 : 0.0;
        return boost::math::gamma_p(0.5 * static_cast<double>(d), delta / (2.0 * std::abs(c)));
    }
    const GaussianStream normals(0x5eed5eedULL);
    const std::size_t n = 1000000;
    std::vector<double> z(d);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        normals.fill(i, 0, 0, z.data(), d);
        if (std::abs(beta.quadratic_form(z)) <= delta) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

ErgodicReport ergodic_liminf(const BrownianBundle& bundle, const SymMatrix& beta, double delta, Exec exec) {
    const TimeGrid& g = bundle.grid();
    const auto& geo = g.geometric();
    const double e1 = std::exp(-1.0);
    if (g.kind() != GridKind::geometric || !geo || geo->substeps != 1 ||
        std::abs(geo->t0 / e1 - 1.0) > 1e-12 || std::abs(geo->theta / e1 - 1.0) > 1e-12) {
        throw std::invalid_argument("ergodic_liminf: the grid must be t_n = e^{-n}, n = 1..N");
    }
    if (beta.dim() != bundle.dim()) throw std::invalid_argument("ergodic_liminf: dimension mismatch");
    const std::size_t N = g.size();
    const std::size_t d = bundle.dim();
    ErgodicReport rep;
    rep.levels = N;
    rep.delta = delta;
    rep.reference_probability = ergodic_reference(beta, delta, &rep.reference_exact);
    rep.per_path_min.resize(bundle.path_count());
    rep.per_path_frequency.resize(bundle.path_count());
    // hits[p * N + (n - 1)] = 1 when Y(n) <= delta, in order n = 1..N
    std::vector<double> hits(bundle.path_count() * N);
    for_each_path(bundle, exec, [&](std::size_t p, std::span<const double> w) {
        double mn = std::numeric_limits<double>::infinity();
        double count = 0.0;
        for (std::size_t n = 1; n <= N; ++n) {
            const std::size_t k = N - n;  // grid ascending: index N - n holds e^{-n}
            const double y = std::abs(beta.quadratic_form(w.subspan(k * d, d))) / g[k];
            mn = std::min(mn, y);
            const double hit = y <= delta ? 1.0 : 0.0;
            hits[p * N + n - 1] = hit;
            count += hit;
        }
        rep.per_path_min[p] = mn;
        rep.per_path_frequency[p] = count / static_cast<double>(N);
    });
    rep.running_frequency.resize(N);
    std::vector<double> running(bundle.path_count());
    std::vector<double> cum(bundle.path_count(), 0.0);
    for (std::size_t n = 1; n <= N; ++n) {
        for (std::size_t p = 0; p < bundle.path_count(); ++p) {
            cum[p] += hits[p * N + n - 1];
            running[p] = cum[p] / static_cast<double>(n);
        }
        rep.running_frequency[n - 1] = pairwise_sum(running) / static_cast<double>(running.size());
    }
    rep.final_frequency = rep.running_frequency.back();
    return rep;
}

// --- anomalous rate ------------------------------------------------------------------

Example36Report example36_rate(const BrownianBundle& bundle, double t_lo, double t_hi, Exec exec) {
    if (bundle.dim() != 1) throw std::invalid_argument("example36_rate: the bundle must be one-dimensional");
    const double limit = std::exp(-std::numbers::e);
    if (!(bundle.grid().back() < limit)) {
        throw std::domain_error("example36_rate: every grid time must lie below e^{-e}");
    }
    const auto b = make_integrand("example36", 1);
    const auto trace = integrate_double(bundle, b, exec);
    RatioOptions opt{RatioKind::example36, false, t_lo, t_hi};

    Example36Report rep;
    rep.ratio = ratio_sup(trace, opt, bundle.grid());

    PathValues proxy(std::vector<double>(trace.times().begin(), trace.times().end()), trace.path_count());
    const TimeGrid& g = bundle.grid();
    std::vector<double> bk(g.size());
    Matrix bt(1);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double times[1] = {g[k]};
        const double zero[1] = {0.0};
        b.evaluate(PathPrefix{times, zero, 1}, bt);
        bk[k] = bt(0, 0);
    }
    for_each_path(bundle, exec, [&](std::size_t p, std::span<const double> w) {
        auto x = proxy[p];
        for (std::size_t k = 0; k < g.size(); ++k) x[trace.trace_index(k)] = 0.5 * w[k] * w[k] * bk[k];
    });
    rep.proxy = ratio_sup(proxy, opt, bundle.grid());
    rep.median_gap = std::abs(rep.ratio.summary.median - rep.proxy.summary.median) /
                     std::abs(rep.proxy.summary.median);
    return rep;
}

// --- martingale proxy ------------------------------------------------------------------

std::vector<MartingaleProxyRow> martingale_proxy(const BrownianBundle& bundle, double lambda, Exec exec) {
    const std::size_t d = bundle.dim();
    const double T = bundle.grid().back();
    const auto times = trace_times(bundle.grid());
    const std::size_t n = times.size();
    std::vector<double> f(bundle.path_count() * n);
    for_each_double_integral(bundle, make_integrand("identity", d), exec, [&](std::size_t p, const PathIntegral& r) {
        for (std::size_t k = 0; k < n; ++k) {
            f[k * bundle.path_count() + p] =
                moment_f(lambda, T, times[k], std::span<const double>(r.inner).subspan(k * d, d), r.outer[k]);
        }
    });
    std::vector<MartingaleProxyRow> rows;
    for (std::size_t k = 0; k < n; ++k) {
        const auto ms = mean_se(std::span<const double>(f).subspan(k * bundle.path_count(), bundle.path_count()));
        rows.push_back({times[k], ms.mean, ms.se});
    }
    return rows;
}

// --- output ----------------------------------------------------------------------------

void write_sup_csv(const LilEstimate& est, std::ostream& out) {
    CsvWriter csv(out, {"path", "sup"});
    for (std::size_t p = 0; p < est.per_path_sup.size(); ++p) {
        csv.field(p).field(est.per_path_sup[p]);
        csv.end_row();
    }
}

nlohmann::json to_json(const Summary& s) {
    return {{"mean", s.mean}, {"median", s.median}, {"q05", s.q05}, {"q95", s.q95},
            {"q99", s.q99},   {"min", s.min},       {"max", s.max}};
}

nlohmann::json to_json(const LilEstimate& est) {
    nlohmann::json j{{"ratio", to_string(est.kind)},
                     {"absolute", est.absolute},
                     {"paths", est.per_path_sup.size()},
                     {"t_min", est.t_min},
                     {"t_max", est.t_max},
                     {"summary", to_json(est.summary)}};
    if (est.grid) {
        j["grid"] = {{"t0", est.grid->t0},
                     {"theta", est.grid->theta},
                     {"levels", est.grid->levels},
                     {"substeps", est.grid->substeps}};
    }
    return j;
}

nlohmann::json to_json(const MomentReport& r) {
    nlohmann::json j{{"lambda", r.lambda},   {"T", r.T},   {"d", r.d},
                     {"integrand", r.integrand}, {"mc_mean", r.mc_mean}, {"se", r.se},
                     {"closed_form", r.closed_form}, {"paths", r.path_count}};
    j["dominance_margin"] = std::isfinite(r.dominance_margin) ? nlohmann::json(r.dominance_margin)
                                                              : nlohmann::json(r.dominance_margin > 0 ? "inf" : "-inf");
    return j;
}

nlohmann::json to_json(const TailReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"alpha", row.alpha},
                        {"lambda", row.lambda},
                        {"bound", row.bound},
                        {"exceedance", row.exceedance},
                        {"binomial_se", row.binomial_se},
                        {"flagged", row.flagged}});
    }
    return {{"T", r.T}, {"d", r.d}, {"integrand", r.integrand}, {"paths", r.path_count}, {"rows", rows}};
}

nlohmann::json to_json(const ErgodicReport& r) {
    nlohmann::json running = nlohmann::json::array();
    for (std::size_t n = 10; n <= r.running_frequency.size(); n += 10) {
        running.push_back({{"n", n}, {"frequency", r.running_frequency[n - 1]}});
    }
    return {{"levels", r.levels},
            {"delta", r.delta},
            {"final_frequency", r.final_frequency},
            {"reference_probability", r.reference_probability},
            {"reference_exact", r.reference_exact},
            {"running", running},
            {"per_path_min", to_json(summarize(r.per_path_min))}};
}

} // namespace dsi
