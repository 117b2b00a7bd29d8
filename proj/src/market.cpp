#include "dsilab/market.hpp"

#include "dsilab/csv.hpp"
#include "dsilab/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dsi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// P[l < Z < u] for standard normal Z, accurate in both tails.
double normal_mass(double l, double u) {
    if (!(u > l)) return 0.0;
    if (l >= 0.0) return normal_cdf(-l) - normal_cdf(-u);
    return normal_cdf(u) - normal_cdf(l);
}

double phi_or_zero(double x) { return std::isfinite(x) ? normal_pdf(x) : 0.0; }

double call_price(double s, double K, double sd) {
    if (sd == 0.0) return std::max(s - K, 0.0);
    const double d1 = (std::log(s / K) + 0.5 * sd * sd) / sd;
    return s * normal_cdf(d1) - K * normal_cdf(d1 - sd);
}

double put_price(double s, double K, double sd) {
    if (sd == 0.0) return std::max(K - s, 0.0);
    const double d1 = (std::log(s / K) + 0.5 * sd * sd) / sd;
    return K * normal_cdf(-(d1 - sd)) - s * normal_cdf(-d1);
}

// E[(a + c X) 1{l < X < u}] with X ~ N(m, sd^2).
double linear_segment(double a, double c, double l, double u, double m, double sd) {
    if (!(u > l)) return 0.0;
    const double al = (l - m) / sd, be = (u - m) / sd;
    const double mass = normal_mass(al, be);
    return (a + c * m) * mass + c * sd * (phi_or_zero(al) - phi_or_zero(be));
}

// Probabilists' Gauss-Hermite rule (weight e^{-z^2/2} / sqrt(2 pi)) by Golub-Welsch: the
// Jacobi matrix has zero diagonal and off-diagonal sqrt(k); implicit QL tracks only the
// first eigenvector components.
void hermite_rule(std::size_t n, std::vector<double>& x, std::vector<double>& w) {
    std::vector<double> d(n, 0.0), e(n, 0.0), z(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) e[k] = std::sqrt(static_cast<double>(k + 1));
    z[0] = 1.0;
    for (std::size_t l = 0; l < n; ++l) {
        for (int iter = 0; iter < 60; ++iter) {
            std::size_t m = l;
            for (; m + 1 < n; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m == l) break;
            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? r : -r));
            double s = 1.0, c = 1.0, p = 0.0;
            bool underflow = false;
            for (std::size_t i = m; i-- > l;) {
                double f = s * e[i];
                const double b = c * e[i];
                r = std::hypot(f, g);
                e[i + 1] = r;
                if (r == 0.0) {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if (underflow) continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    x.resize(n);
    w.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = d[order[i]];
        w[i] = z[order[i]] * z[order[i]];
    }
}

struct HullPoint {
    double s, f;
};

double slope(const HullPoint& a, const HullPoint& b) { return (b.f - a.f) / (b.s - a.s); }

} // namespace

MarketParams::MarketParams(double sigma_, double T_) : sigma(sigma_), T(T_) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("MarketParams: sigma must be > 0");
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("MarketParams: T must be > 0");
}

// --- payoffs ---------------------------------------------------------------------

PayoffSpec PayoffSpec::call(double K) {
    if (!(K > 0.0) || !std::isfinite(K)) throw std::invalid_argument("call: strike must be positive");
    PayoffSpec p;
    p.kind_ = Kind::call;
    p.strike_ = K;
    return p;
}

PayoffSpec PayoffSpec::put(double K) {
    if (!(K > 0.0) || !std::isfinite(K)) throw std::invalid_argument("put: strike must be positive");
    PayoffSpec p;
    p.kind_ = Kind::put;
    p.strike_ = K;
    return p;
}

PayoffSpec PayoffSpec::piecewise_linear(double value0, std::vector<double> breakpoints, std::vector<double> slopes) {
    if (slopes.size() != breakpoints.size() + 1) {
        throw std::invalid_argument("piecewise_linear: need one more slope than breakpoints");
    }
    for (double m : slopes)
        if (!std::isfinite(m)) throw std::invalid_argument("piecewise_linear: slopes must be finite");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
        if (!(breakpoints[i] > (i == 0 ? 0.0 : breakpoints[i - 1])) || !std::isfinite(breakpoints[i])) {
            throw std::invalid_argument("piecewise_linear: breakpoints must be positive and increasing");
        }
    }
    PayoffSpec p;
    p.kind_ = Kind::piecewise_linear;
    p.value0_ = value0;
    p.breakpoints_ = std::move(breakpoints);
    p.slopes_ = std::move(slopes);
    if (!(value0 >= 0.0) || !std::isfinite(value0)) throw std::invalid_argument("piecewise_linear: g(0) must be >= 0");
    for (double b : p.breakpoints_)
        if (p(b) < 0.0) throw std::invalid_argument("piecewise_linear: payoff must be nonnegative");
    if (p.slopes_.back() < 0.0) throw std::invalid_argument("piecewise_linear: payoff must be nonnegative");
    return p;
}

PayoffSpec PayoffSpec::tabulated(std::vector<double> s, std::vector<double> values) {
    if (s.size() != values.size() || s.size() < 2) {
        throw std::invalid_argument("tabulated: need at least two (s, g) nodes");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0) || !std::isfinite(s[i]) || (i > 0 && !(s[i] > s[i - 1]))) {
            throw std::invalid_argument("tabulated: nodes must be positive and strictly increasing");
        }
        if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
            throw std::invalid_argument("tabulated: values must be finite and >= 0");
        }
    }
    PayoffSpec p;
    p.kind_ = Kind::tabulated;
    p.x_.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) p.x_[i] = std::log(s[i]);
    p.s_ = std::move(s);
    p.values_ = std::move(values);
    return p;
}

double PayoffSpec::operator()(double s) const {
    switch (kind_) {
    case Kind::call: return std::max(s - strike_, 0.0);
    case Kind::put: return std::max(strike_ - s, 0.0);
    case Kind::piecewise_linear: {
        double v = value0_, left = 0.0;
        for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
            if (s <= breakpoints_[i]) return v + slopes_[i] * (s - left);
            v += slopes_[i] * (breakpoints_[i] - left);
            left = breakpoints_[i];
        }
        return v + slopes_.back() * (s - left);
    }
    case Kind::tabulated: {
        if (!(s > 0.0)) return value_at_zero();
        const std::size_t n = x_.size();
        if (s == s_[0]) return values_[0];
        if (s == s_[n - 1]) return values_[n - 1];
        const double x = std::log(s);
        std::size_t i;
        if (x <= x_[0]) {
            i = 0;
        } else if (x >= x_[n - 1]) {
            i = n - 2;
        } else {
            i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
            if (s == s_[i]) return values_[i];
        }
        const double c = (values_[i + 1] - values_[i]) / (x_[i + 1] - x_[i]);
        return std::max(values_[i] + c * (x - x_[i]), 0.0);
    }
    }
    return 0.0;
}

std::string PayoffSpec::name() const {
    switch (kind_) {
    case Kind::call: return "call";
    case Kind::put: return "put";
    case Kind::piecewise_linear: return "piecewise_linear";
    case Kind::tabulated: return "tabulated";
    }
    return "?";
}

double PayoffSpec::value_at_zero() const {
    switch (kind_) {
    case Kind::call: return 0.0;
    case Kind::put: return strike_;
    case Kind::piecewise_linear: return value0_;
    case Kind::tabulated: {
        const double c = (values_[1] - values_[0]) / (x_[1] - x_[0]);
        if (c > 0.0) return 0.0;
        if (c < 0.0) return kInf;
        return values_[0];
    }
    }
    return 0.0;
}

double PayoffSpec::asymptotic_slope() const {
    switch (kind_) {
    case Kind::call: return 1.0;
    case Kind::put: return 0.0;
    case Kind::piecewise_linear: return slopes_.back();
    case Kind::tabulated: return 0.0;  // logarithmic growth at most
    }
    return 0.0;
}

nlohmann::json PayoffSpec::to_json() const {
    nlohmann::json j{{"kind", name()}};
    switch (kind_) {
    case Kind::call:
    case Kind::put: j["K"] = strike_; break;
    case Kind::piecewise_linear:
        j["value0"] = value0_;
        j["breakpoints"] = breakpoints_;
        j["slopes"] = slopes_;
        break;
    case Kind::tabulated: j["nodes"] = s_.size(); break;
    }
    return j;
}

// --- paths ---------------------------------------------------------------------------

void gbm_path(std::span<const double> w, const TimeGrid& grid, double s0, double sigma, std::span<double> out) {
    const std::size_t offset = grid.starts_at_zero() ? 0 : 1;
    if (w.size() != grid.size() || out.size() != grid.size() + offset) {
        throw std::invalid_argument("gbm_path: size mismatch");
    }
    if (offset) out[0] = s0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out[k + offset] = s0 * std::exp(sigma * w[k] - 0.5 * sigma * sigma * grid[k]);
    }
}

PathValues simulate_gbm(const BrownianBundle& bundle, double s0, const MarketParams& params, Exec exec) {
    if (bundle.dim() != 1) throw std::invalid_argument("simulate_gbm: the bundle must be one-dimensional");
    if (!(s0 > 0.0)) throw std::invalid_argument("simulate_gbm: s0 must be positive");
    PathValues out(trace_times(bundle.grid()), bundle.path_count());
    for_each_path(bundle, exec, [&](std::size_t p, std::span<const double> w) {
        gbm_path(w, bundle.grid(), s0, params.sigma, out[p]);
    });
    return out;
}

// --- pricing ---------------------------------------------------------------------------

double bs_price(const PayoffSpec& g, double s, double t, const MarketParams& params) {
    if (!(s > 0.0)) throw std::invalid_argument("bs_price: s must be positive");
    if (t > params.T) throw std::domain_error("bs_price: t exceeds the horizon");
    const double tau = params.T - t;
    if (tau == 0.0) return g(s);
    const double sd = params.sigma * std::sqrt(tau);
    switch (g.kind()) {
    case PayoffSpec::Kind::call: return call_price(s, g.strike(), sd);
    case PayoffSpec::Kind::put: return put_price(s, g.strike(), sd);
    case PayoffSpec::Kind::piecewise_linear: {
        const auto b = g.breakpoints();
        const auto m = g.slopes();
        double v = g.value0() + m[0] * s;
        for (std::size_t i = 0; i < b.size(); ++i) v += (m[i + 1] - m[i]) * call_price(s, b[i], sd);
        return v;
    }
    case PayoffSpec::Kind::tabulated: {
        const double mean = std::log(s) - 0.5 * sd * sd;
        const auto ns = g.nodes();
        const auto vs = g.values();
        const std::size_t n = ns.size();
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = std::log(ns[i]);
        double v = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double c = (vs[i + 1] - vs[i]) / (x[i + 1] - x[i]);
            v += linear_segment(vs[i] - c * x[i], c, x[i], x[i + 1], mean, sd);
        }
        // end segments continued in log s, floored at 0
        {
            const double c = (vs[1] - vs[0]) / (x[1] - x[0]);
            const double a = vs[0] - c * x[0];
            double lo = -kInf;
            if (c > 0.0) lo = -a / c;
            if (c == 0.0 && a <= 0.0) lo = x[0];
            v += linear_segment(a, c, lo, x[0], mean, sd);
        }
        {
            const double c = (vs[n - 1] - vs[n - 2]) / (x[n - 1] - x[n - 2]);
            const double a = vs[n - 1] - c * x[n - 1];
            double hi = kInf;
            if (c < 0.0) hi = -a / c;
            if (c == 0.0 && a <= 0.0) hi = x[n - 1];
            v += linear_segment(a, c, x[n - 1], hi, mean, sd);
        }
        return v;
    }
    }
    return 0.0;
}

QuadratureResult bs_price_quadrature(const PayoffSpec& g, double s, double t, const MarketParams& params,
                                     double rel_tol, std::size_t max_nodes) {
    if (!(s > 0.0)) throw std::invalid_argument("bs_price_quadrature: s must be positive");
    if (t > params.T) throw std::domain_error("bs_price_quadrature: t exceeds the horizon");
    const double tau = params.T - t;
    if (tau == 0.0) return {g(s), 0, true};
    const double sd = params.sigma * std::sqrt(tau);
    const double mean = std::log(s) - 0.5 * sd * sd;
    QuadratureResult r;
    double prev = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> x, w;
    for (std::size_t n = 8; n <= max_nodes; n *= 2) {
        hermite_rule(n, x, w);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += w[i] * g(std::exp(mean + sd * x[i]));
        r.value = v;
        r.nodes = n;
        if (std::abs(v - prev) <= rel_tol * std::max(std::abs(v), 1e-300)) {
            r.converged = true;
            break;
        }
        prev = v;
    }
    return r;
}

// --- face-lift ---------------------------------------------------------------------------

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi, n >= 2");
    std::vector<double> s(n);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    s.front() = lo;
    s.back() = hi;
    return s;
}

PayoffSpec face_lift(const PayoffSpec& g, const GammaBand& band, std::span<const double> s_grid) {
    if (s_grid.size() < 2) throw std::invalid_argument("face_lift: need at least two grid points");
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
        if (!(s_grid[i] > 0.0) || (i > 0 && !(s_grid[i] > s_grid[i - 1]))) {
            throw std::invalid_argument("face_lift: grid must be positive and strictly increasing");
        }
    }
    std::vector<double> values(s_grid.size());
    if (!band.has_upper()) {
        for (std::size_t i = 0; i < s_grid.size(); ++i) values[i] = g(s_grid[i]);
        return PayoffSpec::tabulated(std::vector<double>(s_grid.begin(), s_grid.end()), values);
    }
    const double up = *band.upper();
    if (up < 0.0) throw std::domain_error("face_lift: a negative upper bound admits no concave majorant");

    // extended point set: 3 decades each side at the grid's mean log spacing
    const double x0 = std::log(s_grid.front()), x1 = std::log(s_grid.back());
    const double dx = (x1 - x0) / static_cast<double>(s_grid.size() - 1);
    const double ext = 3.0 * std::numbers::ln10;
    const std::size_t n_ext = std::min<std::size_t>(4000, static_cast<std::size_t>(std::ceil(ext / dx)));
    const double step = ext / static_cast<double>(n_ext);
    std::vector<double> s;
    s.reserve(s_grid.size() + 2 * n_ext);
    for (std::size_t i = n_ext; i >= 1; --i) s.push_back(std::exp(x0 - step * static_cast<double>(i)));
    s.insert(s.end(), s_grid.begin(), s_grid.end());
    for (std::size_t i = 1; i <= n_ext; ++i) s.push_back(std::exp(x1 + step * static_cast<double>(i)));

    std::vector<HullPoint> hull;
    hull.reserve(s.size() + 1);
    if (up == 0.0) {
        const double g0 = g.value_at_zero();
        if (!std::isfinite(g0)) throw std::domain_error("face_lift: payoff unbounded at 0 has no concave majorant");
        hull.push_back({0.0, g0});
    }
    for (double si : s) {
        const HullPoint q{si, g(si) + up * std::log(si)};
        while (hull.size() >= 2 && slope(hull[hull.size() - 2], hull.back()) <= slope(hull.back(), q)) hull.pop_back();
        hull.push_back(q);
    }
    // the majorant's slope never falls below the payoff's slope at infinity
    const double m_inf = g.asymptotic_slope();
    while (hull.size() >= 2 && slope(hull[hull.size() - 2], hull.back()) <= m_inf) hull.pop_back();

    std::size_t j = 0;
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
        const double si = s_grid[i];
        while (j + 1 < hull.size() && hull[j + 1].s <= si) ++j;
        double env;
        if (j + 1 < hull.size()) {
            const HullPoint& a = hull[j];
            const HullPoint& b = hull[j + 1];
            if (si == a.s) {
                env = a.f;
            } else {
                const double w = (si - a.s) / (b.s - a.s);
                env = (1.0 - w) * a.f + w * b.f;
            }
        } else {
            env = hull.back().f + m_inf * (si - hull.back().s);
        }
        values[i] = std::max(env - up * std::log(si), g(si));
    }
    return PayoffSpec::tabulated(std::vector<double>(s_grid.begin(), s_grid.end()), values);
}

// --- CSV ------------------------------------------------------------------------------

void export_payoff_csv(const PayoffSpec& payoff, std::span<const double> s_grid, std::ostream& out) {
    CsvWriter csv(out, {"s", "g"});
    for (double s : s_grid) {
        csv.field(s).field(payoff(s));
        csv.end_row();
    }
}

PayoffSpec import_payoff_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("import_payoff_csv: empty input");
    std::vector<double> s, g;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("import_payoff_csv: row " + std::to_string(row) + " has no comma");
        }
        auto parse = [&](std::string_view text) {
            while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
            while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size()) {
                throw std::invalid_argument("import_payoff_csv: row " + std::to_string(row) + " is not numeric");
            }
            return v;
        };
        const std::string_view view(line);
        s.push_back(parse(view.substr(0, comma)));
        g.push_back(parse(view.substr(comma + 1)));
    }
    return PayoffSpec::tabulated(std::move(s), std::move(g));
}

} // namespace dsi
