#include "dsilab/stochint.hpp"

#include "dsilab/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dsi {

namespace {

// Neumaier's variant of Kahan summation.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

PathPrefix prefix_at(std::span<const double> times, std::span<const double> path, std::size_t dim,
                     std::size_t k) {
    return PathPrefix{times.first(k + 1), path.first((k + 1) * dim), dim};
}

void load_path(std::span<const double> w, std::size_t dim, bool origin_prepended,
               std::vector<double>& path) {
    const std::size_t offset = origin_prepended ? dim : 0;
    path.resize(w.size() + offset);
    std::fill(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(offset), 0.0);
    std::copy(w.begin(), w.end(), path.begin() + static_cast<std::ptrdiff_t>(offset));
}

} // namespace

// --- IntegrandSpec -----------------------------------------------------------

IntegrandSpec IntegrandSpec::constant(Matrix b, std::string name) {
    if (b.dim() == 0) throw std::invalid_argument("IntegrandSpec: empty matrix");
    IntegrandSpec s;
    s.kind_ = Kind::constant;
    s.name_ = std::move(name);
    s.dim_ = b.dim();
    s.bound_ = operator_norm(b);
    s.constant_ = std::move(b);
    return s;
}

IntegrandSpec IntegrandSpec::time_function(std::string name, std::size_t dim, TimeFn fn,
                                           double valid_below, std::optional<double> bound) {
    if (dim == 0) throw std::invalid_argument("IntegrandSpec: dim must be >= 1");
    IntegrandSpec s;
    s.kind_ = Kind::time_function;
    s.name_ = std::move(name);
    s.dim_ = dim;
    s.time_fn_ = std::move(fn);
    s.valid_below_ = valid_below;
    s.bound_ = bound;
    return s;
}

IntegrandSpec IntegrandSpec::path_functional(std::string name, std::size_t dim, PathFn fn,
                                             std::optional<double> bound) {
    if (dim == 0) throw std::invalid_argument("IntegrandSpec: dim must be >= 1");
    IntegrandSpec s;
    s.kind_ = Kind::path_functional;
    s.name_ = std::move(name);
    s.dim_ = dim;
    s.path_fn_ = std::move(fn);
    s.bound_ = bound;
    return s;
}

void IntegrandSpec::check_domain(double t) const {
    if (!(t >= 0.0 && t < valid_below_)) {
        throw std::domain_error("integrand '" + name_ + "' evaluated outside its domain at t = " +
                                format_double(t));
    }
}

void IntegrandSpec::evaluate(const PathPrefix& prefix, Matrix& out) const {
    switch (kind_) {
    case Kind::constant:
        out = constant_;
        return;
    case Kind::time_function:
        check_domain(prefix.time());
        if (out.dim() != dim_) out = Matrix(dim_);
        time_fn_(prefix.time(), out);
        return;
    case Kind::path_functional:
        if (out.dim() != dim_) out = Matrix(dim_);
        path_fn_(prefix, out);
        return;
    }
}

IntegrandSpec IntegrandSpec::scaled(double c) const {
    if (kind_ == Kind::constant) return constant(constant_ * c, name_);
    const IntegrandSpec base = *this;
    std::optional<double> bound;
    if (bound_) bound = std::abs(c) * *bound_;
    IntegrandSpec s = path_functional(
        name_, dim_,
        [base, c](const PathPrefix& prefix, Matrix& out) {
            base.evaluate(prefix, out);
            out *= c;
        },
        bound);
    s.valid_below_ = valid_below_;
    return s;
}

IntegrandSpec IntegrandSpec::plus(const IntegrandSpec& other) const {
    if (other.dim_ != dim_) throw std::invalid_argument("IntegrandSpec::plus: dimension mismatch");
    if (kind_ == Kind::constant && other.kind_ == Kind::constant) {
        return constant(constant_ + other.constant_, name_ + "+" + other.name_);
    }
    const IntegrandSpec a = *this, b = other;
    std::optional<double> bound;
    if (bound_ && other.bound_) bound = *bound_ + *other.bound_;
    IntegrandSpec s = path_functional(
        name_ + "+" + other.name_, dim_,
        [a, b](const PathPrefix& prefix, Matrix& out) {
            Matrix tmp(a.dim());
            a.evaluate(prefix, out);
            b.evaluate(prefix, tmp);
            out += tmp;
        },
        bound);
    s.valid_below_ = std::min(valid_below_, other.valid_below_);
    return s;
}

// --- catalog -----------------------------------------------------------------

const std::vector<CatalogEntry>& integrand_catalog() {
    static const std::vector<CatalogEntry> entries = [] {
        std::vector<CatalogEntry> e{
            {"clamped_w", "exponential moment dominance, |b| <= 1",
             "diag(clamp(W_j(t), -1, 1)), a bounded functional of the current path value"},
            {"diag", "LIL for symmetric b(0): ordering by the top eigenvalue",
             "constant diag(p_1, ..., p_d); default alternates 1, -1"},
            {"example36", "anomalous-rate example with b(0) = 0",
             "b(t) = 1/logloglog(1/t) I_d, defined for t < e^{-e}, limit 0 at t = 0"},
            {"holder", "limsup 2V/t = -Tr b(0) under Hoelder continuity at 0",
             "(1 + c t^eps) I_d with parameters c (default 1) and eps (default 0.5)"},
            {"identity", "reference integrand I_d of the exponential moment identity",
             "constant identity matrix"},
            {"neg_identity", "limsup 2V/t = -Tr b(0) with b = -I_d", "constant -I_d"},
            {"rotation", "exponential moment dominance for nonsymmetric b, |b| = 1",
             "constant block rotation by angle p (default pi/3) on coordinate pairs"},
            {"rotation_w", "exponential moment dominance, path-dependent rotation",
             "block rotation by the angle W_1(t)"},
            {"scaled_identity", "scaling of the ratio diagnostics", "constant c I_d (default c = 1)"},
            {"sign_w", "exponential moment dominance, path-dependent sign flip",
             "sign(W_1(t)) I_d with sign(0) = 1"},
            {"signflip", "exponential moment dominance, |b| = 1",
             "constant diag(1, -1, 1, ...)"},
            {"zero", "degenerate integrand, V = 0", "constant zero matrix"},
        };
        std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        return e;
    }();
    return entries;
}

namespace {

double param_or(std::span<const double> params, std::size_t i, double fallback) {
    return i < params.size() ? params[i] : fallback;
}

void expect_params(std::string_view name, std::span<const double> params, std::size_t max) {
    if (params.size() > max) {
        throw std::invalid_argument("integrand '" + std::string(name) + "' takes at most " +
                                    std::to_string(max) + " parameter(s)");
    }
}

void fill_block_rotation(double angle, Matrix& out) {
    const std::size_t d = out.dim();
    const double c = std::cos(angle), s = std::sin(angle);
    std::fill(out.data().begin(), out.data().end(), 0.0);
    std::size_t i = 0;
    for (; i + 1 < d; i += 2) {
        out(i, i) = c;
        out(i, i + 1) = -s;
        out(i + 1, i) = s;
        out(i + 1, i + 1) = c;
    }
    if (i < d) out(i, i) = 1.0;
}

} // namespace

IntegrandSpec make_integrand(std::string_view name, std::size_t dim, std::span<const double> params) {
    if (dim == 0) throw std::invalid_argument("make_integrand: dim must be >= 1");
    const std::string n(name);
    if (name == "zero") {
        expect_params(name, params, 0);
        return IntegrandSpec::constant(Matrix(dim), n);
    }
    if (name == "identity") {
        expect_params(name, params, 0);
        return IntegrandSpec::constant(Matrix::identity(dim), n);
    }
    if (name == "neg_identity") {
        expect_params(name, params, 0);
        return IntegrandSpec::constant(Matrix::identity(dim) * -1.0, n);
    }
    if (name == "scaled_identity") {
        expect_params(name, params, 1);
        return IntegrandSpec::constant(Matrix::identity(dim) * param_or(params, 0, 1.0), n);
    }
    if (name == "signflip") {
        expect_params(name, params, 0);
        std::vector<double> e(dim);
        for (std::size_t i = 0; i < dim; ++i) e[i] = i % 2 == 0 ? 1.0 : -1.0;
        return IntegrandSpec::constant(Matrix::diagonal(e), n);
    }
    if (name == "diag") {
        std::vector<double> e(dim);
        if (params.empty()) {
            for (std::size_t i = 0; i < dim; ++i) e[i] = i % 2 == 0 ? 1.0 : -1.0;
        } else if (params.size() == dim) {
            std::copy(params.begin(), params.end(), e.begin());
        } else {
            throw std::invalid_argument("integrand 'diag' needs exactly d parameters");
        }
        return IntegrandSpec::constant(Matrix::diagonal(e), n);
    }
    if (name == "rotation") {
        expect_params(name, params, 1);
        Matrix r(dim);
        fill_block_rotation(param_or(params, 0, std::numbers::pi / 3.0), r);
        return IntegrandSpec::constant(std::move(r), n);
    }
    if (name == "rotation_w") {
        expect_params(name, params, 0);
        return IntegrandSpec::path_functional(
            n, dim, [](const PathPrefix& prefix, Matrix& out) {
                fill_block_rotation(prefix.current()[0], out);
            },
            1.0);
    }
    if (name == "clamped_w") {
        expect_params(name, params, 0);
        return IntegrandSpec::path_functional(
            n, dim,
            [](const PathPrefix& prefix, Matrix& out) {
                std::fill(out.data().begin(), out.data().end(), 0.0);
                const auto w = prefix.current();
                for (std::size_t j = 0; j < out.dim(); ++j) out(j, j) = std::clamp(w[j], -1.0, 1.0);
            },
            1.0);
    }
    if (name == "sign_w") {
        expect_params(name, params, 0);
        return IntegrandSpec::path_functional(
            n, dim,
            [](const PathPrefix& prefix, Matrix& out) {
                const double s = prefix.current()[0] < 0.0 ? -1.0 : 1.0;
                std::fill(out.data().begin(), out.data().end(), 0.0);
                for (std::size_t j = 0; j < out.dim(); ++j) out(j, j) = s;
            },
            1.0);
    }
    if (name == "holder") {
        expect_params(name, params, 2);
        const double c = param_or(params, 0, 1.0);
        const double eps = param_or(params, 1, 0.5);
        if (!(eps > 0.0)) throw std::invalid_argument("integrand 'holder' needs eps > 0");
        return IntegrandSpec::time_function(
            n, dim,
            [c, eps](double t, Matrix& out) {
                const double v = 1.0 + c * std::pow(t, eps);
                std::fill(out.data().begin(), out.data().end(), 0.0);
                for (std::size_t j = 0; j < out.dim(); ++j) out(j, j) = v;
            },
            std::numeric_limits<double>::infinity(), std::nullopt);
    }
    if (name == "example36") {
        expect_params(name, params, 0);
        return IntegrandSpec::time_function(
            n, dim,
            [](double t, Matrix& out) {
                const double v = t == 0.0 ? 0.0 : 1.0 / std::log(std::log(-std::log(t)));
                std::fill(out.data().begin(), out.data().end(), 0.0);
                for (std::size_t j = 0; j < out.dim(); ++j) out(j, j) = v;
            },
            std::exp(-std::numbers::e), std::nullopt);
    }
    throw std::invalid_argument("unknown integrand '" + n + "'");
}

// --- traces ------------------------------------------------------------------

DoubleIntegralTrace::DoubleIntegralTrace(std::vector<double> times, std::size_t dim,
                                         std::size_t path_count, bool origin_prepended)
    : times_(std::move(times)), dim_(dim), path_count_(path_count),
      origin_prepended_(origin_prepended) {
    const std::size_t n = times_.size();
    outer_.assign(path_count * n, 0.0);
    qv_outer_.assign(path_count * n, 0.0);
    inner_.assign(path_count * n * dim, 0.0);
    qv_inner_.assign(path_count * n * dim, 0.0);
}

std::span<double> DoubleIntegralTrace::outer(std::size_t p) {
    return std::span<double>(outer_).subspan(p * steps(), steps());
}
std::span<const double> DoubleIntegralTrace::outer(std::size_t p) const {
    return std::span<const double>(outer_).subspan(p * steps(), steps());
}
std::span<double> DoubleIntegralTrace::inner(std::size_t p) {
    return std::span<double>(inner_).subspan(p * steps() * dim_, steps() * dim_);
}
std::span<const double> DoubleIntegralTrace::inner(std::size_t p) const {
    return std::span<const double>(inner_).subspan(p * steps() * dim_, steps() * dim_);
}
std::span<double> DoubleIntegralTrace::qv_inner(std::size_t p) {
    return std::span<double>(qv_inner_).subspan(p * steps() * dim_, steps() * dim_);
}
std::span<const double> DoubleIntegralTrace::qv_inner(std::size_t p) const {
    return std::span<const double>(qv_inner_).subspan(p * steps() * dim_, steps() * dim_);
}
std::span<double> DoubleIntegralTrace::qv_outer(std::size_t p) {
    return std::span<double>(qv_outer_).subspan(p * steps(), steps());
}
std::span<const double> DoubleIntegralTrace::qv_outer(std::size_t p) const {
    return std::span<const double>(qv_outer_).subspan(p * steps(), steps());
}

void DoubleIntegralTrace::export_csv(std::ostream& out) const {
    std::vector<std::string> header{"path", "time", "V"};
    for (std::size_t j = 0; j < dim_; ++j) header.push_back("Y_" + std::to_string(j + 1));
    header.emplace_back("qv");
    CsvWriter csv(out, header);
    for (std::size_t p = 0; p < path_count_; ++p) {
        const auto v = outer(p), y = inner(p), q = qv_outer(p);
        for (std::size_t k = 0; k < steps(); ++k) {
            csv.field(p).field(times_[k]).field(v[k]);
            for (std::size_t j = 0; j < dim_; ++j) csv.field(y[k * dim_ + j]);
            csv.field(q[k]);
            csv.end_row();
        }
    }
}

PathValues::PathValues(std::vector<double> times, std::size_t path_count)
    : times_(std::move(times)), path_count_(path_count), values_(times_.size() * path_count, 0.0) {}

std::vector<double> trace_times(const TimeGrid& grid) {
    std::vector<double> t;
    t.reserve(grid.size() + 1);
    if (!grid.starts_at_zero()) t.push_back(0.0);
    for (double v : grid.points()) t.push_back(v);
    return t;
}

// --- integration -------------------------------------------------------------

void integrate_path(const IntegrandSpec& b, std::span<const double> times,
                    std::span<const double> w, std::size_t dim, bool origin_prepended,
                    PathIntegral& out) {
    const std::size_t n = times.size();
    load_path(w, dim, origin_prepended, out.path);
    if (out.path.size() != n * dim) throw std::invalid_argument("integrate_path: size mismatch");
    out.outer.assign(n, 0.0);
    out.qv_outer.assign(n, 0.0);
    out.inner.assign(n * dim, 0.0);
    out.qv_inner.assign(n * dim, 0.0);

    const std::span<const double> path(out.path);
    Matrix bk(dim);
    std::vector<double> dw(dim);
    CompensatedSum v;
    CompensatedSum qv;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = times[k + 1] - times[k];
        const Matrix* B = &b.constant_value();
        if (!b.is_constant()) {
            b.evaluate(prefix_at(times, path, dim, k), bk);
            B = &bk;
        }
        const double* y = out.inner.data() + k * dim;
        double* y_next = out.inner.data() + (k + 1) * dim;
        double y2 = 0.0;
        double incr = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            dw[j] = path[(k + 1) * dim + j] - path[k * dim + j];
            incr += y[j] * dw[j];
            y2 += y[j] * y[j];
        }
        v.add(incr);
        qv.add(y2 * dt);
        out.outer[k + 1] = v.value();
        out.qv_outer[k + 1] = qv.value();
        for (std::size_t i = 0; i < dim; ++i) {
            double acc = y[i];
            double row2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double bij = (*B)(i, j);
                acc += bij * dw[j];
                row2 += bij * bij;
            }
            y_next[i] = acc;
            out.qv_inner[(k + 1) * dim + i] = out.qv_inner[k * dim + i] + row2 * dt;
        }
    }
}

DoubleIntegralTrace integrate_double(const BrownianBundle& bundle, const IntegrandSpec& b, Exec exec) {
    DoubleIntegralTrace trace(trace_times(bundle.grid()), bundle.dim(), bundle.path_count(),
                              !bundle.grid().starts_at_zero());
    for_each_double_integral(bundle, b, exec, [&](std::size_t p, const PathIntegral& r) {
        std::copy(r.outer.begin(), r.outer.end(), trace.outer(p).begin());
        std::copy(r.inner.begin(), r.inner.end(), trace.inner(p).begin());
        std::copy(r.qv_inner.begin(), r.qv_inner.end(), trace.qv_inner(p).begin());
        std::copy(r.qv_outer.begin(), r.qv_outer.end(), trace.qv_outer(p).begin());
    });
    return trace;
}

double closed_form_value(const SymMatrix& beta, double t, std::span<const double> w) {
    return 0.5 * (beta.quadratic_form(w) - beta.trace() * t);
}

PathValues closed_form_constant(const BrownianBundle& bundle, const SymMatrix& beta, Exec exec) {
    if (beta.dim() != bundle.dim()) throw std::invalid_argument("closed_form_constant: dimension mismatch");
    const bool prepended = !bundle.grid().starts_at_zero();
    PathValues out(trace_times(bundle.grid()), bundle.path_count());
    const std::size_t d = bundle.dim();
    const auto times = out.times();
    for_each_path(bundle, exec, [&](std::size_t p, std::span<const double> w) {
        auto v = out[p];
        const std::size_t off = prepended ? 1 : 0;
        if (prepended) v[0] = 0.0;
        for (std::size_t k = 0; k < bundle.grid().size(); ++k) {
            v[k + off] = closed_form_value(beta, times[k + off], w.subspan(k * d, d));
        }
    });
    return out;
}

MartingaleIntegral integrate_double_martingale(const BrownianBundle& bundle, const IntegrandSpec& b,
                                               const IntegrandSpec& m, Exec exec) {
    const std::size_t d = bundle.dim();
    if (b.dim() != d || m.dim() != d) {
        throw std::invalid_argument("integrate_double_martingale: dimension mismatch");
    }
    const std::vector<double> times = trace_times(bundle.grid());
    for (double t : times) {
        b.check_domain(t);
        m.check_domain(t);
    }
    const bool prepended = !bundle.grid().starts_at_zero();
    const std::size_t n = times.size();
    MartingaleIntegral res{DoubleIntegralTrace(times, d, bundle.path_count(), prepended),
                           PathValues(times, bundle.path_count()),
                           PathValues(times, bundle.path_count()),
                           PathValues(times, bundle.path_count())};

    parallel_chunks(bundle.path_count(), exec, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buffer(bundle.path_stride());
        std::vector<double> path;
        Matrix bk(d), mk(d), m0(d), c(d), dm_mat(d);
        std::vector<double> dw(d), dm(d), dm0(d), ddm(d), tmp(d), tmp2(d);
        std::vector<double> ym(d), yc(d), yr1(d);
        for (std::size_t p = begin; p < end; ++p) {
            bundle.fill_path(p, buffer);
            load_path(buffer, d, prepended, path);
            const std::span<const double> ps(path);
            m.evaluate(prefix_at(times, ps, d, 0), m0);
            const Matrix m0t = m0.transpose();
            auto x_out = res.x.outer(p);
            auto y_out = res.x.inner(p);
            auto qi = res.x.qv_inner(p);
            auto qo = res.x.qv_outer(p);
            auto vc = res.c_piece[p];
            auto r1 = res.r1[p];
            auto r2 = res.r2[p];
            std::fill(ym.begin(), ym.end(), 0.0);
            std::fill(yc.begin(), yc.end(), 0.0);
            std::fill(yr1.begin(), yr1.end(), 0.0);
            CompensatedSum sx, sc, s1, s2, sq;
            x_out[0] = vc[0] = r1[0] = r2[0] = qo[0] = 0.0;
            std::fill(y_out.begin(), y_out.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
            std::fill(qi.begin(), qi.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
            for (std::size_t k = 0; k + 1 < n; ++k) {
                const double dt = times[k + 1] - times[k];
                const PathPrefix pre = prefix_at(times, ps, d, k);
                b.evaluate(pre, bk);
                m.evaluate(pre, mk);
                for (std::size_t j = 0; j < d; ++j) dw[j] = ps[(k + 1) * d + j] - ps[k * d + j];
                mk.apply(dw, dm);
                m0.apply(dw, dm0);
                for (std::size_t j = 0; j < d; ++j) ddm[j] = dm[j] - dm0[j];

                // outer increments use the inner integrals at the left point
                double ix = 0.0, ic = 0.0, i1 = 0.0, i2 = 0.0, qy = 0.0;
                mk.transpose().apply(ym, tmp2);  // d<X> = |m^T Y|^2 dt
                for (std::size_t j = 0; j < d; ++j) {
                    ix += ym[j] * dm[j];
                    ic += yc[j] * dw[j];
                    i1 += yr1[j] * dm0[j];
                    i2 += ym[j] * ddm[j];
                    qy += tmp2[j] * tmp2[j];
                }
                sx.add(ix);
                sc.add(ic);
                s1.add(i1);
                s2.add(i2);
                sq.add(qy * dt);
                x_out[k + 1] = sx.value();
                vc[k + 1] = sc.value();
                r1[k + 1] = s1.value();
                r2[k + 1] = s2.value();
                qo[k + 1] = sq.value();

                // inner integrals
                bk.apply_add(dm, ym);
                c = m0t * bk * m0;
                c.apply_add(dw, yc);
                bk.apply(ddm, tmp);
                for (std::size_t j = 0; j < d; ++j) yr1[j] += tmp[j];

                dm_mat = bk * mk;
                for (std::size_t i = 0; i < d; ++i) {
                    double row2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) row2 += dm_mat(i, j) * dm_mat(i, j);
                    qi[(k + 1) * d + i] = qi[k * d + i] + row2 * dt;
                    y_out[(k + 1) * d + i] = ym[i];
                }
            }
        }
    });
    return res;
}

// --- drift integrals ---------------------------------------------------------

DriftSpec::DriftSpec(std::string name, std::size_t dim, Fn fn, double bound)
    : name_(std::move(name)), dim_(dim), fn_(std::move(fn)), bound_(bound) {
    if (dim == 0) throw std::invalid_argument("DriftSpec: dim must be >= 1");
    if (!std::isfinite(bound) || bound < 0.0) {
        throw std::invalid_argument("DriftSpec: a finite bound must be declared");
    }
}

DriftSpec DriftSpec::constant(std::span<const double> a) {
    std::vector<double> v(a.begin(), a.end());
    double norm = 0.0;
    for (double x : v) norm += x * x;
    return DriftSpec(
        "constant", v.size(),
        [v](const PathPrefix&, std::span<double> out) { std::copy(v.begin(), v.end(), out.begin()); },
        std::sqrt(norm));
}

namespace {

// x must hold times.size() entries; ps is the path on the trace axis.
void drift_path(const DriftSpec& a, const IntegrandSpec& m, std::span<const double> times,
                std::span<const double> ps, std::size_t d, std::span<double> x) {
    Matrix mk(d);
    std::vector<double> ak(d), A(d, 0.0), dw(d), dm(d);
    CompensatedSum sx;
    x[0] = 0.0;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double dt = times[k + 1] - times[k];
        const PathPrefix pre = prefix_at(times, ps, d, k);
        a.evaluate(pre, ak);
        m.evaluate(pre, mk);
        for (std::size_t j = 0; j < d; ++j) dw[j] = ps[(k + 1) * d + j] - ps[k * d + j];
        mk.apply(dw, dm);
        double incr = 0.0;
        for (std::size_t j = 0; j < d; ++j) incr += A[j] * dm[j];
        sx.add(incr);
        for (std::size_t j = 0; j < d; ++j) A[j] += ak[j] * dt;
        x[k + 1] = sx.value();
    }
}

template <class Store>
void run_drift(const BrownianBundle& bundle, const DriftSpec& a, const IntegrandSpec& m, Exec exec,
               Store&& store) {
    const std::size_t d = bundle.dim();
    if (a.dim() != d || m.dim() != d) throw std::invalid_argument("drift_integral: dimension mismatch");
    const std::vector<double> times = trace_times(bundle.grid());
    for (double t : times) m.check_domain(t);
    const bool prepended = !bundle.grid().starts_at_zero();
    parallel_chunks(bundle.path_count(), exec, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buffer(bundle.path_stride());
        std::vector<double> path, x(times.size());
        for (std::size_t p = begin; p < end; ++p) {
            bundle.fill_path(p, buffer);
            load_path(buffer, d, prepended, path);
            drift_path(a, m, times, path, d, x);
            store(p, std::span<const double>(times), std::span<const double>(x));
        }
    });
}

} // namespace

DriftIntegral drift_integral(const BrownianBundle& bundle, const DriftSpec& a, const IntegrandSpec& m,
                             double eps, Exec exec) {
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("drift_integral: eps must lie in (0, 1]");
    const std::vector<double> times = trace_times(bundle.grid());
    DriftIntegral res{PathValues(times, bundle.path_count()), PathValues(times, bundle.path_count()), eps};
    const double power = -1.5 + eps;
    run_drift(bundle, a, m, exec, [&](std::size_t p, std::span<const double> t, std::span<const double> x) {
        auto xo = res.x[p];
        auto sc = res.scaled[p];
        std::copy(x.begin(), x.end(), xo.begin());
        sc[0] = 0.0;
        for (std::size_t k = 1; k < t.size(); ++k) sc[k] = std::pow(t[k], power) * x[k];
    });
    return res;
}

std::vector<double> drift_terminal(const BrownianBundle& bundle, const DriftSpec& a,
                                   const IntegrandSpec& m, Exec exec) {
    std::vector<double> out(bundle.path_count());
    run_drift(bundle, a, m, exec, [&](std::size_t p, std::span<const double>, std::span<const double> x) {
        out[p] = x.back();
    });
    return out;
}

} // namespace dsi
