#pragma once

#include "dsilab/matcore.hpp"
#include "dsilab/parallel.hpp"
#include "dsilab/paths.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dsi {

/// A path observed up to and including the current time t_k. Integrands only ever see
/// this view, so they cannot look ahead.
struct PathPrefix {
    std::span<const double> times;   // t_0 = 0, ..., t_k
    std::span<const double> values;  // (k + 1) * dim, time-major
    std::size_t dim = 0;

    double time() const { return times.back(); }
    std::size_t step() const { return times.size() - 1; }
    std::span<const double> current() const { return values.subspan(values.size() - dim, dim); }
};

/// Matrix process b(t): constant, deterministic in time, or a functional of the path.
class IntegrandSpec {
public:
    enum class Kind { constant, time_function, path_functional };
    using TimeFn = std::function<void(double t, Matrix& out)>;
    using PathFn = std::function<void(const PathPrefix& prefix, Matrix& out)>;

    static IntegrandSpec constant(Matrix b, std::string name = "constant");
    /// valid_below: the function is defined for 0 <= t < valid_below.
    static IntegrandSpec time_function(std::string name, std::size_t dim, TimeFn fn,
                                       double valid_below, std::optional<double> bound);
    static IntegrandSpec path_functional(std::string name, std::size_t dim, PathFn fn,
                                         std::optional<double> bound);

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    std::size_t dim() const { return dim_; }
    /// Declared sup of |b(t)|, when known.
    const std::optional<double>& bound() const { return bound_; }
    double valid_below() const { return valid_below_; }
    bool is_constant() const { return kind_ == Kind::constant; }
    const Matrix& constant_value() const { return constant_; }

    /// Throws std::domain_error outside the validity window.
    void evaluate(const PathPrefix& prefix, Matrix& out) const;
    void check_domain(double t) const;

    IntegrandSpec scaled(double c) const;
    IntegrandSpec plus(const IntegrandSpec& other) const;

private:
    Kind kind_ = Kind::constant;
    std::string name_;
    std::size_t dim_ = 0;
    std::optional<double> bound_;
    double valid_below_ = std::numeric_limits<double>::infinity();
    Matrix constant_;
    TimeFn time_fn_;
    PathFn path_fn_;
};

struct CatalogEntry {
    std::string name;
    std::string serves;
    std::string description;
};

/// Sorted by name.
const std::vector<CatalogEntry>& integrand_catalog();

/// Builds a catalog integrand. Unknown names and malformed parameters throw
/// std::invalid_argument.
IntegrandSpec make_integrand(std::string_view name, std::size_t dim,
                             std::span<const double> params = {});

/// Y, V and their brackets for every path. The time axis always starts at 0; when the
/// bundle's grid does not, the origin is prepended and origin_prepended is set.
class DoubleIntegralTrace {
public:
    DoubleIntegralTrace() = default;
    DoubleIntegralTrace(std::vector<double> times, std::size_t dim, std::size_t path_count,
                        bool origin_prepended);

    std::span<const double> times() const { return times_; }
    std::size_t steps() const { return times_.size(); }
    std::size_t dim() const { return dim_; }
    std::size_t path_count() const { return path_count_; }
    bool origin_prepended() const { return origin_prepended_; }
    /// Index in times() of the bundle grid's point k.
    std::size_t trace_index(std::size_t k) const { return k + (origin_prepended_ ? 1 : 0); }

    std::span<double> outer(std::size_t p);
    std::span<const double> outer(std::size_t p) const;
    std::span<double> inner(std::size_t p);  // steps * dim
    std::span<const double> inner(std::size_t p) const;
    std::span<double> qv_inner(std::size_t p);
    std::span<const double> qv_inner(std::size_t p) const;
    std::span<double> qv_outer(std::size_t p);
    std::span<const double> qv_outer(std::size_t p) const;

    /// Columns path,time,V,Y_1..Y_d,qv.
    void export_csv(std::ostream& out) const;

private:
    std::vector<double> times_;
    std::size_t dim_ = 0;
    std::size_t path_count_ = 0;
    bool origin_prepended_ = false;
    std::vector<double> outer_, inner_, qv_inner_, qv_outer_;
};

/// Per-path scalar series on a trace time axis.
class PathValues {
public:
    PathValues() = default;
    PathValues(std::vector<double> times, std::size_t path_count);

    std::span<const double> times() const { return times_; }
    std::size_t steps() const { return times_.size(); }
    std::size_t path_count() const { return path_count_; }
    std::span<double> operator[](std::size_t p) {
        return std::span<double>(values_).subspan(p * times_.size(), times_.size());
    }
    std::span<const double> operator[](std::size_t p) const {
        return std::span<const double>(values_).subspan(p * times_.size(), times_.size());
    }

private:
    std::vector<double> times_;
    std::size_t path_count_ = 0;
    std::vector<double> values_;
};

/// Working storage of a single path.
struct PathIntegral {
    std::vector<double> outer, inner, qv_inner, qv_outer;
    std::vector<double> path;  // W on the trace axis, origin included
};

/// Trace time axis of a bundle (origin prepended when missing).
std::vector<double> trace_times(const TimeGrid& grid);

/// Itô sums for one path. w holds the bundle's path values (grid.size() * d).
void integrate_path(const IntegrandSpec& b, std::span<const double> times,
                    std::span<const double> w, std::size_t dim, bool origin_prepended,
                    PathIntegral& out);

/// Streaming form: fn(p, const PathIntegral&) per path; nothing is stored.
template <class Fn>
void for_each_double_integral(const BrownianBundle& bundle, const IntegrandSpec& b, Exec exec,
                              Fn&& fn);

DoubleIntegralTrace integrate_double(const BrownianBundle& bundle, const IntegrandSpec& b,
                                     Exec exec = {});

/// (W^T beta W - Tr[beta] t) / 2.
double closed_form_value(const SymMatrix& beta, double t, std::span<const double> w);

PathValues closed_form_constant(const BrownianBundle& bundle, const SymMatrix& beta,
                                Exec exec = {});

struct MartingaleIntegral {
    /// inner = int b dM, outer = X, brackets with respect to dM = m dW.
    DoubleIntegralTrace x;
    PathValues c_piece;  // int (int c dW)^T dW with c(t) = m(0)^T b(t) m(0)
    PathValues r1;       // int (int b (m - m(0)) dW)^T m(0) dW
    PathValues r2;       // int (int b m dW)^T (m - m(0)) dW
};

MartingaleIntegral integrate_double_martingale(const BrownianBundle& bundle,
                                               const IntegrandSpec& b, const IntegrandSpec& m,
                                               Exec exec = {});

/// Bounded vector process a(t).
class DriftSpec {
public:
    using Fn = std::function<void(const PathPrefix& prefix, std::span<double> out)>;

    DriftSpec(std::string name, std::size_t dim, Fn fn, double bound);
    static DriftSpec constant(std::span<const double> a);

    const std::string& name() const { return name_; }
    std::size_t dim() const { return dim_; }
    double bound() const { return bound_; }
    void evaluate(const PathPrefix& prefix, std::span<double> out) const { fn_(prefix, out); }

private:
    std::string name_;
    std::size_t dim_;
    Fn fn_;
    double bound_;
};

struct DriftIntegral {
    PathValues x;       // int (int a du)^T m dW
    PathValues scaled;  // t^{-3/2 + eps} x(t); 0 at t = 0
    double eps = 1.0;
};

/// eps must lie in (0, 1].
DriftIntegral drift_integral(const BrownianBundle& bundle, const DriftSpec& a,
                             const IntegrandSpec& m, double eps, Exec exec = {});
/// X(T) only, without storing the series.
std::vector<double> drift_terminal(const BrownianBundle& bundle, const DriftSpec& a,
                                   const IntegrandSpec& m, Exec exec = {});

// ---------------------------------------------------------------------------

template <class Fn>
void for_each_double_integral(const BrownianBundle& bundle, const IntegrandSpec& b, Exec exec,
                              Fn&& fn) {
    if (b.dim() != bundle.dim()) throw std::invalid_argument("integrand dimension mismatch");
    const std::vector<double> times = trace_times(bundle.grid());
    const bool prepended = !bundle.grid().starts_at_zero();
    for (double t : times) b.check_domain(t);
    parallel_chunks(bundle.path_count(), exec, [&](std::size_t begin, std::size_t end) {
        PathIntegral work;
        std::vector<double> buffer(bundle.materialized() ? 0 : bundle.path_stride());
        for (std::size_t p = begin; p < end; ++p) {
            std::span<const double> w;
            if (bundle.materialized()) {
                w = bundle.path(p);
            } else {
                bundle.fill_path(p, buffer);
                w = buffer;
            }
            integrate_path(b, times, w, bundle.dim(), prepended, work);
            fn(p, static_cast<const PathIntegral&>(work));
        }
    });
}

} // namespace dsi
