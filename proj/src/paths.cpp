#include "dsilab/paths.hpp"

#include "dsilab/csv.hpp"
#include "dsilab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace dsi {

double GeometricGrid::finest() const {
    return t0 * std::pow(theta, static_cast<double>(levels));
}

namespace {

constexpr std::uint32_t kUniformStream = 0;
constexpr std::uint32_t kLevelStream = 1;
constexpr std::uint32_t kSubstepStream = 2;

std::uint32_t max_stream(std::span<const PointTag> tags) {
    std::uint32_t m = 0;
    for (const auto& t : tags) m = std::max(m, t.stream);
    return m;
}

void check_increasing(const std::vector<double>& pts) {
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!std::isfinite(pts[k]) || pts[k] < 0.0) {
            throw std::invalid_argument("TimeGrid: times must be finite and nonnegative");
        }
        if (k > 0 && !(pts[k] > pts[k - 1])) {
            throw std::invalid_argument("TimeGrid: times must be strictly increasing");
        }
        if (pts[k] > 0.0 && pts[k] < kMinGridTime) {
            throw std::invalid_argument("TimeGrid: times below 1e-300 are not supported");
        }
    }
}

} // namespace

void TimeGrid::build_plan(const std::vector<std::size_t>& order) {
    check_increasing(points_);
    order_ = order;
    plan_.clear();
    plan_.reserve(points_.size());
    std::set<std::size_t> done;
    for (std::size_t target : order) {
        const double t = points_[target];
        if (t == 0.0) {
            done.insert(target);
            continue;
        }
        Step step;
        step.target = target;
        step.tag = tags_[target];
        auto right = done.lower_bound(target);
        double t_left = 0.0;
        if (right != done.begin()) {
            auto left = std::prev(right);
            step.left = static_cast<std::ptrdiff_t>(*left);
            t_left = points_[*left];
        }
        if (right != done.end()) {
            step.right = static_cast<std::ptrdiff_t>(*right);
            const double t_right = points_[*right];
            const double span = t_right - t_left;
            step.w_left = (t_right - t) / span;
            step.w_right = (t - t_left) / span;
            step.sd = std::sqrt((t - t_left) * (t_right - t) / span);
        } else {
            step.w_left = 1.0;
            step.w_right = 0.0;
            step.sd = std::sqrt(t - t_left);
        }
        if (step.left < 0) step.w_left = 0.0;
        plan_.push_back(step);
        done.insert(target);
    }
}

TimeGrid make_grid(const GridSpec& spec) {
    TimeGrid g;
    std::vector<std::size_t> order;
    if (const auto* u = std::get_if<UniformGrid>(&spec)) {
        if (!(u->horizon > 0.0) || !std::isfinite(u->horizon)) {
            throw std::invalid_argument("make_grid: uniform horizon must be positive");
        }
        if (u->steps < 1) throw std::invalid_argument("make_grid: uniform grid needs n >= 1");
        const std::size_t n = u->steps;
        g.points_.resize(n + 1);
        g.tags_.resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            g.points_[i] = u->horizon * static_cast<double>(i) / static_cast<double>(n);
            g.tags_[i] = {kUniformStream, i};
        }
        g.points_[n] = u->horizon;
        order.resize(n + 1);
        std::iota(order.begin(), order.end(), std::size_t{0});
        g.kind_ = GridKind::uniform;
        g.uniform_ = *u;
    } else {
        const auto& geo = std::get<GeometricGrid>(spec);
        if (!(geo.theta > 0.0 && geo.theta < 1.0)) {
            throw std::invalid_argument("make_grid: geometric theta must lie in (0, 1)");
        }
        if (!(geo.t0 > 0.0) || !std::isfinite(geo.t0)) {
            throw std::invalid_argument("make_grid: geometric t0 must be positive");
        }
        if (geo.substeps < 1) throw std::invalid_argument("make_grid: substeps must be >= 1");
        if (!(geo.finest() >= kMinGridTime)) {
            throw std::invalid_argument("make_grid: t0 * theta^K falls below the 1e-300 floor");
        }
        const std::size_t K = geo.levels;
        const std::size_t m = geo.substeps;
        // level k sits at t0 theta^k; build ascending in time.
        std::vector<double> level_times(K + 1);
        for (std::size_t k = 0; k <= K; ++k) {
            level_times[k] = geo.t0 * std::pow(geo.theta, static_cast<double>(k));
        }
        std::vector<std::size_t> level_pos(K + 1);
        for (std::size_t step = 0; step <= K; ++step) {
            const std::size_t k = K - step;  // ascending time
            level_pos[k] = g.points_.size();
            g.points_.push_back(level_times[k]);
            g.tags_.push_back({kLevelStream, k});
            if (k > 0) {
                const double lo = level_times[k];
                const double hi = level_times[k - 1];
                for (std::size_t j = 1; j < m; ++j) {
                    g.points_.push_back(lo + (hi - lo) * static_cast<double>(j) /
                                                 static_cast<double>(m));
                    g.tags_.push_back({kSubstepStream, (k - 1) * m + j});
                }
            }
        }
        for (std::size_t k = 0; k <= K; ++k) order.push_back(level_pos[k]);
        for (std::size_t i = 0; i < g.points_.size(); ++i)
            if (g.tags_[i].stream == kSubstepStream) order.push_back(i);
        g.levels_.resize(K + 1);
        for (std::size_t k = 0; k <= K; ++k) g.levels_[K - k] = level_pos[k];
        g.kind_ = GridKind::geometric;
        g.geometric_ = geo;
    }
    g.build_plan(order);
    return g;
}

TimeGrid merge_grids(const TimeGrid& a, const TimeGrid& b) {
    TimeGrid g;
    const std::uint32_t offset = max_stream(a.tags_) + 1;
    struct Entry {
        double t;
        PointTag tag;
        bool from_a;
        std::size_t rank;  // generation rank within its source
    };
    std::vector<std::size_t> rank_a(a.size()), rank_b(b.size());
    for (std::size_t r = 0; r < a.order_.size(); ++r) rank_a[a.order_[r]] = r;
    for (std::size_t r = 0; r < b.order_.size(); ++r) rank_b[b.order_[r]] = r;

    std::vector<Entry> entries;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j >= b.size() || (i < a.size() && a.points_[i] <= b.points_[j])) {
            if (j < b.size() && a.points_[i] == b.points_[j]) ++j;
            entries.push_back({a.points_[i], a.tags_[i], true, rank_a[i]});
            ++i;
        } else {
            PointTag tag = b.tags_[j];
            tag.stream += offset;
            entries.push_back({b.points_[j], tag, false, rank_b[j]});
            ++j;
        }
    }
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (entries[x].from_a != entries[y].from_a) return entries[x].from_a;
        return entries[x].rank < entries[y].rank;
    });
    std::vector<std::size_t> pos_of_a;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        g.points_.push_back(entries[k].t);
        g.tags_.push_back(entries[k].tag);
        if (entries[k].from_a) pos_of_a.push_back(k);
    }
    g.kind_ = GridKind::composite;
    if (a.geometric_) {
        g.geometric_ = a.geometric_;
        for (std::size_t idx : a.levels_) g.levels_.push_back(pos_of_a[idx]);
    }
    g.build_plan(order);
    return g;
}

TimeGrid refine_grid(const TimeGrid& grid, std::size_t factor) {
    if (factor < 1) throw std::invalid_argument("refine_grid: factor must be >= 1");
    TimeGrid g;
    const std::uint32_t stream = max_stream(grid.tags_) + 1;
    std::vector<std::size_t> old_pos(grid.size());
    double prev = 0.0;
    std::size_t interval = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid.points_[k];
        if (t > 0.0) {
            for (std::size_t j = 1; j < factor; ++j) {
                g.points_.push_back(prev + (t - prev) * static_cast<double>(j) /
                                               static_cast<double>(factor));
                g.tags_.push_back({stream, interval * factor + j});
            }
            ++interval;
        }
        old_pos[k] = g.points_.size();
        g.points_.push_back(t);
        g.tags_.push_back(grid.tags_[k]);
        prev = t;
    }
    std::vector<std::size_t> order;
    for (std::size_t idx : grid.order_) order.push_back(old_pos[idx]);
    for (std::size_t k = 0; k < g.points_.size(); ++k)
        if (g.tags_[k].stream == stream) order.push_back(k);
    g.kind_ = grid.kind_;
    g.geometric_ = grid.geometric_;
    if (grid.geometric_) {
        g.geometric_->substeps *= factor;
        for (std::size_t idx : grid.levels_) g.levels_.push_back(old_pos[idx]);
    }
    if (grid.uniform_) g.uniform_ = UniformGrid{grid.uniform_->horizon, grid.uniform_->steps * factor};
    g.build_plan(order);
    return g;
}

void BrownianBundle::generate(std::size_t p, std::span<double> out) const {
    const GaussianStream normals(seed_);
    const std::size_t d = dim_;
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> z(d);
    for (const auto& step : grid_->plan()) {
        normals.fill(p, step.tag.stream, step.tag.index, z.data(), d);
        double* w = out.data() + step.target * d;
        const double* wl = step.left >= 0 ? out.data() + static_cast<std::size_t>(step.left) * d : nullptr;
        const double* wr = step.right >= 0 ? out.data() + static_cast<std::size_t>(step.right) * d : nullptr;
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            if (wl) mean += step.w_left * wl[j];
            if (wr) mean += step.w_right * wr[j];
            w[j] = mean + step.sd * z[j];
        }
    }
    if (rotation_) {
        std::vector<double> tmp(d);
        for (std::size_t k = 0; k < grid_->size(); ++k) {
            std::span<double> w = out.subspan(k * d, d);
            rotation_->apply(w, tmp);
            std::copy(tmp.begin(), tmp.end(), w.begin());
        }
    }
}

void BrownianBundle::fill_path(std::size_t p, std::span<double> out) const {
    if (p >= path_count_) throw std::out_of_range("BrownianBundle: path index out of range");
    if (out.size() != path_stride()) throw std::invalid_argument("BrownianBundle: buffer size");
    if (materialized()) {
        const auto src = path(p);
        std::copy(src.begin(), src.end(), out.begin());
    } else {
        generate(p, out);
    }
}

std::span<const double> BrownianBundle::path(std::size_t p) const {
    if (!materialized()) throw std::logic_error("BrownianBundle: bundle is not materialized");
    if (p >= path_count_) throw std::out_of_range("BrownianBundle: path index out of range");
    return std::span<const double>(data_).subspan(p * path_stride(), path_stride());
}

double BrownianBundle::value(std::size_t p, std::size_t k, std::size_t j) const {
    if (materialized()) return path(p)[k * dim_ + j];
    std::vector<double> buf(path_stride());
    generate(p, buf);
    return buf[k * dim_ + j];
}

void BrownianBundle::export_csv(std::ostream& out) const {
    std::vector<std::string> header{"path", "time"};
    for (std::size_t j = 0; j < dim_; ++j) header.push_back("W_" + std::to_string(j + 1));
    CsvWriter csv(out, header);
    std::vector<double> buf(path_stride());
    for (std::size_t p = 0; p < path_count_; ++p) {
        fill_path(p, buf);
        for (std::size_t k = 0; k < grid_->size(); ++k) {
            csv.field(p).field((*grid_)[k]);
            for (std::size_t j = 0; j < dim_; ++j) csv.field(buf[k * dim_ + j]);
            csv.end_row();
        }
    }
}

BrownianBundle sample_bundle(std::size_t dim, TimeGrid grid, std::size_t path_count,
                             std::uint64_t seed, SampleOptions options) {
    if (dim < 1) throw std::invalid_argument("sample_bundle: dim must be >= 1");
    if (path_count < 1) throw std::invalid_argument("sample_bundle: path count must be >= 1");
    BrownianBundle b;
    b.dim_ = dim;
    b.path_count_ = path_count;
    b.seed_ = seed;
    b.grid_ = std::make_shared<const TimeGrid>(std::move(grid));
    if (options.materialize) {
        std::vector<double> data(path_count * b.path_stride());
        parallel_chunks(path_count, options.exec, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                b.generate(p, std::span<double>(data).subspan(p * b.path_stride(), b.path_stride()));
            }
        });
        b.data_ = std::move(data);
    }
    return b;
}

BrownianBundle rotate_bundle(const BrownianBundle& bundle, const Matrix& U) {
    if (U.dim() != bundle.dim()) throw std::invalid_argument("rotate_bundle: dimension mismatch");
    if (!is_orthogonal(U, 1e-12)) throw std::invalid_argument("rotate_bundle: U is not orthogonal");
    BrownianBundle out = bundle;
    out.rotation_ = bundle.rotation_ ? U * *bundle.rotation_ : U;
    if (out.materialized()) {
        const std::size_t d = bundle.dim();
        std::vector<double> tmp(d);
        for (std::size_t off = 0; off < out.data_.size(); off += d) {
            std::span<double> w(out.data_.data() + off, d);
            U.apply(w, tmp);
            std::copy(tmp.begin(), tmp.end(), w.begin());
        }
    }
    return out;
}

IncrementCheck increment_variance(const BrownianBundle& bundle) {
    const TimeGrid& g = bundle.grid();
    const std::size_t d = bundle.dim();
    std::vector<double> per_path(bundle.path_count());
    std::vector<std::size_t> counts(bundle.path_count());
    for_each_path(bundle, Exec{1}, [&](std::size_t p, std::span<const double> w) {
        double s = 0.0;
        std::size_t n = 0;
        double t_prev = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double dt = g[k] - t_prev;
            if (dt > 0.0) {
                for (std::size_t j = 0; j < d; ++j) {
                    const double prev = k > 0 ? w[(k - 1) * d + j] : 0.0;
                    const double z = (w[k * d + j] - prev) / std::sqrt(dt);
                    s += z * z;
                    ++n;
                }
            }
            t_prev = g[k];
        }
        per_path[p] = s;
        counts[p] = n;
    });
    IncrementCheck out;
    out.count = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    out.variance = pairwise_sum(per_path) / static_cast<double>(out.count);
    // Var(Z^2) = 2 for a standard normal.
    out.se = std::sqrt(2.0 / static_cast<double>(out.count));
    return out;
}

} // namespace dsi
