#pragma once

#include "dsilab/matcore.hpp"
#include "dsilab/parallel.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <variant>
#include <vector>

namespace dsi {

/// Times i T / n for i = 0..n.
struct UniformGrid {
    double horizon = 1.0;
    std::size_t steps = 1;
};

/// Level times theta^k t0 for k = levels..0, optionally with substeps - 1 equally spaced
/// points inserted between consecutive levels.
struct GeometricGrid {
    double t0 = 1e-2;
    double theta = 0.5;
    std::size_t levels = 0;
    std::size_t substeps = 1;

    double finest() const;
};

using GridSpec = std::variant<UniformGrid, GeometricGrid>;

enum class GridKind { uniform, geometric, composite };

/// Random-number address of a grid point.
struct PointTag {
    std::uint32_t stream = 0;
    std::uint64_t index = 0;
};

/// Strictly increasing times plus the order in which Brownian values are generated.
/// Every point is drawn conditionally on its nearest already-generated neighbours
/// (a Brownian bridge, or a forward step when nothing lies to the right), keyed by its
/// tag. Grids that extend another grid generate the shared points first, so the values
/// there are unchanged.
class TimeGrid {
public:
    struct Step {
        std::size_t target = 0;
        std::ptrdiff_t left = -1;   // -1: the origin W(0) = 0
        std::ptrdiff_t right = -1;  // -1: forward step
        double w_left = 1.0;
        double w_right = 0.0;
        double sd = 0.0;
        PointTag tag;
    };

    std::span<const double> points() const { return points_; }
    double operator[](std::size_t k) const { return points_[k]; }
    std::size_t size() const { return points_.size(); }
    double back() const { return points_.back(); }
    GridKind kind() const { return kind_; }
    bool starts_at_zero() const { return points_.front() == 0.0; }

    const std::optional<UniformGrid>& uniform() const { return uniform_; }
    const std::optional<GeometricGrid>& geometric() const { return geometric_; }

    /// Indices of the geometric level points, ascending in time. Empty for grids
    /// without a geometric part.
    std::span<const std::size_t> level_indices() const { return levels_; }

    std::span<const PointTag> tags() const { return tags_; }
    std::span<const Step> plan() const { return plan_; }

    friend TimeGrid make_grid(const GridSpec& spec);
    friend TimeGrid merge_grids(const TimeGrid& a, const TimeGrid& b);
    friend TimeGrid refine_grid(const TimeGrid& grid, std::size_t factor);

private:
    TimeGrid() = default;
    /// Builds the sampling plan from points_, tags_ and the generation order.
    void build_plan(const std::vector<std::size_t>& order);

    std::vector<double> points_;
    std::vector<PointTag> tags_;
    std::vector<std::size_t> order_;
    std::vector<Step> plan_;
    std::vector<std::size_t> levels_;
    GridKind kind_ = GridKind::uniform;
    std::optional<UniformGrid> uniform_;
    std::optional<GeometricGrid> geometric_;
};

/// Smallest grid time accepted; geometric grids reaching below this are rejected.
inline constexpr double kMinGridTime = 1e-300;

TimeGrid make_grid(const GridSpec& spec);
/// Union of both point sets. Points of a keep their values; b's exclusive points are
/// generated afterwards.
TimeGrid merge_grids(const TimeGrid& a, const TimeGrid& b);
/// Inserts factor - 1 equally spaced points into every interval (including [0, t_0]
/// when the grid does not start at zero).
TimeGrid refine_grid(const TimeGrid& grid, std::size_t factor);

struct SampleOptions {
    /// Store all paths. When false, paths are regenerated on demand from their address.
    bool materialize = true;
    Exec exec{};
};

/// P paths of a d-dimensional Brownian motion on a shared grid. Path values are laid
/// out time-major: value(p, k, j) is W_j(t_k) of path p. W(0) = 0 is implicit when the
/// grid does not contain 0.
class BrownianBundle {
public:
    std::size_t dim() const { return dim_; }
    std::size_t path_count() const { return path_count_; }
    std::uint64_t seed() const { return seed_; }
    const TimeGrid& grid() const { return *grid_; }
    const std::shared_ptr<const TimeGrid>& grid_ptr() const { return grid_; }
    bool materialized() const { return !data_.empty(); }
    /// Accumulated rotation applied to the generated paths, if any.
    const std::optional<Matrix>& rotation() const { return rotation_; }

    std::size_t path_stride() const { return grid_->size() * dim_; }
    /// out must hold path_stride() values.
    void fill_path(std::size_t p, std::span<double> out) const;
    /// Requires a materialized bundle.
    std::span<const double> path(std::size_t p) const;
    double value(std::size_t p, std::size_t k, std::size_t j) const;

    /// CSV with columns path,time,W_1..W_d.
    void export_csv(std::ostream& out) const;

    friend BrownianBundle sample_bundle(std::size_t dim, TimeGrid grid, std::size_t path_count,
                                        std::uint64_t seed, SampleOptions options);
    friend BrownianBundle rotate_bundle(const BrownianBundle& bundle, const Matrix& U);

private:
    void generate(std::size_t p, std::span<double> out) const;

    std::size_t dim_ = 0;
    std::size_t path_count_ = 0;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const TimeGrid> grid_;
    std::optional<Matrix> rotation_;
    std::vector<double> data_;
};

BrownianBundle sample_bundle(std::size_t dim, TimeGrid grid, std::size_t path_count,
                             std::uint64_t seed, SampleOptions options = {});

/// Replaces W by U W on every path. U must be orthogonal within 1e-12.
BrownianBundle rotate_bundle(const BrownianBundle& bundle, const Matrix& U);

/// Calls fn(p, path) for every path, generating lazily when needed. fn may run
/// concurrently for different p.
template <class Fn>
void for_each_path(const BrownianBundle& bundle, Exec exec, Fn&& fn) {
    parallel_chunks(bundle.path_count(), exec, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buffer(bundle.materialized() ? 0 : bundle.path_stride());
        for (std::size_t p = begin; p < end; ++p) {
            if (bundle.materialized()) {
                fn(p, bundle.path(p));
            } else {
                bundle.fill_path(p, buffer);
                fn(p, std::span<const double>(buffer));
            }
        }
    });
}

struct IncrementCheck {
    double variance = 0.0;  // sample variance of dW / sqrt(dt)
    double se = 0.0;        // its standard error under the Gaussian law
    std::size_t count = 0;
};

/// Pools normalized increments over all paths, coordinates and grid intervals.
IncrementCheck increment_variance(const BrownianBundle& bundle);

} // namespace dsi
