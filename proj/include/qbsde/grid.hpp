#pragma once

#include <cstddef>
#include <utility>

namespace qbsde {

/// How heat_step fills ghost nodes beyond the space grid edges.
enum class EdgeRule {
    kConstant,   ///< repeat the edge value
    kQuadratic,  ///< extrapolate the parabola through the three edge nodes
};

/// Time quadrature for the ds-integral in backward_accumulate.
enum class TimeRule {
    kLeftPoint,  ///< rectangle rule, source sampled at the left node (order 1)
    kTrapezoid,  ///< trapezoidal rule (order 2)
};

/// Uniform time grid 0 = t_0 < ... < t_nt = T.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps);

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t nodes() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double time(std::size_t i) const noexcept;

    /// Index of the node closest to t (clamped to [0, steps]).
    std::size_t nearest(double t) const noexcept;

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_;
    std::size_t steps_;
    double dt_;
};

/// Symmetric uniform state grid on [-x_max, x_max] with an odd node count,
/// so that x = 0 is the centre node.
class SpaceGrid {
public:
    SpaceGrid(double x_max, std::size_t nodes);

    double x_max() const noexcept { return x_max_; }
    std::size_t nodes() const noexcept { return nodes_; }
    double dx() const noexcept { return dx_; }
    double x(std::size_t j) const noexcept;
    std::size_t centre() const noexcept { return nodes_ / 2; }

    /// Cell index j and weight w with x = (1 - w) x_j + w x_{j+1}; clamps
    /// outside the grid.
    std::pair<std::size_t, double> locate(double x) const noexcept;

    bool operator==(const SpaceGrid&) const = default;

private:
    double x_max_;
    std::size_t nodes_;
    double dx_;
};

/// Time x space grid plus the discretisation rules shared by every operator.
struct Grid {
    TimeGrid time;
    SpaceGrid space;
    double core_radius;  ///< accuracy assertions are restricted to |x| <= core_radius
    EdgeRule edge = EdgeRule::kQuadratic;
    TimeRule rule = TimeRule::kTrapezoid;

    /// Defaults: x_max = 6 sqrt(T), core radius 4 sqrt(T).
    static Grid standard(double horizon, std::size_t steps = 200, std::size_t space_nodes = 401,
                         double width = 6.0, double core = 4.0);

    bool in_core(std::size_t j) const noexcept;
    /// First and one-past-last core indices.
    std::pair<std::size_t, std::size_t> core_range() const noexcept;

    bool same_shape(const Grid& other) const noexcept {
        return time == other.time && space == other.space;
    }
};

}  // namespace qbsde
