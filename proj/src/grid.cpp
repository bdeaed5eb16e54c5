#include "qbsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qbsde {

TimeGrid::TimeGrid(double horizon, std::size_t steps)
    : horizon_(horizon), steps_(steps), dt_(steps > 0 ? horizon / static_cast<double>(steps) : 0.0) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
    }
    if (steps == 0) {
        throw std::invalid_argument("TimeGrid: need at least one time step");
    }
}

double TimeGrid::time(std::size_t i) const noexcept {
    // the last node is pinned so that t_nt == T exactly
    return i >= steps_ ? horizon_ : dt_ * static_cast<double>(i);
}

std::size_t TimeGrid::nearest(double t) const noexcept {
    if (t <= 0.0) return 0;
    if (t >= horizon_) return steps_;
    return std::min(steps_, static_cast<std::size_t>(std::lround(t / dt_)));
}

SpaceGrid::SpaceGrid(double x_max, std::size_t nodes) : x_max_(x_max), nodes_(nodes), dx_(0.0) {
    if (!(x_max > 0.0) || !std::isfinite(x_max)) {
        throw std::invalid_argument("SpaceGrid: x_max must be positive and finite");
    }
    if (nodes < 3 || nodes % 2 == 0) {
        throw std::invalid_argument("SpaceGrid: node count must be odd and >= 3, got " +
                                    std::to_string(nodes));
    }
    dx_ = 2.0 * x_max / static_cast<double>(nodes - 1);
}

double SpaceGrid::x(std::size_t j) const noexcept {
    // symmetric construction keeps x(centre) == 0 exactly
    const auto c = static_cast<double>(centre());
    return (static_cast<double>(j) - c) * dx_;
}

std::pair<std::size_t, double> SpaceGrid::locate(double xv) const noexcept {
    const double s = (xv + x_max_) / dx_;
    if (!(s > 0.0)) return {0, 0.0};
    const auto last = static_cast<double>(nodes_ - 1);
    if (s >= last) return {nodes_ - 2, 1.0};
    const auto j = static_cast<std::size_t>(s);
    return {j, s - static_cast<double>(j)};
}

Grid Grid::standard(double horizon, std::size_t steps, std::size_t space_nodes, double width,
                    double core) {
    const double root = std::sqrt(horizon);
    return Grid{TimeGrid(horizon, steps), SpaceGrid(width * root, space_nodes), core * root};
}

bool Grid::in_core(std::size_t j) const noexcept {
    return std::abs(space.x(j)) <= core_radius * (1.0 + 1e-12);
}

std::pair<std::size_t, std::size_t> Grid::core_range() const noexcept {
    std::size_t lo = 0;
    while (lo < space.nodes() && !in_core(lo)) ++lo;
    std::size_t hi = space.nodes();
    while (hi > lo && !in_core(hi - 1)) --hi;
    return {lo, hi};
}

}  // namespace qbsde
