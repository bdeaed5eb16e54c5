#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace qbsde {

/// Brownian increments on a time grid, one independent stream per path.
///
/// Path p is generated from a std::mt19937_64 seeded with seed_seq{seed, p},
/// so a bundle is reproducible from its seed and independent of the thread
/// count.
class PathBundle {
public:
    PathBundle(std::uint64_t seed, std::size_t paths, TimeGrid grid, std::vector<double> increments);

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t paths() const noexcept { return paths_; }
    std::size_t steps() const noexcept { return grid_.steps(); }
    const TimeGrid& time_grid() const noexcept { return grid_; }

    /// The nt increments of path p.
    std::span<const double> increments(std::size_t p) const noexcept {
        return {increments_.data() + p * steps(), steps()};
    }
    std::span<const double> all_increments() const noexcept { return increments_; }
    double terminal(std::size_t p) const noexcept;

    bool operator==(const PathBundle&) const = default;

private:
    std::uint64_t seed_;
    std::size_t paths_;
    TimeGrid grid_;
    std::vector<double> increments_;
};

/// Default memory budget for a bundle, in stored doubles (512 MiB).
inline constexpr std::size_t kDefaultPathBudget = std::size_t{1} << 26;

/// Throws std::length_error when npaths * nt exceeds the budget.
PathBundle sample_paths(std::uint64_t seed, std::size_t npaths, const TimeGrid& grid,
                        std::size_t budget = kDefaultPathBudget);

/// Mean and standard error of a sample (pairwise summation).
struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};
SampleStats sample_stats(std::span<const double> values);

/// Path functionals of grid processes evaluated along a bundle. The bundle
/// must live on the grid's time axis; states are interpolated linearly in x.
class PathFunctionals {
public:
    PathFunctionals(const PathBundle& paths, const Grid& grid);

    /// Per path: int_0^T |zeta(t, B_t)|^2 dt (trapezoid in time).
    std::vector<double> quadratic_variation(const GridFunction& zeta) const;
    /// Per path: int_0^T |rate(t, B_t)| dt.
    std::vector<double> total_variation(const GridFunction& rate) const;
    /// Per path: int_0^T weight(t, B_t) |zeta(t, B_t)|^2 dt.
    std::vector<double> weighted_variation(const GridFunction& weight, const GridFunction& zeta) const;
    /// Per path: the m-vector u(T, B_T) norm |u(T, B_T) - centre|.
    std::vector<double> terminal_deviation(std::span<const double> terminal_slice,
                                           std::span<const double> centre) const;

    /// (E[X^{q}])^{1/q} of a nonnegative sample.
    static double lp(std::span<const double> values, double q);

    /// ||zeta||_{H^p} = (E[(int |zeta|^2)^{p/2}])^{1/p}.
    double hp_norm(const GridFunction& zeta, double p) const;

private:
    template <class F>
    std::vector<double> integrate(F&& integrand) const;

    const PathBundle& paths_;
    const Grid& grid_;
};

}  // namespace qbsde
