#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace qbsde {

/// Discrete Gaussian kernel on a lattice of spacing dx: weights w_k for the
/// offsets k*dx, |k| <= K, approximating N(0, variance) truncated at
/// `truncation` standard deviations.
///
/// The sampled density is normalised to unit mass and then moment matched so
/// that sum w_k (k dx)^2 == variance. Odd moments vanish by symmetry, so the
/// step is exact on cubics away from the edges.
class HeatKernel {
public:
    HeatKernel(double variance, double dx, double truncation = 8.0);

    double variance() const noexcept { return variance_; }
    std::size_t half_width() const noexcept { return half_; }
    std::span<const double> weights() const noexcept { return weights_; }
    double offset(std::size_t k) const noexcept;  ///< (k - K) * dx

    /// out_j = sum_k w_k u(x_j + y_k) with ghost values from `edge`.
    void apply(std::span<const double> u, std::span<double> out, EdgeRule edge) const;

    /// Girsanov-tilted step: out_j = sum_k w_k exp(-l_j y_k - l_j^2 var / 2) u(x_j + y_k),
    /// one transition of the density e^{-l dB - l^2 dt / 2}.
    void apply_tilted(std::span<const double> u, std::span<const double> rate, std::span<double> out,
                      EdgeRule edge) const;

private:
    double variance_;
    double dx_;
    std::size_t half_;
    std::vector<double> weights_;
};

/// Fills `padded` (size nx + 2K) with u plus K ghost nodes on each side.
void pad_with_ghosts(std::span<const double> u, std::size_t ghosts, EdgeRule edge,
                     std::span<double> padded);

/// One backward conditional-expectation step v(x) = E[u_next(x + sqrt(dt) Z)].
/// Throws std::invalid_argument naming the offending node if u_next is not finite.
std::vector<double> heat_step(std::span<const double> u_next, double dt, const SpaceGrid& space,
                              EdgeRule edge = EdgeRule::kQuadratic);

/// u(t, x) = E[terminal(B_T) + int_t^T source(s, B_s) ds | B_t = x], discretised
/// backward in time with grid.rule. `terminal` is one slice (m * nx values).
GridFunction backward_accumulate(const GridFunction& source, std::span<const double> terminal,
                                 const Grid& grid);

/// Same with a zero terminal.
GridFunction backward_accumulate(const GridFunction& source, const Grid& grid);

/// Spatial derivative, central in the interior and second-order one-sided at
/// the two edges.
GridFunction gradient_x(const GridFunction& u, const SpaceGrid& space);
void gradient_x(std::span<const double> row, double dx, std::span<double> out);

/// Linear interpolation of one row at state x (clamped at the edges).
double interpolate(std::span<const double> row, const SpaceGrid& space, double x) noexcept;

}  // namespace qbsde
