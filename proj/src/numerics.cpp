#include "qbsde/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qbsde {

HeatKernel::HeatKernel(double variance, double dx, double truncation)
    : variance_(variance), dx_(dx), half_(0) {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw std::invalid_argument("HeatKernel: variance must be positive");
    }
    if (!(dx > 0.0)) throw std::invalid_argument("HeatKernel: dx must be positive");
    const double sd = std::sqrt(variance);
    half_ = static_cast<std::size_t>(std::ceil(truncation * sd / dx));
    if (half_ < 1) half_ = 1;
    weights_.resize(2 * half_ + 1);

    double mass = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        const double y = offset(k) / sd;
        weights_[k] = std::exp(-0.5 * y * y);
        mass += weights_[k];
    }
    double m2 = 0.0;
    double m4 = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        weights_[k] /= mass;
        const double y2 = offset(k) * offset(k);
        m2 += weights_[k] * y2;
        m4 += weights_[k] * y2 * y2;
    }
    // w_k (1 + c (y_k^2 - m2)) keeps unit mass and hits the target variance
    const double c = (variance - m2) / (m4 - m2 * m2);
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        weights_[k] *= 1.0 + c * (offset(k) * offset(k) - m2);
        if (!(weights_[k] >= 0.0)) {
            throw std::invalid_argument(
                "HeatKernel: lattice too coarse for the step variance (dx / sqrt(dt) too large)");
        }
    }
}

double HeatKernel::offset(std::size_t k) const noexcept {
    return (static_cast<double>(k) - static_cast<double>(half_)) * dx_;
}

void pad_with_ghosts(std::span<const double> u, std::size_t ghosts, EdgeRule edge,
                     std::span<double> padded) {
    const std::size_t n = u.size();
    for (std::size_t j = 0; j < n; ++j) padded[ghosts + j] = u[j];
    const bool quadratic = edge == EdgeRule::kQuadratic && n >= 3;
    for (std::size_t g = 1; g <= ghosts; ++g) {
        const double s = static_cast<double>(g);
        double left = u.front();
        double right = u.back();
        if (quadratic) {
            // parabola through nodes at offsets 0, -1, -2 evaluated at +s
            const double c0 = 0.5 * (s + 1.0) * (s + 2.0);
            const double c1 = -s * (s + 2.0);
            const double c2 = 0.5 * s * (s + 1.0);
            right = c0 * u[n - 1] + c1 * u[n - 2] + c2 * u[n - 3];
            left = c0 * u[0] + c1 * u[1] + c2 * u[2];
        }
        padded[ghosts + n - 1 + g] = right;
        padded[ghosts - g] = left;
    }
}

void HeatKernel::apply(std::span<const double> u, std::span<double> out, EdgeRule edge) const {
    const std::size_t n = u.size();
    std::vector<double> padded(n + 2 * half_);
    pad_with_ghosts(u, half_, edge, padded);
    const std::size_t width = weights_.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double* p = padded.data() + j;
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) s += weights_[k] * p[k];
        out[j] = s;
    }
}

void HeatKernel::apply_tilted(std::span<const double> u, std::span<const double> rate,
                              std::span<double> out, EdgeRule edge) const {
    const std::size_t n = u.size();
    std::vector<double> padded(n + 2 * half_);
    pad_with_ghosts(u, half_, edge, padded);
    const std::size_t width = weights_.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double* p = padded.data() + j;
        const double l = rate[j];
        const double base = -0.5 * l * l * variance_;
        double s = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
            s += weights_[k] * std::exp(base - l * offset(k)) * p[k];
        }
        out[j] = s;
    }
}

std::vector<double> heat_step(std::span<const double> u_next, double dt, const SpaceGrid& space,
                              EdgeRule edge) {
    if (u_next.size() != space.nodes()) {
        throw std::invalid_argument("heat_step: slice size does not match the space grid");
    }
    for (std::size_t j = 0; j < u_next.size(); ++j) {
        if (!std::isfinite(u_next[j])) {
            std::ostringstream msg;
            msg << "heat_step: non-finite input at node " << j << " (x = " << space.x(j) << ")";
            throw std::invalid_argument(msg.str());
        }
    }
    const HeatKernel kernel(dt, space.dx());
    std::vector<double> out(u_next.size());
    kernel.apply(u_next, out, edge);
    return out;
}

GridFunction backward_accumulate(const GridFunction& source, std::span<const double> terminal,
                                 const Grid& grid) {
    if (!source.fits(grid)) {
        throw std::invalid_argument("backward_accumulate: source is not defined on the full grid");
    }
    if (terminal.size() != source.slice_size()) {
        throw std::invalid_argument("backward_accumulate: terminal slice has " +
                                    std::to_string(terminal.size()) + " values, source needs " +
                                    std::to_string(source.slice_size()));
    }
    const std::size_t nt = grid.time.steps();
    const std::size_t nx = grid.space.nodes();
    const std::size_t m = source.components();
    const double dt = grid.time.dt();
    const HeatKernel kernel(dt, grid.space.dx());

    GridFunction u(nt + 1, nx, m);
    std::copy(terminal.begin(), terminal.end(), u.slice(nt).begin());
    std::vector<double> scratch(nx);
    for (std::size_t step = nt; step-- > 0;) {
        for (std::size_t c = 0; c < m; ++c) {
            auto next = u.row(step + 1, c);
            auto here = u.row(step, c);
            auto src_here = source.row(step, c);
            if (grid.rule == TimeRule::kTrapezoid) {
                auto src_next = source.row(step + 1, c);
                for (std::size_t j = 0; j < nx; ++j) scratch[j] = next[j] + 0.5 * dt * src_next[j];
                kernel.apply(scratch, here, grid.edge);
                for (std::size_t j = 0; j < nx; ++j) here[j] += 0.5 * dt * src_here[j];
            } else {
                kernel.apply(next, here, grid.edge);
                for (std::size_t j = 0; j < nx; ++j) here[j] += dt * src_here[j];
            }
        }
    }
    return u;
}

GridFunction backward_accumulate(const GridFunction& source, const Grid& grid) {
    const std::vector<double> zero(source.slice_size(), 0.0);
    return backward_accumulate(source, zero, grid);
}

void gradient_x(std::span<const double> row, double dx, std::span<double> out) {
    const std::size_t n = row.size();
    if (n < 3) throw std::invalid_argument("gradient_x: need at least three space nodes");
    const double inv = 0.5 / dx;
    out[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) * inv;
    for (std::size_t j = 1; j + 1 < n; ++j) out[j] = (row[j + 1] - row[j - 1]) * inv;
    out[n - 1] = (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) * inv;
}

GridFunction gradient_x(const GridFunction& u, const SpaceGrid& space) {
    if (u.space_nodes() != space.nodes()) {
        throw std::invalid_argument("gradient_x: function does not match the space grid");
    }
    GridFunction g(u.time_nodes(), u.space_nodes(), u.components());
    for (std::size_t i = 0; i < u.time_nodes(); ++i) {
        for (std::size_t c = 0; c < u.components(); ++c) gradient_x(u.row(i, c), space.dx(), g.row(i, c));
    }
    return g;
}

double interpolate(std::span<const double> row, const SpaceGrid& space, double x) noexcept {
    const auto [j, w] = space.locate(x);
    return (1.0 - w) * row[j] + w * row[j + 1];
}

}  // namespace qbsde
