#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "qbsde/grid.hpp"

namespace qbsde {

/// Vector field u(t_i, x_j) in R^m on a time x space grid.
///
/// Storage is time-major, then component, then space: the nx values of one
/// component at one time are contiguous, which is what the spatial kernels
/// want. A "slice" is the m * nx block at one time node.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::size_t time_nodes, std::size_t space_nodes, std::size_t components,
                 double fill = 0.0);

    static GridFunction zeros(const Grid& grid, std::size_t components) {
        return GridFunction(grid.time.nodes(), grid.space.nodes(), components);
    }

    std::size_t time_nodes() const noexcept { return nt_; }
    std::size_t space_nodes() const noexcept { return nx_; }
    std::size_t components() const noexcept { return m_; }
    std::size_t slice_size() const noexcept { return m_ * nx_; }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t i, std::size_t j, std::size_t c = 0) noexcept {
        return values_[(i * m_ + c) * nx_ + j];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t c = 0) const noexcept {
        return values_[(i * m_ + c) * nx_ + j];
    }

    std::span<double> row(std::size_t i, std::size_t c) noexcept {
        return {values_.data() + (i * m_ + c) * nx_, nx_};
    }
    std::span<const double> row(std::size_t i, std::size_t c) const noexcept {
        return {values_.data() + (i * m_ + c) * nx_, nx_};
    }
    std::span<double> slice(std::size_t i) noexcept {
        return {values_.data() + i * m_ * nx_, m_ * nx_};
    }
    std::span<const double> slice(std::size_t i) const noexcept {
        return {values_.data() + i * m_ * nx_, m_ * nx_};
    }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Copies the components at node (i, j) into out (size m).
    void node(std::size_t i, std::size_t j, std::span<double> out) const noexcept;

    bool same_shape(const GridFunction& other) const noexcept {
        return nt_ == other.nt_ && nx_ == other.nx_ && m_ == other.m_;
    }
    bool fits(const Grid& grid) const noexcept {
        return nt_ == grid.time.nodes() && nx_ == grid.space.nodes();
    }

    /// Throws std::invalid_argument naming the first non-finite node.
    void require_finite(std::string_view what) const;

    /// Max over all nodes of the Euclidean norm of the m-vector.
    double sup_norm() const noexcept;
    /// Same, restricted to the core region of grid.
    double sup_norm(const Grid& grid) const noexcept;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double s) noexcept;
    /// this += s * other
    GridFunction& axpy(double s, const GridFunction& other);

    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

private:
    std::size_t nt_ = 0;
    std::size_t nx_ = 0;
    std::size_t m_ = 0;
    std::vector<double> values_;
};

/// Sup over core nodes of the Euclidean distance |a - b|.
double sup_distance(const GridFunction& a, const GridFunction& b, const Grid& grid);

}  // namespace qbsde
