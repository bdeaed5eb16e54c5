#include "qbsde/grid_function.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qbsde {

GridFunction::GridFunction(std::size_t time_nodes, std::size_t space_nodes, std::size_t components,
                           double fill)
    : nt_(time_nodes), nx_(space_nodes), m_(components),
      values_(time_nodes * space_nodes * components, fill) {
    if (components == 0) {
        throw std::invalid_argument("GridFunction: component count must be positive");
    }
}

void GridFunction::node(std::size_t i, std::size_t j, std::span<double> out) const noexcept {
    for (std::size_t c = 0; c < m_; ++c) out[c] = (*this)(i, j, c);
}

void GridFunction::require_finite(std::string_view what) const {
    for (std::size_t i = 0; i < nt_; ++i) {
        for (std::size_t c = 0; c < m_; ++c) {
            for (std::size_t j = 0; j < nx_; ++j) {
                if (!std::isfinite((*this)(i, j, c))) {
                    std::ostringstream msg;
                    msg << what << ": non-finite value at time node " << i << ", space node " << j
                        << ", component " << c;
                    throw std::invalid_argument(msg.str());
                }
            }
        }
    }
}

namespace {

double sup_over(const GridFunction& f, std::size_t lo, std::size_t hi) noexcept {
    double best = 0.0;
    for (std::size_t i = 0; i < f.time_nodes(); ++i) {
        for (std::size_t j = lo; j < hi; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < f.components(); ++c) s += f(i, j, c) * f(i, j, c);
            best = std::max(best, s);
        }
    }
    return std::sqrt(best);
}

void check_same(const GridFunction& a, const GridFunction& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string("GridFunction ") + op + ": shape mismatch");
    }
}

}  // namespace

double GridFunction::sup_norm() const noexcept { return sup_over(*this, 0, nx_); }

double GridFunction::sup_norm(const Grid& grid) const noexcept {
    const auto [lo, hi] = grid.core_range();
    return sup_over(*this, lo, hi);
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    check_same(*this, other, "+=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    check_same(*this, other, "-=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
    return *this;
}

GridFunction& GridFunction::operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
}

GridFunction& GridFunction::axpy(double s, const GridFunction& other) {
    check_same(*this, other, "axpy");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += s * other.values_[k];
    return *this;
}

double sup_distance(const GridFunction& a, const GridFunction& b, const Grid& grid) {
    check_same(a, b, "sup_distance");
    const auto [lo, hi] = grid.core_range();
    double best = 0.0;
    for (std::size_t i = 0; i < a.time_nodes(); ++i) {
        for (std::size_t j = lo; j < hi; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.components(); ++c) {
                const double d = a(i, j, c) - b(i, j, c);
                s += d * d;
            }
            best = std::max(best, s);
        }
    }
    return std::sqrt(best);
}

}  // namespace qbsde
