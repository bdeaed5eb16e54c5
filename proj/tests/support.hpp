#pragma once

#include <cmath>
#include <functional>

#include "qbsde/bsde.hpp"

namespace support {

inline qbsde::TerminalMap scalar_terminal(std::function<double(double)> h) {
    return [h = std::move(h)](double x, std::span<double> out) { out[0] = h(x); };
}

// n = 1, f~(u, v) = c u v / 2
inline qbsde::BSDESpec scalar_spec(double c, std::function<double(double)> h, qbsde::Grid grid) {
    return qbsde::BSDESpec{1, qbsde::BilinearDriver::scalar(c), scalar_terminal(std::move(h)), grid};
}

inline qbsde::GridFunction field(const qbsde::Grid& g, const std::function<double(double, double)>& f) {
    qbsde::GridFunction u = qbsde::GridFunction::zeros(g, 1);
    for (std::size_t i = 0; i < g.time.nodes(); ++i) {
        for (std::size_t j = 0; j < g.space.nodes(); ++j) u(i, j) = f(g.time.time(i), g.space.x(j));
    }
    return u;
}

// sup over core nodes of |u(t, x) - exact(t, x)| for component c
inline double core_error(const qbsde::GridFunction& u, const qbsde::Grid& g,
                         const std::function<double(double, double)>& exact, std::size_t c = 0) {
    double e = 0.0;
    const auto [lo, hi] = g.core_range();
    for (std::size_t i = 0; i < g.time.nodes(); ++i) {
        for (std::size_t j = lo; j < hi; ++j) {
            e = std::max(e, std::abs(u(i, j, c) - exact(g.time.time(i), g.space.x(j))));
        }
    }
    return e;
}

}  // namespace support
