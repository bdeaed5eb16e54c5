#include "qbsde/paths.hpp"

#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"

namespace qbsde {

PathBundle::PathBundle(std::uint64_t seed, std::size_t paths, TimeGrid grid,
                       std::vector<double> increments)
    : seed_(seed), paths_(paths), grid_(grid), increments_(std::move(increments)) {
    if (increments_.size() != paths_ * grid_.steps()) {
        throw std::invalid_argument("PathBundle: increment array has the wrong size");
    }
}

double PathBundle::terminal(std::size_t p) const noexcept {
    const auto inc = increments(p);
    double b = 0.0;
    for (double d : inc) b += d;
    return b;
}

PathBundle sample_paths(std::uint64_t seed, std::size_t npaths, const TimeGrid& grid,
                        std::size_t budget) {
    if (npaths == 0) throw std::invalid_argument("sample_paths: need at least one path");
    const std::size_t nt = grid.steps();
    if (npaths > budget / nt) {
        throw std::length_error("sample_paths: " + std::to_string(npaths) + " paths x " +
                                std::to_string(nt) + " steps exceeds the memory budget of " +
                                std::to_string(budget) + " values");
    }
    std::vector<double> inc(npaths * nt);
    const double sd = std::sqrt(grid.dt());
    parallel_for(npaths, 256, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                   static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(p >> 32)};
            std::mt19937_64 engine(sequence);
            boost::random::normal_distribution<double> normal;
            double* out = inc.data() + p * nt;
            for (std::size_t i = 0; i < nt; ++i) out[i] = sd * normal(engine);
        }
    });
    return PathBundle(seed, npaths, grid, std::move(inc));
}

SampleStats sample_stats(std::span<const double> values) {
    SampleStats s;
    s.count = values.size();
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    s.mean = pairwise_sum(values) / n;
    std::vector<double> dev(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) dev[k] = (values[k] - s.mean) * (values[k] - s.mean);
    if (values.size() > 1) s.std_error = std::sqrt(pairwise_sum(dev) / (n - 1.0) / n);
    return s;
}

PathFunctionals::PathFunctionals(const PathBundle& paths, const Grid& grid) : paths_(paths), grid_(grid) {
    if (!(paths.time_grid() == grid.time)) {
        throw std::invalid_argument("PathFunctionals: path bundle and grid use different time axes");
    }
}

template <class F>
std::vector<double> PathFunctionals::integrate(F&& integrand) const {
    const std::size_t nt = grid_.time.steps();
    const double dt = grid_.time.dt();
    const bool trapezoid = grid_.rule == TimeRule::kTrapezoid;
    std::vector<double> out(paths_.paths());
    parallel_for(paths_.paths(), 512, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const auto inc = paths_.increments(p);
            double b = 0.0;
            double acc = 0.0;
            for (std::size_t i = 0; i <= nt; ++i) {
                const double v = integrand(i, b);
                double w = dt;
                if (i == nt) w = trapezoid ? 0.5 * dt : 0.0;
                else if (i == 0 && trapezoid) w = 0.5 * dt;
                acc += w * v;
                if (i < nt) b += inc[i];
            }
            out[p] = acc;
        }
    });
    return out;
}

namespace {

double node_norm2(const GridFunction& f, const SpaceGrid& space, std::size_t i, double x) {
    double s = 0.0;
    for (std::size_t c = 0; c < f.components(); ++c) {
        const double v = interpolate(f.row(i, c), space, x);
        s += v * v;
    }
    return s;
}

}  // namespace

std::vector<double> PathFunctionals::quadratic_variation(const GridFunction& zeta) const {
    if (!zeta.fits(grid_)) throw std::invalid_argument("quadratic_variation: grid mismatch");
    return integrate([&](std::size_t i, double x) { return node_norm2(zeta, grid_.space, i, x); });
}

std::vector<double> PathFunctionals::total_variation(const GridFunction& rate) const {
    if (!rate.fits(grid_)) throw std::invalid_argument("total_variation: grid mismatch");
    return integrate([&](std::size_t i, double x) { return std::sqrt(node_norm2(rate, grid_.space, i, x)); });
}

std::vector<double> PathFunctionals::weighted_variation(const GridFunction& weight,
                                                        const GridFunction& zeta) const {
    if (!weight.fits(grid_) || !zeta.fits(grid_) || weight.components() != 1) {
        throw std::invalid_argument("weighted_variation: grid mismatch");
    }
    return integrate([&](std::size_t i, double x) {
        return interpolate(weight.row(i, 0), grid_.space, x) * node_norm2(zeta, grid_.space, i, x);
    });
}

std::vector<double> PathFunctionals::terminal_deviation(std::span<const double> terminal_slice,
                                                        std::span<const double> centre) const {
    const std::size_t nx = grid_.space.nodes();
    const std::size_t m = centre.size();
    if (terminal_slice.size() != m * nx) throw std::invalid_argument("terminal_deviation: size mismatch");
    std::vector<double> out(paths_.paths());
    for (std::size_t p = 0; p < paths_.paths(); ++p) {
        const double x = paths_.terminal(p);
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            const double v = interpolate(terminal_slice.subspan(c * nx, nx), grid_.space, x) - centre[c];
            s += v * v;
        }
        out[p] = std::sqrt(s);
    }
    return out;
}

double PathFunctionals::lp(std::span<const double> values, double q) {
    if (values.empty()) return 0.0;
    std::vector<double> powered(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) powered[k] = std::pow(std::abs(values[k]), q);
    return std::pow(pairwise_sum(powered) / static_cast<double>(values.size()), 1.0 / q);
}

double PathFunctionals::hp_norm(const GridFunction& zeta, double p) const {
    auto qv = quadratic_variation(zeta);
    for (double& v : qv) v = std::sqrt(v);
    return lp(qv, p);
}

}  // namespace qbsde
