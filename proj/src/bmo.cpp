#include "qbsde/bmo.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"

namespace qbsde {

void BmoConstants::validate() const {
    if (!(kappa >= 1.0)) throw std::invalid_argument("BmoConstants: kappa must be >= 1");
    if (!(theta > 0.0)) throw std::invalid_argument("BmoConstants: theta must be > 0");
}

double radius(const BmoConstants& constants, double l_norm) {
    constants.validate();
    if (!(l_norm > 0.0)) {
        throw std::domain_error(
            "radius: ||L||_bmo is zero, the terminal condition is deterministic and the "
            "solution is linear in a for every a");
    }
    return 1.0 / (8.0 * constants.kappa * constants.theta * l_norm);
}

namespace {

// sup of the scalar field u over the region, with its argmax
NormValue field_sup(const GridFunction& u, const Grid& grid, Region region) {
    std::size_t lo = 0;
    std::size_t hi = grid.space.nodes();
    if (region == Region::kCore) std::tie(lo, hi) = grid.core_range();
    NormValue best{-1.0, 0.0, 0.0};
    for (std::size_t i = 0; i < u.time_nodes(); ++i) {
        for (std::size_t j = lo; j < hi; ++j) {
            const double v = u(i, j, 0);
            if (v > best.value) best = {v, grid.time.time(i), grid.space.x(j)};
        }
    }
    if (best.value < 0.0) best.value = 0.0;
    return best;
}

GridFunction pointwise_norm2(const GridFunction& f) {
    GridFunction out(f.time_nodes(), f.space_nodes(), 1);
    for (std::size_t i = 0; i < f.time_nodes(); ++i) {
        for (std::size_t c = 0; c < f.components(); ++c) {
            const auto row = f.row(i, c);
            auto dst = out.row(i, 0);
            for (std::size_t j = 0; j < row.size(); ++j) dst[j] += row[j] * row[j];
        }
    }
    return out;
}

}  // namespace

NormValue hbmo_norm(const GridFunction& zeta, const Grid& grid, Region region) {
    if (!zeta.fits(grid)) throw std::invalid_argument("hbmo_norm: integrand does not fit the grid");
    zeta.require_finite("hbmo_norm");
    const GridFunction potential = backward_accumulate(pointwise_norm2(zeta), grid);
    NormValue v = field_sup(potential, grid, region);
    v.value = std::sqrt(v.value);
    return v;
}

NormValue terminal_bmo_norm(std::span<const double> terminal, std::size_t components, const Grid& grid,
                            Region region) {
    const std::size_t nx = grid.space.nodes();
    if (terminal.size() != components * nx) {
        throw std::invalid_argument("terminal_bmo_norm: terminal slice has the wrong size");
    }
    for (std::size_t k = 0; k < terminal.size(); ++k) {
        if (!std::isfinite(terminal[k])) {
            throw std::invalid_argument("terminal_bmo_norm: terminal map is not finite at x = " +
                                        std::to_string(grid.space.x(k % nx)));
        }
    }
    const GridFunction zero = GridFunction::zeros(grid, components);
    const GridFunction conditional = backward_accumulate(zero, terminal, grid);
    return hbmo_norm(gradient_x(conditional, grid.space), grid, region);
}

void NormReport::write_csv_rows(std::ostream& out) const {
    out << "hbmo," << hbmo.value << ',' << hbmo.t_argmax << ',' << hbmo.x_argmax << '\n';
    for (const auto& [p, v] : sp) out << "sp_" << p << ',' << v << ",,\n";
    out << "variation_bmo," << variation_bmo.value << ',' << variation_bmo.t_argmax << ','
        << variation_bmo.x_argmax << '\n';
    out << "initial," << initial << ",,\n";
    out << "sbmo," << sbmo << ',' << hbmo.t_argmax << ',' << hbmo.x_argmax << '\n';
}

NormReport semimartingale_norms(const SemimartingaleParts& parts, std::span<const double> ps,
                                const PathBundle& paths, const Grid& grid, Region region) {
    if (parts.value == nullptr || parts.integrand == nullptr || parts.drift == nullptr) {
        throw std::invalid_argument(
            "semimartingale_norms: missing decomposition (value, integrand and drift are required)");
    }
    const GridFunction& value = *parts.value;
    const GridFunction& integrand = *parts.integrand;
    const GridFunction& drift = *parts.drift;
    if (!value.fits(grid) || !integrand.same_shape(value) || !drift.same_shape(value)) {
        throw std::invalid_argument("semimartingale_norms: decomposition does not fit the grid");
    }
    NormReport report;
    double x0 = 0.0;
    for (std::size_t c = 0; c < value.components(); ++c) {
        const double v = value(0, grid.space.centre(), c);
        x0 += v * v;
    }
    report.initial = std::sqrt(x0);
    report.hbmo = hbmo_norm(integrand, grid, region);

    GridFunction abs_drift = pointwise_norm2(drift);
    for (double& v : abs_drift.values()) v = std::sqrt(v);
    report.variation_bmo = field_sup(backward_accumulate(abs_drift, grid), grid, region);
    report.sbmo = report.initial + report.hbmo.value + report.variation_bmo.value;

    const PathFunctionals functionals(paths, grid);
    auto qv = functionals.quadratic_variation(integrand);
    for (double& v : qv) v = std::sqrt(v);
    const auto tv = functionals.total_variation(drift);
    for (double p : ps) {
        if (!(p > 1.0)) throw std::invalid_argument("semimartingale_norms: p must exceed 1");
        report.sp.emplace_back(p, report.initial + PathFunctionals::lp(qv, p) + PathFunctionals::lp(tv, p));
    }
    return report;
}

Bmo1Estimate bmo1_estimate(const GridFunction& source, const Grid& grid,
                           std::span<const std::pair<std::size_t, std::size_t>> start_nodes,
                           std::size_t paths_per_node, std::uint64_t seed) {
    if (!source.fits(grid)) throw std::invalid_argument("bmo1_estimate: source does not fit the grid");
    if (paths_per_node < 2) throw std::invalid_argument("bmo1_estimate: need at least two paths per node");
    const GridFunction u = backward_accumulate(source, grid);
    const std::size_t nt = grid.time.steps();
    const std::size_t m = source.components();
    const double dt = grid.time.dt();
    const double sd = std::sqrt(dt);
    const bool trapezoid = grid.rule == TimeRule::kTrapezoid;

    Bmo1Estimate best;
    best.value = -1.0;
    for (std::size_t n = 0; n < start_nodes.size(); ++n) {
        const auto [i0, j0] = start_nodes[n];
        if (i0 > nt || j0 >= grid.space.nodes()) throw std::out_of_range("bmo1_estimate: start node");
        std::vector<double> samples(paths_per_node);
        parallel_for(paths_per_node, 256, [&](std::size_t begin, std::size_t end) {
            std::vector<double> acc(m);
            for (std::size_t p = begin; p < end; ++p) {
                std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(n),
                                       static_cast<std::uint32_t>(p)};
                std::mt19937_64 engine(sequence);
                boost::random::normal_distribution<double> normal;
                double x = grid.space.x(j0);
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t i = i0; i <= nt; ++i) {
                    double w = dt;
                    if (i == nt) w = trapezoid ? 0.5 * dt : 0.0;
                    else if (i == i0 && trapezoid) w = 0.5 * dt;
                    for (std::size_t c = 0; c < m; ++c) acc[c] += w * interpolate(source.row(i, c), grid.space, x);
                    if (i < nt) x += sd * normal(engine);
                }
                double s = 0.0;
                for (std::size_t c = 0; c < m; ++c) {
                    const double d = acc[c] - u(i0, j0, c);
                    s += d * d;
                }
                samples[p] = std::sqrt(s);
            }
        });
        const SampleStats stats = sample_stats(samples);
        if (stats.mean > best.value) {
            best = {stats.mean, stats.std_error, grid.time.time(i0), grid.space.x(j0)};
        }
    }
    if (best.value < 0.0) best.value = 0.0;
    return best;
}

}  // namespace qbsde
