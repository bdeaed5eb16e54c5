#include "qbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qbsde/numerics.hpp"

namespace qbsde {

std::vector<double> BSDESpec::terminal_values() const {
    if (!terminal) throw std::invalid_argument("BSDESpec: terminal map is empty");
    const std::size_t nx = grid.space.nodes();
    std::vector<double> out(dimension * nx);
    std::vector<double> h(dimension);
    for (std::size_t j = 0; j < nx; ++j) {
        terminal(grid.space.x(j), h);
        for (std::size_t c = 0; c < dimension; ++c) out[c * nx + j] = h[c];
    }
    return out;
}

void BSDESpec::validate() const {
    if (dimension == 0) throw std::invalid_argument("BSDESpec: dimension must be positive");
    if (driver_dimension(driver) != dimension) {
        throw std::invalid_argument("BSDESpec: driver dimension " + std::to_string(driver_dimension(driver)) +
                                    " differs from the system dimension " + std::to_string(dimension));
    }
    if (const auto* b = std::get_if<BilinearDriver>(&driver); b != nullptr && !b->fits(grid)) {
        throw std::invalid_argument("BSDESpec: driver coefficient field lives on a different grid");
    }
    const auto h = terminal_values();
    const std::size_t nx = grid.space.nodes();
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (!std::isfinite(h[k])) {
            std::ostringstream msg;
            msg << "BSDESpec: terminal map is not finite at x = " << grid.space.x(k % nx) << " (component "
                << k / nx << ')';
            throw std::invalid_argument(msg.str());
        }
    }
}

Lift lift_terminal(const BSDESpec& spec) {
    spec.validate();
    Lift lift;
    lift.y = backward_accumulate(GridFunction::zeros(spec.grid, spec.dimension), spec.terminal_values(),
                                 spec.grid);
    lift.zeta = gradient_x(lift.y, spec.grid.space);
    return lift;
}

GridFunction bilinear_image(const GridFunction& mu, const GridFunction& nu, const BilinearDriver& driver,
                            const Grid& grid) {
    return gradient_x(backward_accumulate(bilinear_field(driver, mu, nu, grid), grid), grid.space);
}

namespace {

const BilinearDriver& require_bilinear(const BSDESpec& spec, const char* what) {
    const auto* b = std::get_if<BilinearDriver>(&spec.driver);
    if (b == nullptr) {
        throw std::invalid_argument(std::string(what) +
                                    ": the power series needs a bilinear driver; use picard_solve for a "
                                    "general quadratic driver");
    }
    return *b;
}

std::vector<double> scaled(std::vector<double> v, double a) {
    for (double& e : v) e *= a;
    return v;
}

void fill_diagnostics(const BSDESpec& spec, Solution& s, double a) {
    const ResidualReport r = residual(spec, s.y, s.zeta, a);
    s.residual = r.defect;
    s.gradient_gap = r.gradient_gap;
    s.hbmo_zeta = hbmo_norm(s.zeta, spec.grid, Region::kCore);
}

}  // namespace

double ExpansionSeries::radius_sum() const {
    double s = 0.0;
    double power = 1.0;
    for (double norm : coeff_hbmo_norms) {
        power *= rho;
        s += norm * power;
    }
    return s;
}

ExpansionSeries expansion(const BSDESpec& spec, std::size_t order, const BmoConstants& constants,
                          Region region) {
    if (order < 1) throw std::invalid_argument("expansion: order K must be at least 1");
    const BilinearDriver& driver = require_bilinear(spec, "expansion");
    const Grid& grid = spec.grid;

    ExpansionSeries series{spec, {}, {}, {}, constants, 0.0, 0.0, constants.kappa_is_default, 0.0, region};
    series.constants.theta = driver.theta();

    Lift lift = lift_terminal(spec);
    series.y.push_back(std::move(lift.y));
    series.zeta.push_back(std::move(lift.zeta));
    for (std::size_t k = 2; k <= order; ++k) {
        // sum over ordered pairs l + m = k, folded by symmetry of f~
        GridFunction source = GridFunction::zeros(grid, spec.dimension);
        for (std::size_t l = 1; 2 * l <= k; ++l) {
            const std::size_t m = k - l;
            const double weight = l == m ? 1.0 : 2.0;
            source.axpy(weight, bilinear_field(driver, series.zeta[l - 1], series.zeta[m - 1], grid));
        }
        GridFunction y = backward_accumulate(source, grid);
        GridFunction zeta = gradient_x(y, grid.space);
        series.y.push_back(std::move(y));
        series.zeta.push_back(std::move(zeta));
    }
    for (const auto& z : series.zeta) series.coeff_hbmo_norms.push_back(hbmo_norm(z, grid, region).value);
    series.l_norm = series.coeff_hbmo_norms.front();

    if (series.l_norm > 0.0 && series.constants.theta > 0.0) {
        series.rho = radius(series.constants, series.l_norm);
    } else {
        series.rho = std::numeric_limits<double>::infinity();
    }

    // 1 / limsup ||zeta^(k)||^(1/k), read off the last coefficients that are not round-off
    const auto& norms = series.coeff_hbmo_norms;
    const double floor = 1e-12 * std::max(1.0, series.l_norm);
    std::size_t last = norms.size();
    while (last > 0 && norms[last - 1] <= floor) --last;
    if (norms.size() == 1) {
        series.empirical_radius = std::numeric_limits<double>::quiet_NaN();
    } else if (last < norms.size()) {
        series.empirical_radius = std::numeric_limits<double>::infinity();  // the series terminates
    } else {
        series.empirical_radius = norms[last - 2] / norms[last - 1];
    }
    return series;
}

Solution evaluate_series(const ExpansionSeries& series, double a, std::size_t order) {
    const std::size_t k_max = order == 0 ? series.order() : std::min(order, series.order());
    const Grid& grid = series.spec.grid;
    Solution s;
    s.y = GridFunction::zeros(grid, series.spec.dimension);
    s.zeta = GridFunction::zeros(grid, series.spec.dimension);
    double power = 1.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        power *= a;
        s.y.axpy(power, series.y[k - 1]);
        s.zeta.axpy(power, series.zeta[k - 1]);
    }
    if (std::abs(a) >= series.rho) {
        std::ostringstream msg;
        msg << "|a| = " << std::abs(a) << " is outside the radius rho = " << series.rho
            << (series.rho_heuristic ? " (heuristic, kappa defaulted)" : "");
        s.warnings.push_back(msg.str());
    }

    // geometric tail sum_{k > K} ||zeta^(K)|| (|a| q)^(k - K), q the last observed norm ratio
    const double last = series.coeff_hbmo_norms[k_max - 1];
    if (last == 0.0 || a == 0.0) {
        s.remainder_estimate = 0.0;
    } else if (k_max >= 2 && series.coeff_hbmo_norms[k_max - 2] > 0.0) {
        const double q = std::abs(a) * last / series.coeff_hbmo_norms[k_max - 2];
        s.remainder_estimate = q < 1.0 ? last * std::pow(std::abs(a), static_cast<double>(k_max)) * q / (1.0 - q)
                                       : std::numeric_limits<double>::infinity();
    } else {
        s.remainder_estimate = std::numeric_limits<double>::infinity();
    }
    fill_diagnostics(series.spec, s, a);
    return s;
}

Solution picard_solve(const BSDESpec& spec, double a, const PicardSettings& settings, const GridFunction* start) {
    if (!(settings.tol > 0.0)) throw std::invalid_argument("picard_solve: tol must be positive");
    if (settings.max_iterations == 0) throw std::invalid_argument("picard_solve: max_iterations must be positive");
    if (!std::isfinite(a)) throw std::invalid_argument("picard_solve: a must be finite");
    spec.validate();
    const Grid& grid = spec.grid;
    const std::vector<double> terminal = scaled(spec.terminal_values(), a);

    GridFunction zeta;
    if (start != nullptr) {
        if (!start->fits(grid) || start->components() != spec.dimension) {
            throw std::invalid_argument("picard_solve: starting iterate does not match the spec");
        }
        zeta = *start;
    } else {
        const Lift lift = lift_terminal(spec);
        zeta = lift.zeta;
        zeta *= a;
    }

    Solution s;
    std::vector<double> norms;
    GridFunction y;
    bool converged = false;
    for (std::size_t it = 1; it <= settings.max_iterations; ++it) {
        y = backward_accumulate(driver_field(spec.driver, zeta, grid), terminal, grid);
        GridFunction next = gradient_x(y, grid.space);
        const double change = sup_distance(next, zeta, grid);
        zeta = std::move(next);
        s.change_history.push_back(change);
        norms.push_back(zeta.sup_norm(grid));
        s.iterations = it;
        if (!std::isfinite(change) || change > settings.blowup) {
            std::ostringstream msg;
            msg << "picard_solve: iterates blew up after " << it << " sweeps (change " << change
                << "); a = " << a << " is likely outside the contraction ball";
            throw DivergenceError(msg.str(), s.change_history, norms);
        }
        if (it >= 2) {
            const double prev = s.change_history[it - 2];
            if (prev > 0.0) s.contraction = std::max(s.contraction, change / prev);
        }
        if (change < settings.tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "picard_solve: no convergence in " << settings.max_iterations << " sweeps (last change "
            << s.change_history.back() << ", tol " << settings.tol << ", a = " << a << ')';
        throw DivergenceError(msg.str(), s.change_history, norms);
    }
    // Y consistent with the final integrand
    s.y = backward_accumulate(driver_field(spec.driver, zeta, grid), terminal, grid);
    s.zeta = std::move(zeta);
    if (s.contraction > 0.9) s.warnings.push_back("Picard contraction factor above 0.9");
    fill_diagnostics(spec, s, a);
    return s;
}

ResidualReport residual(const BSDESpec& spec, const GridFunction& y, const GridFunction& zeta, double a) {
    const Grid& grid = spec.grid;
    if (!y.fits(grid) || !zeta.same_shape(y) || y.components() != spec.dimension) {
        throw std::invalid_argument("residual: solution does not live on the spec's grid");
    }
    const std::size_t nt = grid.time.steps();
    const std::size_t nx = grid.space.nodes();
    const std::size_t n = spec.dimension;
    const double dt = grid.time.dt();
    const auto [lo, hi] = grid.core_range();
    const GridFunction f = driver_field(spec.driver, zeta, grid);
    const HeatKernel kernel(dt, grid.space.dx());

    ResidualReport r;
    std::vector<double> scratch(nx), stepped(nx), grad(nx);
    for (std::size_t i = 0; i < nt; ++i) {
        std::vector<double> defect2(nx, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            const auto next = y.row(i + 1, c);
            const auto here = y.row(i, c);
            if (grid.rule == TimeRule::kTrapezoid) {
                for (std::size_t j = 0; j < nx; ++j) scratch[j] = next[j] + 0.5 * dt * f(i + 1, j, c);
                kernel.apply(scratch, stepped, grid.edge);
                for (std::size_t j = 0; j < nx; ++j) stepped[j] += 0.5 * dt * f(i, j, c);
            } else {
                kernel.apply(next, stepped, grid.edge);
                for (std::size_t j = 0; j < nx; ++j) stepped[j] += dt * f(i, j, c);
            }
            for (std::size_t j = lo; j < hi; ++j) {
                const double d = here[j] - stepped[j];
                defect2[j] += d * d;
            }
        }
        for (std::size_t j = lo; j < hi; ++j) {
            const double d = std::sqrt(defect2[j]) / dt;
            if (d > r.defect) {
                r.defect = d;
                r.t_argmax = grid.time.time(i);
                r.x_argmax = grid.space.x(j);
            }
        }
    }
    r.gradient_gap = sup_distance(zeta, gradient_x(y, grid.space), grid);
    const auto h = spec.terminal_values();
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t j = 0; j < nx; ++j) {
            r.terminal_gap = std::max(r.terminal_gap, std::abs(y(nt, j, c) - a * h[c * nx + j]));
        }
    }
    return r;
}

}  // namespace qbsde
