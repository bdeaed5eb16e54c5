#include "qbsde/impact.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/quadrature.hpp"

namespace qbsde {
namespace {

constexpr std::uint64_t kThetaSeed = 0x1a2b3c4dULL;

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool on_grid(double t, const TimeGrid& time, std::size_t& node) {
    const double k = t / time.dt();
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-9 || r < 0.0 || r > static_cast<double>(time.steps())) return false;
    node = static_cast<std::size_t>(r);
    return true;
}

std::vector<std::size_t> breakpoint_nodes(const SimpleDemand& d, const TimeGrid& time) {
    std::vector<std::size_t> nodes;
    for (double t : d.breakpoints) {
        std::size_t k = 0;
        on_grid(t, time, k);
        nodes.push_back(k);
    }
    return nodes;
}

// gamma used inside time integrals: at interior breakpoints the mean of both limits
GridFunction quadrature_gamma(const MarketSpec& market) {
    GridFunction g = market.demand_field();
    const auto* simple = std::get_if<SimpleDemand>(&market.demand);
    if (simple == nullptr) return g;
    const auto nodes = breakpoint_nodes(*simple, market.grid.time);
    for (std::size_t k = 1; k + 1 < nodes.size(); ++k) {
        for (std::size_t c = 0; c < market.n; ++c) {
            const double v = 0.5 * (simple->levels[k - 1][c] + simple->levels[k][c]);
            for (double& x : g.row(nodes[k], c)) x = v;
        }
    }
    return g;
}

std::vector<double> dividend_values(const MarketSpec& market) {
    const std::size_t nx = market.grid.space.nodes();
    std::vector<double> out(market.n * nx), h(market.n);
    for (std::size_t j = 0; j < nx; ++j) {
        market.dividend(market.grid.space.x(j), h);
        for (std::size_t c = 0; c < market.n; ++c) out[c * nx + j] = h[c];
    }
    return out;
}

BSDESpec impact_spec(const MarketSpec& market, BilinearDriver driver) {
    const std::size_t n = market.n;
    TerminalMap dividend = market.dividend;
    TerminalMap terminal = [dividend, n](double x, std::span<double> out) {
        out[0] = 0.0;
        dividend(x, out.subspan(1, n));
    };
    return BSDESpec{n + 1, std::move(driver), std::move(terminal), market.grid};
}

// component range [first, first + count) of u as a new GridFunction
GridFunction components(const GridFunction& u, std::size_t first, std::size_t count) {
    GridFunction out(u.time_nodes(), u.space_nodes(), count);
    for (std::size_t i = 0; i < u.time_nodes(); ++i) {
        for (std::size_t c = 0; c < count; ++c) {
            const auto src = u.row(i, first + c);
            std::copy(src.begin(), src.end(), out.row(i, c).begin());
        }
    }
    return out;
}

// sum_c u_c v_c per node
GridFunction dot(const GridFunction& u, const GridFunction& v) {
    GridFunction out(u.time_nodes(), u.space_nodes(), 1);
    for (std::size_t i = 0; i < u.time_nodes(); ++i) {
        for (std::size_t c = 0; c < u.components(); ++c) {
            const auto a = u.row(i, c);
            const auto b = v.row(i, c);
            auto o = out.row(i, 0);
            for (std::size_t j = 0; j < a.size(); ++j) o[j] += a[j] * b[j];
        }
    }
    return out;
}

// u_c * s per node, s scalar
GridFunction scale_rows(const GridFunction& u, const GridFunction& s) {
    GridFunction out = u;
    for (std::size_t i = 0; i < u.time_nodes(); ++i) {
        const auto w = s.row(i, 0);
        for (std::size_t c = 0; c < u.components(); ++c) {
            auto o = out.row(i, c);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] *= w[j];
        }
    }
    return out;
}

double relative_core_gap(const GridFunction& x, const GridFunction& y, const Grid& grid) {
    const double scale = std::max(y.sup_norm(grid), std::numeric_limits<double>::min());
    return sup_distance(x, y, grid) / scale;
}

void fill_recovery(PriceSystem& p, const GridFunction& gamma, double a) {
    p.theta = a * p.sigma;
    p.alpha = p.eta + dot(p.theta, gamma);
}

// alpha and gamma hold, at node i, the values driving the step (t_i, t_{i+1}]; for a
// simple demand these are the right limits at breakpoints.
ZDiagnostics z_diagnostics(const PriceSystem& p, const GridFunction& alpha, const GridFunction& gamma,
                           const Grid& grid, const ZCheckOptions& options) {
    ZDiagnostics z;
    const std::size_t nt = grid.time.steps();
    const std::size_t nx = grid.space.nodes();
    const std::size_t n = p.s.components();
    const double dt = grid.time.dt();
    const auto [lo, hi] = grid.core_range();

    // tilted transitions on the grid
    const HeatKernel kernel(dt, grid.space.dx());
    std::vector<double> mass(nx, 1.0), next(nx);
    for (std::size_t i = nt; i-- > 0;) {
        kernel.apply_tilted(mass, alpha.row(i, 0), next, grid.edge);
        mass.swap(next);
    }
    for (std::size_t j = lo; j < hi; ++j) z.grid_mass_error = std::max(z.grid_mass_error, std::abs(mass[j] - 1.0));

    std::vector<double> drift(nx);
    for (std::size_t i = 0; i < nt; ++i) {
        std::vector<double> gs(nx, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            kernel.apply_tilted(p.s.row(i + 1, c), alpha.row(i, 0), drift, grid.edge);
            const auto s = p.s.row(i, c);
            const auto g = gamma.row(i, c);
            for (std::size_t j = lo; j < hi; ++j) {
                const double d = (drift[j] - s[j]) / dt;
                z.grid_drift_s = std::max(z.grid_drift_s, std::abs(d));
                gs[j] += g[j] * d;
            }
        }
        for (std::size_t j = lo; j < hi; ++j) z.grid_drift_gamma_s = std::max(z.grid_drift_gamma_s, std::abs(gs[j]));
    }

    if (!options.enabled || options.paths == 0) return z;
    const PathBundle paths = sample_paths(options.seed, options.paths, grid.time);
    const std::size_t np = paths.paths();
    std::vector<double> zt(np), zg(np), zs(np * n);
    std::vector<double> s0(n);
    for (std::size_t c = 0; c < n; ++c) s0[c] = interpolate(p.s.row(0, c), grid.space, 0.0);
    parallel_for(np, 256, [&](std::size_t begin, std::size_t end) {
        std::vector<double> prev(n), cur(n);
        for (std::size_t q = begin; q < end; ++q) {
            const auto inc = paths.increments(q);
            double b = 0.0, log_z = 0.0, gain = 0.0;
            for (std::size_t c = 0; c < n; ++c) prev[c] = s0[c];
            for (std::size_t i = 0; i < nt; ++i) {
                const double al = interpolate(alpha.row(i, 0), grid.space, b);
                log_z += -al * inc[i] - 0.5 * al * al * dt;
                const double bn = b + inc[i];
                for (std::size_t c = 0; c < n; ++c) {
                    cur[c] = interpolate(p.s.row(i + 1, c), grid.space, bn);
                    gain += interpolate(gamma.row(i, c), grid.space, b) * (cur[c] - prev[c]);
                    prev[c] = cur[c];
                }
                b = bn;
            }
            const double zv = std::exp(log_z);
            zt[q] = zv;
            zg[q] = zv * gain;
            for (std::size_t c = 0; c < n; ++c) zs[c * np + q] = zv * prev[c] - s0[c];
        }
    });
    const SampleStats sz = sample_stats(zt);
    const SampleStats sg = sample_stats(zg);
    z.paths = np;
    z.z_mean = sz.mean;
    z.z_stderr = sz.std_error;
    z.zgs_gap = std::abs(sg.mean);
    z.zgs_stderr = sg.std_error;
    bool pass = std::abs(sz.mean - 1.0) <= 1.96 * sz.std_error && z.zgs_gap <= 1.96 * sg.std_error;
    for (std::size_t c = 0; c < n; ++c) {
        const SampleStats sc = sample_stats(std::span<const double>(zs).subspan(c * np, np));
        if (std::abs(sc.mean) >= z.zs_gap) {
            z.zs_gap = std::abs(sc.mean);
            z.zs_stderr = sc.std_error;
        }
        pass = pass && std::abs(sc.mean) <= 1.96 * sc.std_error;
    }
    z.pass95 = pass;
    return z;
}

MarketSpec scaled_demand(const MarketSpec& m, double b) {
    MarketSpec out = m;
    if (auto* g = std::get_if<GridFunction>(&out.demand)) {
        *g *= b;
    } else {
        auto& s = std::get<SimpleDemand>(out.demand);
        for (auto& level : s.levels) {
            for (double& v : level) v *= b;
        }
        for (auto& f : s.state_levels) {
            f = [f, b](double x, std::span<double> o) {
                f(x, o);
                for (double& v : o) v *= b;
            };
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- demand

void SimpleDemand::validate(std::size_t n, const Grid& grid) const {
    const std::size_t m = periods();
    if (m == 0) throw std::invalid_argument("SimpleDemand: needs at least two breakpoints");
    if (breakpoints.front() != 0.0) throw std::invalid_argument("SimpleDemand: the first breakpoint must be 0");
    if (std::abs(breakpoints.back() - grid.time.horizon()) > 1e-12 * grid.time.horizon()) {
        throw std::invalid_argument("SimpleDemand: the last breakpoint must be the horizon T");
    }
    for (std::size_t k = 0; k < m; ++k) {
        if (!(breakpoints[k] < breakpoints[k + 1])) {
            throw std::invalid_argument("SimpleDemand: breakpoints must increase strictly");
        }
    }
    for (double t : breakpoints) {
        std::size_t node = 0;
        if (!on_grid(t, grid.time, node)) {
            std::ostringstream msg;
            msg << "SimpleDemand: breakpoint " << t << " is not a node of the time grid (dt = " << grid.time.dt()
                << ")";
            throw std::invalid_argument(msg.str());
        }
    }
    if (state_dependent()) {
        if (state_levels.size() != m) throw std::invalid_argument("SimpleDemand: need one state level per period");
        if (!levels.empty()) throw std::invalid_argument("SimpleDemand: give either constant or state levels");
        return;
    }
    if (levels.size() != m) throw std::invalid_argument("SimpleDemand: need one level per period");
    for (const auto& level : levels) {
        if (level.size() != n) throw std::invalid_argument("SimpleDemand: level has the wrong dimension");
        for (double v : level) {
            if (!std::isfinite(v)) throw std::invalid_argument("SimpleDemand: levels must be finite");
        }
    }
}

std::size_t SimpleDemand::period(double t) const noexcept {
    const std::size_t m = periods();
    for (std::size_t k = 0; k < m; ++k) {
        if (t <= breakpoints[k + 1] * (1 + 1e-12)) return k;
    }
    return m == 0 ? 0 : m - 1;
}

void MarketSpec::validate() const {
    if (n == 0) throw std::invalid_argument("MarketSpec: n must be positive");
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("MarketSpec: risk aversion a must be positive");
    if (!dividend) throw std::invalid_argument("MarketSpec: dividend map is empty");
    const auto h = dividend_values(*this);
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (!std::isfinite(h[k])) {
            std::ostringstream msg;
            msg << "MarketSpec: dividend is not finite at x = " << grid.space.x(k % grid.space.nodes());
            throw std::invalid_argument(msg.str());
        }
    }
    if (const auto* g = std::get_if<GridFunction>(&demand)) {
        if (!g->fits(grid) || g->components() != n) {
            throw std::invalid_argument("MarketSpec: demand field does not fit the grid or has the wrong dimension");
        }
        for (double v : g->values()) {
            if (!std::isfinite(v)) throw std::invalid_argument("MarketSpec: demand must be bounded (non-finite value)");
        }
    } else {
        std::get<SimpleDemand>(demand).validate(n, grid);
    }
}

GridFunction MarketSpec::demand_field() const {
    if (const auto* g = std::get_if<GridFunction>(&demand)) return *g;
    const auto& s = std::get<SimpleDemand>(demand);
    if (s.state_dependent()) {
        throw std::invalid_argument(
            "MarketSpec: a simple demand with state-dependent levels is path dependent and has no (t, x) field");
    }
    GridFunction g = GridFunction::zeros(grid, n);
    for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
        const auto& level = s.levels[s.period(grid.time.time(i))];
        for (std::size_t c = 0; c < n; ++c) {
            for (double& v : g.row(i, c)) v = level[c];
        }
    }
    return g;
}

double MarketSpec::demand_sup() const {
    if (const auto* s = std::get_if<SimpleDemand>(&demand); s != nullptr && s->state_dependent()) {
        double sup = 0.0;
        std::vector<double> v(n);
        for (const auto& f : s->state_levels) {
            for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
                f(grid.space.x(j), v);
                sup = std::max(sup, norm2(v));
            }
        }
        return sup;
    }
    return demand_field().sup_norm();
}

// ---------------------------------------------------------------- driver

std::vector<double> impact_tensor(std::span<const double> w) {
    const std::size_t n = w.size();
    const std::size_t m = n + 1;
    std::vector<double> t(m * m * m, 0.0);
    auto at = [&](std::size_t a, std::size_t b, std::size_t c) -> double& { return t[(a * m + b) * m + c]; };
    at(0, 0, 0) = -0.5;
    for (std::size_t b = 1; b < m; ++b) {
        for (std::size_t c = 1; c < m; ++c) at(0, b, c) = 0.5 * w[b - 1] * w[c - 1];
    }
    for (std::size_t a = 1; a < m; ++a) {
        at(a, a, 0) += -0.5;
        at(a, 0, a) += -0.5;
        for (std::size_t c = 1; c < m; ++c) at(a, a, c) += -0.5 * w[c - 1];
        for (std::size_t b = 1; b < m; ++b) at(a, b, a) += -0.5 * w[b - 1];
    }
    return t;
}

BilinearDriver build_impact_driver(std::size_t n, const GridFunction& gamma) {
    if (gamma.components() != n) throw std::invalid_argument("build_impact_driver: demand has the wrong dimension");
    for (double v : gamma.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("build_impact_driver: demand is unbounded");
    }
    const std::size_t m = n + 1;
    const std::size_t m3 = m * m * m;
    GridFunction coeff(gamma.time_nodes(), gamma.space_nodes(), m3);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < gamma.time_nodes(); ++i) {
        for (std::size_t j = 0; j < gamma.space_nodes(); ++j) {
            gamma.node(i, j, w);
            const auto t = impact_tensor(w);
            for (std::size_t c = 0; c < m3; ++c) coeff(i, j, c) = t[c];
        }
    }
    return BilinearDriver::field(m, coeff);
}

BilinearDriver build_impact_driver(const MarketSpec& market) {
    market.validate();
    const std::size_t n = market.n;
    const auto* simple = std::get_if<SimpleDemand>(&market.demand);
    if (simple == nullptr) {
        const auto& g = std::get<GridFunction>(market.demand);
        // a demand that is constant on the grid gives a constant tensor
        bool constant = true;
        std::vector<double> w(n);
        g.node(0, 0, w);
        for (std::size_t i = 0; i < g.time_nodes() && constant; ++i) {
            for (std::size_t c = 0; c < n && constant; ++c) {
                for (double x : g.row(i, c)) {
                    if (x != w[c]) {
                        constant = false;
                        break;
                    }
                }
            }
        }
        if (constant) return BilinearDriver::constant(n + 1, impact_tensor(w));
        return build_impact_driver(n, g);
    }
    if (simple->state_dependent()) {
        throw std::invalid_argument("build_impact_driver: state-dependent simple demands are not Markov in (t, B_t)");
    }
    if (simple->periods() == 1) return BilinearDriver::constant(n + 1, impact_tensor(simple->levels.front()));
    const std::size_t m = n + 1;
    const std::size_t m3 = m * m * m;
    const auto nodes = breakpoint_nodes(*simple, market.grid.time);
    GridFunction coeff = GridFunction::zeros(market.grid, m3);
    for (std::size_t i = 0; i < market.grid.time.nodes(); ++i) {
        std::vector<double> t = impact_tensor(simple->levels[simple->period(market.grid.time.time(i))]);
        const auto hit = std::find(nodes.begin() + 1, nodes.end() - 1, i);
        if (hit != nodes.end() - 1) {
            // interior breakpoint: mean of the left and right tensors
            const std::size_t k = static_cast<std::size_t>(hit - nodes.begin());
            const auto left = impact_tensor(simple->levels[k - 1]);
            const auto right = impact_tensor(simple->levels[k]);
            for (std::size_t c = 0; c < m3; ++c) t[c] = 0.5 * (left[c] + right[c]);
        }
        for (std::size_t c = 0; c < m3; ++c) {
            for (double& x : coeff.row(i, c)) x = t[c];
        }
    }
    return BilinearDriver::field(m, coeff);
}

double impact_theta(std::size_t n) {
    static std::mutex lock;
    static std::map<std::size_t, double> cache;
    {
        std::lock_guard guard(lock);
        if (auto it = cache.find(n); it != cache.end()) return it->second;
    }
    std::mt19937_64 rng(kThetaSeed + n);
    boost::random::normal_distribution<double> normal;
    double theta = sampled_bilinear_bound(impact_tensor(std::vector<double>(n, 0.0)), n + 1, 12, kThetaSeed);
    for (std::size_t s = 0; s < 24; ++s) {
        std::vector<double> w(n);
        for (double& v : w) v = normal(rng);
        const double r = norm2(w);
        if (r == 0.0) continue;
        for (double& v : w) v /= r;
        theta = std::max(theta, sampled_bilinear_bound(impact_tensor(w), n + 1, 12, kThetaSeed + s));
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> w(n, 0.0);
        w[c] = 1.0;
        theta = std::max(theta, sampled_bilinear_bound(impact_tensor(w), n + 1, 12, kThetaSeed));
    }
    std::lock_guard guard(lock);
    cache[n] = theta;
    return theta;
}

ViabilityReport check_viability_bound(const MarketSpec& market, const BmoConstants& constants, double threshold,
                                      Region region) {
    market.validate();
    constants.validate();
    ViabilityReport r;
    r.demand_sup = market.demand_sup();
    r.dividend_bmo = terminal_bmo_norm(dividend_values(market), market.n, market.grid, region).value;
    r.product = market.a * r.demand_sup * r.dividend_bmo;
    r.threshold = threshold > 0.0 ? threshold : 1.0 / (8.0 * constants.kappa * impact_theta(market.n));
    r.margin = r.threshold - r.product;
    r.viable = r.margin > 0.0;
    r.heuristic = constants.kappa_is_default;
    return r;
}

// ---------------------------------------------------------------- prices

PriceSystem solve_prices(const MarketSpec& market, const PicardSettings& settings, const ZCheckOptions& z) {
    market.validate();
    const std::size_t n = market.n;
    const double a = market.a;
    const Grid& grid = market.grid;
    const GridFunction gamma = market.demand_field();

    PriceSystem p;
    p.viability = check_viability_bound(market);
    if (!p.viability.viable) {
        std::ostringstream msg;
        msg << "viability product " << p.viability.product << " exceeds the threshold " << p.viability.threshold
            << "; solving anyway";
        p.warnings.push_back(msg.str());
    }
    const BSDESpec spec = impact_spec(market, build_impact_driver(market));
    try {
        p.solution = picard_solve(spec, a, settings);
    } catch (const DivergenceError& e) {
        std::ostringstream msg;
        msg << e.what() << " [smallness: a ||gamma||_inf ||Psi - E Psi||_bmo = " << p.viability.product
            << " against the threshold " << p.viability.threshold << ']';
        throw DivergenceError(msg.str(), e.changes(), e.norms());
    }
    const Solution& sol = p.solution;
    GridFunction y = sol.y;
    if (const auto* simple = std::get_if<SimpleDemand>(&market.demand); simple != nullptr && simple->periods() > 1) {
        // The averaged tensor integrates across a breakpoint to second order, but the value reported at the
        // breakpoint itself still carries half a step of the left level. Replace it by the right-limit value.
        const auto nodes = breakpoint_nodes(*simple, grid.time);
        const double half_dt = 0.5 * grid.time.dt();
        std::vector<double> z(n + 1), f_avg(n + 1), f_right(n + 1);
        for (std::size_t k = 1; k + 1 < nodes.size(); ++k) {
            const std::size_t i = nodes[k];
            const auto right = BilinearDriver::constant(n + 1, impact_tensor(simple->levels[k]));
            const auto& avg = std::get<BilinearDriver>(spec.driver);
            for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
                const NodeRef at{i, j, grid.time.time(i), grid.space.x(j)};
                sol.zeta.node(i, j, z);
                avg.apply(at, z, z, f_avg);
                right.apply(at, z, z, f_right);
                for (std::size_t c = 0; c <= n; ++c) y(i, j, c) += half_dt * (f_right[c] - f_avg[c]);
            }
        }
    }
    p.r = (1.0 / a) * components(y, 0, 1);
    p.s = (1.0 / a) * components(y, 1, n);
    const auto h = dividend_values(market);
    std::copy(h.begin(), h.end(), p.s.slice(grid.time.steps()).begin());
    for (double& v : p.r.row(grid.time.steps(), 0)) v = 0.0;
    p.eta = components(sol.zeta, 0, 1);
    p.theta = components(sol.zeta, 1, n);
    p.sigma = (1.0 / a) * p.theta;
    p.alpha = p.eta + dot(p.theta, gamma);
    if (const auto* simple = std::get_if<SimpleDemand>(&market.demand); simple != nullptr && simple->periods() > 1) {
        GridFunction step = gamma;
        for (std::size_t i = 0; i < grid.time.steps(); ++i) {
            const auto& level = simple->levels[simple->period(grid.time.time(i) + 0.5 * grid.time.dt())];
            for (std::size_t c = 0; c < n; ++c) {
                for (double& v : step.row(i, c)) v = level[c];
            }
        }
        p.z = z_diagnostics(p, p.eta + dot(p.theta, step), step, grid, z);
    } else {
        p.z = z_diagnostics(p, p.alpha, gamma, grid, z);
    }
    for (const auto& w : sol.warnings) p.warnings.push_back(w);
    return p;
}

PriceSystem simple_demand_oracle(const MarketSpec& market) {
    market.validate();
    const auto* simple = std::get_if<SimpleDemand>(&market.demand);
    if (simple == nullptr) throw std::invalid_argument("simple_demand_oracle: the demand is not simple");
    const std::size_t n = market.n;
    const double a = market.a;
    const Grid& grid = market.grid;
    const std::size_t nx = grid.space.nodes();
    const std::size_t nt = grid.time.steps();
    const auto nodes = breakpoint_nodes(*simple, grid.time);

    // exponential moments of the dividend under every constant level
    if (!simple->state_dependent()) {
        for (const auto& level : simple->levels) {
            const double m = quad_expect(
                [&](double x) {
                    std::vector<double> h(n);
                    market.dividend(x, h);
                    double e = 0.0;
                    for (std::size_t c = 0; c < n; ++c) e += level[c] * h[c];
                    return std::exp(-a * e);
                },
                0.0, grid.time.horizon());
            if (!std::isfinite(m)) throw std::overflow_error("simple_demand_oracle: exponential moment diverges");
        }
    }

    PriceSystem p;
    p.breakpoint_nodes = nodes;
    p.breakpoints_only = simple->state_dependent();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    p.s = GridFunction(grid.time.nodes(), nx, n, p.breakpoints_only ? nan : 0.0);
    p.r = GridFunction(grid.time.nodes(), nx, 1, p.breakpoints_only ? nan : 0.0);
    const auto h = dividend_values(market);
    std::copy(h.begin(), h.end(), p.s.slice(nt).begin());
    for (double& v : p.r.row(nt, 0)) v = 0.0;

    // one sweep from node `to` back to node `from` with level theta; fills rows from..to-1 of s and r
    // when `out_s` is given, otherwise returns the slice at `from`
    // The state is carried as (log W, S W / W); both are padded by quadratic extrapolation, which is
    // exact for the Gaussian tilt and keeps the weight positive beyond the grid.
    const HeatKernel kernel(grid.time.dt(), grid.space.dx());
    const std::size_t half = kernel.half_width();
    const auto weights = kernel.weights();
    auto sweep = [&](std::size_t from, std::size_t to, std::span<const double> theta, GridFunction* out_s,
                     GridFunction* out_r, std::vector<double>* s_from, std::vector<double>* r_from) {
        std::vector<double> lw(nx);
        std::vector<std::vector<double>> price(n, std::vector<double>(nx));
        for (std::size_t j = 0; j < nx; ++j) {
            double e = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                price[c][j] = p.s(to, j, c);
                e += theta[c] * price[c][j];
            }
            lw[j] = -a * e - a * p.r(to, j);
        }
        std::vector<double> lw_pad(nx + 2 * half), pr_pad(nx + 2 * half);
        std::vector<double> mass(nx);
        for (std::size_t i = to; i-- > from;) {
            pad_with_ghosts(lw, half, EdgeRule::kQuadratic, lw_pad);
            std::vector<double> next_lw(nx);
            for (std::size_t j = 0; j < nx; ++j) {
                double m = 0.0;
                for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * std::exp(lw_pad[j + k] - lw[j]);
                if (!(m > 0.0) || !std::isfinite(m)) {
                    std::ostringstream msg;
                    msg << "simple_demand_oracle: exponential moment is not finite and positive at t = "
                        << grid.time.time(i) << ", x = " << grid.space.x(j);
                    throw std::overflow_error(msg.str());
                }
                mass[j] = m;
                next_lw[j] = lw[j] + std::log(m);
            }
            for (std::size_t c = 0; c < n; ++c) {
                pad_with_ghosts(price[c], half, EdgeRule::kQuadratic, pr_pad);
                std::vector<double> next(nx);
                for (std::size_t j = 0; j < nx; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < weights.size(); ++k) {
                        s += weights[k] * std::exp(lw_pad[j + k] - lw[j]) * pr_pad[j + k];
                    }
                    next[j] = s / mass[j];
                }
                price[c] = std::move(next);
            }
            lw = std::move(next_lw);
            if (out_s == nullptr && i != from) continue;
            std::vector<double> sv(n * nx), rv(nx);
            for (std::size_t j = 0; j < nx; ++j) {
                double ts = 0.0;
                for (std::size_t c = 0; c < n; ++c) {
                    sv[c * nx + j] = price[c][j];
                    ts += theta[c] * price[c][j];
                }
                rv[j] = -ts - lw[j] / a;
            }
            if (out_s != nullptr) {
                std::copy(sv.begin(), sv.end(), out_s->slice(i).begin());
                std::copy(rv.begin(), rv.end(), out_r->row(i, 0).begin());
            } else {
                *s_from = std::move(sv);
                *r_from = std::move(rv);
            }
        }
    };

    for (std::size_t k = simple->periods(); k-- > 0;) {
        const std::size_t from = nodes[k], to = nodes[k + 1];
        if (!simple->state_dependent()) {
            sweep(from, to, simple->levels[k], &p.s, &p.r, nullptr, nullptr);
            continue;
        }
        // state-dependent level: one sweep per distinct level value at the nodes of tau_k
        std::map<std::vector<double>, std::vector<std::size_t>> groups;
        std::vector<double> level(n);
        for (std::size_t j = 0; j < nx; ++j) {
            simple->state_levels[k](grid.space.x(j), level);
            groups[level].push_back(j);
        }
        std::vector<std::pair<std::vector<double>, std::vector<std::size_t>>> work(groups.begin(), groups.end());
        std::vector<std::vector<double>> s_at(work.size()), r_at(work.size());
        parallel_for(work.size(), 1, [&](std::size_t b, std::size_t e) {
            for (std::size_t g = b; g < e; ++g) sweep(from, to, work[g].first, nullptr, nullptr, &s_at[g], &r_at[g]);
        });
        for (std::size_t g = 0; g < work.size(); ++g) {
            for (std::size_t j : work[g].second) {
                for (std::size_t c = 0; c < n; ++c) p.s(from, j, c) = s_at[g][c * nx + j];
                p.r(from, j) = r_at[g][j];
            }
        }
    }

    if (!p.breakpoints_only) {
        const GridFunction gamma = market.demand_field();
        p.sigma = gradient_x(p.s, grid.space);
        p.eta = a * gradient_x(p.r, grid.space);
        fill_recovery(p, gamma, a);
    }
    return p;
}

// ---------------------------------------------------------------- demand stability

std::vector<StabilityRow> demand_stability(const std::vector<MarketSpec>& markets, const MarketSpec& limit,
                                           const DemandStabilityOptions& options) {
    limit.validate();
    const Grid& grid = limit.grid;
    ZCheckOptions no_z;
    no_z.enabled = false;
    const PriceSystem base = solve_prices(limit, options.settings, no_z);
    const GridFunction base_gamma = quadrature_gamma(limit);
    const GridFunction base_drift = scale_rows(base.sigma, base.alpha);
    const PathBundle paths = sample_paths(options.seed, options.paths, grid.time);
    const PathFunctionals functionals(paths, grid);
    const std::vector<double> ps{options.p};

    std::vector<StabilityRow> rows;
    for (std::size_t m = 0; m < markets.size(); ++m) {
        StabilityRow row;
        row.index = m;
        const MarketSpec& market = markets[m];
        if (!market.grid.same_shape(grid) || market.n != limit.n) {
            throw std::invalid_argument("demand_stability: every market must share the limit's grid and n");
        }
        GridFunction dg = quadrature_gamma(market) - base_gamma;
        GridFunction abs_dg(dg.time_nodes(), dg.space_nodes(), 1);
        for (std::size_t i = 0; i < dg.time_nodes(); ++i) {
            for (std::size_t j = 0; j < dg.space_nodes(); ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < dg.components(); ++c) s += dg(i, j, c) * dg(i, j, c);
                abs_dg(i, j) = std::sqrt(s);
            }
        }
        row.demand_l1 = backward_accumulate(abs_dg, grid)(0, grid.space.centre());
        try {
            const PriceSystem pm = solve_prices(market, options.settings, no_z);
            const GridFunction ds = pm.s - base.s;
            const GridFunction dsigma = pm.sigma - base.sigma;
            const GridFunction dalpha = pm.alpha - base.alpha;
            const GridFunction ddrift = scale_rows(pm.sigma, pm.alpha) - base_drift;
            const NormReport nr = semimartingale_norms({&ds, &dsigma, &ddrift}, ps, paths, grid, Region::kCore);
            row.s_sp = nr.sp.front().second;
            row.sigma_hp = functionals.hp_norm(dsigma, options.p);
            row.alpha_hp = functionals.hp_norm(dalpha, options.p);
            row.combined = row.s_sp + row.sigma_hp + row.alpha_hp;
        } catch (const DivergenceError&) {
            row.diverged = true;
            row.s_sp = row.sigma_hp = row.alpha_hp = row.combined = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(row);
    }
    return rows;
}

void write_stability_csv(const std::vector<StabilityRow>& rows, std::ostream& out) {
    out << "index,demand_l1,s_sp,sigma_hp,alpha_hp,combined,diverged\n" << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.index << ',' << r.demand_l1 << ',' << r.s_sp << ',' << r.sigma_hp << ',' << r.alpha_hp << ','
            << r.combined << ',' << (r.diverged ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------- expansion

ImpactSeries impact_expansion(const MarketSpec& market, std::size_t order, const BmoConstants& constants) {
    if (order < 1) throw std::invalid_argument("impact_expansion: order must be at least 1");
    market.validate();
    const std::size_t n = market.n;
    const Grid& grid = market.grid;
    const BilinearDriver driver = build_impact_driver(market);
    const BSDESpec spec = impact_spec(market, driver);
    const GridFunction gq = quadrature_gamma(market);

    ImpactSeries series;
    series.gamma = market.demand_field();
    const Lift lift = lift_terminal(spec);
    series.s0 = components(lift.y, 1, n);
    series.sigma0 = components(lift.zeta, 1, n);
    GridFunction first = GridFunction::zeros(grid, n + 1);
    for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
        for (std::size_t c = 0; c < n; ++c) {
            const auto src = series.sigma0.row(i, c);
            std::copy(src.begin(), src.end(), first.row(i, c + 1).begin());
        }
    }
    series.zeta.push_back(std::move(first));
    for (std::size_t k = 2; k <= order; ++k) {
        GridFunction zk = GridFunction::zeros(grid, n + 1);
        for (std::size_t l = 1; 2 * l <= k; ++l) {
            const std::size_t m = k - l;
            const double weight = l == m ? 1.0 : 2.0;
            zk.axpy(weight, bilinear_image(series.zeta[l - 1], series.zeta[m - 1], driver, grid));
        }
        series.zeta.push_back(std::move(zk));
    }

    std::vector<GridFunction> z1, z2, alpha_part;
    for (const auto& z : series.zeta) {
        z1.push_back(components(z, 0, 1));
        z2.push_back(components(z, 1, n));
        alpha_part.push_back(z1.back() + dot(z2.back(), gq));
    }
    for (std::size_t k = 1; k <= order; ++k) {
        GridFunction source = GridFunction::zeros(grid, n);
        for (std::size_t l = 1; l <= k; ++l) {
            const std::size_t m = k + 1 - l;
            source.axpy(-1.0, scale_rows(z2[l - 1], alpha_part[m - 1]));
        }
        series.price.push_back(backward_accumulate(source, grid));

        GridFunction reserve_source = GridFunction::zeros(grid, n + 1);
        for (std::size_t l = 1; l < k; ++l) {
            reserve_source += bilinear_field(driver, series.zeta[l - 1], series.zeta[k - l - 1], grid);
        }
        series.reserve.push_back(components(backward_accumulate(reserve_source, grid), 0, 1));
    }

    constants.validate();
    const double c = 1.0 / (8.0 * constants.kappa * impact_theta(n));
    const double l_norm = terminal_bmo_norm(dividend_values(market), n, grid, Region::kCore).value;
    const double g = market.demand_sup();
    series.rho = (g > 0.0 && l_norm > 0.0) ? c / (g * l_norm) : std::numeric_limits<double>::infinity();
    return series;
}

PriceSystem evaluate_impact_series(const ImpactSeries& series, double a) {
    if (series.order() == 0) throw std::invalid_argument("evaluate_impact_series: empty series");
    const std::size_t n = series.s0.components();
    PriceSystem p;
    p.s = series.s0;
    p.sigma = GridFunction(series.s0.time_nodes(), series.s0.space_nodes(), n);
    p.eta = GridFunction(series.s0.time_nodes(), series.s0.space_nodes(), 1);
    p.r = p.eta;
    double ak = 1.0;  // a^(k - 1)
    for (std::size_t k = 1; k <= series.order(); ++k) {
        const GridFunction& z = series.zeta[k - 1];
        p.s.axpy(ak * a, series.price[k - 1]);
        p.sigma.axpy(ak, components(z, 1, n));
        p.eta.axpy(ak * a, components(z, 0, 1));
        p.r.axpy(ak, series.reserve[k - 1]);
        ak *= a;
    }
    if (a > series.rho) {
        p.warnings.push_back("a exceeds the reported radius rho; the partial sums may not converge");
    }
    fill_recovery(p, series.gamma, a);
    return p;
}

GridFunction leading_term(const MarketSpec& market) {
    market.validate();
    const Grid& grid = market.grid;
    const GridFunction s0 = backward_accumulate(GridFunction::zeros(grid, market.n), dividend_values(market), grid);
    const GridFunction sigma0 = gradient_x(s0, grid.space);
    const GridFunction gq = quadrature_gamma(market);
    return backward_accumulate(-1.0 * scale_rows(sigma0, dot(sigma0, gq)), grid);
}

// ---------------------------------------------------------------- homogeneity

double HomogeneityReport::max_deviation() const noexcept {
    return std::max({s_demand_vs_aversion, s_aversion_vs_dividend, alpha_demand_vs_aversion,
                     alpha_aversion_vs_dividend, sigma_demand_vs_aversion, sigma_aversion_vs_dividend});
}

HomogeneityReport homogeneity_report(const MarketSpec& market, double b, const PicardSettings& settings) {
    if (!(b > 0.0)) throw std::invalid_argument("homogeneity_report: b must be positive");
    market.validate();
    HomogeneityReport r;
    r.b = b;
    PicardSettings tight = settings;
    tight.tol = std::min(settings.tol, 1e-12);
    tight.max_iterations = std::max<std::size_t>(settings.max_iterations, 500);
    ZCheckOptions no_z;
    no_z.enabled = false;

    MarketSpec by_demand = scaled_demand(market, b);
    MarketSpec by_aversion = market;
    by_aversion.a = b * market.a;
    MarketSpec by_dividend = market;
    const TerminalMap h = market.dividend;
    by_dividend.dividend = [h, b](double x, std::span<double> out) {
        h(x, out);
        for (double& v : out) v *= b;
    };
    try {
        const PriceSystem p1 = solve_prices(by_demand, tight, no_z);
        const PriceSystem p2 = solve_prices(by_aversion, tight, no_z);
        const PriceSystem p3 = solve_prices(by_dividend, tight, no_z);
        const Grid& g = market.grid;
        r.s_demand_vs_aversion = relative_core_gap(p1.s, p2.s, g);
        r.s_aversion_vs_dividend = relative_core_gap(p2.s, (1.0 / b) * p3.s, g);
        r.alpha_demand_vs_aversion = relative_core_gap(p1.alpha, p2.alpha, g);
        r.alpha_aversion_vs_dividend = relative_core_gap(p2.alpha, p3.alpha, g);
        r.sigma_demand_vs_aversion = relative_core_gap(p1.sigma, p2.sigma, g);
        r.sigma_aversion_vs_dividend = relative_core_gap(p2.sigma, (1.0 / b) * p3.sigma, g);
    } catch (const DivergenceError& e) {
        r.failed = true;
        r.failure = e.what();
    }
    return r;
}

}  // namespace qbsde
