#include "qbsde/stability.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/quadrature.hpp"

namespace qbsde {
namespace {

constexpr std::size_t kQuadratureNodes = 96;

double ratio(double lhs, double rhs) {
    return rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::quiet_NaN();
}

// |g(x)| for g = a (h' - h) - centre, Euclidean over components
double terminal_gap(const BSDESpec& base, const BSDESpec& primed, double a, double x,
                    std::span<const double> centre, std::vector<double>& h, std::vector<double>& hp) {
    base.terminal(x, h);
    primed.terminal(x, hp);
    double s = 0.0;
    for (std::size_t c = 0; c < h.size(); ++c) {
        const double v = a * (hp[c] - h[c]) - (centre.empty() ? 0.0 : centre[c]);
        s += v * v;
    }
    return std::sqrt(s);
}

GridFunction sqrt_weighted(const GridFunction& delta, const GridFunction& zeta) {
    GridFunction out = zeta;
    const std::size_t nx = zeta.space_nodes();
    for (std::size_t i = 0; i < zeta.time_nodes(); ++i) {
        for (std::size_t c = 0; c < zeta.components(); ++c) {
            for (std::size_t j = 0; j < nx; ++j) out(i, j, c) *= std::sqrt(delta(i, j));
        }
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> default_z_samples(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> normal;
    boost::random::uniform_real_distribution<double> log_mag(std::log(1e-2), std::log(1e2));
    std::vector<std::vector<double>> out;
    out.reserve(count);
    while (out.size() < count) {
        std::vector<double> z(n);
        double norm = 0.0;
        for (double& v : z) {
            v = normal(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double r = std::exp(log_mag(rng));
        for (double& v : z) v *= r / norm;
        out.push_back(std::move(z));
    }
    return out;
}

GridFunction delta_bound(const Driver& f, const Driver& f_primed, const std::vector<std::vector<double>>& z_samples,
                         const Grid& grid) {
    const std::size_t n = driver_dimension(f);
    if (driver_dimension(f_primed) != n) throw std::invalid_argument("delta_bound: driver dimensions differ");
    if (z_samples.empty()) throw std::invalid_argument("delta_bound: empty sample set");
    std::vector<double> norms2(z_samples.size());
    for (std::size_t s = 0; s < z_samples.size(); ++s) {
        if (z_samples[s].size() != n) throw std::invalid_argument("delta_bound: sample has the wrong dimension");
        double q = 0.0;
        for (double v : z_samples[s]) q += v * v;
        if (q == 0.0) throw std::invalid_argument("delta_bound: z = 0 is not an admissible sample");
        norms2[s] = q;
    }
    GridFunction delta = GridFunction::zeros(grid, 1);
    parallel_for(grid.time.nodes(), 1, [&](std::size_t begin, std::size_t end) {
        std::vector<double> u(n), v(n);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
                const NodeRef at{i, j, grid.time.time(i), grid.space.x(j)};
                double sup = 0.0;
                for (std::size_t s = 0; s < z_samples.size(); ++s) {
                    evaluate_driver(f, at, z_samples[s], u);
                    evaluate_driver(f_primed, at, z_samples[s], v);
                    double d = 0.0;
                    for (std::size_t c = 0; c < n; ++c) d += (u[c] - v[c]) * (u[c] - v[c]);
                    sup = std::max(sup, std::sqrt(d) / norms2[s]);
                }
                delta(i, j) = sup;
            }
        }
    });
    return delta;
}

std::string StabilityReport::csv_header() {
    return "eps,lhs_hp,lhs_sp,lhs_hbmo,lhs_sbmo,terminal_lp,xi_lp,terminal_bmo,delta_h2p,delta_hbmo,"
           "mean_shift,ratio_hp,ratio_sp,ratio_hbmo,ratio_sbmo,smallness,contraction,contraction_flag,diverged";
}

std::string StabilityReport::csv_row(double eps) const {
    std::ostringstream out;
    out << std::setprecision(17) << eps << ',' << lhs_hp << ',' << lhs_sp << ',' << lhs_hbmo << ',' << lhs_sbmo
        << ',' << terminal_lp << ',' << xi_lp << ',' << terminal_bmo << ',' << delta_h2p << ',' << delta_hbmo << ','
        << mean_shift << ',' << ratio_hp << ',' << ratio_sp << ',' << ratio_hbmo << ',' << ratio_sbmo << ','
        << smallness << ',' << contraction << ',' << (contraction_flag ? 1 : 0) << ',' << (diverged ? 1 : 0);
    return out.str();
}

StabilityReport compare(const PerturbationPair& pair, double a, const PicardSettings& settings,
                        const CompareOptions& options) {
    const BSDESpec& base = pair.base;
    const BSDESpec& primed = pair.primed;
    base.validate();
    primed.validate();
    if (base.dimension != primed.dimension || !base.grid.same_shape(primed.grid)) {
        throw std::invalid_argument("compare: base and primed specs must share grid and dimension");
    }
    if (!(pair.p > 1.0)) throw std::invalid_argument("compare: p must exceed 1");
    const Grid& grid = base.grid;
    const std::size_t n = base.dimension;

    StabilityReport r;
    Solution s, sp;
    try {
        s = picard_solve(base, a, settings);
        sp = picard_solve(primed, a, settings);
    } catch (const DivergenceError& e) {
        r.diverged = true;
        r.divergence = e.what();
        r.ratio_hp = r.ratio_sp = r.ratio_hbmo = r.ratio_sbmo = std::numeric_limits<double>::quiet_NaN();
        return r;
    }

    GridFunction delta = pair.delta;
    if (delta.empty()) {
        delta = delta_bound(base.driver, primed.driver, default_z_samples(n, options.z_samples, options.seed), grid);
    }
    if (!delta.fits(grid) || delta.components() != 1) throw std::invalid_argument("compare: delta does not fit the grid");
    for (double v : delta.values()) {
        if (!(v >= 0.0)) throw std::invalid_argument("compare: delta must be nonnegative and finite");
    }

    const GridFunction dzeta = sp.zeta - s.zeta;
    const GridFunction dy = sp.y - s.y;
    // dY = -f(zeta) dt + zeta dB, so the drift of the difference is f(zeta) - f'(zeta')
    const GridFunction drift = driver_field(base.driver, s.zeta, grid) - driver_field(primed.driver, sp.zeta, grid);

    const PathBundle paths = sample_paths(options.seed, options.paths, grid.time);
    const PathFunctionals functionals(paths, grid);
    const std::vector<double> ps{pair.p};
    const NormReport diff = semimartingale_norms({&dy, &dzeta, &drift}, ps, paths, grid, options.region);
    r.lhs_hp = functionals.hp_norm(dzeta, pair.p);
    r.lhs_sp = diff.sp.front().second;
    r.lhs_hbmo = diff.hbmo.value;
    r.lhs_sbmo = diff.sbmo;

    // terminal terms: L'_T - L_T = a (Xi' - Xi) - E[a (Xi' - Xi)]
    const double var = grid.time.horizon();
    std::vector<double> h(n), hp(n), mean(n);
    for (std::size_t c = 0; c < n; ++c) {
        mean[c] = quad_expect(
            [&](double x) {
                base.terminal(x, h);
                primed.terminal(x, hp);
                return a * (hp[c] - h[c]);
            },
            0.0, var, kQuadratureNodes);
    }
    double shift = 0.0;
    for (double m : mean) shift += m * m;
    r.mean_shift = std::sqrt(shift);
    const double p = pair.p;
    r.terminal_lp = std::pow(
        quad_expect([&](double x) { return std::pow(terminal_gap(base, primed, a, x, mean, h, hp), p); }, 0.0, var,
                    kQuadratureNodes),
        1.0 / p);
    r.xi_lp = std::pow(
        quad_expect([&](double x) { return std::pow(terminal_gap(base, primed, a, x, {}, h, hp), p); }, 0.0, var,
                    kQuadratureNodes),
        1.0 / p);
    std::vector<double> slice = primed.terminal_values();
    const std::vector<double> base_slice = base.terminal_values();
    for (std::size_t k = 0; k < slice.size(); ++k) slice[k] = a * (slice[k] - base_slice[k]);
    r.terminal_bmo = terminal_bmo_norm(slice, n, grid, options.region).value;

    // driver terms, with zeta the base solution
    const std::vector<double> weighted = functionals.weighted_variation(delta, s.zeta);
    r.delta_h2p = PathFunctionals::lp(weighted, p);  // (E[(int delta |zeta|^2)^p])^{1/p}
    const double hb = hbmo_norm(sqrt_weighted(delta, s.zeta), grid, options.region).value;
    r.delta_hbmo = hb * hb;

    r.ratio_hp = ratio(r.lhs_hp, r.terminal_lp + r.delta_h2p);
    r.ratio_sp = ratio(r.lhs_sp, r.xi_lp + r.delta_h2p);
    r.ratio_hbmo = ratio(r.lhs_hbmo, r.terminal_bmo + r.delta_hbmo);
    r.ratio_sbmo = ratio(r.lhs_sbmo, r.mean_shift + r.terminal_bmo + r.delta_hbmo);

    r.smallness = hbmo_norm(s.zeta, grid, options.region).value + hbmo_norm(sp.zeta, grid, options.region).value;
    r.contraction = std::max(s.contraction, sp.contraction);
    r.contraction_flag = r.contraction > 0.9;
    return r;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("loglog_slope: size mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0) || !std::isfinite(x[k]) || !std::isfinite(y[k])) continue;
        const double lx = std::log(x[k]), ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    if (m < 2) return std::numeric_limits<double>::quiet_NaN();
    const double den = m * sxx - sx * sx;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (m * sxy - sx * sy) / den;
}

DecayTable decay_study(const std::vector<std::pair<double, PerturbationPair>>& family, double a,
                       const PicardSettings& settings, const CompareOptions& options) {
    if (family.size() < 3) throw std::invalid_argument("decay_study: needs at least three family members");
    DecayTable table;
    std::vector<double> rhs_hp, lhs_hp, rhs_bmo, lhs_bmo;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& [eps, pair] : family) {
        DecayRow row{eps, compare(pair, a, settings, options)};
        const StabilityReport& r = row.report;
        if (eps != 0.0 && !r.diverged) {
            rhs_hp.push_back(r.terminal_lp + r.delta_h2p);
            lhs_hp.push_back(r.lhs_hp);
            rhs_bmo.push_back(r.terminal_bmo + r.delta_hbmo);
            lhs_bmo.push_back(r.lhs_hbmo);
            if (std::isfinite(r.ratio_hp) && r.ratio_hp > 0.0) {
                lo = std::min(lo, r.ratio_hp);
                hi = std::max(hi, r.ratio_hp);
            }
        }
        table.rows.push_back(std::move(row));
    }
    table.slope_hp = loglog_slope(rhs_hp, lhs_hp);
    table.slope_hbmo = loglog_slope(rhs_bmo, lhs_bmo);
    table.ratio_spread = hi > 0.0 ? hi / lo : std::numeric_limits<double>::quiet_NaN();
    return table;
}

void DecayTable::write_csv(std::ostream& out) const {
    out << StabilityReport::csv_header() << ",slope_hp,slope_hbmo,ratio_spread\n";
    out << std::setprecision(17);
    for (const DecayRow& row : rows) {
        out << row.report.csv_row(row.eps) << ',' << slope_hp << ',' << slope_hbmo << ',' << ratio_spread << '\n';
    }
}

}  // namespace qbsde
