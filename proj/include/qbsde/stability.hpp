#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qbsde/bmo.hpp"
#include "qbsde/bsde.hpp"

namespace qbsde {

/// Random nonzero z in R^n: uniform directions, magnitudes log-uniform in [1e-2, 1e2].
std::vector<std::vector<double>> default_z_samples(std::size_t n, std::size_t count, std::uint64_t seed);

/// delta(t, x) = max over the samples of |f(t, x, z) - f'(t, x, z)| / |z|^2.
/// Throws on an empty sample set or a zero sample.
GridFunction delta_bound(const Driver& f, const Driver& f_primed, const std::vector<std::vector<double>>& z_samples,
                         const Grid& grid);

/// Base and perturbed BSDE on a shared grid. `delta` may be left empty, in
/// which case compare() computes it with delta_bound.
struct PerturbationPair {
    BSDESpec base;
    BSDESpec primed;
    GridFunction delta;
    double p = 2.0;
};

struct CompareOptions {
    std::size_t paths = 100000;
    std::uint64_t seed = 1;
    std::size_t z_samples = 64;
    Region region = Region::kCore;
};

struct StabilityReport {
    bool diverged = false;
    std::string divergence;

    // left-hand sides
    double lhs_hp = 0.0;    ///< ||zeta' - zeta||_{H^p}
    double lhs_sp = 0.0;    ///< ||Y' - Y||_{S^p}
    double lhs_hbmo = 0.0;  ///< ||zeta' - zeta||_{H_bmo}
    double lhs_sbmo = 0.0;  ///< ||Y' - Y||_{S_bmo}

    // right-hand side ingredients (terminals are a Xi and a Xi')
    double terminal_lp = 0.0;      ///< ||L'_T - L_T||_{L^p}
    double xi_lp = 0.0;            ///< ||Xi' - Xi||_{L^p}
    double terminal_bmo = 0.0;     ///< ||L' - L||_bmo
    double delta_h2p = 0.0;        ///< ||sqrt(delta) zeta||^2_{H^{2p}}
    double delta_hbmo = 0.0;       ///< ||sqrt(delta) zeta||^2_{H_bmo}
    double mean_shift = 0.0;       ///< |E[Xi' - Xi]|

    // lhs / rhs per estimate; NaN when the right-hand side vanishes
    double ratio_hp = 0.0;
    double ratio_sp = 0.0;
    double ratio_hbmo = 0.0;
    double ratio_sbmo = 0.0;

    double smallness = 0.0;        ///< ||zeta||_{H_bmo} + ||zeta'||_{H_bmo}
    double contraction = 0.0;      ///< larger Picard contraction factor of the two solves
    bool contraction_flag = false; ///< contraction above 0.9

    /// One CSV row; header from csv_header().
    static std::string csv_header();
    std::string csv_row(double eps) const;
};

/// Solves both BSDEs at risk aversion a and evaluates every term of the
/// stability estimates. A diverging solve is reported, not thrown.
StabilityReport compare(const PerturbationPair& pair, double a, const PicardSettings& settings = {},
                        const CompareOptions& options = {});

struct DecayRow {
    double eps = 0.0;
    StabilityReport report;
};

struct DecayTable {
    std::vector<DecayRow> rows;
    double slope_hp = 0.0;          ///< log ||dzeta||_{H^p} against log ||dL_T||_p + ||sqrt(delta) zeta||^2
    double slope_hbmo = 0.0;
    double ratio_spread = 0.0;      ///< max / min of ratio_hp over eps > 0
    void write_csv(std::ostream& out) const;
};

/// Least squares slope of log y against log x over pairs with x, y > 0.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Runs compare() over a family indexed by eps; eps = 0 members are reported but
/// not fitted. Needs at least three members.
DecayTable decay_study(const std::vector<std::pair<double, PerturbationPair>>& family, double a,
                       const PicardSettings& settings = {}, const CompareOptions& options = {});

}  // namespace qbsde
