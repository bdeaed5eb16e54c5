#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qbsde/bmo.hpp"
#include "qbsde/bsde.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace qbsde {

/// Level of a simple demand on one period as a function of the state at its
/// left breakpoint; writes n values.
using LevelMap = std::function<void(double x, std::span<double> out)>;

/// gamma = sum_i theta_i 1_(tau_i, tau_{i+1}] with deterministic breakpoints
/// 0 = tau_0 < ... < tau_m = T on grid nodes.
struct SimpleDemand {
    std::vector<double> breakpoints;            ///< m + 1 times
    std::vector<std::vector<double>> levels;    ///< m constant levels, or empty
    std::vector<LevelMap> state_levels;         ///< m state-dependent levels, or empty

    std::size_t periods() const noexcept { return breakpoints.empty() ? 0 : breakpoints.size() - 1; }
    bool state_dependent() const noexcept { return !state_levels.empty(); }
    /// Throws std::invalid_argument on inconsistent sizes, unordered breakpoints or
    /// breakpoints off the time grid.
    void validate(std::size_t n, const Grid& grid) const;
    /// Constant level of the period containing t (right-continuous convention
    /// (tau_i, tau_{i+1}], period 0 at t = 0).
    std::size_t period(double t) const noexcept;
};

/// gamma(t, x) on the grid (n components) or a simple demand.
using Demand = std::variant<GridFunction, SimpleDemand>;

struct MarketSpec {
    std::size_t n = 1;
    TerminalMap dividend;   ///< Psi = h(B_T)
    Demand demand;
    double a = 0.1;
    Grid grid = Grid::standard(1.0);

    /// Throws std::invalid_argument on a malformed market.
    void validate() const;
    /// gamma on the grid; state-dependent simple demands have no Markov field and throw.
    GridFunction demand_field() const;
    /// sup |gamma| over the grid (Euclidean in R^n).
    double demand_sup() const;
};

/// Bilinear map g(u, v; w) on R^{n+1}: component 0 is
/// (u2.w)(v2.w)/2 - u1 v1/2, components 1..n are
/// -(u2 v1 + v2 u1 + u2 (v2.w) + v2 (u2.w))/2.
std::vector<double> impact_tensor(std::span<const double> w);

/// g-driver with w = gamma(t, x). At interior breakpoints of a simple demand the
/// tensor is the mean of the left and right limits.
BilinearDriver build_impact_driver(const MarketSpec& market);
BilinearDriver build_impact_driver(std::size_t n, const GridFunction& gamma);

/// Sampled bound of the g-driver over |w| <= 1.
double impact_theta(std::size_t n);

struct ViabilityReport {
    double product = 0.0;     ///< a ||gamma||_inf ||Psi - E Psi||_bmo
    double threshold = 0.0;   ///< configured c, default 1 / (8 kappa Theta(n))
    double margin = 0.0;      ///< threshold - product
    double demand_sup = 0.0;
    double dividend_bmo = 0.0;
    bool viable = false;      ///< sufficient condition only
    bool heuristic = true;    ///< kappa was defaulted
};

/// threshold <= 0 means the default.
ViabilityReport check_viability_bound(const MarketSpec& market, const BmoConstants& constants = {},
                                      double threshold = 0.0, Region region = Region::kCore);

struct ZDiagnostics {
    double grid_mass_error = 0.0;    ///< sup over the core at t = 0 of |E_t[Z_T / Z_t] - 1|
    double grid_drift_s = 0.0;       ///< sup over the core of |E^Q_t[S_{t+dt}] - S_t| / dt
    double grid_drift_gamma_s = 0.0; ///< same for gamma . S
    std::size_t paths = 0;
    double z_mean = 0.0;             ///< E[Z_T] along paths
    double z_stderr = 0.0;
    double zs_gap = 0.0;             ///< max_i |E[Z_T S^i_T] - S^i_0|
    double zs_stderr = 0.0;
    double zgs_gap = 0.0;            ///< |E[Z_T (gamma . S)_T]|
    double zgs_stderr = 0.0;
    bool pass95 = false;             ///< all path gaps inside 1.96 standard errors
};

struct PriceSystem {
    GridFunction s;       ///< n
    GridFunction sigma;   ///< n
    GridFunction alpha;   ///< 1
    GridFunction r;       ///< 1
    GridFunction eta;     ///< 1
    GridFunction theta;   ///< n
    ZDiagnostics z;
    bool breakpoints_only = false;  ///< only slices at breakpoints are filled
    std::vector<std::size_t> breakpoint_nodes;
    Solution solution;    ///< BSDE diagnostics (empty for the oracle)
    ViabilityReport viability;
    std::vector<std::string> warnings;
};

struct ZCheckOptions {
    bool enabled = true;
    std::size_t paths = 20000;
    std::uint64_t seed = 7;
};

/// Solves the (n + 1)-dimensional BSDE for (aR, aS) and recovers
/// alpha = eta + theta . gamma and sigma = theta / a.
/// Throws DivergenceError (message carries the viability product) when Picard fails.
PriceSystem solve_prices(const MarketSpec& market, const PicardSettings& settings = {},
                         const ZCheckOptions& z = {});

/// Backward induction for a simple demand: on (tau_i, tau_{i+1}] with level theta_i,
/// S_t = E_t[S W] / E_t[W] with W = exp(-a theta_i . S_{tau_{i+1}} - a R_{tau_{i+1}}) and
/// R_t = -theta_i . S_t - log(E_t[W]) / a. Throws std::overflow_error when an
/// exponential moment is not finite on the grid.
PriceSystem simple_demand_oracle(const MarketSpec& market);

struct StabilityRow {
    std::size_t index = 0;
    double demand_l1 = 0.0;   ///< E[int |gamma^m - gamma| dt]
    double s_sp = 0.0;        ///< ||S^m - S||_{S^p}
    double sigma_hp = 0.0;
    double alpha_hp = 0.0;
    double combined = 0.0;
    bool diverged = false;
};

struct DemandStabilityOptions {
    double p = 2.0;
    std::size_t paths = 20000;
    std::uint64_t seed = 3;
    PicardSettings settings;
};

/// One row per market against the limit, on a shared path bundle.
std::vector<StabilityRow> demand_stability(const std::vector<MarketSpec>& markets, const MarketSpec& limit,
                                           const DemandStabilityOptions& options = {});
void write_stability_csv(const std::vector<StabilityRow>& rows, std::ostream& out);

struct ImpactSeries {
    std::vector<GridFunction> zeta;    ///< zeta[k - 1] = (zeta_1^(k), zeta_2^(k)), n + 1 components
    std::vector<GridFunction> price;   ///< price[k - 1] = S^(k)
    std::vector<GridFunction> reserve; ///< reserve[k - 1] = R^(k), R = sum_k R^(k) a^(k - 1)
    GridFunction s0;                   ///< S(0) = E_t[Psi]
    GridFunction sigma0;
    GridFunction gamma;
    double rho = 0.0;                  ///< c / (||gamma|| ||Psi - E Psi||_bmo), infinite when either vanishes
    std::size_t order() const noexcept { return price.size(); }
};

/// Coefficients up to order K >= 1 via G(., .; gamma).
ImpactSeries impact_expansion(const MarketSpec& market, std::size_t order, const BmoConstants& constants = {});

/// Partial sums: S = S(0) + sum S^(k) a^k, sigma = sum zeta_2^(k+1) a^k,
/// alpha = sum (zeta_1^(k) + zeta_2^(k) . gamma) a^k.
PriceSystem evaluate_impact_series(const ImpactSeries& series, double a);

/// S^(1) = -E_t[int_t^T sigma(0) sigma(0)^* gamma ds].
GridFunction leading_term(const MarketSpec& market);

struct HomogeneityReport {
    double b = 1.0;
    // relative sup deviations over the core
    double s_demand_vs_aversion = 0.0;    ///< S(b gamma, a, Psi) vs S(gamma, b a, Psi)
    double s_aversion_vs_dividend = 0.0;  ///< S(gamma, b a, Psi) vs S(gamma, a, b Psi) / b
    double alpha_demand_vs_aversion = 0.0;
    double alpha_aversion_vs_dividend = 0.0;
    double sigma_demand_vs_aversion = 0.0;
    double sigma_aversion_vs_dividend = 0.0;
    bool failed = false;
    std::string failure;

    double max_deviation() const noexcept;
};

HomogeneityReport homogeneity_report(const MarketSpec& market, double b, const PicardSettings& settings = {});

}  // namespace qbsde
