#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"
#include "qbsde/paths.hpp"

namespace qbsde {

/// Where grid suprema are taken.
enum class Region { kFull, kCore };

/// kappa(n) of the bmo / bmo_1 norm equivalence, the driver bound Theta and the
/// radius they induce. kappa is not known numerically; it is configuration
/// (default 1) and any radius built from the default is a heuristic.
struct BmoConstants {
    double kappa = 1.0;
    double theta = 1.0;
    bool kappa_is_default = true;

    void validate() const;
};

/// rho = 1 / (8 kappa Theta ||L||_bmo). Throws std::domain_error when
/// l_norm <= 0 (deterministic terminal: the solution is linear in a).
double radius(const BmoConstants& constants, double l_norm);

/// A supremum together with the node where it is attained.
struct NormValue {
    double value = 0.0;
    double t_argmax = 0.0;
    double x_argmax = 0.0;
};

/// ||zeta||_{H_bmo}: sup over grid nodes of sqrt(E_t[int_t^T |zeta|^2 ds]).
/// Stopping times are replaced by deterministic grid times and states, which
/// gives a lower bound of the true supremum.
NormValue hbmo_norm(const GridFunction& zeta, const Grid& grid, Region region = Region::kFull);

/// ||L||_bmo for L_t = E_t[h(B_T)] - E[h(B_T)], with h given as one slice
/// (m * nx values): hbmo norm of the gradient of E_t[h].
NormValue terminal_bmo_norm(std::span<const double> terminal, std::size_t components,
                            const Grid& grid, Region region = Region::kFull);

/// Canonical decomposition of a grid semimartingale X: dX = drift dt + integrand dB.
struct SemimartingaleParts {
    const GridFunction* value = nullptr;
    const GridFunction* integrand = nullptr;
    const GridFunction* drift = nullptr;
};

struct NormReport {
    NormValue hbmo;                              ///< of the martingale integrand
    std::vector<std::pair<double, double>> sp;   ///< (p, ||X||_{S^p})
    double sbmo = 0.0;
    NormValue variation_bmo;                     ///< sup E_t[int_t^T |dA|]
    double initial = 0.0;                        ///< |X_0|

    /// CSV rows "quantity,value,t_argmax,x_argmax" (no header).
    void write_csv_rows(std::ostream& out) const;
};

/// S^p norms along simulated paths and the S_bmo norm from grid suprema.
/// Throws std::invalid_argument if the decomposition is incomplete or p <= 1.
NormReport semimartingale_norms(const SemimartingaleParts& parts, std::span<const double> ps,
                                const PathBundle& paths, const Grid& grid,
                                Region region = Region::kFull);

/// Monte Carlo estimate of sup over the given start nodes of
/// E[| int_t^T g(s, B_s) ds - u(t, x) |], with u(t, x) = E_t[int_t^T g ds]:
/// the bmo_1 functional of the martingale E_t[int_0^T g ds].
struct Bmo1Estimate {
    double value = 0.0;
    double std_error = 0.0;
    double t_argmax = 0.0;
    double x_argmax = 0.0;
};
Bmo1Estimate bmo1_estimate(const GridFunction& source, const Grid& grid,
                           std::span<const std::pair<std::size_t, std::size_t>> start_nodes,
                           std::size_t paths_per_node, std::uint64_t seed);

}  // namespace qbsde
