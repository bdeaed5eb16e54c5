#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbsde/bmo.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace qbsde {

/// Terminal data Xi = h(B_T); writes h(x) (n values) into out.
using TerminalMap = std::function<void(double x, std::span<double> out)>;

/// Y_t = a Xi + int_t^T f(s, zeta_s) ds - int_t^T zeta_s dB_s on one grid.
struct BSDESpec {
    std::size_t dimension;
    Driver driver;
    TerminalMap terminal;
    Grid grid;

    /// h on the space grid as one slice (n * nx values, component-major).
    std::vector<double> terminal_values() const;
    /// Throws std::invalid_argument on inconsistent dimensions or a non-finite terminal.
    void validate() const;
};

struct Solution {
    GridFunction y;
    GridFunction zeta;
    double residual = 0.0;       ///< max discrete defect / dt over the core
    double gradient_gap = 0.0;   ///< sup over the core of |zeta - d_x Y|
    NormValue hbmo_zeta;         ///< over the core
    std::size_t iterations = 0;
    std::vector<double> change_history;  ///< sup change of zeta per Picard sweep
    double contraction = 0.0;            ///< largest ratio of successive changes after the first sweep
    double remainder_estimate = 0.0;     ///< series only: geometric tail bound in H_bmo
    std::vector<std::string> warnings;
};

struct PicardSettings {
    double tol = 1e-8;
    std::size_t max_iterations = 200;
    double blowup = 1e8;  ///< abort once the change exceeds this
};

/// Picard iteration failed to contract; carries the iterate history.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::vector<double> changes, std::vector<double> norms)
        : std::runtime_error(what), changes_(std::move(changes)), norms_(std::move(norms)) {}
    const std::vector<double>& changes() const noexcept { return changes_; }
    /// sup norm of each iterate over the core
    const std::vector<double>& norms() const noexcept { return norms_; }

private:
    std::vector<double> changes_;
    std::vector<double> norms_;
};

/// Y^(1) = E_t[Xi] and zeta^(1) = d_x Y^(1).
struct Lift {
    GridFunction y;
    GridFunction zeta;
};
Lift lift_terminal(const BSDESpec& spec);

/// zeta with zeta . B the martingale part of E_t[int_0^T f~(s, mu_s, nu_s) ds].
GridFunction bilinear_image(const GridFunction& mu, const GridFunction& nu, const BilinearDriver& driver,
                            const Grid& grid);

struct ExpansionSeries {
    BSDESpec spec;
    std::vector<GridFunction> y;      ///< y[k - 1] = Y^(k)
    std::vector<GridFunction> zeta;   ///< zeta[k - 1] = zeta^(k)
    std::vector<double> coeff_hbmo_norms;
    BmoConstants constants;           ///< theta taken from the driver
    double l_norm = 0.0;              ///< ||L||_bmo = ||zeta^(1)||_Hbmo
    double rho = 0.0;                 ///< 1 / (8 kappa Theta ||L||); infinity when L = 0
    bool rho_heuristic = true;        ///< kappa was defaulted
    double empirical_radius = 0.0;    ///< from the decay of the last coefficient norms
    Region region = Region::kCore;

    std::size_t order() const noexcept { return zeta.size(); }
    /// sum_{k <= K} ||zeta^(k)|| rho^k, to compare with 1 / (4 kappa Theta)
    double radius_sum() const;
};

/// Coefficients of the power series in a, up to order K >= 1. Needs a bilinear driver.
ExpansionSeries expansion(const BSDESpec& spec, std::size_t order, const BmoConstants& constants = {},
                          Region region = Region::kCore);

/// Partial sums up to order K (0 means all available orders).
Solution evaluate_series(const ExpansionSeries& series, double a, std::size_t order = 0);

/// Fixed point of zeta -> d_x E_t[a Xi + int_t^T f(zeta) ds] from a zeta^(1) (or from `start`).
/// Throws DivergenceError when the change does not drop below tol.
Solution picard_solve(const BSDESpec& spec, double a, const PicardSettings& settings = {},
                      const GridFunction* start = nullptr);

struct ResidualReport {
    double defect = 0.0;        ///< max over the core of the one-step defect / dt
    double gradient_gap = 0.0;
    double terminal_gap = 0.0;  ///< sup |Y(T) - a h|
    double t_argmax = 0.0;
    double x_argmax = 0.0;
};

/// Discrete defect of (Y, zeta) in the scheme's own time rule, plus the terminal check.
ResidualReport residual(const BSDESpec& spec, const GridFunction& y, const GridFunction& zeta, double a);

}  // namespace qbsde
