#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace qbsde {

/// Location of a driver evaluation.
struct NodeRef {
    std::size_t i = 0;  ///< time node
    std::size_t j = 0;  ///< space node
    double t = 0.0;
    double x = 0.0;
};

/// Symmetric bilinear form f~(t, u, v) on R^n x R^n -> R^n (one Brownian
/// factor), f~_a(u, v) = sum_{b,c} alpha_{abc} u_b v_c.
///
/// The coefficient tensor is either constant or stored per grid node (a
/// GridFunction with n^3 components, component a*n*n + b*n + c). Symmetry in
/// (b, c) is checked on construction. theta() is a sampled bound on
/// sup_{|u|=|v|=1} |f~(u, v)| taken over every node, so the certification is
/// probabilistic.
class BilinearDriver {
public:
    /// Constant tensor of size n^3.
    static BilinearDriver constant(std::size_t n, std::vector<double> tensor);
    /// n = 1, f~(u, v) = c u v / 2, so f(z) = c z^2 / 2 and Theta = |c| / 2.
    static BilinearDriver scalar(double c);
    /// Per-node tensor field: a GridFunction with n^3 components.
    static BilinearDriver field(std::size_t n, const GridFunction& coefficients);

    std::size_t dimension() const noexcept { return n_; }
    bool is_constant() const noexcept { return nodal_ == nullptr; }
    double theta() const noexcept { return theta_; }

    /// out = f~(t_i, x_j; u, v).
    void apply(const NodeRef& at, std::span<const double> u, std::span<const double> v,
               std::span<double> out) const noexcept;

    /// Coefficient tensor at a node (n^3 values).
    std::span<const double> tensor(std::size_t i, std::size_t j) const noexcept;

    /// Field drivers are tied to one grid shape; constant drivers fit any grid.
    bool fits(const Grid& grid) const noexcept;

    /// Same form multiplied by s.
    BilinearDriver scaled(double s) const;

private:
    BilinearDriver() = default;
    void check_symmetry() const;
    double sample_theta(std::uint64_t seed) const;

    std::size_t n_ = 0;
    std::vector<double> constant_;
    std::shared_ptr<const std::vector<double>> nodal_;  // node-major: (i * nx + j) * n^3
    std::size_t nt_ = 0;
    std::size_t nx_ = 0;
    double theta_ = 0.0;
};

/// sup over unit (w, u, v) of w . f~(u, v) for one tensor, by alternating
/// maximisation from `restarts` random unit starts (a lower bound that is
/// sharp in practice for small n).
double sampled_bilinear_bound(std::span<const double> tensor, std::size_t n, std::size_t restarts,
                              std::uint64_t seed);

/// General driver f(t, x, z) with f(t, 0) = 0 and
/// |f(u) - f(v)| <= Theta |u - v| (|u| + |v|). Used only through the Picard path.
class QuadraticDriver {
public:
    using Evaluator = std::function<void(const NodeRef&, std::span<const double> z, std::span<double> out)>;

    QuadraticDriver(std::size_t n, Evaluator f, double theta);
    static QuadraticDriver from_bilinear(BilinearDriver driver);

    std::size_t dimension() const noexcept { return n_; }
    double theta() const noexcept { return theta_; }
    void evaluate(const NodeRef& at, std::span<const double> z, std::span<double> out) const {
        f_(at, z, out);
    }

    /// Checks f(t, 0) = 0 and the Lipschitz-quadratic bound on random pairs at
    /// a sample of nodes; returns the largest observed ratio
    /// |f(u) - f(v)| / (|u - v| (|u| + |v|)).
    double verify(const Grid& grid, std::size_t samples, std::uint64_t seed) const;

private:
    std::size_t n_;
    Evaluator f_;
    double theta_;
};

using Driver = std::variant<BilinearDriver, QuadraticDriver>;

std::size_t driver_dimension(const Driver& driver) noexcept;
double driver_theta(const Driver& driver) noexcept;

/// out = f(t_i, x_j, z).
void evaluate_driver(const Driver& driver, const NodeRef& at, std::span<const double> z,
                     std::span<double> out);

/// The field f(t, x, zeta(t, x)) on the whole grid.
GridFunction driver_field(const Driver& driver, const GridFunction& zeta, const Grid& grid);

/// The field f~(t, x, mu(t, x), nu(t, x)).
GridFunction bilinear_field(const BilinearDriver& driver, const GridFunction& mu, const GridFunction& nu,
                            const Grid& grid);

}  // namespace qbsde
