#include "qbsde/driver.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qbsde/parallel.hpp"

namespace qbsde {

namespace {

constexpr std::size_t kRestarts = 12;
constexpr std::uint64_t kThetaSeed = 0x5eedf00dULL;

void random_unit(std::mt19937_64& engine, std::span<double> out) {
    boost::random::normal_distribution<double> normal;
    double s = 0.0;
    do {
        s = 0.0;
        for (double& v : out) {
            v = normal(engine);
            s += v * v;
        }
    } while (s == 0.0);
    s = 1.0 / std::sqrt(s);
    for (double& v : out) v *= s;
}

double normalize(std::span<double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0) {
        for (double& e : v) e /= s;
    }
    return s;
}

void contract(std::span<const double> alpha, std::size_t n, std::span<const double> u,
              std::span<const double> v, std::span<double> out) {
    for (std::size_t a = 0; a < n; ++a) {
        double s = 0.0;
        const double* row = alpha.data() + a * n * n;
        for (std::size_t b = 0; b < n; ++b) {
            double inner = 0.0;
            for (std::size_t c = 0; c < n; ++c) inner += row[b * n + c] * v[c];
            s += u[b] * inner;
        }
        out[a] = s;
    }
}

void check_tensor_symmetry(std::span<const double> alpha, std::size_t n, const std::string& where) {
    double scale = 0.0;
    for (double v : alpha) scale = std::max(scale, std::abs(v));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t c = b + 1; c < n; ++c) {
                const double l = alpha[a * n * n + b * n + c];
                const double r = alpha[a * n * n + c * n + b];
                if (!std::isfinite(l) || !std::isfinite(r)) {
                    throw std::invalid_argument("BilinearDriver: non-finite coefficient" + where);
                }
                if (std::abs(l - r) > 1e-14 * scale) {
                    std::ostringstream msg;
                    msg << "BilinearDriver: tensor not symmetric in its two arguments (component " << a
                        << ", entries " << b << ',' << c << ')' << where;
                    throw std::invalid_argument(msg.str());
                }
            }
        }
    }
    for (double v : alpha) {
        if (!std::isfinite(v)) throw std::invalid_argument("BilinearDriver: non-finite coefficient" + where);
    }
}

}  // namespace

double sampled_bilinear_bound(std::span<const double> alpha, std::size_t n, std::size_t restarts,
                              std::uint64_t seed) {
    if (alpha.size() != n * n * n) throw std::invalid_argument("sampled_bilinear_bound: tensor size");
    if (n == 1) return std::abs(alpha[0]);
    std::mt19937_64 engine(seed);
    std::vector<double> u(n), v(n), w(n), f(n), tmp(n);
    double best = 0.0;
    for (std::size_t r = 0; r < restarts + 2 * n; ++r) {
        if (r < n) {
            // coordinate starts catch diagonal-dominated tensors
            std::fill(u.begin(), u.end(), 0.0);
            u[r] = 1.0;
            v = u;
        } else if (r < 2 * n) {
            random_unit(engine, u);
            std::fill(v.begin(), v.end(), 0.0);
            v[r - n] = 1.0;
        } else {
            random_unit(engine, u);
            random_unit(engine, v);
        }
        contract(alpha, n, u, v, w);
        if (normalize(w) == 0.0) random_unit(engine, w);
        double value = 0.0;
        for (int it = 0; it < 50; ++it) {
            // u <- alpha(w, ., v), v <- alpha(w, u, .), w <- alpha(., u, v)
            for (std::size_t b = 0; b < n; ++b) {
                double s = 0.0;
                for (std::size_t a = 0; a < n; ++a) {
                    for (std::size_t c = 0; c < n; ++c) s += w[a] * alpha[a * n * n + b * n + c] * v[c];
                }
                tmp[b] = s;
            }
            if (normalize(tmp) > 0.0) u = tmp;
            for (std::size_t c = 0; c < n; ++c) {
                double s = 0.0;
                for (std::size_t a = 0; a < n; ++a) {
                    for (std::size_t b = 0; b < n; ++b) s += w[a] * alpha[a * n * n + b * n + c] * u[b];
                }
                tmp[c] = s;
            }
            if (normalize(tmp) > 0.0) v = tmp;
            contract(alpha, n, u, v, f);
            w = f;
            const double next = normalize(w);
            if (next == 0.0) break;
            const bool settled = next - value <= 1e-15 * next;
            value = next;
            if (settled) break;
        }
        best = std::max(best, value);
    }
    return best;
}

BilinearDriver BilinearDriver::constant(std::size_t n, std::vector<double> tensor) {
    if (n == 0) throw std::invalid_argument("BilinearDriver: dimension must be positive");
    if (tensor.size() != n * n * n) {
        throw std::invalid_argument("BilinearDriver: constant tensor needs n^3 = " + std::to_string(n * n * n) +
                                    " values, got " + std::to_string(tensor.size()));
    }
    BilinearDriver d;
    d.n_ = n;
    d.constant_ = std::move(tensor);
    d.check_symmetry();
    d.theta_ = d.sample_theta(kThetaSeed);
    return d;
}

BilinearDriver BilinearDriver::scalar(double c) { return constant(1, {0.5 * c}); }

BilinearDriver BilinearDriver::field(std::size_t n, const GridFunction& coefficients) {
    if (n == 0) throw std::invalid_argument("BilinearDriver: dimension must be positive");
    const std::size_t n3 = n * n * n;
    if (coefficients.components() != n3) {
        throw std::invalid_argument("BilinearDriver: coefficient field needs n^3 = " + std::to_string(n3) +
                                    " components");
    }
    BilinearDriver d;
    d.n_ = n;
    d.nt_ = coefficients.time_nodes();
    d.nx_ = coefficients.space_nodes();
    auto nodal = std::make_shared<std::vector<double>>(d.nt_ * d.nx_ * n3);
    for (std::size_t i = 0; i < d.nt_; ++i) {
        for (std::size_t j = 0; j < d.nx_; ++j) {
            double* dst = nodal->data() + (i * d.nx_ + j) * n3;
            for (std::size_t c = 0; c < n3; ++c) dst[c] = coefficients(i, j, c);
        }
    }
    d.nodal_ = std::move(nodal);
    d.check_symmetry();
    d.theta_ = d.sample_theta(kThetaSeed);
    return d;
}

std::span<const double> BilinearDriver::tensor(std::size_t i, std::size_t j) const noexcept {
    const std::size_t n3 = n_ * n_ * n_;
    if (nodal_ == nullptr) return constant_;
    return {nodal_->data() + (i * nx_ + j) * n3, n3};
}

bool BilinearDriver::fits(const Grid& grid) const noexcept {
    return nodal_ == nullptr || (nt_ == grid.time.nodes() && nx_ == grid.space.nodes());
}

void BilinearDriver::apply(const NodeRef& at, std::span<const double> u, std::span<const double> v,
                           std::span<double> out) const noexcept {
    const auto alpha = tensor(at.i, at.j);
    if (n_ == 1) {
        out[0] = alpha[0] * (u[0] * v[0]);
        return;
    }
    // both contraction orders, so that swapping u and v is exact in floating point
    for (std::size_t a = 0; a < n_; ++a) {
        const double* row = alpha.data() + a * n_ * n_;
        double s = 0.0;
        for (std::size_t b = 0; b < n_; ++b) {
            for (std::size_t c = 0; c < n_; ++c) s += row[b * n_ + c] * (u[b] * v[c] + v[b] * u[c]);
        }
        out[a] = 0.5 * s;
    }
}

BilinearDriver BilinearDriver::scaled(double s) const {
    BilinearDriver d = *this;
    for (double& v : d.constant_) v *= s;
    if (nodal_ != nullptr) {
        auto nodal = std::make_shared<std::vector<double>>(*nodal_);
        for (double& v : *nodal) v *= s;
        d.nodal_ = std::move(nodal);
    }
    d.theta_ = theta_ * std::abs(s);
    return d;
}

void BilinearDriver::check_symmetry() const {
    if (nodal_ == nullptr) {
        check_tensor_symmetry(constant_, n_, "");
        return;
    }
    for (std::size_t i = 0; i < nt_; ++i) {
        for (std::size_t j = 0; j < nx_; ++j) {
            check_tensor_symmetry(tensor(i, j), n_,
                                  " at node (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        }
    }
}

double BilinearDriver::sample_theta(std::uint64_t seed) const {
    if (nodal_ == nullptr) return sampled_bilinear_bound(constant_, n_, kRestarts, seed);
    const std::size_t count = nt_ * nx_;
    std::vector<double> per_node(count);
    parallel_for(count, 1024, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const std::span<const double> alpha{nodal_->data() + k * n_ * n_ * n_, n_ * n_ * n_};
            per_node[k] = sampled_bilinear_bound(alpha, n_, kRestarts / 3 + 1, seed + k);
        }
    });
    return *std::max_element(per_node.begin(), per_node.end());
}

QuadraticDriver::QuadraticDriver(std::size_t n, Evaluator f, double theta)
    : n_(n), f_(std::move(f)), theta_(theta) {
    if (n == 0) throw std::invalid_argument("QuadraticDriver: dimension must be positive");
    if (!f_) throw std::invalid_argument("QuadraticDriver: empty evaluator");
    if (!(theta >= 0.0) || !std::isfinite(theta)) {
        throw std::invalid_argument("QuadraticDriver: theta must be finite and nonnegative");
    }
}

QuadraticDriver QuadraticDriver::from_bilinear(BilinearDriver driver) {
    const std::size_t n = driver.dimension();
    const double theta = driver.theta();
    return QuadraticDriver(
        n,
        [d = std::move(driver)](const NodeRef& at, std::span<const double> z, std::span<double> out) {
            d.apply(at, z, z, out);
        },
        theta);
}

double QuadraticDriver::verify(const Grid& grid, std::size_t samples, std::uint64_t seed) const {
    std::mt19937_64 engine(seed);
    boost::random::normal_distribution<double> normal;
    std::uniform_int_distribution<std::size_t> pick_i(0, grid.time.steps());
    std::uniform_int_distribution<std::size_t> pick_j(0, grid.space.nodes() - 1);
    std::vector<double> zero(n_, 0.0), u(n_), v(n_), fu(n_), fv(n_);
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        NodeRef at;
        at.i = pick_i(engine);
        at.j = pick_j(engine);
        at.t = grid.time.time(at.i);
        at.x = grid.space.x(at.j);
        f_(at, zero, fu);
        for (std::size_t c = 0; c < n_; ++c) {
            if (fu[c] != 0.0) {
                std::ostringstream msg;
                msg << "QuadraticDriver: f(t, x, 0) != 0 at t = " << at.t << ", x = " << at.x;
                throw std::invalid_argument(msg.str());
            }
        }
        const double scale = std::exp(2.0 * normal(engine));
        for (std::size_t c = 0; c < n_; ++c) {
            u[c] = scale * normal(engine);
            v[c] = scale * normal(engine);
        }
        f_(at, u, fu);
        f_(at, v, fv);
        double df = 0.0, duv = 0.0, nu = 0.0, nv = 0.0;
        for (std::size_t c = 0; c < n_; ++c) {
            df += (fu[c] - fv[c]) * (fu[c] - fv[c]);
            duv += (u[c] - v[c]) * (u[c] - v[c]);
            nu += u[c] * u[c];
            nv += v[c] * v[c];
        }
        const double denom = std::sqrt(duv) * (std::sqrt(nu) + std::sqrt(nv));
        if (denom > 0.0) worst = std::max(worst, std::sqrt(df) / denom);
    }
    return worst;
}

std::size_t driver_dimension(const Driver& driver) noexcept {
    return std::visit([](const auto& d) { return d.dimension(); }, driver);
}

double driver_theta(const Driver& driver) noexcept {
    return std::visit([](const auto& d) { return d.theta(); }, driver);
}

void evaluate_driver(const Driver& driver, const NodeRef& at, std::span<const double> z,
                     std::span<double> out) {
    if (const auto* b = std::get_if<BilinearDriver>(&driver)) {
        b->apply(at, z, z, out);
    } else {
        std::get<QuadraticDriver>(driver).evaluate(at, z, out);
    }
}

GridFunction driver_field(const Driver& driver, const GridFunction& zeta, const Grid& grid) {
    const std::size_t n = driver_dimension(driver);
    if (!zeta.fits(grid) || zeta.components() != n) {
        throw std::invalid_argument("driver_field: integrand does not match the driver dimension or grid");
    }
    if (const auto* b = std::get_if<BilinearDriver>(&driver); b != nullptr && !b->fits(grid)) {
        throw std::invalid_argument("driver_field: coefficient field lives on a different grid");
    }
    GridFunction out(zeta.time_nodes(), zeta.space_nodes(), n);
    const std::size_t nx = grid.space.nodes();
    parallel_for(zeta.time_nodes(), 1, [&](std::size_t begin, std::size_t end) {
        std::vector<double> z(n), f(n);
        for (std::size_t i = begin; i < end; ++i) {
            NodeRef at{i, 0, grid.time.time(i), 0.0};
            for (std::size_t j = 0; j < nx; ++j) {
                at.j = j;
                at.x = grid.space.x(j);
                zeta.node(i, j, z);
                evaluate_driver(driver, at, z, f);
                for (std::size_t c = 0; c < n; ++c) out(i, j, c) = f[c];
            }
        }
    });
    return out;
}

GridFunction bilinear_field(const BilinearDriver& driver, const GridFunction& mu, const GridFunction& nu,
                            const Grid& grid) {
    const std::size_t n = driver.dimension();
    if (!mu.fits(grid) || !nu.same_shape(mu) || mu.components() != n) {
        throw std::invalid_argument("bilinear_field: dimension mismatch between driver and arguments");
    }
    if (!driver.fits(grid)) {
        throw std::invalid_argument("bilinear_field: coefficient field lives on a different grid");
    }
    GridFunction out(mu.time_nodes(), mu.space_nodes(), n);
    const std::size_t nx = grid.space.nodes();
    parallel_for(mu.time_nodes(), 1, [&](std::size_t begin, std::size_t end) {
        std::vector<double> u(n), v(n), f(n);
        for (std::size_t i = begin; i < end; ++i) {
            NodeRef at{i, 0, grid.time.time(i), 0.0};
            for (std::size_t j = 0; j < nx; ++j) {
                at.j = j;
                at.x = grid.space.x(j);
                mu.node(i, j, u);
                nu.node(i, j, v);
                driver.apply(at, u, v, f);
                for (std::size_t c = 0; c < n; ++c) out(i, j, c) = f[c];
            }
        }
    });
    return out;
}

}  // namespace qbsde
