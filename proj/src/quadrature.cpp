#include "qbsde/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace qbsde {

GaussHermiteRule::GaussHermiteRule(std::size_t n) {
    if (n == 0) throw std::invalid_argument("GaussHermiteRule: need at least one node");
    // Jacobi matrix of He_k: zero diagonal, off-diagonal sqrt(k)
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd sub(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
    for (Eigen::Index k = 0; k < sub.size(); ++k) sub[k] = std::sqrt(static_cast<double>(k + 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("GaussHermiteRule: eigen decomposition failed");
    }
    nodes_.resize(n);
    weights_.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        nodes_[i] = solver.eigenvalues()[ii];
        const double v = solver.eigenvectors()(0, ii);
        weights_[i] = v * v;
        total += weights_[i];
    }
    for (double& w : weights_) w /= total;
    // exact symmetry
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double z = 0.5 * (nodes_[n - 1 - i] - nodes_[i]);
        const double w = 0.5 * (weights_[i] + weights_[n - 1 - i]);
        nodes_[i] = -z;
        nodes_[n - 1 - i] = z;
        weights_[i] = weights_[n - 1 - i] = w;
    }
    if (n % 2 == 1) nodes_[n / 2] = 0.0;
}

double GaussHermiteRule::expect(const std::function<double(double)>& h, double mean,
                                double variance) const {
    if (variance < 0.0) throw std::invalid_argument("quad_expect: variance must be >= 0");
    if (variance == 0.0) return h(mean);
    const double sd = std::sqrt(variance);
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * h(mean + sd * nodes_[i]);
    return s;
}

const GaussHermiteRule& gauss_hermite(std::size_t nodes) {
    static std::mutex lock;
    static std::map<std::size_t, std::unique_ptr<GaussHermiteRule>> cache;
    std::lock_guard guard(lock);
    auto& slot = cache[nodes];
    if (!slot) slot = std::make_unique<GaussHermiteRule>(nodes);
    return *slot;
}

double quad_expect(const std::function<double(double)>& h, double mean, double variance,
                   std::size_t nodes) {
    if (variance < 0.0) throw std::invalid_argument("quad_expect: variance must be >= 0");
    return gauss_hermite(nodes).expect(h, mean, variance);
}

}  // namespace qbsde
