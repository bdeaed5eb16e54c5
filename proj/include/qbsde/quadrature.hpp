#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace qbsde {

/// Gauss-Hermite rule for the standard normal weight phi(z): nodes z_i and
/// weights w_i with sum w_i h(z_i) = E[h(Z)] exactly for polynomials of degree
/// < 2n. Built by Golub-Welsch on the probabilists' Hermite recurrence.
class GaussHermiteRule {
public:
    explicit GaussHermiteRule(std::size_t nodes);

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    /// E[h(mean + sqrt(variance) Z)].
    double expect(const std::function<double(double)>& h, double mean, double variance) const;

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Cached rule with the given node count (thread safe).
const GaussHermiteRule& gauss_hermite(std::size_t nodes);

/// E[h(N(mean, variance))] by Gauss-Hermite quadrature; variance < 0 throws.
double quad_expect(const std::function<double(double)>& h, double mean, double variance,
                   std::size_t nodes = 64);

}  // namespace qbsde
