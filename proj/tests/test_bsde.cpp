#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qbsde/bsde.hpp"
#include "qbsde/numerics.hpp"
#include "support.hpp"

using namespace qbsde;
using support::core_error;
using support::field;
using support::scalar_spec;

namespace {

const auto square = [](double x) { return x * x; };
const auto identity = [](double x) { return x; };

double max_abs(const GridFunction& u) {
    double m = 0.0;
    for (double v : u.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST(Driver, ScalarDriverBound) {
    const auto d = BilinearDriver::scalar(3.0);
    EXPECT_DOUBLE_EQ(d.theta(), 1.5);
    std::vector<double> out(1);
    d.apply({}, std::vector<double>{2.0}, std::vector<double>{5.0}, out);
    EXPECT_DOUBLE_EQ(out[0], 15.0);
}

TEST(Driver, RejectsAsymmetricTensor) {
    std::vector<double> t(8, 0.0);
    t[1] = 1.0;  // alpha_{0,0,1} without alpha_{0,1,0}
    EXPECT_THROW(BilinearDriver::constant(2, t), std::invalid_argument);
    EXPECT_THROW(BilinearDriver::constant(2, std::vector<double>(7)), std::invalid_argument);
}

TEST(Driver, SampledThetaMatchesTheSpectralNorm) {
    // f~_0(u, v) = u_0 v_0 - u_1 v_1, f~_1 = u_0 v_1 + u_1 v_0: |f~(u, u)| = |u|^2, sup = 1
    const std::vector<double> t{1, 0, 0, -1, 0, 1, 1, 0};
    EXPECT_NEAR(BilinearDriver::constant(2, t).theta(), 1.0, 1e-9);
}

TEST(Driver, SymmetryIsExact) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    std::vector<double> t(27);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            for (std::size_t c = b; c < 3; ++c) t[a * 9 + b * 3 + c] = t[a * 9 + c * 3 + b] = n(rng);
        }
    }
    const auto d = BilinearDriver::constant(3, t);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> u{n(rng), n(rng), n(rng)}, v{n(rng), n(rng), n(rng)}, f1(3), f2(3);
        d.apply({}, u, v, f1);
        d.apply({}, v, u, f2);
        EXPECT_EQ(f1, f2);
    }
}

TEST(Driver, QuadraticDriverVerification) {
    const Grid g = Grid::standard(1.0, 10, 21);
    const QuadraticDriver q(1, [](const NodeRef&, std::span<const double> z, std::span<double> out) { out[0] = 0.5 * z[0] * z[0]; }, 0.5);
    EXPECT_LE(q.verify(g, 1000, 1), 0.5 + 1e-12);
    const QuadraticDriver bad(1, [](const NodeRef&, std::span<const double>, std::span<double> out) { out[0] = 1.0; }, 0.5);
    EXPECT_THROW(bad.verify(g, 10, 1), std::invalid_argument);
}

TEST(Lift, Examples) {
    const Grid g = Grid::standard(1.0);
    const Lift a = lift_terminal(scalar_spec(1.0, identity, g));
    EXPECT_LT(core_error(a.y, g, [](double, double x) { return x; }), 1e-12);
    EXPECT_LT(core_error(a.zeta, g, [](double, double) { return 1.0; }), 1e-12);
    const Lift b = lift_terminal(scalar_spec(1.0, [](double) { return 5.0; }, g));
    EXPECT_LT(core_error(b.y, g, [](double, double) { return 5.0; }), 1e-12);
    EXPECT_LT(max_abs(b.zeta), 1e-10);
    const Lift c = lift_terminal(scalar_spec(1.0, square, g));
    EXPECT_LT(core_error(c.y, g, [](double t, double x) { return x * x + 1 - t; }), 1e-11);
    EXPECT_LT(core_error(c.zeta, g, [](double, double x) { return 2 * x; }), 1e-10);
}

TEST(BilinearImage, Examples) {
    const Grid g = Grid::standard(1.0);
    const auto d = BilinearDriver::scalar(1.0);
    const auto one = field(g, [](double, double) { return 1.0; });
    EXPECT_LT(max_abs(bilinear_image(one, one, d, g)), 1e-12);
    const auto mu = field(g, [](double, double x) { return 2 * x; });
    EXPECT_LT(core_error(bilinear_image(mu, mu, d, g), g, [](double t, double x) { return 4 * x * (1 - t); }), 1e-9);
}

TEST(BilinearImage, SymmetricAndBilinear) {
    const Grid g = Grid::standard(1.0, 40, 201);
    const std::vector<double> t{0.3, -0.1, -0.1, 0.7, 1.1, 0.2, 0.2, -0.4};
    const auto d = BilinearDriver::constant(2, t);
    auto rand_field = [&](unsigned seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1, 1);
        GridFunction f = GridFunction::zeros(g, 2);
        const double a = u(rng), b = u(rng), c = u(rng), e = u(rng);
        for (std::size_t i = 0; i < g.time.nodes(); ++i) {
            for (std::size_t j = 0; j < g.space.nodes(); ++j) {
                const double x = g.space.x(j);
                f(i, j, 0) = a * std::sin(b * x) + c;
                f(i, j, 1) = e * std::cos(x) * g.time.time(i);
            }
        }
        return f;
    };
    const auto mu = rand_field(1), mu2 = rand_field(2), nu = rand_field(3);
    const auto lhs = bilinear_image(mu, nu, d, g);
    const auto rhs = bilinear_image(nu, mu, d, g);
    EXPECT_EQ(lhs.values().size(), rhs.values().size());
    for (std::size_t k = 0; k < lhs.values().size(); ++k) ASSERT_EQ(lhs.values()[k], rhs.values()[k]);

    const double a = 1.9;
    const auto left = bilinear_image(a * mu + mu2, nu, d, g);
    const auto right = a * bilinear_image(mu, nu, d, g) + bilinear_image(mu2, nu, d, g);
    const double scale = max_abs(left);
    for (std::size_t k = 0; k < left.values().size(); ++k) EXPECT_NEAR(left.values()[k], right.values()[k], 1e-12 * scale);
}

TEST(Expansion, GaussianSeriesTerminates) {
    const Grid g = Grid::standard(1.0);
    const double c = 0.8;
    const ExpansionSeries s = expansion(scalar_spec(c, identity, g), 4);
    ASSERT_EQ(s.order(), 4u);
    EXPECT_LT(core_error(s.zeta[0], g, [](double, double) { return 1.0; }), 1e-12);
    EXPECT_LT(s.zeta[1].sup_norm(g), 1e-8);
    EXPECT_LT(core_error(s.y[1], g, [&](double t, double) { return c * (1 - t) / 2; }), 1e-6);
    for (std::size_t k = 2; k < 4; ++k) {
        EXPECT_LT(s.zeta[k].sup_norm(g), 1e-8);
        EXPECT_LT(s.y[k].sup_norm(g), 1e-8);
    }
    EXPECT_TRUE(std::isinf(s.empirical_radius));
}

TEST(Expansion, ZeroTerminalAndZeroDriver) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const ExpansionSeries z = expansion(scalar_spec(1.0, [](double) { return 0.0; }, g), 3);
    for (const auto& f : z.zeta) EXPECT_EQ(max_abs(f), 0.0);
    for (const auto& f : z.y) EXPECT_EQ(max_abs(f), 0.0);
    EXPECT_TRUE(std::isinf(z.rho));

    const ExpansionSeries lin = expansion(scalar_spec(0.0, square, g), 3);
    EXPECT_EQ(max_abs(lin.zeta[1]), 0.0);
    EXPECT_EQ(max_abs(lin.zeta[2]), 0.0);
    const Solution s = evaluate_series(lin, 0.7);
    const Lift l = lift_terminal(scalar_spec(0.0, square, g));
    EXPECT_LT(sup_distance(s.y, 0.7 * l.y, g), 1e-12);
}

TEST(Expansion, RejectsBadInput) {
    const Grid g = Grid::standard(1.0, 10, 41);
    EXPECT_THROW(expansion(scalar_spec(1.0, identity, g), 0), std::invalid_argument);
    const BSDESpec q{1, QuadraticDriver::from_bilinear(BilinearDriver::scalar(1.0)), support::scalar_terminal(identity), g};
    EXPECT_THROW(expansion(q, 2), std::invalid_argument);
}

TEST(Expansion, CumulantIdentityAtTheRoot) {
    // h = x^2 keeps every zeta^(k) polynomial, so only the O(dt^2) time error remains
    const Grid g = Grid::standard(1.0, 200, 401);
    for (double c : {1.0, 0.5}) {
        const ExpansionSeries s = expansion(scalar_spec(c, square, g), 4);
        const auto kappa = oracle::cumulants(square, 1.0, 4);
        for (int k = 1; k <= 4; ++k) {
            const double expected = std::pow(c, k - 1) * kappa[k] / oracle::factorial(k);
            EXPECT_NEAR(s.y[k - 1](0, g.space.centre()), expected, 1e-4 * expected) << "k = " << k;
        }
    }
}

TEST(Expansion, CumulantIdentityConvergesForSmoothTerminal) {
    const auto h = [](double x) { return std::sin(x) + 0.3 * x; };
    const auto kappa = oracle::cumulants(h, 1.0, 4);
    auto errors = [&](std::size_t nt, std::size_t nx) {
        const Grid g = Grid::standard(1.0, nt, nx);
        const ExpansionSeries s = expansion(scalar_spec(1.0, h, g), 4);
        std::vector<double> e;
        for (int k = 1; k <= 4; ++k) e.push_back(std::abs(s.y[k - 1](0, g.space.centre()) - kappa[k] / oracle::factorial(k)));
        return e;
    };
    const auto coarse = errors(100, 201);
    const auto fine = errors(200, 401);
    // h is odd, so kappa_3 = 0 and only round-off is left at k = 3
    EXPECT_LT(fine[2], 1e-12);
    for (int k : {2, 4}) {
        EXPECT_LT(fine[k - 1], 2e-4) << "k = " << k;
        EXPECT_GT(coarse[k - 1] / fine[k - 1], 3.0) << "k = " << k;
    }
}

TEST(EvaluateSeries, Examples) {
    const Grid g = Grid::standard(1.0);
    const ExpansionSeries s = expansion(scalar_spec(1.0, identity, g), 3);
    const Solution zero = evaluate_series(s, 0.0);
    EXPECT_EQ(max_abs(zero.y), 0.0);
    EXPECT_EQ(max_abs(zero.zeta), 0.0);
    const Solution sol = evaluate_series(s, 0.2);
    EXPECT_LT(core_error(sol.y, g, [](double t, double x) { return 0.2 * x + 0.02 * (1 - t); }), 1e-7);

    const ExpansionSeries q = expansion(scalar_spec(1.0, square, g), 5);
    const double a = 0.02;
    const Solution s3 = evaluate_series(q, a, 3);
    const Solution s4 = evaluate_series(q, a, 4);
    const double gap = hbmo_norm(s4.zeta - s3.zeta, g, Region::kCore).value;
    EXPECT_NEAR(gap, q.coeff_hbmo_norms[3] * std::pow(a, 4), 1e-12 * gap + 1e-18);
    EXPECT_GT(s3.remainder_estimate, 0.0);
    EXPECT_TRUE(std::isfinite(s3.remainder_estimate));
}

TEST(Picard, ZeroRiskAversion) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const Solution s = picard_solve(scalar_spec(1.0, square, g), 0.0);
    EXPECT_EQ(s.iterations, 1u);
    EXPECT_EQ(max_abs(s.y), 0.0);
    EXPECT_EQ(max_abs(s.zeta), 0.0);
}

TEST(Picard, ZeroTerminalGivesZeroSolution) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const Solution s = picard_solve(scalar_spec(1.0, [](double) { return 0.0; }, g), 0.3);
    EXPECT_EQ(max_abs(s.y), 0.0);
    EXPECT_EQ(max_abs(s.zeta), 0.0);
}

TEST(Picard, GaussianColeHopf) {
    const Grid g = Grid::standard(1.0);
    const Solution s = picard_solve(scalar_spec(1.0, identity, g), 0.2);
    const double err = core_error(s.y, g, [](double t, double x) {
        return oracle::cole_hopf(identity, 1.0, 0.2, t, x, 1.0);
    });
    EXPECT_LT(err, 1e-6);
    EXPECT_LT(s.residual, 1e-6);
}

TEST(Picard, ChiSquareColeHopf) {
    const Grid g = Grid::standard(1.0);
    const Solution s = picard_solve(scalar_spec(1.0, square, g), 0.1);
    const double err = core_error(s.y, g, [](double t, double x) { return oracle::cole_hopf(square, 1.0, 0.1, t, x, 1.0); });
    EXPECT_LT(err, 1e-4);
    // the quadrature oracle and the closed form agree
    EXPECT_NEAR(oracle::cole_hopf(square, 1.0, 0.1, 0.3, 1.2, 1.0), oracle::cole_hopf_square(1.0, 0.1, 0.3, 1.2, 1.0), 1e-12);
}

TEST(Picard, QuadraticDriverPathMatchesBilinear) {
    const Grid g = Grid::standard(1.0, 100, 201);
    const BSDESpec b = scalar_spec(1.0, square, g);
    const BSDESpec q{1, QuadraticDriver::from_bilinear(BilinearDriver::scalar(1.0)), support::scalar_terminal(square), g};
    const Solution sb = picard_solve(b, 0.1);
    const Solution sq = picard_solve(q, 0.1);
    EXPECT_EQ(sb.iterations, sq.iterations);
    EXPECT_LT(sup_distance(sb.y, sq.y, g), 1e-12);
}

TEST(Picard, DivergenceCarriesHistory) {
    const Grid g = Grid::standard(1.0, 50, 201);
    try {
        picard_solve(scalar_spec(1.0, square, g), 2.0, PicardSettings{1e-8, 50, 1e6});
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_FALSE(e.changes().empty());
        EXPECT_EQ(e.changes().size(), e.norms().size());
    }
}

TEST(Picard, UniqueWithinTheBall) {
    const Grid g = Grid::standard(1.0, 100, 201);
    const BSDESpec spec = scalar_spec(1.0, square, g);
    const PicardSettings tight{1e-10, 200, 1e8};
    const Solution a = picard_solve(spec, 0.05, tight);
    const auto start = field(g, [](double t, double x) { return 0.05 * std::sin(x) * (1 - t); });
    const Solution b = picard_solve(spec, 0.05, tight, &start);
    EXPECT_LT(sup_distance(a.zeta, b.zeta, g), 10 * tight.tol);
}

TEST(Residual, Examples) {
    const Grid g = Grid::standard(1.0, 100, 201);
    const BSDESpec spec = scalar_spec(1.0, square, g);
    const PicardSettings tight{1e-10, 200, 1e8};
    Solution s = picard_solve(spec, 0.1, tight);
    EXPECT_LT(s.residual, tight.tol);
    EXPECT_LT(s.gradient_gap, 10 * tight.tol);

    const double eps = 1e-3;
    s.y(40, g.space.centre()) += eps;
    EXPECT_GE(residual(spec, s.y, s.zeta, 0.1).defect, eps / g.time.dt() * (1 - 1e-9));
}

TEST(Residual, ContinuumSolutionConvergesUnderRefinement) {
    auto defect = [](std::size_t nt, std::size_t nx) {
        const Grid g = Grid::standard(1.0, nt, nx);
        const BSDESpec spec = scalar_spec(1.0, square, g);
        const auto y = field(g, [](double t, double x) { return oracle::cole_hopf_square(1.0, 0.1, t, x, 1.0); });
        const auto z = field(g, [](double t, double x) { return 0.2 * x / (1.0 - 0.2 * (1.0 - t)); });
        return residual(spec, y, z, 0.1).defect;
    };
    const double coarse = defect(50, 101);
    const double fine = defect(100, 201);
    EXPECT_GT(coarse / fine, 1.8);
}

TEST(Series, PartialSumBoundAtTheRadius) {
    const Grid g = Grid::standard(1.0);
    const ExpansionSeries s = expansion(scalar_spec(1.0, square, g), 6);
    const double xc = g.space.x(g.core_range().second - 1);
    EXPECT_NEAR(s.l_norm, std::sqrt(4.0 * xc * xc + 2.0), 1e-8);
    EXPECT_TRUE(s.rho_heuristic);
    EXPECT_LE(s.radius_sum(), 1.0 / (4.0 * s.constants.kappa * s.constants.theta));
}

TEST(Series, AgreesWithPicardGeometrically) {
    const Grid g = Grid::standard(1.0);
    const BSDESpec spec = scalar_spec(1.0, square, g);
    const ExpansionSeries s = expansion(spec, 6);
    const double a = 0.1;
    const Solution p = picard_solve(spec, a, PicardSettings{1e-13, 400, 1e8});
    std::vector<double> gaps;
    for (std::size_t k = 1; k <= 6; ++k) {
        gaps.push_back(hbmo_norm(evaluate_series(s, a, k).zeta - p.zeta, g, Region::kCore).value);
    }
    for (std::size_t k = 1; k < gaps.size(); ++k) {
        const double ratio = gaps[k] / gaps[k - 1];
        EXPECT_LT(ratio, a / s.empirical_radius + 0.1) << "K = " << k + 1;
    }
}
