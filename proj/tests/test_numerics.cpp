#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/quadrature.hpp"

using namespace qbsde;

namespace {

std::vector<double> sample(const SpaceGrid& s, const std::function<double(double)>& f) {
    std::vector<double> v(s.nodes());
    for (std::size_t j = 0; j < s.nodes(); ++j) v[j] = f(s.x(j));
    return v;
}

GridFunction field(const Grid& g, const std::function<double(double, double)>& f) {
    GridFunction u = GridFunction::zeros(g, 1);
    for (std::size_t i = 0; i < g.time.nodes(); ++i) {
        for (std::size_t j = 0; j < g.space.nodes(); ++j) u(i, j) = f(g.time.time(i), g.space.x(j));
    }
    return u;
}

double core_error(const GridFunction& u, const Grid& g, const std::function<double(double, double)>& exact) {
    double e = 0.0;
    const auto [lo, hi] = g.core_range();
    for (std::size_t i = 0; i < g.time.nodes(); ++i) {
        for (std::size_t j = lo; j < hi; ++j) {
            e = std::max(e, std::abs(u(i, j) - exact(g.time.time(i), g.space.x(j))));
        }
    }
    return e;
}

}  // namespace

TEST(Grid, SpaceGridIsSymmetricWithZeroNode) {
    SpaceGrid s(6.0, 401);
    EXPECT_EQ(s.x(s.centre()), 0.0);
    EXPECT_DOUBLE_EQ(s.x(0), -6.0);
    EXPECT_DOUBLE_EQ(s.x(400), 6.0);
    EXPECT_THROW(SpaceGrid(6.0, 400), std::invalid_argument);
    EXPECT_THROW(SpaceGrid(6.0, 1), std::invalid_argument);
    EXPECT_THROW(TimeGrid(0.0, 10), std::invalid_argument);
}

TEST(Grid, LastTimeNodeIsTheHorizon) {
    TimeGrid t(0.3, 7);
    EXPECT_EQ(t.time(7), 0.3);
    EXPECT_EQ(t.nearest(0.3), 7u);
    EXPECT_EQ(t.nearest(-1.0), 0u);
}

TEST(HeatStep, ConstantsAreMartingales) {
    SpaceGrid s(6.0, 401);
    const auto v = heat_step(std::vector<double>(401, 3.0), 0.01, s);
    for (double e : v) EXPECT_NEAR(e, 3.0, 1e-14);
}

TEST(HeatStep, AffineFunctionsArePreserved) {
    SpaceGrid s(6.0, 401);
    const auto v = heat_step(sample(s, [](double x) { return 2.0 - 0.7 * x; }), 0.01, s);
    for (std::size_t j = 0; j < s.nodes(); ++j) EXPECT_NEAR(v[j], 2.0 - 0.7 * s.x(j), 1e-12);
}

TEST(HeatStep, SecondMomentIsExact) {
    SpaceGrid s(6.0, 401);
    const auto v = heat_step(sample(s, [](double x) { return x * x; }), 0.01, s);
    for (std::size_t j = 0; j < s.nodes(); ++j) EXPECT_NEAR(v[j], s.x(j) * s.x(j) + 0.01, 1e-12);
}

TEST(HeatStep, ConstantEdgeRuleIsAvailable) {
    SpaceGrid s(6.0, 401);
    const auto v = heat_step(sample(s, [](double x) { return x; }), 0.01, s, EdgeRule::kConstant);
    EXPECT_NEAR(v[s.centre()], 0.0, 1e-15);
    // clamped ghosts pull the edge value inward
    EXPECT_LT(v.back(), 6.0);
}

TEST(HeatStep, RejectsNonFiniteInputNamingTheNode) {
    SpaceGrid s(1.0, 5);
    std::vector<double> u(5, 0.0);
    u[3] = std::numeric_limits<double>::quiet_NaN();
    try {
        heat_step(u, 0.01, s);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("node 3"), std::string::npos);
    }
}

TEST(HeatStep, MatchesQuadratureOnSmoothData) {
    SpaceGrid s(6.0, 401);
    const double dt = 0.005;
    const auto v = heat_step(sample(s, [](double x) { return std::sin(x) + std::exp(-x * x); }), dt, s);
    for (std::size_t j = 100; j <= 300; ++j) {
        const double ref = oracle::normal_expect([](double y) { return std::sin(y) + std::exp(-y * y); }, s.x(j), dt);
        EXPECT_NEAR(v[j], ref, 1e-9);
    }
}

TEST(BackwardAccumulate, ConstantSource) {
    const Grid g = Grid::standard(1.0);
    const auto u = backward_accumulate(field(g, [](double, double) { return 2.5; }), g);
    EXPECT_LT(core_error(u, g, [](double t, double) { return 2.5 * (1.0 - t); }), 1e-12);
}

TEST(BackwardAccumulate, GaussianMomentTerminal) {
    const Grid g = Grid::standard(1.0);
    const auto h = sample(g.space, [](double x) { return x * x; });
    const auto u = backward_accumulate(GridFunction::zeros(g, 1), h, g);
    EXPECT_LT(core_error(u, g, [](double t, double x) { return x * x + 1.0 - t; }), 1e-11);
}

TEST(BackwardAccumulate, QuadraticSourceAgainstQuadratureOracle) {
    const Grid g = Grid::standard(1.0);
    const auto u = backward_accumulate(field(g, [](double, double x) { return 2.0 * x * x; }), g);
    const auto ref = [](double t, double x) {
        if (t >= 1.0) return 0.0;
        return oracle::simpson(
            [&](double s) { return oracle::normal_expect([](double y) { return 2.0 * y * y; }, x, s - t); }, t, 1.0, 20);
    };
    // spot check against the oracle, then the whole core against its closed form
    for (double t : {0.0, 0.25, 0.5}) {
        const std::size_t i = g.time.nearest(t);
        for (std::size_t j : {100u, 200u, 260u}) EXPECT_NEAR(u(i, j), ref(t, g.space.x(j)), 1e-10);
    }
    EXPECT_LT(core_error(u, g, [](double t, double x) { return 2.0 * x * x * (1 - t) + (1 - t) * (1 - t); }), 1e-10);
}

TEST(BackwardAccumulate, LeftPointRuleIsFirstOrder) {
    auto err = [](std::size_t nt) {
        Grid g = Grid::standard(1.0, nt);
        g.rule = TimeRule::kLeftPoint;
        const auto u = backward_accumulate(field(g, [](double t, double) { return t; }), g);
        return std::abs(u(0, g.space.centre()) - 0.5);
    };
    const double ratio = err(100) / err(200);
    EXPECT_NEAR(ratio, 2.0, 0.05);
}

TEST(BackwardAccumulate, DimensionMismatchThrows) {
    const Grid g = Grid::standard(1.0, 10, 41);
    EXPECT_THROW(backward_accumulate(GridFunction::zeros(g, 2), std::vector<double>(41), g), std::invalid_argument);
    const Grid other = Grid::standard(1.0, 11, 41);
    EXPECT_THROW(backward_accumulate(GridFunction::zeros(other, 1), g), std::invalid_argument);
}

TEST(BackwardAccumulate, IsLinear) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const auto s1 = field(g, [](double t, double x) { return std::cos(x) * t; });
    const auto s2 = field(g, [](double, double x) { return x * x * x; });
    const auto g1 = sample(g.space, [](double x) { return std::tanh(x); });
    const auto g2 = sample(g.space, [](double x) { return x * x; });
    const double a = -1.7;
    std::vector<double> gc(g1.size());
    for (std::size_t k = 0; k < gc.size(); ++k) gc[k] = a * g1[k] + g2[k];
    const auto lhs = backward_accumulate(a * s1 + s2, gc, g);
    const auto rhs = a * backward_accumulate(s1, g1, g) + backward_accumulate(s2, g2, g);
    const double scale = lhs.sup_norm();
    for (std::size_t k = 0; k < lhs.values().size(); ++k) {
        EXPECT_NEAR(lhs.values()[k], rhs.values()[k], 1e-12 * scale);
    }
}

TEST(BackwardAccumulate, TowerProperty) {
    // wide grid so the edges are out of reach of the core
    const Grid g = Grid::standard(1.0, 40, 801, 12.0, 4.0);
    const auto h = sample(g.space, [](double x) { return std::sin(2.0 * x) + 0.1 * x * x; });
    const auto u = backward_accumulate(GridFunction::zeros(g, 1), h, g);
    // one heat step of length r - t reproduces u(t) from u(r)
    const std::size_t i_t = 10, i_r = 30;
    const auto v = heat_step(u.row(i_r, 0), g.time.time(i_r) - g.time.time(i_t), g.space);
    const auto [lo, hi] = g.core_range();
    for (std::size_t j = lo; j < hi; ++j) {
        EXPECT_NEAR(v[j], u(i_t, j), 1e-12 * std::max(1.0, std::abs(u(i_t, j))));
    }
}

TEST(Gradient, ExactOnAffineAndQuadratic) {
    SpaceGrid s(2.0, 21);
    std::vector<double> out(21);
    gradient_x(sample(s, [](double x) { return 3.0 * x - 1.0; }), s.dx(), out);
    for (double e : out) EXPECT_NEAR(e, 3.0, 1e-13);
    gradient_x(sample(s, [](double x) { return x * x; }), s.dx(), out);
    for (std::size_t j = 0; j < 21; ++j) EXPECT_NEAR(out[j], 2.0 * s.x(j), 1e-13);
}

TEST(Gradient, DifferentiatesTheQuadratureOracle) {
    const Grid g = Grid::standard(1.0);
    const auto u = backward_accumulate(field(g, [](double, double x) { return 2.0 * x * x; }), g);
    const auto z = gradient_x(u, g.space);
    EXPECT_LT(core_error(z, g, [](double t, double x) { return 4.0 * x * (1.0 - t); }), 1e-9);
}

TEST(Gradient, SecondOrderUnderRefinement) {
    auto err = [](std::size_t nx) {
        Grid g = Grid::standard(1.0, 50, nx, 12.0, 4.0);
        const auto h = sample(g.space, [](double x) { return std::sin(1.5 * x); });
        const auto z = gradient_x(backward_accumulate(GridFunction::zeros(g, 1), h, g), g.space);
        return core_error(z, g, [](double t, double x) { return 1.5 * std::exp(-1.125 * (1.0 - t)) * std::cos(1.5 * x); });
    };
    const double ratio = err(401) / err(801);
    EXPECT_NEAR(ratio, 4.0, 0.4);
}

TEST(Interpolate, LinearAndClamped) {
    SpaceGrid s(1.0, 3);
    const std::vector<double> row{0.0, 1.0, 4.0};
    EXPECT_DOUBLE_EQ(interpolate(row, s, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(interpolate(row, s, 5.0), 4.0);
    EXPECT_DOUBLE_EQ(interpolate(row, s, -5.0), 0.0);
}

TEST(Quadrature, Examples) {
    EXPECT_NEAR(quad_expect([](double x) { return x; }, 0.3, 2.0), 0.3, 1e-14);
    EXPECT_NEAR(quad_expect([](double x) { return x * x; }, 0.0, 1.7), 1.7, 1e-13);
    EXPECT_NEAR(quad_expect([](double x) { return std::exp(x); }, 0.0, 1.0), std::exp(0.5), 1e-12);
    EXPECT_THROW(quad_expect([](double x) { return x; }, 0.0, -1.0), std::invalid_argument);
}

TEST(Quadrature, ExactOnPolynomialsBelowTwiceTheNodeCount) {
    const GaussHermiteRule r(8);
    // E Z^14 = 13!! = 135135
    EXPECT_NEAR(r.expect([](double z) { return std::pow(z, 14); }, 0.0, 1.0), 135135.0, 1e-7);
    const oracle::Rule o = oracle::hermite_rule(30);
    const GaussHermiteRule mine(30);
    for (std::size_t k = 0; k < 30; ++k) {
        // the oracle lists nodes in decreasing order
        EXPECT_NEAR(mine.nodes()[k], o.z[29 - k], 1e-12);
        EXPECT_NEAR(mine.weights()[k], o.w[29 - k], 1e-14);
    }
}

TEST(Paths, DeterministicFromSeed) {
    const TimeGrid t(1.0, 20);
    EXPECT_EQ(sample_paths(1, 2, t), sample_paths(1, 2, t));
    EXPECT_FALSE(sample_paths(1, 2, t) == sample_paths(2, 2, t));
}

TEST(Paths, IndependentOfThreadCount) {
    const TimeGrid t(1.0, 50);
    set_threads(1);
    const auto a = sample_paths(7, 3000, t);
    set_threads(4);
    const auto b = sample_paths(7, 3000, t);
    set_threads(0);
    EXPECT_EQ(a, b);
}

TEST(Paths, TerminalMomentsOfTheBrownianMotion) {
    const std::size_t n = 100000;
    const auto p = sample_paths(11, n, TimeGrid(1.0, 10));
    std::vector<double> bt(n), bt2(n);
    for (std::size_t k = 0; k < n; ++k) {
        bt[k] = p.terminal(k);
        bt2[k] = bt[k] * bt[k];
    }
    const double mean = pairwise_sum(bt) / n;
    EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(pairwise_sum(bt2) / n - mean * mean, 1.0, 0.02);
    const auto inc = p.all_increments();
    EXPECT_LT(std::abs(pairwise_sum(inc) / inc.size()), 5.0 / std::sqrt(static_cast<double>(inc.size())));
}

TEST(Paths, MemoryBudgetIsEnforced) {
    EXPECT_THROW(sample_paths(1, 1000, TimeGrid(1.0, 1000), 10000), std::length_error);
    EXPECT_THROW(sample_paths(1, 0, TimeGrid(1.0, 10)), std::invalid_argument);
}

TEST(Parallel, PairwiseSumIsOrderFixed) {
    std::vector<double> v(10001);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = 1.0 / (1.0 + k);
    const double a = pairwise_sum(v);
    EXPECT_EQ(a, pairwise_sum(v));
    EXPECT_NEAR(a, std::accumulate(v.begin(), v.end(), 0.0), 1e-12);
}

TEST(Parallel, ForwardsExceptions) {
    EXPECT_THROW(parallel_for(100, 7, [](std::size_t b, std::size_t) {
                     if (b >= 50) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
}
