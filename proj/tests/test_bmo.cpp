#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "qbsde/bmo.hpp"
#include "qbsde/numerics.hpp"
#include "support.hpp"

using namespace qbsde;
using support::field;

namespace {

std::vector<double> terminal(const Grid& g, const std::function<double(double)>& h) {
    std::vector<double> v(g.space.nodes());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = h(g.space.x(j));
    return v;
}

}  // namespace

TEST(Hbmo, DeterministicIntegrand) {
    const Grid g = Grid::standard(2.0, 100, 201);
    EXPECT_NEAR(hbmo_norm(field(g, [](double, double) { return 0.3; }), g).value, 0.3 * std::sqrt(2.0), 1e-13);
    EXPECT_EQ(hbmo_norm(GridFunction::zeros(g, 1), g).value, 0.0);
}

TEST(Hbmo, IdentityIntegrandPeaksAtTheCorner) {
    const Grid g = Grid::standard(1.0);
    const NormValue v = hbmo_norm(field(g, [](double, double x) { return x; }), g);
    const double xm = g.space.x_max();
    EXPECT_NEAR(v.value, std::sqrt(xm * xm + 0.5), 1e-9);
    EXPECT_EQ(v.t_argmax, 0.0);
    EXPECT_NEAR(std::abs(v.x_argmax), xm, 1e-12);
    // the closed form agrees with the quadrature of E_t[int_t^T B_s^2 ds]
    const double q = oracle::simpson([&](double s) { return oracle::normal_expect([](double y) { return y * y; }, xm, s); }, 0.0, 1.0);
    EXPECT_NEAR(q, xm * xm + 0.5, 1e-10);
}

TEST(Hbmo, AbsoluteHomogeneity) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const auto z = field(g, [](double t, double x) { return std::sin(x) + t; });
    const double base = hbmo_norm(z, g).value;
    for (double a : {-3.0, 0.5, 7.25}) {
        EXPECT_NEAR(hbmo_norm(a * z, g).value, std::abs(a) * base, 4 * std::numeric_limits<double>::epsilon() * std::abs(a) * base);
    }
}

TEST(Hbmo, SupremumDominatesTheRootNode) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const auto z = field(g, [](double t, double x) { return std::cos(3 * x) * (1 + t); });
    GridFunction sq = z;
    for (double& v : sq.values()) v *= v;
    const double root = std::sqrt(backward_accumulate(sq, g)(0, g.space.centre()));
    EXPECT_GE(hbmo_norm(z, g).value, root);
}

TEST(TerminalBmo, Examples) {
    const Grid g = Grid::standard(1.0);
    EXPECT_NEAR(terminal_bmo_norm(terminal(g, [](double x) { return x; }), 1, g).value, 1.0, 1e-10);
    EXPECT_NEAR(terminal_bmo_norm(terminal(g, [](double) { return 4.0; }), 1, g).value, 0.0, 1e-10);
    const NormValue sq = terminal_bmo_norm(terminal(g, [](double x) { return x * x; }), 1, g, Region::kCore);
    // sup over the core of sqrt(4 x^2 (1 - t) + 2 (1 - t)^2) sits at t = 0 and the outermost core node
    const double xc = g.space.x(g.core_range().second - 1);
    EXPECT_NEAR(sq.value, std::sqrt(4.0 * xc * xc + 2.0), 1e-8);
}

TEST(TerminalBmo, SquareAgainstMonteCarlo) {
    // E_t[int_t^T (2 B_s)^2 ds] at (t, x) = (0, 1) by simulation
    const Grid g = Grid::standard(1.0, 100, 401);
    const auto paths = sample_paths(3, 20000, g.time);
    double acc = 0.0;
    for (std::size_t p = 0; p < paths.paths(); ++p) {
        const auto inc = paths.increments(p);
        double b = 1.0, s = 0.0;
        for (std::size_t i = 0; i < inc.size(); ++i) {
            const double next = b + inc[i];
            s += 0.5 * g.time.dt() * (4 * b * b + 4 * next * next);
            b = next;
        }
        acc += s;
    }
    const double mc = acc / paths.paths();
    EXPECT_NEAR(mc, 4.0 + 2.0, 0.1);
}

TEST(TerminalBmo, TranslationInvariant) {
    const Grid g = Grid::standard(1.0, 100, 201);
    const auto h = [](double x) { return std::tanh(x) + 0.2 * x; };
    const double a = terminal_bmo_norm(terminal(g, h), 1, g).value;
    const double b = terminal_bmo_norm(terminal(g, [&](double x) { return h(x) + 12.5; }), 1, g).value;
    EXPECT_NEAR(a, b, 1e-12);
}

TEST(TerminalBmo, RejectsNonFiniteTerminal) {
    const Grid g = Grid::standard(1.0, 10, 21);
    auto h = terminal(g, [](double x) { return x; });
    h[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(terminal_bmo_norm(h, 1, g), std::invalid_argument);
}

TEST(Radius, Examples) {
    EXPECT_DOUBLE_EQ(radius({1.0, 0.5}, 1.0), 0.25);
    EXPECT_DOUBLE_EQ(radius({1.0, 0.5}, 2.0), 0.125);
    EXPECT_DOUBLE_EQ(radius({1.0, 1.0}, 1.0), 0.5 * radius({1.0, 0.5}, 1.0));
    EXPECT_THROW(radius({1.0, 0.5}, 0.0), std::domain_error);
    EXPECT_THROW(radius({0.5, 0.5}, 1.0), std::invalid_argument);
}

TEST(SemimartingaleNorms, Examples) {
    const Grid g = Grid::standard(1.0, 50, 201);
    const auto paths = sample_paths(5, 2000, g.time);
    const std::vector<double> ps{2.0, 4.0};
    const auto zero = GridFunction::zeros(g, 1);

    const auto c = field(g, [](double, double) { return -2.0; });
    const NormReport rc = semimartingale_norms({&c, &zero, &zero}, ps, paths, g);
    EXPECT_DOUBLE_EQ(rc.sp[0].second, 2.0);
    EXPECT_DOUBLE_EQ(rc.sbmo, 2.0);

    const auto b = field(g, [](double, double x) { return x; });
    const auto one = field(g, [](double, double) { return 1.0; });
    const NormReport rb = semimartingale_norms({&b, &one, &zero}, ps, paths, g);
    EXPECT_NEAR(rb.sp[0].second, 1.0, 1e-12);
    EXPECT_NEAR(rb.hbmo.value, 1.0, 1e-12);

    const auto t = field(g, [](double s, double) { return s; });
    const NormReport rt = semimartingale_norms({&t, &zero, &one}, ps, paths, g);
    EXPECT_NEAR(rt.sp[1].second, 1.0, 1e-12);
    EXPECT_NEAR(rt.variation_bmo.value, 1.0, 1e-12);

    EXPECT_THROW(semimartingale_norms({&t, nullptr, &one}, ps, paths, g), std::invalid_argument);
    const std::vector<double> bad{1.0};
    EXPECT_THROW(semimartingale_norms({&t, &zero, &one}, bad, paths, g), std::invalid_argument);
}

TEST(SemimartingaleNorms, CsvRows) {
    NormReport r;
    r.hbmo = {1.5, 0.0, 2.0};
    r.sp = {{2.0, 3.0}};
    std::ostringstream out;
    r.write_csv_rows(out);
    EXPECT_EQ(out.str().substr(0, 12), "hbmo,1.5,0,2");
}

TEST(Bmo1, NormEquivalenceBoundWithoutKappa) {
    // M = E_t[int f~(mu, nu)] with f~ = uv / 2, Theta = 1/2
    const Grid g = Grid::standard(1.0, 50, 201);
    const auto mu = field(g, [](double t, double x) { return std::sin(x) + 0.5 * t; });
    const auto nu = field(g, [](double, double x) { return std::cos(2 * x); });
    GridFunction source = mu;
    for (std::size_t k = 0; k < source.values().size(); ++k) source.values()[k] = 0.5 * mu.values()[k] * nu.values()[k];
    std::vector<std::pair<std::size_t, std::size_t>> starts;
    for (std::size_t i : {0u, 20u, 40u}) {
        for (std::size_t j : {60u, 100u, 140u}) starts.emplace_back(i, j);
    }
    const Bmo1Estimate e = bmo1_estimate(source, g, starts, 2000, 9);
    const double bound = 2.0 * 0.5 * hbmo_norm(mu, g).value * hbmo_norm(nu, g).value;
    EXPECT_GT(e.value, 0.0);
    EXPECT_LE(e.value + 3 * e.std_error, bound);
}
