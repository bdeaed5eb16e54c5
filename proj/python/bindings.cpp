#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qbsde/bmo.hpp"
#include "qbsde/bsde.hpp"
#include "qbsde/counterexample.hpp"
#include "qbsde/expression.hpp"
#include "qbsde/impact.hpp"
#include "qbsde/parallel.hpp"

namespace py = pybind11;
using namespace qbsde;

namespace {

using Formulas = std::variant<std::string, std::vector<std::string>>;
using DriverArg = std::variant<double, std::vector<double>>;

std::vector<Expression> parse_all(const Formulas& f) {
    std::vector<Expression> out;
    if (const auto* s = std::get_if<std::string>(&f)) {
        out.push_back(Expression::parse(*s));
    } else {
        for (const auto& e : std::get<std::vector<std::string>>(f)) out.push_back(Expression::parse(e));
    }
    return out;
}

TerminalMap state_map(const Formulas& f) {
    auto e = parse_all(f);
    return [e](double x, std::span<double> out) {
        for (std::size_t c = 0; c < e.size(); ++c) out[c] = e[c](x);
    };
}

// (nt, m, nx) copy; GridFunction storage is already time, component, space
py::array_t<double> to_numpy(const GridFunction& g) {
    py::array_t<double> a({g.time_nodes(), g.components(), g.space_nodes()});
    std::copy(g.values().begin(), g.values().end(), a.mutable_data());
    return a;
}

GridFunction from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw std::invalid_argument("expected an array of shape (time, component, space)");
    GridFunction g(a.shape(0), a.shape(2), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), g.values().begin());
    return g;
}

BSDESpec make_spec(const Grid& grid, const Formulas& terminal, const DriverArg& driver) {
    const std::size_t n = parse_all(terminal).size();
    BilinearDriver d = std::holds_alternative<double>(driver)
                           ? BilinearDriver::scalar(std::get<double>(driver))
                           : BilinearDriver::constant(n, std::get<std::vector<double>>(driver));
    BSDESpec spec{n, d, state_map(terminal), grid};
    spec.validate();
    return spec;
}

py::dict solution_dict(const Solution& s) {
    py::dict d;
    d["y"] = to_numpy(s.y);
    d["zeta"] = to_numpy(s.zeta);
    d["iterations"] = s.iterations;
    d["residual"] = s.residual;
    d["gradient_gap"] = s.gradient_gap;
    d["hbmo_zeta"] = s.hbmo_zeta.value;
    d["change_history"] = s.change_history;
    d["warnings"] = s.warnings;
    return d;
}

MarketSpec make_market(const Grid& grid, const Formulas& dividend, double a, const std::optional<Formulas>& demand,
                       const std::optional<std::vector<double>>& breakpoints,
                       const std::optional<std::vector<std::vector<double>>>& levels) {
    MarketSpec m;
    m.n = parse_all(dividend).size();
    m.dividend = state_map(dividend);
    m.a = a;
    m.grid = grid;
    if (demand.has_value() == breakpoints.has_value() || breakpoints.has_value() != levels.has_value()) {
        throw std::invalid_argument("give either demand or breakpoints with levels");
    }
    if (demand) {
        const auto e = parse_all(*demand);
        GridFunction g = GridFunction::zeros(grid, e.size());
        for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
            for (std::size_t c = 0; c < e.size(); ++c) {
                for (std::size_t j = 0; j < grid.space.nodes(); ++j) g(i, j, c) = e[c](grid.space.x(j), grid.time.time(i));
            }
        }
        m.demand = std::move(g);
    } else {
        m.demand = SimpleDemand{*breakpoints, *levels, {}};
    }
    m.validate();
    return m;
}

py::dict prices_dict(const PriceSystem& p) {
    py::dict d;
    d["s"] = to_numpy(p.s);
    d["sigma"] = to_numpy(p.sigma);
    d["alpha"] = to_numpy(p.alpha);
    d["r"] = to_numpy(p.r);
    d["breakpoint_nodes"] = p.breakpoint_nodes;
    d["z_mass_error"] = p.z.grid_mass_error;
    d["z_drift"] = p.z.grid_drift_s;
    d["viable"] = p.viability.viable;
    d["viability_product"] = p.viability.product;
    d["warnings"] = p.warnings;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Quadratic BSDE solver, bmo norms, price impact and the exit-time counterexample";

    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
    py::register_exception<ExpressionError>(m, "ExpressionError", PyExc_ValueError);

    m.def("set_threads", &set_threads, py::arg("n"));
    m.def("threads", &threads);

    py::class_<Grid>(m, "Grid")
        .def(py::init(&Grid::standard), py::arg("horizon") = 1.0, py::arg("steps") = 200,
             py::arg("space_nodes") = 401, py::arg("width") = 6.0, py::arg("core") = 4.0)
        .def_property_readonly("t", [](const Grid& g) {
            py::array_t<double> t(std::vector<py::ssize_t>{static_cast<py::ssize_t>(g.time.nodes())});
            double* p = t.mutable_data();
            for (std::size_t i = 0; i < g.time.nodes(); ++i) p[i] = g.time.time(i);
            return t;
        })
        .def_property_readonly("x", [](const Grid& g) {
            py::array_t<double> x(std::vector<py::ssize_t>{static_cast<py::ssize_t>(g.space.nodes())});
            double* p = x.mutable_data();
            for (std::size_t j = 0; j < g.space.nodes(); ++j) p[j] = g.space.x(j);
            return x;
        })
        .def_property_readonly("core_range", &Grid::core_range)
        .def_property_readonly("centre", [](const Grid& g) { return g.space.centre(); });

    m.def("evaluate", [](const std::string& formula, double x, double t) { return Expression::parse(formula)(x, t); },
          py::arg("formula"), py::arg("x"), py::arg("t") = 0.0);

    m.def(
        "solve",
        [](const Grid& grid, const Formulas& terminal, const DriverArg& driver, double a, double tol,
           std::size_t max_iterations) {
            const BSDESpec spec = make_spec(grid, terminal, driver);
            PicardSettings settings{tol, max_iterations};
            Solution s;
            {
                py::gil_scoped_release release;
                s = picard_solve(spec, a, settings);
            }
            return solution_dict(s);
        },
        py::arg("grid"), py::arg("terminal"), py::arg("driver"), py::arg("a"), py::arg("tol") = 1e-8,
        py::arg("max_iterations") = 200,
        "Picard solution on the grid. driver is c (f = c z^2 / 2) or a flat n^3 tensor.");

    m.def(
        "expansion",
        [](const Grid& grid, const Formulas& terminal, const DriverArg& driver, std::size_t order,
           std::optional<double> kappa) {
            const BSDESpec spec = make_spec(grid, terminal, driver);
            BmoConstants c;
            if (kappa) c.kappa = *kappa, c.kappa_is_default = false;
            std::shared_ptr<const ExpansionSeries> e;
            {
                py::gil_scoped_release release;
                e = std::make_shared<const ExpansionSeries>(expansion(spec, order, c));
            }
            py::dict d;
            py::list ys, zs;
            for (const auto& y : e->y) ys.append(to_numpy(y));
            for (const auto& z : e->zeta) zs.append(to_numpy(z));
            d["y"] = ys;
            d["zeta"] = zs;
            d["norms"] = e->coeff_hbmo_norms;
            d["l_norm"] = e->l_norm;
            d["rho"] = e->rho;
            d["rho_heuristic"] = e->rho_heuristic;
            d["radius_sum"] = e->radius_sum();
            d["empirical_radius"] = e->empirical_radius;
            d["partial_sum"] = py::cpp_function([e](double a, std::size_t k) {
                return solution_dict(evaluate_series(*e, a, k));
            }, py::arg("a"), py::arg("order") = 0);
            return d;
        },
        py::arg("grid"), py::arg("terminal"), py::arg("driver"), py::arg("order") = 6, py::arg("kappa") = py::none());

    m.def(
        "hbmo_norm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& zeta, const Grid& grid, bool core) {
            const GridFunction g = from_numpy(zeta);
            if (!g.fits(grid)) throw std::invalid_argument("zeta does not fit the grid");
            return hbmo_norm(g, grid, core ? Region::kCore : Region::kFull).value;
        },
        py::arg("zeta"), py::arg("grid"), py::arg("core") = false);

    m.def(
        "terminal_bmo_norm",
        [](const Grid& grid, const Formulas& terminal, bool core) {
            const auto e = parse_all(terminal);
            std::vector<double> h(e.size() * grid.space.nodes());
            for (std::size_t c = 0; c < e.size(); ++c) {
                for (std::size_t j = 0; j < grid.space.nodes(); ++j) h[c * grid.space.nodes() + j] = e[c](grid.space.x(j));
            }
            return terminal_bmo_norm(h, e.size(), grid, core ? Region::kCore : Region::kFull).value;
        },
        py::arg("grid"), py::arg("terminal"), py::arg("core") = false);

    m.def(
        "solve_prices",
        [](const Grid& grid, const Formulas& dividend, double a, std::optional<Formulas> demand,
           std::optional<std::vector<double>> breakpoints, std::optional<std::vector<std::vector<double>>> levels,
           std::size_t z_paths, std::uint64_t seed) {
            const MarketSpec market = make_market(grid, dividend, a, demand, breakpoints, levels);
            ZCheckOptions z{z_paths > 0, z_paths, seed};
            PriceSystem p;
            {
                py::gil_scoped_release release;
                p = solve_prices(market, {}, z);
            }
            return prices_dict(p);
        },
        py::arg("grid"), py::arg("dividend"), py::arg("a"), py::arg("demand") = py::none(),
        py::arg("breakpoints") = py::none(), py::arg("levels") = py::none(), py::arg("z_paths") = 0,
        py::arg("seed") = 7);

    m.def(
        "simple_demand_oracle",
        [](const Grid& grid, const Formulas& dividend, double a, std::vector<double> breakpoints,
           std::vector<std::vector<double>> levels) {
            const MarketSpec market = make_market(grid, dividend, a, std::nullopt, breakpoints, levels);
            PriceSystem p;
            {
                py::gil_scoped_release release;
                p = simple_demand_oracle(market);
            }
            return prices_dict(p);
        },
        py::arg("grid"), py::arg("dividend"), py::arg("a"), py::arg("breakpoints"), py::arg("levels"));

    m.def(
        "homogeneity",
        [](const Grid& grid, const Formulas& dividend, double a, const Formulas& demand, double b) {
            const MarketSpec market = make_market(grid, dividend, a, demand, std::nullopt, std::nullopt);
            py::gil_scoped_release release;
            return homogeneity_report(market, b).max_deviation();
        },
        py::arg("grid"), py::arg("dividend"), py::arg("a"), py::arg("demand"), py::arg("b"));

    m.def("exp_moment_closed_form", &exp_moment_closed_form, py::arg("a"));
    m.def(
        "exp_moment",
        [](const std::vector<double>& a, std::uint64_t seed, std::size_t paths, double dt) {
            ExitSample sample;
            {
                py::gil_scoped_release release;
                sample = exit_time_samples(seed, paths, dt, false);
            }
            py::list rows;
            for (double v : a) {
                const ExpMoment e = exp_moment(v, sample);
                py::dict d;
                d["a"] = e.a;
                d["estimate"] = e.estimate;
                d["stderr"] = e.std_error;
                d["closed_form"] = e.closed_form;
                d["divergent"] = e.divergent;
                d["heavy_tail"] = e.heavy_tail;
                d["within_3se"] = e.within(3.0);
                rows.append(d);
            }
            return rows;
        },
        py::arg("a"), py::arg("seed"), py::arg("paths") = 100000, py::arg("dt") = 1e-3,
        "Monte Carlo E[exp(a^2 s / 2)] for the time-changed exit s, one shared sample for all a.");
    m.def(
        "solvability_frontier",
        [](double a, double T) {
            const FrontierVerdict f = solvability_frontier(a, T);
            py::dict d;
            d["bmo_norm"] = f.bmo_norm;
            d["criterion"] = f.criterion;
            d["solvable"] = f.solvable;
            return d;
        },
        py::arg("a"), py::arg("T"));
    m.def("frontier_maturity", &frontier_maturity, py::arg("a"));
}
