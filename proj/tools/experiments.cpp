#include "experiments.hpp"

#include <boost/version.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "output.hpp"
#include "qbsde/counterexample.hpp"
#include "qbsde/numerics.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/stability.hpp"

namespace lab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json norm_json(const qbsde::NormValue& v) { return {{"value", v.value}, {"t", v.t_argmax}, {"x", v.x_argmax}}; }

// Collects the files of one run.
class Sink {
public:
    Sink(fs::path dir, bool plots) : dir_(std::move(dir)), plots_(plots) {}

    void text(const std::string& name, const std::string& body) {
        write_text(dir_ / name, body);
        files_.push_back(name);
    }
    void plot(const std::string& name, const PlotSpec& spec, const std::vector<Series>& series) {
        if (plots_) text(name, svg_plot(spec, series));
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

    std::vector<std::string> files() const { return files_; }

private:
    fs::path dir_;
    bool plots_;
    std::vector<std::string> files_;
};

double core_gap_at(const qbsde::GridFunction& a, const qbsde::GridFunction& b, const qbsde::Grid& grid,
                   std::size_t i) {
    const auto [lo, hi] = grid.core_range();
    double gap = 0.0;
    for (std::size_t c = 0; c < a.components(); ++c) {
        for (std::size_t j = lo; j < hi; ++j) gap = std::max(gap, std::abs(a(i, j, c) - b(i, j, c)));
    }
    return gap;
}

json solution_summary(const qbsde::Solution& s, const qbsde::Grid& grid) {
    json y0 = json::array();
    for (std::size_t c = 0; c < s.y.components(); ++c) y0.push_back(s.y(0, grid.space.centre(), c));
    return {{"iterations", s.iterations},        {"residual", s.residual},
            {"gradient_gap", s.gradient_gap},    {"hbmo_zeta", norm_json(s.hbmo_zeta)},
            {"contraction", s.contraction},      {"y0", y0},
            {"warnings", s.warnings}};
}

void solve(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::BSDESpec spec = build_bsde(c);
    const double a = c.bsde->a;
    const qbsde::Solution s = qbsde::picard_solve(spec, a, c.picard);
    const qbsde::ResidualReport res = qbsde::residual(spec, s.y, s.zeta, a);
    sink.text("solution.csv", grid_csv(spec.grid, {{"y", &s.y}, {"zeta", &s.zeta}}));
    r.summary = solution_summary(s, spec.grid);
    r.summary["a"] = a;
    r.summary["defect"] = res.defect;
    r.summary["terminal_gap"] = res.terminal_gap;
    std::vector<double> it, ch;
    for (std::size_t k = 0; k < s.change_history.size(); ++k) {
        it.push_back(static_cast<double>(k + 1));
        ch.push_back(s.change_history[k]);
    }
    sink.plot("picard.svg", {"Picard change per sweep", "sweep", "sup change", false, true}, {{"change", it, ch}});
}

void expand(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::BSDESpec spec = build_bsde(c);
    const qbsde::ExpansionSeries series = qbsde::expansion(spec, c.expand.order, c.constants());
    std::vector<std::vector<double>> norms;
    for (std::size_t k = 1; k <= series.order(); ++k) {
        sink.text("coefficient_" + std::to_string(k) + ".csv",
                  grid_csv(spec.grid, {{"y", &series.y[k - 1]}, {"zeta", &series.zeta[k - 1]}}));
        norms.push_back({static_cast<double>(k), series.coeff_hbmo_norms[k - 1]});
    }
    sink.text("coefficient_norms.csv", table_csv({"k", "hbmo"}, norms));

    std::vector<double> points = c.expand.a.empty() ? std::vector<double>{c.bsde->a} : c.expand.a;
    std::vector<std::vector<double>> rows;
    json ratios = json::array();
    std::vector<Series> curves;
    for (double a : points) {
        const qbsde::Solution picard = qbsde::picard_solve(spec, a, c.picard);
        Series curve{"a = " + fmt(a), {}, {}};
        double last = 0.0;
        double worst_ratio = 0.0;
        for (std::size_t k = 1; k <= series.order(); ++k) {
            const qbsde::Solution partial = qbsde::evaluate_series(series, a, k);
            const double ez = qbsde::sup_distance(picard.zeta, partial.zeta, spec.grid);
            const double ey = qbsde::sup_distance(picard.y, partial.y, spec.grid);
            rows.push_back({a, static_cast<double>(k), ez, ey});
            curve.x.push_back(static_cast<double>(k));
            curve.y.push_back(ez);
            if (k > 1 && last > 0.0) worst_ratio = std::max(worst_ratio, ez / last);
            last = ez;
        }
        ratios.push_back({{"a", a}, {"max_error_ratio", worst_ratio}});
        curves.push_back(std::move(curve));
    }
    sink.text("partial_sums.csv", table_csv({"a", "order", "zeta_error", "y_error"}, rows));
    sink.plot("partial_sums.svg", {"Partial-sum error against the Picard solution", "order K", "sup |zeta error|",
                                   false, true},
              curves);
    const double bound = 1.0 / (4.0 * series.constants.kappa * series.constants.theta);
    r.summary = {{"order", series.order()},
                 {"l_norm", series.l_norm},
                 {"rho", series.rho},
                 {"rho_heuristic", series.rho_heuristic},
                 {"empirical_radius", series.empirical_radius},
                 {"radius_sum", series.radius_sum()},
                 {"radius_bound", bound},
                 {"radius_bound_holds", series.radius_sum() <= bound},
                 {"error_ratios", ratios}};
}

qbsde::BSDESpec perturbed(const qbsde::BSDESpec& base, const StabilityConfig& s, double eps) {
    qbsde::BSDESpec p = base;
    if (!s.terminal_perturbation.empty()) {
        const qbsde::TerminalMap h = base.terminal;
        const qbsde::TerminalMap dh = terminal_map(s.terminal_perturbation);
        const std::size_t n = base.dimension;
        p.terminal = [h, dh, eps, n](double x, std::span<double> out) {
            std::vector<double> d(n);
            h(x, out);
            dh(x, d);
            for (std::size_t k = 0; k < n; ++k) out[k] += eps * d[k];
        };
    }
    if (s.driver_perturbation != 0.0) {
        p.driver = std::get<qbsde::BilinearDriver>(base.driver).scaled(1.0 + eps * s.driver_perturbation);
    }
    return p;
}

void stability(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::BSDESpec base = build_bsde(c);
    std::vector<std::pair<double, qbsde::PerturbationPair>> family;
    for (double eps : c.stability.epsilons) {
        family.emplace_back(eps, qbsde::PerturbationPair{base, perturbed(base, c.stability, eps), {}, c.stability.p});
    }
    qbsde::CompareOptions options;
    options.paths = c.stability.paths;
    options.seed = *c.seed;
    options.z_samples = c.stability.z_samples;
    const qbsde::DecayTable table = qbsde::decay_study(family, c.bsde->a, c.picard, options);
    std::ostringstream csv;
    table.write_csv(csv);
    sink.text("decay.csv", csv.str());

    Series measured{"||d zeta||_Hp", {}, {}}, reference{"slope 1", {}, {}, false};
    std::size_t diverged = 0;
    for (const auto& row : table.rows) {
        if (row.report.diverged) ++diverged;
        const double rhs = row.report.terminal_lp + row.report.delta_h2p;
        if (row.eps > 0 && !row.report.diverged) {
            measured.x.push_back(rhs);
            measured.y.push_back(row.report.lhs_hp);
            reference.x.push_back(rhs);
            reference.y.push_back(rhs);
        }
    }
    sink.plot("decay.svg", {"Stability decay", "||dL_T||_p + ||sqrt(delta) zeta||^2", "||d zeta||_Hp", true, true},
              {measured, reference});
    r.summary = {{"slope_hp", table.slope_hp},
                 {"slope_hbmo", table.slope_hbmo},
                 {"ratio_spread", table.ratio_spread},
                 {"diverged_rows", diverged},
                 {"p", c.stability.p}};
    if (diverged == table.rows.size()) {
        r.exit_code = kDiverged;
        r.status = "diverged";
        sink.json_file("divergence.json", {{"message", table.rows.front().report.divergence}});
    }
}

json viability_json(const qbsde::ViabilityReport& v) {
    return {{"product", v.product},           {"threshold", v.threshold},   {"margin", v.margin},
            {"demand_sup", v.demand_sup},     {"dividend_bmo", v.dividend_bmo}, {"viable", v.viable},
            {"heuristic", v.heuristic}};
}

json z_json(const qbsde::ZDiagnostics& z) {
    return {{"grid_mass_error", z.grid_mass_error}, {"grid_drift_s", z.grid_drift_s},
            {"grid_drift_gamma_s", z.grid_drift_gamma_s}, {"paths", z.paths},
            {"z_mean", z.z_mean}, {"z_stderr", z.z_stderr},
            {"zs_gap", z.zs_gap}, {"zs_stderr", z.zs_stderr},
            {"zgs_gap", z.zgs_gap}, {"zgs_stderr", z.zgs_stderr},
            {"pass95", z.pass95}};
}

std::string price_csv(const qbsde::Grid& g, const qbsde::PriceSystem& p) {
    return grid_csv(g, {{"S", &p.s}, {"sigma", &p.sigma}, {"alpha", &p.alpha}, {"R", &p.r}, {"eta", &p.eta},
                        {"theta", &p.theta}});
}

std::string breakpoint_csv(const qbsde::Grid& g, const qbsde::PriceSystem& p) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i : p.breakpoint_nodes) {
        for (std::size_t j = 0; j < g.space.nodes(); ++j) {
            std::vector<double> row{g.time.time(i), g.space.x(j)};
            for (std::size_t c = 0; c < p.s.components(); ++c) row.push_back(p.s(i, j, c));
            row.push_back(p.r(i, j));
            rows.push_back(std::move(row));
        }
    }
    std::vector<std::string> header{"t", "x"};
    for (std::size_t c = 0; c < p.s.components(); ++c) {
        header.push_back(p.s.components() == 1 ? "S" : "S_" + std::to_string(c));
    }
    header.push_back("R");
    return table_csv(header, rows);
}

void impact(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::MarketSpec market = build_market(c);
    const ImpactConfig& ic = *c.impact;
    const auto* simple = std::get_if<qbsde::SimpleDemand>(&market.demand);
    r.summary = json::object();
    r.summary["viability"] =
        viability_json(qbsde::check_viability_bound(market, c.constants(), ic.viability_threshold));

    std::optional<qbsde::PriceSystem> oracle;
    if (simple && (ic.oracle || simple->state_dependent())) {
        oracle = qbsde::simple_demand_oracle(market);
        sink.text("oracle_breakpoints.csv", breakpoint_csv(market.grid, *oracle));
    }
    if (simple && simple->state_dependent()) {
        r.summary["note"] = "state-dependent levels: prices from backward induction at breakpoints only";
        return;
    }

    qbsde::ZCheckOptions z;
    z.enabled = ic.z_paths > 0;
    z.paths = std::max<std::size_t>(ic.z_paths, 1);
    z.seed = *c.seed;
    const qbsde::PriceSystem prices = qbsde::solve_prices(market, c.picard, z);
    sink.text("prices.csv", price_csv(market.grid, prices));
    r.summary["iterations"] = prices.solution.iterations;
    r.summary["residual"] = prices.solution.residual;
    r.summary["z"] = z_json(prices.z);
    r.summary["warnings"] = prices.warnings;
    json s0 = json::array();
    for (std::size_t k = 0; k < market.n; ++k) s0.push_back(prices.s(0, market.grid.space.centre(), k));
    r.summary["s0"] = s0;
    if (oracle) {
        double gap = 0.0;
        for (std::size_t i : oracle->breakpoint_nodes) gap = std::max(gap, core_gap_at(prices.s, oracle->s, market.grid, i));
        r.summary["oracle_gap"] = gap;
    }
    if (ic.homogeneity_b) {
        const qbsde::HomogeneityReport h = qbsde::homogeneity_report(market, *ic.homogeneity_b, c.picard);
        r.summary["homogeneity"] = {{"b", h.b},
                                    {"s_demand_vs_aversion", h.s_demand_vs_aversion},
                                    {"s_aversion_vs_dividend", h.s_aversion_vs_dividend},
                                    {"alpha_demand_vs_aversion", h.alpha_demand_vs_aversion},
                                    {"alpha_aversion_vs_dividend", h.alpha_aversion_vs_dividend},
                                    {"sigma_demand_vs_aversion", h.sigma_demand_vs_aversion},
                                    {"sigma_aversion_vs_dividend", h.sigma_aversion_vs_dividend},
                                    {"max_deviation", h.max_deviation()},
                                    {"failed", h.failed},
                                    {"failure", h.failure}};
    }
    if (!ic.approximations.empty()) {
        std::vector<qbsde::Expression> e;
        for (const auto& s : ic.demand.expression) e.push_back(qbsde::Expression::parse(s));
        std::vector<qbsde::MarketSpec> markets;
        const double horizon = market.grid.time.horizon();
        for (std::size_t m : ic.approximations) {
            qbsde::SimpleDemand d;
            for (std::size_t k = 0; k <= m; ++k) d.breakpoints.push_back(horizon * static_cast<double>(k) / m);
            for (std::size_t k = 0; k < m; ++k) {
                std::vector<double> level;
                for (const auto& ex : e) level.push_back(ex(0.0, d.breakpoints[k]));
                d.levels.push_back(std::move(level));
            }
            qbsde::MarketSpec mk = market;
            mk.demand = std::move(d);
            markets.push_back(std::move(mk));
        }
        qbsde::DemandStabilityOptions o;
        o.paths = ic.stability_paths;
        o.seed = *c.seed;
        o.settings = c.picard;
        const auto rows = qbsde::demand_stability(markets, market, o);
        std::ostringstream csv;
        qbsde::write_stability_csv(rows, csv);
        sink.text("demand_stability.csv", csv.str());
        json shrink = json::array();
        Series curve{"combined norm", {}, {}};
        for (std::size_t k = 0; k < rows.size(); ++k) {
            curve.x.push_back(1.0 / static_cast<double>(ic.approximations[k]));
            curve.y.push_back(rows[k].combined);
            if (k > 0) shrink.push_back(rows[k - 1].combined / rows[k].combined);
        }
        r.summary["demand_stability_shrink"] = shrink;
        sink.plot("demand_stability.svg", {"Demand approximation", "mesh", "combined norm", true, true}, {curve});
    }
}

void impact_expand(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::MarketSpec market = build_market(c);
    const qbsde::Grid& g = market.grid;
    const qbsde::ImpactSeries series = qbsde::impact_expansion(market, c.impact->order, c.constants());
    for (std::size_t k = 1; k <= series.order(); ++k) {
        sink.text("impact_order_" + std::to_string(k) + ".csv",
                  grid_csv(g, {{"S", &series.price[k - 1]}, {"R", &series.reserve[k - 1]}, {"zeta", &series.zeta[k - 1]}}));
    }
    const qbsde::GridFunction lead = qbsde::leading_term(market);
    r.summary = {{"order", series.order()},
                 {"rho", series.rho},
                 {"leading_term_gap", qbsde::sup_distance(lead, series.price.front(), g)}};
    std::vector<double> points = c.impact->evaluate_a.empty() ? std::vector<double>{market.a} : c.impact->evaluate_a;
    std::vector<std::vector<double>> rows;
    for (double a : points) {
        qbsde::MarketSpec m = market;
        m.a = a;
        qbsde::ZCheckOptions z;
        z.enabled = false;
        const qbsde::PriceSystem solved = qbsde::solve_prices(m, c.picard, z);
        const qbsde::PriceSystem summed = qbsde::evaluate_impact_series(series, a);
        rows.push_back({a, qbsde::sup_distance(solved.s, summed.s, g), qbsde::sup_distance(solved.sigma, summed.sigma, g),
                        qbsde::sup_distance(solved.alpha, summed.alpha, g)});
    }
    sink.text("series_vs_solve.csv", table_csv({"a", "s_gap", "sigma_gap", "alpha_gap"}, rows));
}

void counterexample(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const CounterexampleConfig& cc = c.counterexample;
    const qbsde::ExitSample sample = qbsde::exit_time_samples(*c.seed, cc.paths, cc.dt);
    std::vector<qbsde::ExpMoment> moments;
    json warnings = json::array();
    for (double a : cc.a) {
        moments.push_back(qbsde::exp_moment(a, sample));
        for (const auto& w : moments.back().warnings) warnings.push_back(w);
    }
    std::ostringstream csv;
    qbsde::write_exp_moment_csv(moments, csv);
    sink.text("exp_moment.csv", csv.str());

    std::vector<std::vector<double>> frontier;
    for (const auto& p : cc.frontier) {
        const qbsde::FrontierVerdict v = qbsde::solvability_frontier(p.a, p.maturity);
        frontier.push_back({v.a, v.maturity, v.bmo_norm, v.zeta1, v.criterion, v.margin, v.solvable ? 1.0 : 0.0});
    }
    if (!frontier.empty()) {
        sink.text("frontier.csv",
                  table_csv({"a", "T", "bmo_norm", "zeta1", "criterion", "margin", "solvable"}, frontier));
    }

    const qbsde::RunningMean rm = qbsde::running_mean(cc.divergence_a, sample);
    std::vector<std::vector<double>> running;
    for (std::size_t k = 0; k < rm.counts.size(); ++k) running.push_back({static_cast<double>(rm.counts[k]), rm.means[k]});
    sink.text("running_mean.csv", table_csv({"count", "mean"}, running));

    if (cc.halving) {
        std::vector<std::vector<double>> rows;
        for (const auto& h : qbsde::halving_bias(*c.seed, cc.paths, cc.dt, cc.a)) {
            rows.push_back({h.a, h.coarse, h.fine, h.difference});
        }
        sink.text("halving.csv", table_csv({"a", "dt", "dt_half", "difference"}, rows));
    }

    const qbsde::SampleStats mean = qbsde::sample_stats(sample.values);
    r.summary = {{"paths", sample.npaths},
                 {"dt", sample.dt},
                 {"resampled", sample.resampled},
                 {"mean_exit_time", mean.mean},
                 {"mean_exit_time_stderr", mean.std_error},
                 {"tail_rate", qbsde::exit_tail_rate(sample)},
                 {"divergence_a", cc.divergence_a},
                 {"running_mean_max_change", rm.max_change},
                 {"running_mean_unstable", rm.unstable},
                 {"warnings", warnings}};

    Series est{"estimate", {}, {}}, curve{"1/cos(a pi/2)", {}, {}, false};
    for (const auto& m : moments) {
        if (std::isfinite(m.closed_form)) {
            est.x.push_back(m.a);
            est.y.push_back(m.estimate);
        }
    }
    const double top = std::min(0.95, cc.a.empty() ? 0.95 : *std::max_element(cc.a.begin(), cc.a.end()));
    for (int k = 0; k <= 100; ++k) {
        const double a = top * k / 100.0;
        curve.x.push_back(a);
        curve.y.push_back(qbsde::exp_moment_closed_form(a));
    }
    sink.plot("exp_moment.svg", {"Exponential moment of the exit time", "a", "E[exp(a^2 s / 2)]", false, false},
              {est, curve});
}

void norms(const ExperimentConfig& c, Sink& sink, RunResult& r) {
    const qbsde::BSDESpec spec = build_bsde(c);
    const double a = c.bsde->a;
    const qbsde::Solution s = qbsde::picard_solve(spec, a, c.picard);
    qbsde::GridFunction drift = qbsde::driver_field(spec.driver, s.zeta, spec.grid);
    drift *= -1.0;
    const qbsde::PathBundle paths = qbsde::sample_paths(*c.seed, c.norms.paths, spec.grid.time);
    const qbsde::NormReport report = qbsde::semimartingale_norms({&s.y, &s.zeta, &drift}, c.norms.p, paths,
                                                                 spec.grid, qbsde::Region::kCore);
    std::vector<double> terminal = spec.terminal_values();
    for (double& v : terminal) v *= a;
    const qbsde::NormValue tb = qbsde::terminal_bmo_norm(terminal, spec.dimension, spec.grid, qbsde::Region::kCore);
    std::ostringstream csv;
    csv << "quantity,value,t_argmax,x_argmax\n";
    report.write_csv_rows(csv);
    csv << "terminal_bmo," << fmt(tb.value) << ',' << fmt(tb.t_argmax) << ',' << fmt(tb.x_argmax) << '\n';
    sink.text("norms.csv", csv.str());
    r.summary = solution_summary(s, spec.grid);
    r.summary["sbmo"] = report.sbmo;
    r.summary["terminal_bmo"] = norm_json(tb);
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    fs::create_directories(options.out);
    Sink sink(options.out, options.plots);
    RunResult r;
    try {
        switch (config.kind) {
            case Kind::kSolve: solve(config, sink, r); break;
            case Kind::kExpand: expand(config, sink, r); break;
            case Kind::kStability: stability(config, sink, r); break;
            case Kind::kImpact: impact(config, sink, r); break;
            case Kind::kImpactExpand: impact_expand(config, sink, r); break;
            case Kind::kCounterexample: counterexample(config, sink, r); break;
            case Kind::kNorms: norms(config, sink, r); break;
        }
    } catch (const qbsde::DivergenceError& e) {
        r.exit_code = kDiverged;
        r.status = "diverged";
        r.summary = {{"message", e.what()}, {"changes", e.changes()}, {"norms", e.norms()}};
        sink.json_file("divergence.json", r.summary);
        r.files = sink.files();
        return r;
    }
    sink.json_file("summary.json", r.summary);
    r.files = sink.files();
    return r;
}

int run_command(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig config;
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("$", "cannot open config file '" + config_path + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("$", std::string("not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ConfigError("$", "expected a JSON object");
        if (overrides.seed) j["seed"] = *overrides.seed;
        if (overrides.out) j["output"] = *overrides.out;
        if (overrides.threads) j["threads"] = *overrides.threads;
        config = parse_config(j);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kSchema;
    }
    qbsde::set_threads(config.threads);
    const fs::path dir = config.output;
    RunResult result;
    try {
        result = run_experiment(config, {dir, overrides.plots});
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kSchema;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        result.exit_code = kFailure;
        result.status = std::string("failed: ") + e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const json resolved = to_json(config);
    json files = json::array();
    for (const auto& f : result.files) {
        files.push_back({{"file", f}, {"sha256", sha256_file(dir / f)}, {"bytes", fs::file_size(dir / f)}});
    }
    const json manifest = {{"tool", "qbsde_lab"},
                           {"version", QBSDE_VERSION},
                           {"experiment", kind_name(config.kind)},
                           {"config", resolved},
                           {"config_sha256", sha256_hex(resolved.dump())},
                           {"config_path", config_path},
                           {"seed", config.seed ? json(*config.seed) : json(nullptr)},
                           {"threads", qbsde::threads()},
                           {"wall_time_seconds", wall},
                           {"started_utc", utc_now()},
                           {"versions",
                            {{"compiler", __VERSION__},
                             {"cplusplus", __cplusplus},
                             {"boost", BOOST_LIB_VERSION},
                             {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                           {"status", result.status},
                           {"exit_code", result.exit_code},
                           {"outputs", files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    out << kind_name(config.kind) << ": " << result.status << " (" << fmt(std::round(wall * 100) / 100) << " s), "
        << result.files.size() << " files in " << dir.string() << '\n';
    if (result.exit_code == kDiverged) err << "solver diverged; see " << (dir / "divergence.json").string() << '\n';
    return result.exit_code;
}

}  // namespace lab
