#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <span>

namespace lab {

using nlohmann::json;

const char* kind_name(Kind k) noexcept {
    switch (k) {
        case Kind::kSolve: return "solve";
        case Kind::kExpand: return "expand";
        case Kind::kStability: return "stability";
        case Kind::kImpact: return "impact";
        case Kind::kImpactExpand: return "impact-expand";
        case Kind::kCounterexample: return "counterexample";
        case Kind::kNorms: return "norms";
    }
    return "?";
}

bool needs_seed(Kind k) noexcept {
    return k == Kind::kStability || k == Kind::kImpact || k == Kind::kCounterexample || k == Kind::kNorms;
}

qbsde::Grid GridConfig::build() const { return qbsde::Grid::standard(horizon, steps, space_nodes, width, core); }

qbsde::BmoConstants ExperimentConfig::constants() const {
    qbsde::BmoConstants c;
    if (kappa) {
        c.kappa = *kappa;
        c.kappa_is_default = false;
    }
    return c;
}

namespace {

// A JSON value together with its key path.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_, what); }

    void require_object() const {
        if (!j_.is_object()) fail("expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        require_object();
        for (const auto& [k, v] : j_.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
                throw ConfigError(child_path(k), "unknown key");
            }
        }
    }

    std::optional<Node> get(const std::string& key) const {
        if (!j_.contains(key)) return std::nullopt;
        return Node(j_.at(key), child_path(key));
    }

    Node need(const std::string& key) const {
        auto n = get(key);
        if (!n) throw ConfigError(child_path(key), "required key is missing");
        return *n;
    }

    Node item(std::size_t k) const { return Node(j_.at(k), path_ + "[" + std::to_string(k) + "]"); }

    double number() const {
        if (!j_.is_number()) fail("expected a number");
        const double v = j_.get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }

    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("expected a positive number");
        return v;
    }

    std::uint64_t unsigned_integer() const {
        if (j_.is_number_unsigned()) return j_.get<std::uint64_t>();
        if (j_.is_number_integer()) {
            if (j_.get<std::int64_t>() < 0) fail("expected a nonnegative integer");
            return static_cast<std::uint64_t>(j_.get<std::int64_t>());
        }
        const double v = number();
        if (v < 0.0 || v != std::floor(v) || v > 9.007199254740992e15) fail("expected a nonnegative integer");
        return static_cast<std::uint64_t>(v);
    }

    std::size_t count(std::size_t minimum = 0) const {
        const std::uint64_t v = unsigned_integer();
        if (v < minimum) fail("expected an integer >= " + std::to_string(minimum));
        return static_cast<std::size_t>(v);
    }

    bool boolean() const {
        if (!j_.is_boolean()) fail("expected true or false");
        return j_.get<bool>();
    }

    std::string string() const {
        if (!j_.is_string()) fail("expected a string");
        return j_.get<std::string>();
    }

    std::size_t size() const {
        if (!j_.is_array()) fail("expected an array");
        return j_.size();
    }

    std::vector<double> numbers() const {
        std::vector<double> out;
        for (std::size_t k = 0; k < size(); ++k) out.push_back(item(k).number());
        return out;
    }

    /// Expression given as a string or a bare number; parsed to check syntax.
    std::string expression() const {
        std::string s;
        if (j_.is_number()) {
            s = json(number()).dump();
        } else if (j_.is_string()) {
            s = j_.get<std::string>();
        } else {
            fail("expected an expression string or a number");
        }
        try {
            (void)qbsde::Expression::parse(s);
        } catch (const qbsde::ExpressionError& e) {
            fail(e.what());
        }
        return s;
    }

    /// One expression or an array of them.
    std::vector<std::string> expressions() const {
        if (!j_.is_array()) return {expression()};
        std::vector<std::string> out;
        for (std::size_t k = 0; k < j_.size(); ++k) out.push_back(item(k).expression());
        return out;
    }

private:
    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
};

Kind parse_kind(const Node& n) {
    const std::string s = n.string();
    for (Kind k : {Kind::kSolve, Kind::kExpand, Kind::kStability, Kind::kImpact, Kind::kImpactExpand,
                   Kind::kCounterexample, Kind::kNorms}) {
        if (s == kind_name(k)) return k;
    }
    n.fail("unknown experiment '" + s +
           "' (expected solve, expand, stability, impact, impact-expand, counterexample or norms)");
}

GridConfig parse_grid(const Node& n) {
    n.allow({"horizon", "steps", "space_nodes", "width", "core"});
    GridConfig g;
    if (auto v = n.get("horizon")) g.horizon = v->positive();
    if (auto v = n.get("steps")) g.steps = v->count(1);
    if (auto v = n.get("space_nodes")) {
        g.space_nodes = v->count(3);
        if (g.space_nodes % 2 == 0) v->fail("expected an odd node count");
    }
    if (auto v = n.get("width")) g.width = v->positive();
    if (auto v = n.get("core")) g.core = v->positive();
    if (g.core > g.width) n.fail("core must not exceed width");
    return g;
}

qbsde::PicardSettings parse_picard(const Node& n) {
    n.allow({"tol", "max_iterations", "blowup"});
    qbsde::PicardSettings p;
    if (auto v = n.get("tol")) p.tol = v->positive();
    if (auto v = n.get("max_iterations")) p.max_iterations = v->count(1);
    if (auto v = n.get("blowup")) p.blowup = v->positive();
    return p;
}

std::variant<double, std::string> tensor_entry(const Node& n) {
    if (n.raw().is_number()) return n.number();
    return n.expression();
}

void x_only(const Node& n, const std::vector<std::string>& e) {
    for (std::size_t c = 0; c < e.size(); ++c) {
        if (qbsde::Expression::parse(e[c]).uses_t()) {
            (n.raw().is_array() ? n.item(c) : n).fail("expected a function of x only");
        }
    }
}

BsdeConfig parse_bsde(const Node& n) {
    n.allow({"dimension", "a", "terminal", "driver"});
    BsdeConfig b;
    if (auto v = n.get("dimension")) b.dimension = v->count(1);
    if (auto v = n.get("a")) {
        b.a = v->number();
        if (b.a < 0.0) v->fail("expected a >= 0");
    }
    const Node terminal = n.need("terminal");
    b.terminal = terminal.expressions();
    x_only(terminal, b.terminal);
    if (b.terminal.size() != b.dimension) {
        terminal.fail("expected " + std::to_string(b.dimension) + " expressions, got " +
                      std::to_string(b.terminal.size()));
    }
    const Node driver = n.need("driver");
    driver.allow({"scalar", "tensor"});
    const auto scalar = driver.get("scalar");
    const auto tensor = driver.get("tensor");
    if (scalar.has_value() == tensor.has_value()) driver.fail("give exactly one of scalar or tensor");
    if (scalar) {
        if (b.dimension != 1) scalar->fail("scalar drivers need dimension 1");
        b.driver.scalar = scalar->number();
    } else {
        const std::size_t n3 = b.dimension * b.dimension * b.dimension;
        if (tensor->size() != n3) tensor->fail("expected " + std::to_string(n3) + " entries");
        for (std::size_t k = 0; k < n3; ++k) b.driver.tensor.push_back(tensor_entry(tensor->item(k)));
        const std::size_t d = b.dimension;
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t q = p + 1; q < d; ++q) {
                    const std::size_t k1 = (a * d + p) * d + q, k2 = (a * d + q) * d + p;
                    if (b.driver.tensor[k1] != b.driver.tensor[k2]) {
                        tensor->item(k2).fail("tensor must be symmetric in its last two indices (entry " +
                                              std::to_string(k1) + " differs)");
                    }
                }
            }
        }
    }
    return b;
}

ExpandConfig parse_expand(const Node& n) {
    n.allow({"order", "a"});
    ExpandConfig e;
    if (auto v = n.get("order")) e.order = v->count(1);
    if (auto v = n.get("a")) e.a = v->numbers();
    return e;
}

StabilityConfig parse_stability(const Node& n) {
    n.allow({"p", "paths", "z_samples", "epsilons", "terminal_perturbation", "driver_perturbation"});
    StabilityConfig s;
    if (auto v = n.get("p")) {
        s.p = v->number();
        if (!(s.p > 1.0)) v->fail("expected p > 1");
    }
    if (auto v = n.get("paths")) s.paths = v->count(1);
    if (auto v = n.get("z_samples")) s.z_samples = v->count(1);
    if (auto v = n.get("epsilons")) {
        s.epsilons = v->numbers();
        if (s.epsilons.size() < 3) v->fail("expected at least three perturbation sizes");
    }
    if (auto v = n.get("terminal_perturbation")) s.terminal_perturbation = v->expressions();
    if (auto v = n.get("driver_perturbation")) s.driver_perturbation = v->number();
    if (s.terminal_perturbation.empty() && s.driver_perturbation == 0.0) {
        n.fail("give terminal_perturbation, driver_perturbation or both");
    }
    return s;
}

DemandConfig parse_demand(const Node& n, std::size_t dim) {
    n.allow({"expression", "breakpoints", "levels"});
    DemandConfig d;
    const auto expr = n.get("expression");
    const auto bp = n.get("breakpoints");
    const auto lv = n.get("levels");
    if (expr.has_value() == (bp.has_value() || lv.has_value())) {
        n.fail("give either expression or breakpoints with levels");
    }
    if (expr) {
        d.expression = expr->expressions();
        if (d.expression.size() != dim) expr->fail("expected " + std::to_string(dim) + " expressions");
        return d;
    }
    if (!bp) n.need("breakpoints");
    if (!lv) n.need("levels");
    d.breakpoints = bp->numbers();
    if (d.breakpoints.size() < 2) bp->fail("expected at least two breakpoints");
    if (lv->size() + 1 != d.breakpoints.size()) lv->fail("expected one level per period");
    for (std::size_t k = 0; k < lv->size(); ++k) {
        const Node level = lv->item(k);
        auto e = level.expressions();
        if (e.size() != dim) level.fail("expected " + std::to_string(dim) + " entries");
        for (std::size_t c = 0; c < e.size(); ++c) {
            if (qbsde::Expression::parse(e[c]).uses_t()) {
                (level.raw().is_array() ? level.item(c) : level).fail("levels may depend on x only");
            }
        }
        d.levels.push_back(std::move(e));
    }
    return d;
}

ImpactConfig parse_impact(const Node& n) {
    n.allow({"n", "a", "dividend", "demand", "viability_threshold", "z_paths", "homogeneity_b", "approximations",
             "stability_paths", "oracle", "order", "evaluate_a"});
    ImpactConfig c;
    if (auto v = n.get("n")) c.n = v->count(1);
    if (auto v = n.get("a")) {
        c.a = v->number();
        if (c.a < 0.0) v->fail("expected a >= 0");
    }
    const Node dividend = n.need("dividend");
    c.dividend = dividend.expressions();
    x_only(dividend, c.dividend);
    if (c.dividend.size() != c.n) dividend.fail("expected " + std::to_string(c.n) + " expressions");
    c.demand = parse_demand(n.need("demand"), c.n);
    if (auto v = n.get("viability_threshold")) c.viability_threshold = v->number();
    if (auto v = n.get("z_paths")) c.z_paths = v->count(0);
    if (auto v = n.get("homogeneity_b")) c.homogeneity_b = v->positive();
    if (auto v = n.get("approximations")) {
        for (std::size_t k = 0; k < v->size(); ++k) c.approximations.push_back(v->item(k).count(1));
        if (!c.demand.expression.empty()) {
            for (const auto& e : c.demand.expression) {
                if (qbsde::Expression::parse(e).uses_x()) {
                    v->fail("approximations need a demand expression in t only");
                }
            }
        } else if (!c.approximations.empty()) {
            v->fail("approximations need a demand expression");
        }
    }
    if (auto v = n.get("stability_paths")) c.stability_paths = v->count(1);
    if (auto v = n.get("oracle")) c.oracle = v->boolean();
    if (auto v = n.get("order")) c.order = v->count(1);
    if (auto v = n.get("evaluate_a")) c.evaluate_a = v->numbers();
    return c;
}

CounterexampleConfig parse_counterexample(const Node& n) {
    n.allow({"paths", "dt", "a", "frontier", "halving", "divergence_a"});
    CounterexampleConfig c;
    if (auto v = n.get("paths")) c.paths = v->count(10000);
    if (auto v = n.get("dt")) {
        c.dt = v->positive();
        if (c.dt > 1e-3) v->fail("expected dt <= 1e-3");
    }
    if (auto v = n.get("a")) {
        c.a = v->numbers();
        for (std::size_t k = 0; k < c.a.size(); ++k) {
            if (c.a[k] < 0.0) v->item(k).fail("expected a >= 0");
        }
    }
    if (auto v = n.get("frontier")) {
        for (std::size_t k = 0; k < v->size(); ++k) {
            const Node p = v->item(k);
            p.allow({"a", "T"});
            FrontierPoint f{p.need("a").positive(), p.need("T").number()};
            if (!(f.maturity > 1.0)) p.need("T").fail("expected T > 1");
            c.frontier.push_back(f);
        }
    }
    if (auto v = n.get("halving")) c.halving = v->boolean();
    if (auto v = n.get("divergence_a")) c.divergence_a = v->positive();
    return c;
}

NormsConfig parse_norms(const Node& n) {
    n.allow({"p", "paths"});
    NormsConfig c;
    if (auto v = n.get("p")) {
        c.p = v->numbers();
        for (std::size_t k = 0; k < c.p.size(); ++k) {
            if (!(c.p[k] > 1.0)) v->item(k).fail("expected p > 1");
        }
    }
    if (auto v = n.get("paths")) c.paths = v->count(1);
    return c;
}

json expressions_json(const std::vector<std::string>& e) { return json(e); }

}  // namespace

ExperimentConfig parse_config(const json& j) {
    const Node root(j, "");
    if (!j.is_object()) throw ConfigError("$", "expected a JSON object");
    root.allow({"experiment", "seed", "output", "threads", "grid", "picard", "bmo", "bsde", "expand", "stability",
                "impact", "counterexample", "norms"});
    ExperimentConfig c;
    c.kind = parse_kind(root.need("experiment"));
    if (auto v = root.get("seed")) c.seed = v->unsigned_integer();
    if (auto v = root.get("output")) c.output = v->string();
    if (auto v = root.get("threads")) c.threads = v->count(0);
    if (auto v = root.get("grid")) c.grid = parse_grid(*v);
    if (auto v = root.get("picard")) c.picard = parse_picard(*v);
    if (auto v = root.get("bmo")) {
        v->allow({"kappa"});
        c.kappa = v->need("kappa").positive();
    }
    if (auto v = root.get("bsde")) c.bsde = parse_bsde(*v);
    if (auto v = root.get("expand")) c.expand = parse_expand(*v);
    if (auto v = root.get("stability")) c.stability = parse_stability(*v);
    if (auto v = root.get("impact")) c.impact = parse_impact(*v);
    if (auto v = root.get("counterexample")) c.counterexample = parse_counterexample(*v);
    if (auto v = root.get("norms")) c.norms = parse_norms(*v);

    switch (c.kind) {
        case Kind::kSolve:
        case Kind::kExpand:
        case Kind::kNorms:
            if (!c.bsde) root.need("bsde");
            break;
        case Kind::kStability:
            if (!c.bsde) root.need("bsde");
            if (!root.get("stability")) root.need("stability");
            break;
        case Kind::kImpact:
        case Kind::kImpactExpand:
            if (!c.impact) root.need("impact");
            break;
        case Kind::kCounterexample:
            break;
    }
    if (c.impact) {
        for (std::size_t k = 0; k < c.impact->approximations.size(); ++k) {
            if (c.grid.steps % c.impact->approximations[k] != 0) {
                throw ConfigError("impact.approximations[" + std::to_string(k) + "]",
                                  "mesh count must divide grid.steps so that breakpoints fall on grid nodes");
            }
        }
    }
    if (needs_seed(c.kind) && !c.seed) {
        throw ConfigError("seed", std::string("required for the ") + kind_name(c.kind) + " experiment");
    }
    // model objects are built once here so that grid-dependent errors also carry a key
    try {
        (void)c.grid.build();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("grid", e.what());
    }
    if (c.impact && (c.kind == Kind::kImpact || c.kind == Kind::kImpactExpand)) {
        try {
            build_market(c).validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError("impact.demand", e.what());
        }
    }
    if (c.bsde && c.kind != Kind::kImpact && c.kind != Kind::kImpactExpand && c.kind != Kind::kCounterexample) {
        try {
            build_bsde(c).validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("bsde", e.what());
        }
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("$", "cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("$", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = kind_name(c.kind);
    if (c.seed) j["seed"] = *c.seed;
    j["output"] = c.output;
    j["threads"] = c.threads;
    j["grid"] = {{"horizon", c.grid.horizon},
                 {"steps", c.grid.steps},
                 {"space_nodes", c.grid.space_nodes},
                 {"width", c.grid.width},
                 {"core", c.grid.core}};
    j["picard"] = {{"tol", c.picard.tol}, {"max_iterations", c.picard.max_iterations}, {"blowup", c.picard.blowup}};
    if (c.kappa) j["bmo"] = {{"kappa", *c.kappa}};
    if (c.bsde) {
        json driver;
        if (c.bsde->driver.scalar) {
            driver["scalar"] = *c.bsde->driver.scalar;
        } else {
            json t = json::array();
            for (const auto& e : c.bsde->driver.tensor) {
                if (std::holds_alternative<double>(e)) t.push_back(std::get<double>(e));
                else t.push_back(std::get<std::string>(e));
            }
            driver["tensor"] = t;
        }
        j["bsde"] = {{"dimension", c.bsde->dimension},
                     {"a", c.bsde->a},
                     {"terminal", expressions_json(c.bsde->terminal)},
                     {"driver", driver}};
    }
    j["expand"] = {{"order", c.expand.order}, {"a", c.expand.a}};
    if (c.kind == Kind::kStability) {
        json s = {{"p", c.stability.p},
                  {"paths", c.stability.paths},
                  {"z_samples", c.stability.z_samples},
                  {"epsilons", c.stability.epsilons},
                  {"driver_perturbation", c.stability.driver_perturbation}};
        if (!c.stability.terminal_perturbation.empty()) {
            s["terminal_perturbation"] = expressions_json(c.stability.terminal_perturbation);
        }
        j["stability"] = s;
    }
    if (c.impact) {
        const ImpactConfig& m = *c.impact;
        json demand;
        if (!m.demand.expression.empty()) {
            demand["expression"] = expressions_json(m.demand.expression);
        } else {
            demand["breakpoints"] = m.demand.breakpoints;
            demand["levels"] = m.demand.levels;
        }
        json i = {{"n", m.n},
                  {"a", m.a},
                  {"dividend", expressions_json(m.dividend)},
                  {"demand", demand},
                  {"viability_threshold", m.viability_threshold},
                  {"z_paths", m.z_paths},
                  {"approximations", m.approximations},
                  {"stability_paths", m.stability_paths},
                  {"oracle", m.oracle},
                  {"order", m.order},
                  {"evaluate_a", m.evaluate_a}};
        if (m.homogeneity_b) i["homogeneity_b"] = *m.homogeneity_b;
        j["impact"] = i;
    }
    if (c.kind == Kind::kCounterexample) {
        json f = json::array();
        for (const auto& p : c.counterexample.frontier) f.push_back({{"a", p.a}, {"T", p.maturity}});
        j["counterexample"] = {{"paths", c.counterexample.paths},
                               {"dt", c.counterexample.dt},
                               {"a", c.counterexample.a},
                               {"frontier", f},
                               {"halving", c.counterexample.halving},
                               {"divergence_a", c.counterexample.divergence_a}};
    }
    if (c.kind == Kind::kNorms) j["norms"] = {{"p", c.norms.p}, {"paths", c.norms.paths}};
    return j;
}

qbsde::TerminalMap terminal_map(const std::vector<std::string>& expressions) {
    std::vector<qbsde::Expression> e;
    for (const auto& s : expressions) e.push_back(qbsde::Expression::parse(s));
    return [e](double x, std::span<double> out) {
        for (std::size_t c = 0; c < e.size(); ++c) out[c] = e[c](x);
    };
}

qbsde::BSDESpec build_bsde(const ExperimentConfig& c) {
    if (!c.bsde) throw ConfigError("bsde", "required key is missing");
    const BsdeConfig& b = *c.bsde;
    const qbsde::Grid grid = c.grid.build();
    qbsde::Driver driver = qbsde::BilinearDriver::scalar(1.0);
    if (b.driver.scalar) {
        driver = qbsde::BilinearDriver::scalar(*b.driver.scalar);
    } else {
        std::vector<qbsde::Expression> entries;
        for (const auto& e : b.driver.tensor) {
            entries.push_back(qbsde::Expression::parse(std::holds_alternative<double>(e)
                                                           ? json(std::get<double>(e)).dump()
                                                           : std::get<std::string>(e)));
        }
        const bool constant = std::none_of(entries.begin(), entries.end(),
                                           [](const auto& e) { return e.uses_x() || e.uses_t(); });
        try {
            if (constant) {
                std::vector<double> t;
                for (const auto& e : entries) t.push_back(e(0.0, 0.0));
                driver = qbsde::BilinearDriver::constant(b.dimension, t);
            } else {
                qbsde::GridFunction field = qbsde::GridFunction::zeros(grid, entries.size());
                for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
                    for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
                        for (std::size_t k = 0; k < entries.size(); ++k) {
                            field(i, j, k) = entries[k](grid.space.x(j), grid.time.time(i));
                        }
                    }
                }
                driver = qbsde::BilinearDriver::field(b.dimension, field);
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError("bsde.driver.tensor", e.what());
        }
    }
    return qbsde::BSDESpec{b.dimension, driver, terminal_map(b.terminal), grid};
}

qbsde::MarketSpec build_market(const ExperimentConfig& c) {
    if (!c.impact) throw ConfigError("impact", "required key is missing");
    const ImpactConfig& m = *c.impact;
    const qbsde::Grid grid = c.grid.build();
    qbsde::MarketSpec market;
    market.n = m.n;
    market.a = m.a;
    market.grid = grid;
    market.dividend = terminal_map(m.dividend);
    if (!m.demand.expression.empty()) {
        std::vector<qbsde::Expression> e;
        for (const auto& s : m.demand.expression) e.push_back(qbsde::Expression::parse(s));
        qbsde::GridFunction gamma = qbsde::GridFunction::zeros(grid, m.n);
        for (std::size_t i = 0; i < grid.time.nodes(); ++i) {
            for (std::size_t j = 0; j < grid.space.nodes(); ++j) {
                for (std::size_t k = 0; k < m.n; ++k) gamma(i, j, k) = e[k](grid.space.x(j), grid.time.time(i));
            }
        }
        market.demand = std::move(gamma);
    } else {
        qbsde::SimpleDemand d;
        d.breakpoints = m.demand.breakpoints;
        bool state = false;
        std::vector<std::vector<qbsde::Expression>> levels;
        for (const auto& row : m.demand.levels) {
            std::vector<qbsde::Expression> r;
            for (const auto& s : row) {
                r.push_back(qbsde::Expression::parse(s));
                state = state || r.back().uses_x();
            }
            levels.push_back(std::move(r));
        }
        for (const auto& row : levels) {
            if (state) {
                d.state_levels.push_back([row](double x, std::span<double> out) {
                    for (std::size_t k = 0; k < row.size(); ++k) out[k] = row[k](x);
                });
            } else {
                std::vector<double> v;
                for (const auto& e : row) v.push_back(e(0.0));
                d.levels.push_back(std::move(v));
            }
        }
        market.demand = std::move(d);
    }
    return market;
}

}  // namespace lab
