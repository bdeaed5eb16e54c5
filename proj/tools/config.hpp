#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qbsde/bmo.hpp"
#include "qbsde/bsde.hpp"
#include "qbsde/expression.hpp"
#include "qbsde/grid.hpp"
#include "qbsde/impact.hpp"

namespace lab {

/// Schema violation; path is a JSON pointer-like key path such as "bsde.terminal[1]".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

enum class Kind { kSolve, kExpand, kStability, kImpact, kImpactExpand, kCounterexample, kNorms };

const char* kind_name(Kind k) noexcept;
bool needs_seed(Kind k) noexcept;

struct GridConfig {
    double horizon = 1.0;
    std::size_t steps = 200;
    std::size_t space_nodes = 401;
    double width = 6.0;
    double core = 4.0;
    qbsde::Grid build() const;
};

/// Driver given as f~(u, v) = c u v / 2 (n = 1) or as an n^3 tensor whose
/// entries are numbers or expressions in (x, t).
struct DriverConfig {
    std::optional<double> scalar;
    std::vector<std::variant<double, std::string>> tensor;
};

struct BsdeConfig {
    std::size_t dimension = 1;
    double a = 0.1;
    std::vector<std::string> terminal;
    DriverConfig driver;
};

struct ExpandConfig {
    std::size_t order = 6;
    std::vector<double> a;  ///< evaluation points; empty means bsde.a
};

struct StabilityConfig {
    double p = 2.0;
    std::size_t paths = 20000;
    std::size_t z_samples = 64;
    std::vector<double> epsilons{0.0, 1e-1, 1e-2, 1e-3};
    std::vector<std::string> terminal_perturbation;  ///< Xi' = Xi + eps * this
    double driver_perturbation = 0.0;                ///< f' = (1 + eps * this) f
};

struct DemandConfig {
    std::vector<std::string> expression;            ///< gamma(t, x), n entries
    std::vector<double> breakpoints;                ///< simple demand
    std::vector<std::vector<std::string>> levels;   ///< per period, n entries each (number or expression in x)
};

struct ImpactConfig {
    std::size_t n = 1;
    double a = 0.1;
    std::vector<std::string> dividend;
    DemandConfig demand;
    double viability_threshold = 0.0;
    std::size_t z_paths = 20000;
    std::optional<double> homogeneity_b;
    std::vector<std::size_t> approximations;  ///< mesh counts m for demand stability
    std::size_t stability_paths = 20000;
    bool oracle = true;                       ///< compare with backward induction for simple demands
    std::size_t order = 4;                    ///< impact-expand
    std::vector<double> evaluate_a;           ///< impact-expand: partial sums at these a
};

struct FrontierPoint {
    double a = 0.0;
    double maturity = 0.0;
};

struct CounterexampleConfig {
    std::size_t paths = 1000000;
    double dt = 1e-4;
    std::vector<double> a{0.25, 0.5, 0.75};
    std::vector<FrontierPoint> frontier;
    bool halving = false;
    double divergence_a = 1.05;
};

struct NormsConfig {
    std::vector<double> p{2.0, 4.0};
    std::size_t paths = 20000;
};

struct ExperimentConfig {
    Kind kind = Kind::kSolve;
    std::optional<std::uint64_t> seed;
    std::string output = "out";
    std::size_t threads = 0;
    GridConfig grid;
    qbsde::PicardSettings picard;
    std::optional<double> kappa;

    std::optional<BsdeConfig> bsde;
    ExpandConfig expand;
    StabilityConfig stability;
    std::optional<ImpactConfig> impact;
    CounterexampleConfig counterexample;
    NormsConfig norms;

    qbsde::BmoConstants constants() const;
};

/// Validates and converts; throws ConfigError naming the first bad key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Fully resolved configuration (defaults made explicit); parse_config accepts it.
nlohmann::json to_json(const ExperimentConfig& c);

/// Model objects built from a validated configuration.
qbsde::BSDESpec build_bsde(const ExperimentConfig& c);
qbsde::MarketSpec build_market(const ExperimentConfig& c);
qbsde::TerminalMap terminal_map(const std::vector<std::string>& expressions);

}  // namespace lab
