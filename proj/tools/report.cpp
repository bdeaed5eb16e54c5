#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "experiments.hpp"
#include "output.hpp"

namespace lab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::ptrdiff_t column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) return static_cast<std::ptrdiff_t>(k);
        }
        return -1;
    }
    double value(std::size_t row, const std::string& name) const {
        const auto c = column(name);
        if (c < 0 || static_cast<std::size_t>(c) >= rows[row].size()) return std::nan("");
        const std::string& s = rows[row][static_cast<std::size_t>(c)];
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        double v = std::nan("");
        std::from_chars(s.data(), s.data() + s.size(), v);
        return v;
    }
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

std::optional<Table> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    Table t;
    std::string line;
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line)) {
        if (!line.empty()) t.rows.push_back(split(line));
    }
    return t;
}

std::optional<json> read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
}

std::string g(double v) {
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
}

std::string g(const json& j) {
    if (j.is_number()) return g(j.get<double>());
    if (j.is_null()) return "n/a";
    return j.dump();
}

std::string verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

void kv(std::ostream& o, const json& s, const char* key, const char* label = nullptr) {
    if (s.contains(key)) o << "| " << (label ? label : key) << " | " << g(s.at(key)) << " |\n";
}

void body(std::ostream& o, const std::string& kind, const fs::path& dir, const json& s) {
    o << "| quantity | value |\n|---|---|\n";
    if (kind == "solve" || kind == "norms") {
        for (const char* k : {"iterations", "residual", "gradient_gap", "contraction", "defect", "terminal_gap", "sbmo"}) {
            kv(o, s, k);
        }
        if (s.contains("y0")) o << "| Y(0, 0) | " << g(s["y0"]) << " |\n";
        if (s.contains("hbmo_zeta")) o << "| Hbmo norm of zeta | " << g(s["hbmo_zeta"]["value"]) << " |\n";
        if (s.contains("terminal_bmo")) o << "| bmo norm of a Xi | " << g(s["terminal_bmo"]["value"]) << " |\n";
        if (auto t = read_csv(dir / "norms.csv")) {
            o << "\n| norm | value |\n|---|---|\n";
            for (std::size_t r = 0; r < t->rows.size(); ++r) o << "| " << t->rows[r][0] << " | " << g(t->value(r, "value")) << " |\n";
        }
    } else if (kind == "expand") {
        for (const char* k : {"order", "l_norm", "rho", "empirical_radius", "radius_sum", "radius_bound"}) kv(o, s, k);
        if (s.contains("radius_bound_holds")) o << "| partial-sum bound | " << verdict(s["radius_bound_holds"].get<bool>()) << " |\n";
        for (const auto& r : s.value("error_ratios", json::array())) {
            const double ratio = r["max_error_ratio"].get<double>();
            o << "| geometric decay at a = " << g(r["a"]) << " (max ratio " << g(ratio) << ") | "
              << verdict(ratio < 1.0) << " |\n";
        }
    } else if (kind == "stability") {
        for (const char* k : {"slope_hp", "slope_hbmo", "ratio_spread", "diverged_rows"}) kv(o, s, k);
        if (auto t = read_csv(dir / "decay.csv")) {
            o << "\n| eps | lhs_hp | terminal_lp | delta_h2p | ratio_hp | slope_hp |\n|---|---|---|---|---|---|\n";
            for (std::size_t r = 0; r < t->rows.size(); ++r) {
                o << "| " << g(t->value(r, "eps")) << " | " << g(t->value(r, "lhs_hp")) << " | "
                  << g(t->value(r, "terminal_lp")) << " | " << g(t->value(r, "delta_h2p")) << " | "
                  << g(t->value(r, "ratio_hp")) << " | " << g(t->value(r, "slope_hp")) << " |\n";
            }
            if (s.contains("slope_hp")) {
                o << "\nslope within 1 +- 0.1: " << verdict(std::abs(s["slope_hp"].get<double>() - 1.0) <= 0.1)
                  << "; ratio spread within 5: " << verdict(s.value("ratio_spread", INFINITY) <= 5.0) << '\n';
            }
        }
    } else if (kind == "impact") {
        if (s.contains("viability")) {
            const json& v = s["viability"];
            o << "| viability product | " << g(v["product"]) << " |\n| threshold | " << g(v["threshold"])
              << " |\n| viable (sufficient) | " << (v["viable"].get<bool>() ? "yes" : "no") << " |\n";
        }
        for (const char* k : {"iterations", "residual", "oracle_gap"}) kv(o, s, k);
        if (s.contains("oracle_gap")) {
            o << "| oracle agreement (1e-3) | " << verdict(s["oracle_gap"].get<double>() <= 1e-3) << " |\n";
        }
        if (s.contains("z")) {
            o << "| Z mass error | " << g(s["z"]["grid_mass_error"]) << " |\n| Z path check (95%) | "
              << verdict(s["z"]["pass95"].get<bool>()) << " |\n";
        }
        if (s.contains("homogeneity")) {
            const double d = s["homogeneity"]["max_deviation"].get<double>();
            o << "| homogeneity max deviation | " << g(d) << " |\n| homogeneity (1e-8) | " << verdict(d <= 1e-8)
              << " |\n";
        }
        if (s.contains("demand_stability_shrink")) {
            bool ok = true;
            for (const auto& f : s["demand_stability_shrink"]) ok = ok && f.get<double>() >= 1.5;
            o << "| demand stability shrink factors | " << g(s["demand_stability_shrink"]) << " |\n"
              << "| shrink >= 1.5 per halving | " << verdict(ok) << " |\n";
        }
    } else if (kind == "impact-expand") {
        for (const char* k : {"order", "rho", "leading_term_gap"}) kv(o, s, k);
        if (auto t = read_csv(dir / "series_vs_solve.csv")) {
            o << "\n| a | S gap | sigma gap | alpha gap |\n|---|---|---|---|\n";
            for (std::size_t r = 0; r < t->rows.size(); ++r) {
                o << "| " << g(t->value(r, "a")) << " | " << g(t->value(r, "s_gap")) << " | "
                  << g(t->value(r, "sigma_gap")) << " | " << g(t->value(r, "alpha_gap")) << " |\n";
            }
        }
    } else if (kind == "counterexample") {
        for (const char* k : {"paths", "dt", "resampled", "mean_exit_time", "mean_exit_time_stderr", "tail_rate",
                              "running_mean_max_change"}) {
            kv(o, s, k);
        }
        if (s.contains("running_mean_unstable")) {
            o << "| running mean at a = " << g(s["divergence_a"]) << " | "
              << (s["running_mean_unstable"].get<bool>() ? "does not stabilise" : "stable") << " |\n";
        }
        if (auto t = read_csv(dir / "exp_moment.csv")) {
            o << "\n| a | estimate | stderr | closed form | verdict (3 stderr) |\n|---|---|---|---|---|\n";
            for (std::size_t r = 0; r < t->rows.size(); ++r) {
                const double cf = t->value(r, "closed_form");
                const std::string v = std::isfinite(cf) ? verdict(t->value(r, "margin") >= 0.0) : "n/a (infinite)";
                o << "| " << g(t->value(r, "a")) << " | " << g(t->value(r, "estimate")) << " | "
                  << g(t->value(r, "stderr")) << " | " << g(cf) << " | " << v << " |\n";
            }
        }
        if (auto t = read_csv(dir / "frontier.csv")) {
            o << "\n| a | T | a(T-1)/sqrt(T) | solvable |\n|---|---|---|---|\n";
            for (std::size_t r = 0; r < t->rows.size(); ++r) {
                o << "| " << g(t->value(r, "a")) << " | " << g(t->value(r, "T")) << " | "
                  << g(t->value(r, "criterion")) << " | " << (t->value(r, "solvable") > 0.5 ? "yes" : "no") << " |\n";
            }
        }
    }
}

}  // namespace

int report_command(const std::string& directory, std::ostream& out, std::ostream& err) {
    const fs::path dir(directory);
    const auto manifest = read_json(dir / "manifest.json");
    if (!manifest) {
        err << "report: no readable manifest.json in '" << directory << "'\n";
        return kFailure;
    }
    const json& m = *manifest;
    const std::string kind = m.value("experiment", "?");
    std::ostringstream o;
    o << "# " << kind << " run\n\n";
    o << "- status: " << m.value("status", "?") << '\n';
    o << "- config sha256: " << m.value("config_sha256", "?") << '\n';
    o << "- seed: " << g(m.value("seed", json(nullptr))) << '\n';
    o << "- wall time: " << g(m.value("wall_time_seconds", json(nullptr))) << " s\n\n";
    if (const auto d = read_json(dir / "divergence.json")) {
        o << "Solver diverged: " << d->value("message", "") << "\n";
    } else if (const auto s = read_json(dir / "summary.json")) {
        body(o, kind, dir, *s);
        if (s->contains("warnings") && !(*s)["warnings"].empty()) {
            o << "\nwarnings:\n";
            for (const auto& w : (*s)["warnings"]) o << "- " << w.get<std::string>() << '\n';
        }
    }
    o << "\noutputs:";
    for (const auto& f : m.value("outputs", json::array())) o << ' ' << f.value("file", "");
    o << '\n';
    out << o.str();
    write_text(dir / "report.md", o.str());
    return kOk;
}

}  // namespace lab
