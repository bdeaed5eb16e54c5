#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "experiments.hpp"
#include "output.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qbsde_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

json gaussian_solve() {
    return {{"experiment", "solve"},
            {"grid", {{"steps", 40}, {"space_nodes", 121}}},
            {"bsde", {{"a", 0.3}, {"terminal", "x"}, {"driver", {{"scalar", 2.0}}}}}};
}

std::string schema_error(const json& j) {
    try {
        lab::parse_config(j);
    } catch (const lab::ConfigError& e) {
        return e.path();
    }
    return "";
}

int run(const fs::path& config, const fs::path& out, std::string* err_text = nullptr, bool plots = false) {
    std::ostringstream o, e;
    lab::Overrides ov;
    ov.out = out.string();
    ov.plots = plots;
    const int rc = lab::run_command(config.string(), ov, o, e);
    if (err_text) *err_text = e.str();
    return rc;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

}  // namespace

TEST(Config, ErrorsNameTheKeyPath) {
    json j = gaussian_solve();
    j["bsde"]["terminal"] = "x +";
    EXPECT_EQ(schema_error(j), "bsde.terminal");
    j["bsde"]["terminal"] = {"x + t"};
    EXPECT_EQ(schema_error(j), "bsde.terminal[0]");
    j = gaussian_solve();
    j["grid"]["space_nodes"] = 200;
    EXPECT_EQ(schema_error(j), "grid.space_nodes");
    j = gaussian_solve();
    j["bsde"]["drvier"] = 1;
    EXPECT_EQ(schema_error(j), "bsde.drvier");
    j = gaussian_solve();
    j["bsde"]["driver"] = {{"tensor", {1.0, 0.5}}};
    EXPECT_EQ(schema_error(j), "bsde.driver.tensor");
    j = gaussian_solve();
    j["bsde"]["dimension"] = 2;
    j["bsde"]["terminal"] = {"x", "sin(x)"};
    j["bsde"]["driver"] = {{"tensor", {1, 0.5, 0.2, 0, 0, 0, 0, 1}}};
    EXPECT_EQ(schema_error(j), "bsde.driver.tensor[2]");
    j = gaussian_solve();
    j["experiment"] = "counterexample";
    EXPECT_EQ(schema_error(j), "seed");
    j = gaussian_solve();
    j.erase("experiment");
    EXPECT_EQ(schema_error(j), "experiment");
    j = {{"experiment", "impact"}, {"seed", 1}, {"grid", {{"steps", 60}}},
         {"impact", {{"dividend", "x"}, {"demand", {{"expression", "t"}}}, {"approximations", {2, 4, 8}}}}};
    EXPECT_EQ(schema_error(j), "impact.approximations[2]");
    j["impact"]["demand"] = {{"breakpoints", {0, 0.3, 1}}, {"levels", {1, 2, 3}}};
    j["impact"].erase("approximations");
    EXPECT_EQ(schema_error(j), "impact.demand.levels");
}

TEST(Config, ResolvedConfigRoundTrips) {
    for (const json& j :
         {gaussian_solve(),
          json{{"experiment", "impact"},
               {"seed", 4},
               {"impact", {{"dividend", "x"}, {"demand", {{"breakpoints", {0, 0.5, 1}}, {"levels", {1, "sign(x)"}}}}}}},
          json{{"experiment", "counterexample"}, {"seed", 2}, {"counterexample", {{"frontier", {{{"a", 1}, {"T", 4}}}}}}},
          json{{"experiment", "stability"},
               {"seed", 2},
               {"bsde", {{"terminal", "sin(x)"}, {"driver", {{"scalar", 1}}}}},
               {"stability", {{"terminal_perturbation", "cos(x)"}, {"driver_perturbation", 0.5}}}}}) {
        const json once = lab::to_json(lab::parse_config(j));
        EXPECT_EQ(lab::to_json(lab::parse_config(once)), once) << once.dump();
    }
}

TEST(Config, FieldDriverFromExpressions) {
    json j = gaussian_solve();
    j["bsde"]["driver"] = {{"tensor", {"2 + 0*t*x"}}};
    const auto spec = lab::build_bsde(lab::parse_config(j));
    EXPECT_FALSE(std::get<qbsde::BilinearDriver>(spec.driver).is_constant());
    j["bsde"]["driver"] = {{"tensor", {"4/2"}}};
    EXPECT_TRUE(std::get<qbsde::BilinearDriver>(lab::build_bsde(lab::parse_config(j)).driver).is_constant());
}

TEST(Cli, GaussianSolveGivesTheClosedFormAndManifest) {
    const fs::path dir = scratch("solve");
    ASSERT_EQ(run(write_config(dir, gaussian_solve()), dir / "out", nullptr, true), 0);
    // Y(0, 0) = c a^2 T / 2
    const json s = read_json(dir / "out" / "summary.json");
    EXPECT_NEAR(s["y0"][0].get<double>(), 2.0 * 0.09 / 2.0, 1e-12);
    const json m = read_json(dir / "out" / "manifest.json");
    EXPECT_EQ(m["experiment"], "solve");
    EXPECT_EQ(m["config_sha256"].get<std::string>().size(), 64u);
    EXPECT_NO_THROW(lab::parse_config(m["config"]));
    EXPECT_EQ(m["config_sha256"], lab::sha256_hex(m["config"].dump()));
    bool svg = false;
    for (const auto& f : m["outputs"]) svg = svg || f["file"] == "picard.svg";
    EXPECT_TRUE(svg);
    std::ifstream csv(dir / "out" / "solution.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "t,x,y,zeta");
}

TEST(Cli, MalformedConfigExitsTwoNamingTheKey) {
    const fs::path dir = scratch("malformed");
    json j = gaussian_solve();
    j["grid"]["steps"] = -3;
    std::string err;
    EXPECT_EQ(run(write_config(dir, j), dir / "out", &err), lab::kSchema);
    EXPECT_NE(err.find("grid.steps"), std::string::npos);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_EQ(run(dir / "broken.json", dir / "out", &err), lab::kSchema);
    EXPECT_EQ(run(dir / "missing.json", dir / "out", &err), lab::kSchema);
}

TEST(Cli, IdenticalConfigsGiveIdenticalCsvBytes) {
    const fs::path dir = scratch("determinism");
    const json j = {{"experiment", "stability"},
                    {"seed", 7},
                    {"grid", {{"steps", 20}, {"space_nodes", 101}}},
                    {"bsde", {{"a", 0.5}, {"terminal", "sin(x)"}, {"driver", {{"scalar", 1}}}}},
                    {"stability", {{"paths", 500}, {"z_samples", 8}, {"terminal_perturbation", "cos(x)"}}}};
    const fs::path cfg = write_config(dir, j);
    ASSERT_EQ(run(cfg, dir / "a"), 0);
    ASSERT_EQ(run(cfg, dir / "b"), 0);
    const json ma = read_json(dir / "a" / "manifest.json");
    const json mb = read_json(dir / "b" / "manifest.json");
    EXPECT_EQ(ma["outputs"], mb["outputs"]);
    EXPECT_EQ(ma["seed"], mb["seed"]);
}

TEST(Cli, DivergenceExitsThreeWithReport) {
    const fs::path dir = scratch("diverge");
    json j = gaussian_solve();
    j["bsde"]["terminal"] = "x^2";
    j["bsde"]["a"] = 0.9;
    j["picard"] = {{"max_iterations", 30}};
    std::string err;
    EXPECT_EQ(run(write_config(dir, j), dir / "out", &err), lab::kDiverged);
    EXPECT_TRUE(fs::exists(dir / "out" / "divergence.json"));
    EXPECT_EQ(read_json(dir / "out" / "manifest.json")["status"], "diverged");
    std::ostringstream o, e;
    EXPECT_EQ(lab::report_command((dir / "out").string(), o, e), 0);
    EXPECT_NE(o.str().find("diverged"), std::string::npos);
}

TEST(Report, EmptyDirectoryIsAnError) {
    const fs::path dir = scratch("empty");
    std::ostringstream o, e;
    EXPECT_NE(lab::report_command(dir.string(), o, e), 0);
    EXPECT_NE(e.str().find("manifest"), std::string::npos);
}

TEST(Report, StabilityShowsTheSlope) {
    const fs::path dir = scratch("report_stability");
    const json j = {{"experiment", "stability"},
                    {"seed", 7},
                    {"grid", {{"steps", 20}, {"space_nodes", 101}}},
                    {"bsde", {{"a", 0.5}, {"terminal", "sin(x)"}, {"driver", {{"scalar", 1}}}}},
                    {"stability", {{"paths", 500}, {"z_samples", 8}, {"terminal_perturbation", "cos(x)"}}}};
    ASSERT_EQ(run(write_config(dir, j), dir / "out"), 0);
    std::ostringstream o, e;
    ASSERT_EQ(lab::report_command((dir / "out").string(), o, e), 0);
    EXPECT_NE(o.str().find("slope_hp"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "out" / "report.md"));
}

TEST(Report, CounterexampleRowsCarryVerdicts) {
    const fs::path dir = scratch("report_counterexample");
    const json j = {{"experiment", "counterexample"},
                    {"seed", 3},
                    {"counterexample",
                     {{"paths", 10000}, {"dt", 1e-3}, {"a", {0.25, 0.5, 1.2}}, {"frontier", {{{"a", 0.5}, {"T", 2}}}}}}};
    ASSERT_EQ(run(write_config(dir, j), dir / "out"), 0);
    std::ostringstream o, e;
    ASSERT_EQ(lab::report_command((dir / "out").string(), o, e), 0);
    const std::string text = o.str();
    EXPECT_NE(text.find("| 0.25 |"), std::string::npos);
    EXPECT_NE(text.find("PASS"), std::string::npos);
    EXPECT_NE(text.find("n/a (infinite)"), std::string::npos);
    EXPECT_NE(text.find("| 0.5 | 2 | 0.353553 | yes |"), std::string::npos);
}

TEST(Output, FormattingIsShortestRoundTrip) {
    EXPECT_EQ(lab::fmt(0.1), "0.1");
    EXPECT_EQ(lab::fmt(1.0 / 3.0), "0.3333333333333333");
    EXPECT_EQ(lab::fmt(1e-20), "1e-20");
    EXPECT_EQ(lab::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string svg = lab::svg_plot({"t", "x", "y", true, true}, {{"s", {1, 10}, {1, 100}}});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}
