#include <CLI11.hpp>

#include <iostream>

#include "experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"qbsde_lab: quadratic BSDE experiments"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool plots = false;
    auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    run->add_option("config", config, "config file")->required();
    auto* out_opt = run->add_option("--out", out, "output directory (overrides the config)");
    auto* seed_opt = run->add_option("--seed", seed, "random seed (overrides the config)");
    auto* threads_opt = run->add_option("--threads", threads, "worker threads, 0 = all cores");
    run->add_flag("--plots", plots, "also write SVG plots");

    std::string directory;
    auto* report = app.add_subcommand("report", "summarise a finished run");
    report->add_option("directory", directory, "output directory of a run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : lab::kSchema;
    }
    if (*run) {
        lab::Overrides o;
        if (*out_opt) o.out = out;
        if (*seed_opt) o.seed = seed;
        if (*threads_opt) o.threads = threads;
        o.plots = plots;
        return lab::run_command(config, o, std::cout, std::cerr);
    }
    return lab::report_command(directory, std::cout, std::cerr);
}
