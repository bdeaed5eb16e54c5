#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace lab {

enum ExitCode : int { kOk = 0, kFailure = 1, kSchema = 2, kDiverged = 3 };

struct RunOptions {
    std::filesystem::path out;
    bool plots = false;
};

struct RunResult {
    int exit_code = kOk;
    std::string status = "ok";
    std::vector<std::string> files;  ///< relative to the output directory, in write order
    nlohmann::json summary;
};

/// Runs one experiment and writes its CSVs, summary.json and optional plots
/// into options.out (created if needed). Solver divergence writes
/// divergence.json and returns kDiverged.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool plots = false;
};

/// The `run` command: load, apply overrides, validate, run, write manifest.json.
/// Messages go to the given streams; returns the process exit code.
int run_command(const std::string& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err);

/// The `report` command: summarises a finished run and writes report.md.
int report_command(const std::string& directory, std::ostream& out, std::ostream& err);

}  // namespace lab
