#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/grid.hpp"
#include "qbsde/grid_function.hpp"

namespace lab {

/// Shortest round-trip decimal form; locale independent.
std::string fmt(double v);

/// Hex SHA-256 of a byte string or a file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes text with LF line endings; throws std::runtime_error on I/O failure.
void write_text(const std::filesystem::path& path, const std::string& text);

/// One row per grid node: t, x, then every component of every field as
/// name (one component) or name_k.
struct NamedField {
    std::string name;
    const qbsde::GridFunction* field;
};
std::string grid_csv(const qbsde::Grid& grid, const std::vector<NamedField>& fields);

/// Row-wise CSV from a header and numeric rows.
std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers = true;  ///< points; false draws a line
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

/// Minimal standalone SVG line/scatter plot.
std::string svg_plot(const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace lab
