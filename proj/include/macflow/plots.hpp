#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "macflow/metrics.hpp"

namespace macflow {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG 1.1 documents.
std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<Series>& series);
std::string svg_scatter(const std::string& title, const std::string& xlabel,
                        const std::string& ylabel, const std::vector<Series>& series);
// Scatter of (x, y) with the line y = slope * x drawn over the x range.
std::string svg_scatter_envelope(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel, const Series& points, double slope);
// cells[r][c] in [0, 1], annotated with their values.
std::string svg_heatmap(const std::string& title, const std::vector<std::vector<double>>& cells,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels);

void write_text_file(const std::filesystem::path& path, const std::string& text);

// Points of bounds.csv whose value gap lies above max(L_hat) * coupling_rms.
std::size_t envelope_violations(const CsvTable& bounds);

// Renders loss / gap / MI curves and the gap-vs-W2 scatter from a run
// directory's metrics.csv and bounds.csv. Inputs are read and checked before
// anything is written; returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& run_dir);

}  // namespace macflow
