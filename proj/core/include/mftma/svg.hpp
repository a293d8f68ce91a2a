#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mftma::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // css color; chosen from the palette when empty
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  bool log_y = false;
};

/// Deterministic line chart: same inputs, byte-identical file. Series with
/// no points are skipped; returns the names of the skipped series.
std::vector<std::string> write_line_chart(const std::filesystem::path& path,
                                          const std::vector<Series>& series,
                                          const ChartOptions& options);

/// Colored grid (rows x cols) with per-cell values, for ratio tables.
void write_grid_chart(const std::filesystem::path& path,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const std::vector<std::vector<double>>& values,
                      const ChartOptions& options);

/// Fixed palette: analysis subsets always map to the same colors, in the
/// order unpermuted, permuted, restored, test.
std::string subset_color(const std::string& subset_name);

}  // namespace mftma::svg
