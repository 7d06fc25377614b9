#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace scsam {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOutput {
  std::vector<std::filesystem::path> images;
  std::vector<std::string> warnings;
};

// Line chart of every non-empty series, drawn with OpenCV and written as PNG.
void line_plot(const std::filesystem::path& path, const std::string& title, const std::vector<Series>& series,
               const std::string& x_label = "step");

// Bars with +-std whiskers, one per label.
void bar_plot(const std::filesystem::path& path, const std::string& title, const std::vector<std::string>& labels,
              const std::vector<double>& means, const std::vector<double>& stds);

// Columns of a CSV with a header row. Empty or non-numeric cells are skipped
// per column, so sparse columns keep only the rows where they are present.
std::map<std::string, Series> read_csv_series(const std::filesystem::path& path, const std::string& x_column = "step");

// plots/losses.png, plots/omega.png, plots/validation_overlap.png and
// plots/validation_distance.png from losses.csv and validation.csv.
PlotOutput emit_plots(const std::filesystem::path& run_dir);

}  // namespace scsam
