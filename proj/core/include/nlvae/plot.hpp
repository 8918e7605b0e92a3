#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace nlvae {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 720;
  int height = 420;
};

/// Standalone SVG document with one polyline per series and a legend.
std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& options);

struct Bar {
  std::string label;
  double value = 0;
};

std::string bar_chart_svg(const std::vector<Bar>& bars, const ChartOptions& options);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nlvae
