#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace crm {

struct PlotSeries {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
};

// Minimal static SVG line chart with axes, ticks and a legend.
std::string render_line_plot_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series);
void write_line_plot_svg(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<PlotSeries>& series);

}  // namespace crm
