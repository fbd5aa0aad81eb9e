#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace phaseflow::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
  bool markers = false;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<std::pair<double, std::string>> vertical_markers;  // dashed verticals with labels
  bool log_y = false;
};

/// Static SVG line chart with axes, ticks and a legend. Non-finite points
/// (and non-positive ones on a log axis) break the polyline.
std::string render_svg(const LinePlot& plot);

void write_svg(const LinePlot& plot, const std::filesystem::path& path);

}  // namespace phaseflow::harness
