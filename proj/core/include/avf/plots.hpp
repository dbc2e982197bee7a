#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avf/occlusion.hpp"

namespace avf {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

/// Minimal static SVG line chart (axes, ticks, legend). Good enough for
/// severity curves and training-loss plots without a plotting dependency.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

/// Heatmap as an SVG grid of cells; values expected in [0,1] (clamped).
void write_heatmap_svg(const std::string& path, const std::string& title,
                       const Heatmap& map);

}  // namespace avf
