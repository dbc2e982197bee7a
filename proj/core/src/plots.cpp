#include "avf/plots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kMarginL = 60, kMarginR = 140, kMarginT = 40, kMarginB = 50;

const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % 8];
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("write_line_chart: no series");
  double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) throw std::invalid_argument("write_line_chart: no points");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double plot_w = kWidth - kMarginL - kMarginR;
  const double plot_h = kHeight - kMarginT - kMarginB;
  auto px = [&](double x) { return kMarginL + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) {
    return kHeight - kMarginB - (y - ymin) / (ymax - ymin) * plot_h;
  };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='"
      << kHeight << "' font-family='sans-serif' font-size='12'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-size='15'>"
      << title << "</text>\n";
  // axes
  svg << "<line x1='" << kMarginL << "' y1='" << kMarginT << "' x2='" << kMarginL
      << "' y2='" << kHeight - kMarginB << "' stroke='black'/>\n"
      << "<line x1='" << kMarginL << "' y1='" << kHeight - kMarginB << "' x2='"
      << kWidth - kMarginR << "' y2='" << kHeight - kMarginB << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {  // ticks
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    svg << "<text x='" << px(xv) << "' y='" << kHeight - kMarginB + 16
        << "' text-anchor='middle'>" << fmt(xv) << "</text>\n"
        << "<text x='" << kMarginL - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end'>" << fmt(yv) << "</text>\n";
  }
  svg << "<text x='" << kMarginL + plot_w / 2 << "' y='" << kHeight - 12
      << "' text-anchor='middle'>" << x_label << "</text>\n"
      << "<text x='16' y='" << kMarginT + plot_h / 2
      << "' text-anchor='middle' transform='rotate(-90 16 " << kMarginT + plot_h / 2
      << ")'>" << y_label << "</text>\n";
  // series + legend
  for (std::size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    svg << "<polyline fill='none' stroke='" << series_color(i) << "' stroke-width='1.5' points='";
    for (auto [x, y] : s.points) svg << px(x) << "," << py(y) << " ";
    svg << "'/>\n";
    const int ly = kMarginT + 14 * static_cast<int>(i);
    svg << "<line x1='" << kWidth - kMarginR + 8 << "' y1='" << ly << "' x2='"
        << kWidth - kMarginR + 28 << "' y2='" << ly << "' stroke='" << series_color(i)
        << "' stroke-width='2'/>\n"
        << "<text x='" << kWidth - kMarginR + 32 << "' y='" << ly + 4 << "'>" << s.name
        << "</text>\n";
  }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

void write_heatmap_svg(const std::string& path, const std::string& title,
                       const Heatmap& map) {
  if (map.H <= 0 || map.W <= 0) throw std::invalid_argument("write_heatmap_svg: empty map");
  const int cell = std::max(1, 420 / std::max(map.H, map.W));
  const int w = map.W * cell, h = map.H * cell;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='"
      << h + 28 << "' font-family='sans-serif' font-size='13'>\n"
      << "<text x='" << w / 2 << "' y='16' text-anchor='middle'>" << title
      << "</text>\n";
  for (int y = 0; y < map.H; ++y)
    for (int x = 0; x < map.W; ++x) {
      const double v = std::clamp(map.at(y, x), 0.0, 1.0);
      // blue (cold) to red (hot)
      const int r = static_cast<int>(255 * v);
      const int b = static_cast<int>(255 * (1.0 - v));
      svg << "<rect x='" << x * cell << "' y='" << y * cell + 28 << "' width='" << cell
          << "' height='" << cell << "' fill='rgb(" << r << ",0," << b << ")'/>\n";
    }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

}  // namespace avf
