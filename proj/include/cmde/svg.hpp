#pragma once

#include <string>
#include <vector>

namespace cmde {

enum class SeriesStyle { kLine, kDashed, kPoints, kLineWithMarkers };

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#000000";
  SeriesStyle style = SeriesStyle::kLine;
};

// Shaded region between lower and upper over x.
struct SvgBand {
  std::string name;
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string color = "#cccccc";
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgBand> bands;
  std::vector<SvgSeries> series;
};

// Panels are laid out left to right in one document.
std::string render_svg(const std::vector<SvgPlot>& panels, double panel_width = 480.0,
                       double panel_height = 360.0);
void write_svg(const SvgPlot& plot, const std::string& path);
void write_svg(const std::vector<SvgPlot>& panels, const std::string& path);

}  // namespace cmde
