#include "cmde/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "cmde/serialize.hpp"

namespace cmde {

namespace {

constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 16.0;
constexpr double kMarginTop = 32.0;
constexpr double kMarginBottom = 48.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

std::vector<double> ticks(const Range& r) {
  const double span = r.hi - r.lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double v = std::ceil(r.lo / step) * step; v <= r.hi + 1e-12 * span; v += step) {
    out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  }
  return out;
}

void render_panel(std::string& out, const SvgPlot& plot, double ox, double w, double h) {
  Range xr, yr;
  for (const auto& b : plot.bands) {
    for (double v : b.x) xr.add(v);
    for (double v : b.lower) yr.add(v);
    for (double v : b.upper) yr.add(v);
  }
  for (const auto& s : plot.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.finish();
  yr.finish();
  const double pw = w - kMarginLeft - kMarginRight;
  const double ph = h - kMarginTop - kMarginBottom;
  auto px = [&](double x) { return ox + kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kMarginTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  out += "<text x=\"" + num(ox + w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(plot.title) + "</text>\n";
  out += "<rect x=\"" + num(ox + kMarginLeft) + "\" y=\"" + num(kMarginTop) + "\" width=\"" +
         num(pw) + "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ticks(xr)) {
    out += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(kMarginTop + ph) + "\" x2=\"" + num(px(t)) +
           "\" y2=\"" + num(kMarginTop + ph + 4) + "\" stroke=\"#444\"/>\n";
    out += "<text x=\"" + num(px(t)) + "\" y=\"" + num(kMarginTop + ph + 16) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + label(t) + "</text>\n";
  }
  for (double t : ticks(yr)) {
    out += "<line x1=\"" + num(ox + kMarginLeft - 4) + "\" y1=\"" + num(py(t)) + "\" x2=\"" +
           num(ox + kMarginLeft) + "\" y2=\"" + num(py(t)) + "\" stroke=\"#444\"/>\n";
    out += "<text x=\"" + num(ox + kMarginLeft - 6) + "\" y=\"" + num(py(t) + 3) +
           "\" text-anchor=\"end\" font-size=\"10\">" + label(t) + "</text>\n";
  }
  out += "<text x=\"" + num(ox + kMarginLeft + pw / 2) + "\" y=\"" + num(h - 10) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + escape(plot.x_label) + "</text>\n";
  out += "<text transform=\"translate(" + num(ox + 14) + "," + num(kMarginTop + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" + escape(plot.y_label) +
         "</text>\n";

  for (const auto& b : plot.bands) {
    if (b.x.empty()) continue;
    std::string pts;
    for (std::size_t i = 0; i < b.x.size(); ++i) pts += num(px(b.x[i])) + "," + num(py(b.upper[i])) + " ";
    for (std::size_t i = b.x.size(); i-- > 0;) pts += num(px(b.x[i])) + "," + num(py(b.lower[i])) + " ";
    out += "<polygon points=\"" + pts + "\" fill=\"" + b.color + "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  }
  double legend_y = kMarginTop + 14;
  for (const auto& s : plot.series) {
    if (s.style != SeriesStyle::kPoints) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
      out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color +
             "\" stroke-width=\"1.5\"";
      if (s.style == SeriesStyle::kDashed) out += " stroke-dasharray=\"5,3\"";
      out += "/>\n";
    }
    if (s.style == SeriesStyle::kPoints || s.style == SeriesStyle::kLineWithMarkers) {
      const double r = s.style == SeriesStyle::kPoints ? 1.5 : 3.0;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"" + num(r) +
               "\" fill=\"" + s.color + "\" fill-opacity=\"0.6\"/>\n";
      }
    }
    out += "<text x=\"" + num(ox + kMarginLeft + pw - 6) + "\" y=\"" + num(legend_y) +
           "\" text-anchor=\"end\" font-size=\"10\" fill=\"" + s.color + "\">" + escape(s.name) +
           "</text>\n";
    legend_y += 13;
  }
}

}  // namespace

std::string render_svg(const std::vector<SvgPlot>& panels, double panel_width,
                       double panel_height) {
  const double total = panel_width * static_cast<double>(panels.size());
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(total) +
                    "\" height=\"" + num(panel_height) + "\" font-family=\"sans-serif\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    render_panel(out, panels[i], panel_width * static_cast<double>(i), panel_width, panel_height);
  }
  out += "</svg>\n";
  return out;
}

void write_svg(const SvgPlot& plot, const std::string& path) {
  write_text_file(path, render_svg({plot}));
}

void write_svg(const std::vector<SvgPlot>& panels, const std::string& path) {
  write_text_file(path, render_svg(panels));
}

}  // namespace cmde
