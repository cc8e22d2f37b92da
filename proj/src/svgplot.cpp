#include "ambidist/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ambidist/strings.hpp"

namespace ambidist::svgplot {

namespace {

constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 24;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 52;

std::string num(double v) { return format_fixed(v, 2); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Scale {
  double lo, hi;
  double pix_lo, pix_hi;
  double operator()(double v) const {
    if (hi == lo) return 0.5 * (pix_lo + pix_hi);
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
  }
};

// Round bounds outward to a tidy step so tick labels are stable.
void nice_bounds(double& lo, double& hi) {
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

}  // namespace

std::string line_plot(const LinePlotSpec& spec) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : spec.series) {
    for (double v : s.x) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.y) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  if (!spec.series.empty() && !spec.error_bars.empty()) {
    const auto& s0 = spec.series.front();
    for (std::size_t i = 0; i < std::min(s0.y.size(), spec.error_bars.size());
         ++i) {
      y_lo = std::min(y_lo, s0.y[i] - spec.error_bars[i]);
      y_hi = std::max(y_hi, s0.y[i] + spec.error_bars[i]);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0;
    x_hi = 1;
    y_lo = 0;
    y_hi = 1;
  }
  nice_bounds(x_lo, x_hi);
  nice_bounds(y_lo, y_hi);

  const Scale sx{x_lo, x_hi, static_cast<double>(kMarginLeft),
                 static_cast<double>(spec.width - kMarginRight)};
  const Scale sy{y_lo, y_hi, static_cast<double>(spec.height - kMarginBottom),
                 static_cast<double>(kMarginTop)};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(spec.width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
         "font-family=\"sans-serif\">" +
         escape(spec.title) + "</text>\n";

  // Axes and ticks.
  svg += "<line x1=\"" + num(sx.pix_lo) + "\" y1=\"" + num(sy.pix_lo) +
         "\" x2=\"" + num(sx.pix_hi) + "\" y2=\"" + num(sy.pix_lo) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(sx.pix_lo) + "\" y1=\"" + num(sy.pix_lo) +
         "\" x2=\"" + num(sx.pix_lo) + "\" y2=\"" + num(sy.pix_hi) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 5.0;
    svg += "<line x1=\"" + num(sx(fx)) + "\" y1=\"" + num(sy.pix_lo) +
           "\" x2=\"" + num(sx(fx)) + "\" y2=\"" + num(sy.pix_lo + 4) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(sx(fx)) + "\" y=\"" + num(sy.pix_lo + 18) +
           "\" text-anchor=\"middle\" font-size=\"10\" "
           "font-family=\"sans-serif\">" +
           num(fx) + "</text>\n";
    svg += "<text x=\"" + num(sx.pix_lo - 6) + "\" y=\"" + num(sy(fy) + 3) +
           "\" text-anchor=\"end\" font-size=\"10\" "
           "font-family=\"sans-serif\">" +
           num(fy) + "</text>\n";
  }
  svg += "<text x=\"" + std::to_string(spec.width / 2) + "\" y=\"" +
         std::to_string(spec.height - 12) +
         "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\">" +
         escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + std::to_string(spec.height / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 16 " +
         std::to_string(spec.height / 2) + ")\">" +
         escape(spec.y_label) + "</text>\n";

  // Error bars for the first series.
  if (!spec.series.empty()) {
    const auto& s0 = spec.series.front();
    for (std::size_t i = 0; i < std::min(s0.y.size(), spec.error_bars.size());
         ++i) {
      const double px = sx(s0.x[i]);
      svg += "<line x1=\"" + num(px) + "\" y1=\"" +
             num(sy(s0.y[i] - spec.error_bars[i])) + "\" x2=\"" + num(px) +
             "\" y2=\"" + num(sy(s0.y[i] + spec.error_bars[i])) +
             "\" stroke=\"" + s0.color + "\" stroke-opacity=\"0.45\"/>\n";
    }
  }

  if (spec.vertical_marker) {
    const double px = sx(*spec.vertical_marker);
    svg += "<line x1=\"" + num(px) + "\" y1=\"" + num(sy.pix_lo) +
           "\" x2=\"" + num(px) + "\" y2=\"" + num(sy.pix_hi) +
           "\" stroke=\"#d62728\" stroke-dasharray=\"2,3\" "
           "class=\"saturation-marker\"/>\n";
  }

  for (const auto& s : spec.series) {
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) points += " ";
      points += num(sx(s.x[i])) + "," + num(sy(s.y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\"";
    if (s.dashed) svg += " stroke-dasharray=\"6,4\"";
    svg += " stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        svg += "<circle cx=\"" + num(sx(s.x[i])) + "\" cy=\"" +
               num(sy(s.y[i])) + "\" r=\"2.5\" fill=\"" + s.color + "\"/>\n";
      }
    }
  }

  // Legend.
  double ly = kMarginTop + 6;
  for (const auto& s : spec.series) {
    const double lx = spec.width - kMarginRight - 150;
    svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(lx + 24) + "\" y2=\"" + num(ly) + "\" stroke=\"" + s.color +
           "\"" + (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" +
           escape(s.label) + "</text>\n";
    ly += 16;
  }

  svg += "</svg>\n";
  return svg;
}

std::string grouped_bars(const BarGroupSpec& spec) {
  double y_hi = 0.0;
  for (const auto& s : spec.series) {
    for (double v : s.values) y_hi = std::max(y_hi, v);
  }
  if (y_hi == 0.0) y_hi = 1.0;
  y_hi *= 1.1;

  const double plot_w =
      static_cast<double>(spec.width - kMarginLeft - kMarginRight);
  const double plot_h =
      static_cast<double>(spec.height - kMarginTop - kMarginBottom);
  const double base_y = static_cast<double>(spec.height - kMarginBottom);
  const std::size_t n_groups = spec.groups.size();
  const std::size_t n_series = std::max<std::size_t>(1, spec.series.size());
  const double group_w = plot_w / static_cast<double>(n_groups);
  const double bar_w = group_w * 0.8 / static_cast<double>(n_series);

  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                   "#d62728", "#9467bd"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(spec.width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
         "font-family=\"sans-serif\">" +
         escape(spec.title) + "</text>\n";
  svg += "<line x1=\"" + std::to_string(kMarginLeft) + "\" y1=\"" +
         num(base_y) + "\" x2=\"" +
         std::to_string(spec.width - kMarginRight) + "\" y2=\"" + num(base_y) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + std::to_string(kMarginLeft) + "\" y1=\"" +
         num(base_y) + "\" x2=\"" + std::to_string(kMarginLeft) + "\" y2=\"" +
         std::to_string(kMarginTop) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fy = y_hi * i / 5.0;
    const double py = base_y - fy / y_hi * plot_h;
    svg += "<text x=\"" + std::to_string(kMarginLeft - 6) + "\" y=\"" +
           num(py + 3) +
           "\" text-anchor=\"end\" font-size=\"10\" "
           "font-family=\"sans-serif\">" +
           num(fy) + "</text>\n";
  }
  svg += "<text x=\"16\" y=\"" + std::to_string(spec.height / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 16 " +
         std::to_string(spec.height / 2) + ")\">" +
         escape(spec.y_label) + "</text>\n";

  for (std::size_t g = 0; g < n_groups; ++g) {
    const double gx = kMarginLeft + group_w * (static_cast<double>(g) + 0.1);
    for (std::size_t s = 0; s < spec.series.size(); ++s) {
      const double v = g < spec.series[s].values.size()
                           ? spec.series[s].values[g]
                           : 0.0;
      const double h = v / y_hi * plot_h;
      const std::string color = spec.series[s].color.empty()
                                    ? kPalette[s % 5]
                                    : spec.series[s].color;
      svg += "<rect x=\"" + num(gx + bar_w * static_cast<double>(s)) +
             "\" y=\"" + num(base_y - h) + "\" width=\"" + num(bar_w * 0.92) +
             "\" height=\"" + num(h) + "\" fill=\"" + color + "\"/>\n";
    }
    svg += "<text x=\"" + num(kMarginLeft + group_w * (static_cast<double>(g) +
                                                       0.5)) +
           "\" y=\"" + num(base_y + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\" "
           "font-family=\"sans-serif\">" +
           escape(spec.groups[g]) + "</text>\n";
  }

  double ly = kMarginTop + 6;
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const std::string color =
        spec.series[s].color.empty() ? kPalette[s % 5] : spec.series[s].color;
    const double lx = spec.width - kMarginRight - 150;
    svg += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly - 8) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(ly + 2) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" +
           escape(spec.series[s].label) + "</text>\n";
    ly += 16;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ambidist::svgplot
