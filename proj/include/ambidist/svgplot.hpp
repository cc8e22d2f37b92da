#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ambidist::svgplot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = true;
};

struct LinePlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> vertical_marker;  // e.g. a saturation point
  std::vector<double> error_bars;         // +- per point of series[0]
  int width = 640;
  int height = 420;
};

std::string line_plot(const LinePlotSpec& spec);

struct BarGroupSpec {
  std::string title;
  std::string y_label;
  std::vector<std::string> groups;  // e.g. Low / Medium / High
  struct BarSeries {
    std::string label;
    std::vector<double> values;  // one per group
    std::string color;
  };
  std::vector<BarSeries> series;
  int width = 640;
  int height = 420;
};

std::string grouped_bars(const BarGroupSpec& spec);

}  // namespace ambidist::svgplot
