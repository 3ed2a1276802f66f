#pragma once

#include <string>
#include <vector>

namespace ec2st {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  // Optional horizontal reference line (e.g. the nominal level).
  bool has_hline = false;
  double hline = 0.0;
};

// Minimal deterministic line chart; the output depends only on the input.
std::string render_line_chart(const SvgChart& chart);

}  // namespace ec2st
