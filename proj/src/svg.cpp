#include "ec2st/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace ec2st {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 150.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 52.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
                          "#bcbd22", "#e377c2"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round tick positions: about n steps spanning [lo, hi].
std::vector<double> ticks(double lo, double hi, int n) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) {
    out.push_back(std::fabs(v) < 1e-12 * span ? 0.0 : v);
  }
  return out;
}

}  // namespace

std::string render_line_chart(const SvgChart& chart) {
  if (chart.series.empty()) {
    throw std::invalid_argument("chart needs at least one series");
  }
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const SvgSeries& s : chart.series) {
    if (s.x.size() != s.y.size() || s.x.empty()) {
      throw std::invalid_argument("series x and y must be non-empty and equal length");
    }
    for (double v : s.x) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.y) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  if (chart.has_hline) {
    y_lo = std::min(y_lo, chart.hline);
    y_hi = std::max(y_hi, chart.hline);
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto px = [&](double v) {
    return kMarginLeft + (v - x_lo) / (x_hi - x_lo) * plot_w;
  };
  const auto py = [&](double v) {
    return kMarginTop + (y_hi - v) / (y_hi - y_lo) * plot_h;
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(kMarginLeft + plot_w / 2) << "\" y=\"22\" "
      << "text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << escape(chart.title) << "</text>\n";

  for (double t : ticks(x_lo, x_hi, 6)) {
    const double x = px(t);
    out << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(kMarginTop) << "\" x2=\""
        << fmt(x) << "\" y2=\"" << fmt(kMarginTop + plot_h)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(kMarginTop + plot_h + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(t) << "</text>\n";
  }
  for (double t : ticks(y_lo, y_hi, 6)) {
    const double y = py(t);
    out << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(y) << "\" x2=\""
        << fmt(kMarginLeft + plot_w) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(kMarginLeft - 8) << "\" y=\"" << fmt(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(t) << "</text>\n";
  }
  out << "<rect x=\"" << fmt(kMarginLeft) << "\" y=\"" << fmt(kMarginTop)
      << "\" width=\"" << fmt(plot_w) << "\" height=\"" << fmt(plot_h)
      << "\" fill=\"none\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << fmt(kMarginLeft + plot_w / 2) << "\" y=\""
      << fmt(kHeight - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << escape(chart.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << fmt(kMarginTop + plot_h / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << fmt(kMarginTop + plot_h / 2) << ")\">"
      << escape(chart.y_label) << "</text>\n";

  if (chart.has_hline) {
    out << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(py(chart.hline))
        << "\" x2=\"" << fmt(kMarginLeft + plot_w) << "\" y2=\""
        << fmt(py(chart.hline))
        << "\" stroke=\"#808080\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n";
  }

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const SvgSeries& series = chart.series[s];
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      if (i) out << " ";
      out << fmt(px(series.x[i])) << "," << fmt(py(series.y[i]));
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      out << "<circle cx=\"" << fmt(px(series.x[i])) << "\" cy=\""
          << fmt(py(series.y[i])) << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kMarginTop + 16.0 * static_cast<double>(s);
    out << "<line x1=\"" << fmt(kMarginLeft + plot_w + 10) << "\" y1=\""
        << fmt(ly) << "\" x2=\"" << fmt(kMarginLeft + plot_w + 30) << "\" y2=\""
        << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fmt(kMarginLeft + plot_w + 36) << "\" y=\""
        << fmt(ly + 4) << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape(series.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ec2st
