#include "b3/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace b3 {

namespace {

const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b",
                          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
                          "#ff7f0e", "#393b79"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(target_ticks, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= mult * mag) return mult * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_trajectory_svg(const PlotData& data, int width, int height) {
  const double ml = 62, mr = 16, mt = 34, mb = 42;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;

  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -std::numeric_limits<double>::infinity();
  double y_hi = 0.0;
  for (std::size_t i = 0; i < data.estimate.years.size(); ++i) {
    x_lo = std::min(x_lo, data.estimate.years[i]);
    x_hi = std::max(x_hi, data.estimate.years[i]);
    y_hi = std::max(y_hi, data.estimate.upper90[i]);
  }
  for (const auto& s : data.series) {
    for (std::size_t i = 0; i < s.years.size(); ++i) {
      x_lo = std::min(x_lo, s.years[i]);
      x_hi = std::max(x_hi, s.years[i]);
      double top = s.rates[i];
      if (i < s.log_se.size()) top *= std::exp(2.0 * s.log_se[i]);
      y_hi = std::max(y_hi, top);
    }
  }
  if (!std::isfinite(x_lo) || x_hi <= x_lo) {
    x_lo = 0.0;
    x_hi = 1.0;
  }
  if (y_hi <= 0.0) y_hi = 1.0;
  y_hi *= 1.06;

  auto px = [&](double year) { return ml + (year - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double rate) { return mt + (1.0 - rate / y_hi) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt(ml) << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"16\">"
      << data.title << "</text>\n";

  // Axes and ticks.
  svg << "<g stroke=\"#333\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(ml + pw)
      << "\" y2=\"" << fmt(mt + ph) << "\"/>\n";
  svg << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
      << "\" y2=\"" << fmt(mt + ph) << "\"/>\n";
  svg << "</g>\n";

  const double xstep = nice_step(x_hi - x_lo, 8);
  for (double tick = std::ceil(x_lo / xstep) * xstep; tick <= x_hi + 1e-9; tick += xstep) {
    svg << "<line x1=\"" << fmt(px(tick)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
        << fmt(px(tick)) << "\" y2=\"" << fmt(mt + ph + 4) << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << fmt(px(tick)) << "\" y=\"" << fmt(mt + ph + 18)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
        << static_cast<long>(std::lround(tick)) << "</text>\n";
  }
  const double ystep = nice_step(y_hi, 6);
  for (double tick = 0.0; tick <= y_hi + 1e-9; tick += ystep) {
    svg << "<line x1=\"" << fmt(ml - 4) << "\" y1=\"" << fmt(py(tick)) << "\" x2=\""
        << fmt(ml) << "\" y2=\"" << fmt(py(tick)) << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << fmt(ml - 8) << "\" y=\"" << fmt(py(tick) + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
        << fmt(tick) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(mt + ph + 34)
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">year</text>\n";
  svg << "<text x=\"14\" y=\"" << fmt(mt + ph / 2)
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 14 "
      << fmt(mt + ph / 2) << ")\">U5MR (deaths per 1000 births)</text>\n";

  // Sampling-variability bands around each series.
  for (std::size_t si = 0; si < data.series.size(); ++si) {
    const auto& s = data.series[si];
    if (s.log_se.size() != s.years.size() || s.years.size() < 2) continue;
    const char* color = kPalette[si % kPaletteSize];
    svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.12\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.years.size(); ++i)
      svg << fmt(px(s.years[i])) << "," << fmt(py(s.rates[i] * std::exp(2.0 * s.log_se[i])))
          << " ";
    for (std::size_t i = s.years.size(); i-- > 0;)
      svg << fmt(px(s.years[i])) << "," << fmt(py(s.rates[i] * std::exp(-2.0 * s.log_se[i])))
          << " ";
    svg << "\"/>\n";
  }

  // 90% interval of the estimates, then the median curve.
  if (data.estimate.years.size() >= 2) {
    svg << "<polygon fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < data.estimate.years.size(); ++i)
      svg << fmt(px(data.estimate.years[i])) << "," << fmt(py(data.estimate.upper90[i]))
          << " ";
    for (std::size_t i = data.estimate.years.size(); i-- > 0;)
      svg << fmt(px(data.estimate.years[i])) << "," << fmt(py(data.estimate.lower90[i]))
          << " ";
    svg << "\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < data.estimate.years.size(); ++i)
      svg << fmt(px(data.estimate.years[i])) << "," << fmt(py(data.estimate.median[i])) << " ";
    svg << "\"/>\n";
  }

  // Data series: connected dots.
  for (std::size_t si = 0; si < data.series.size(); ++si) {
    const auto& s = data.series[si];
    const char* color = kPalette[si % kPaletteSize];
    if (s.years.size() >= 2) {
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i < s.years.size(); ++i)
        svg << fmt(px(s.years[i])) << "," << fmt(py(s.rates[i])) << " ";
      svg << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.years.size(); ++i)
      svg << "<circle cx=\"" << fmt(px(s.years[i])) << "\" cy=\"" << fmt(py(s.rates[i]))
          << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
  }

  // Legend.
  double ly = mt + 8;
  for (std::size_t si = 0; si < data.series.size(); ++si) {
    const char* color = kPalette[si % kPaletteSize];
    svg << "<circle cx=\"" << fmt(ml + pw - 160) << "\" cy=\"" << fmt(ly) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << fmt(ml + pw - 150) << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << data.series[si].label
        << "</text>\n";
    ly += 16;
  }
  svg << "<rect x=\"" << fmt(ml + pw - 166) << "\" y=\"" << fmt(ly - 5)
      << "\" width=\"12\" height=\"8\" fill=\"#d62728\" fill-opacity=\"0.25\"/>\n";
  svg << "<text x=\"" << fmt(ml + pw - 150) << "\" y=\"" << fmt(ly + 3)
      << "\" font-family=\"sans-serif\" font-size=\"11\">estimate, 90% CI</text>\n";

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace b3
