#pragma once

#include <string>
#include <vector>

#include "b3/project.hpp"

namespace b3 {

struct PlotSeries {
  std::string label;
  std::vector<double> years;
  std::vector<double> rates;
  std::vector<double> log_se;  // per-point sampling SE on the log scale; may be empty
};

struct PlotData {
  std::string title;
  TrajectorySummary estimate;
  std::vector<PlotSeries> series;
};

/// Static SVG: data series as connected dots with +-2 sampling-SE shading,
/// the posterior median curve, and the shaded 90% interval.
std::string render_trajectory_svg(const PlotData& data, int width = 900, int height = 560);

}  // namespace b3
