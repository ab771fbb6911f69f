#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mmcast {

struct PlotSeries {
  std::string label;
  std::vector<double> values;  // y at x = 1, 2, ...; NaN leaves a gap
};

/// Metric-vs-lead line chart as a binary PPM. Each series gets a palette
/// colour and a legend swatch in series order; the y range and the last x
/// value are printed on the axes.
void write_line_plot_ppm(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                         int width = 640, int height = 400);

/// RGB colour used for series `index`.
std::array<unsigned char, 3> palette_color(std::size_t index);

}  // namespace mmcast
