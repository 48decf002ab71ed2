#pragma once
// Dependency-free SVG line plots. Output is a pure function of the input
// series, so identical data gives byte-identical files.

#include <string>
#include <vector>

namespace fdfo {

struct Series {
  std::string name;
  std::vector<double> x, y;  // equal lengths; non-finite points are skipped
};

// Axes, ticks, one polyline per series, and a legend when there are multiple
// series (or any named series). Degenerate/empty data still yields a valid
// SVG with axes. Throws std::runtime_error on I/O failure or ragged series.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series);

}  // namespace fdfo
