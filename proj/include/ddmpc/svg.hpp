#pragma once

#include <string>
#include <vector>

namespace ddmpc::svg {

struct Series {
  std::string label;
  std::vector<double> y;  // sampled at t = 0, 1, 2, ...
};

// Standalone SVG line chart: axes, 1-2-5 tick ladder, legend, one polyline
// per series. log_y plots log10 of the positive samples and skips the rest.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series, bool log_y = false);

void save(const std::string& path, const std::string& svg_text);

}  // namespace ddmpc::svg
