#pragma once

#include <string>
#include <vector>

namespace fxptrain {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // NaN breaks the line
};

// Self-contained SVG line chart. Pure function of its inputs: fixed layout,
// fixed palette, deterministic tick placement and number formatting, so the
// same data always yields the same bytes.
std::string render_line_chart(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel,
                              const std::vector<Series>& series);

// Reads the CSV series emitted by analyze_runs from analysis_dir (single- or
// multi-run layout) and writes gamma.svg, e_large.svg, loss.svg into out_dir.
// Throws PlotError when a required series is missing or empty.
void plot_analysis_dir(const std::string& analysis_dir, const std::string& out_dir);

}  // namespace fxptrain
