#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace biasaudit::report {

struct ScatterPoint {
  std::string label;
  double x = 0.0;
  double y = 0.0;
};

/// 2-D scatter coloured by label with a legend; labels are drawn in
/// `label_order`. Coordinates are rendered with two decimals so the output
/// is byte-stable.
std::string render_scatter_svg(std::span<const ScatterPoint> points, std::span<const std::string> label_order,
                               std::string_view title);

struct LabelBars {
  std::string label;
  std::vector<std::pair<std::string, std::size_t>> bars;  // already ranked
};

/// One panel of horizontal ranked bars per label (the word-cloud stand-in).
std::string render_frequency_svg(std::span<const LabelBars> panels);

/// Escapes &, <, >, " for SVG/XML text.
std::string xml_escape(std::string_view s);

}  // namespace biasaudit::report
