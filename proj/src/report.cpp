#include "biasaudit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace biasaudit::report {

namespace {

constexpr const char* kPalette[] = {"#4d4d4d", "#1f77b4", "#2ca02c", "#d62728", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_scatter_svg(std::span<const ScatterPoint> points, std::span<const std::string> label_order,
                               std::string_view title) {
  constexpr double width = 640, height = 480, margin = 40, legend = 150;
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  if (points.empty()) min_x = max_x = min_y = max_y = 0.0;
  const double span_x = max_x > min_x ? max_x - min_x : 1.0;
  const double span_y = max_y > min_y ? max_y - min_y : 1.0;
  const double plot_w = width - legend - 2 * margin;
  const double plot_h = height - 2 * margin;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(margin) + "\" y=\"24\" font-size=\"15\">" + xml_escape(title) + "</text>\n";
  svg += "<rect x=\"" + num(margin) + "\" y=\"" + num(margin) + "\" width=\"" + num(plot_w) + "\" height=\"" +
         num(plot_h) + "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

  for (std::size_t li = 0; li < label_order.size(); ++li) {
    const char* colour = kPalette[li % std::size(kPalette)];
    svg += "<g fill=\"" + std::string(colour) + "\" fill-opacity=\"0.8\">\n";
    for (const auto& p : points) {
      if (p.label != label_order[li]) continue;
      const double cx = margin + (p.x - min_x) / span_x * plot_w;
      const double cy = margin + plot_h - (p.y - min_y) / span_y * plot_h;
      svg += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"4\"/>\n";
    }
    svg += "</g>\n";
    const double ly = margin + 10 + 20.0 * static_cast<double>(li);
    const double lx = width - legend + 10;
    svg += "<circle cx=\"" + num(lx) + "\" cy=\"" + num(ly) + "\" r=\"5\" fill=\"" + colour + "\"/>\n";
    svg += "<text x=\"" + num(lx + 12) + "\" y=\"" + num(ly + 4) + "\">" + xml_escape(label_order[li]) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_frequency_svg(std::span<const LabelBars> panels) {
  constexpr double panel_w = 300, bar_h = 16, gap = 4, label_w = 110, top = 30;
  std::size_t rows = 0;
  for (const auto& p : panels) rows = std::max(rows, p.bars.size());
  const double panel_h = top + static_cast<double>(rows) * (bar_h + gap) + 20;
  const double width = panel_w * static_cast<double>(std::max<std::size_t>(panels.size(), 1));

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                    num(panel_h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& panel = panels[pi];
    const double x0 = panel_w * static_cast<double>(pi);
    const char* colour = kPalette[pi % std::size(kPalette)];
    svg += "<text x=\"" + num(x0 + 10) + "\" y=\"18\" font-size=\"14\">" + xml_escape(panel.label) + "</text>\n";
    std::size_t max_count = 1;
    for (const auto& [w, c] : panel.bars) max_count = std::max(max_count, c);
    for (std::size_t bi = 0; bi < panel.bars.size(); ++bi) {
      const auto& [word, count] = panel.bars[bi];
      const double y = top + static_cast<double>(bi) * (bar_h + gap);
      const double len = (panel_w - label_w - 40) * static_cast<double>(count) / static_cast<double>(max_count);
      svg += "<text x=\"" + num(x0 + label_w) + "\" y=\"" + num(y + 12) + "\" text-anchor=\"end\">" +
             xml_escape(word) + "</text>\n";
      svg += "<rect x=\"" + num(x0 + label_w + 4) + "\" y=\"" + num(y) + "\" width=\"" + num(len) +
             "\" height=\"" + num(bar_h) + "\" fill=\"" + colour + "\"/>\n";
      svg += "<text x=\"" + num(x0 + label_w + 8 + len) + "\" y=\"" + num(y + 12) + "\">" +
             std::to_string(count) + "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace biasaudit::report
