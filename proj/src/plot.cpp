#include "structvar/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace structvar {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr int kPanelW = 300;
constexpr int kPanelH = 280;
constexpr int kMarginL = 52;
constexpr int kMarginR = 14;
constexpr int kMarginT = 36;
constexpr int kMarginB = 46;

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c"};

}  // namespace

std::string benchmark_svg(const std::vector<SummaryRow>& rows, int vars_per_slice) {
  std::vector<SummaryRow> mine;
  for (const auto& r : rows)
    if (r.vars_per_slice == vars_per_slice) mine.push_back(r);
  if (mine.empty()) throw StructuralError("no summary rows for the requested slice width");

  int min_slices = mine.front().slices, max_slices = mine.front().slices;
  double y_max = 0.0;
  for (const auto& r : mine) {
    min_slices = std::min(min_slices, r.slices);
    max_slices = std::max(max_slices, r.slices);
    if (std::isfinite(r.p75)) y_max = std::max(y_max, r.p75);
  }
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.08;

  const MethodKind kinds[] = {MethodKind::Mixture, MethodKind::Vertical, MethodKind::Horizontal};
  int total_w = 3 * kPanelW;
  int total_h = kPanelH;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\""
      << total_h << "\" viewBox=\"0 0 " << total_w << " " << total_h << "\">\n";
  svg << "<rect width=\"" << total_w << "\" height=\"" << total_h << "\" fill=\"white\"/>\n";

  for (int panel = 0; panel < 3; ++panel) {
    MethodKind kind = kinds[panel];
    double x0 = panel * kPanelW + kMarginL;
    double y0 = kMarginT;
    double plot_w = kPanelW - kMarginL - kMarginR;
    double plot_h = kPanelH - kMarginT - kMarginB;

    auto sx = [&](double slices) {
      if (max_slices == min_slices) return x0 + plot_w / 2.0;
      return x0 + (slices - min_slices) / (max_slices - min_slices) * plot_w;
    };
    auto sy = [&](double gap) { return y0 + plot_h - std::clamp(gap, 0.0, y_max) / y_max * plot_h; };

    svg << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(plot_w)
        << "\" height=\"" << fmt(plot_h)
        << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt(x0 + plot_w / 2) << "\" y=\"" << fmt(y0 - 12)
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">"
        << method_name(kind) << " (" << vars_per_slice << " vars/slice)</text>\n";
    // Axis labels and ticks.
    for (int s = min_slices; s <= max_slices; ++s) {
      svg << "<text x=\"" << fmt(sx(s)) << "\" y=\"" << fmt(y0 + plot_h + 16)
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << s
          << "</text>\n";
    }
    svg << "<text x=\"" << fmt(x0 + plot_w / 2) << "\" y=\"" << fmt(y0 + plot_h + 34)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">time "
           "slices</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      double gy = y_max * tick / 4.0;
      svg << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(sy(gy) + 4)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fmt(gy)
          << "</text>\n";
    }
    if (panel == 0)
      svg << "<text x=\"12\" y=\"" << fmt(y0 + plot_h / 2)
          << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
             "transform=\"rotate(-90 12 "
          << fmt(y0 + plot_h / 2) << ")\">KL upper bound / slice</text>\n";

    // Series: one per variant.
    std::vector<int> variants;
    for (const auto& r : mine)
      if (r.kind == kind && std::find(variants.begin(), variants.end(), r.variant) == variants.end())
        variants.push_back(r.variant);
    std::sort(variants.begin(), variants.end());
    for (size_t vi = 0; vi < variants.size(); ++vi) {
      const char* color = kSeriesColors[vi % 3];
      std::vector<const SummaryRow*> series;
      for (const auto& r : mine)
        if (r.kind == kind && r.variant == variants[vi]) series.push_back(&r);
      std::sort(series.begin(), series.end(),
                [](const SummaryRow* a, const SummaryRow* b) { return a->slices < b->slices; });
      std::ostringstream points;
      for (const auto* r : series) points << fmt(sx(r->slices)) << ',' << fmt(sy(r->median)) << ' ';
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"" << points.str() << "\"/>\n";
      for (const auto* r : series) {
        double x = sx(r->slices);
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(sy(r->p25)) << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << fmt(sy(r->p75)) << "\" stroke=\"" << color
            << "\" stroke-width=\"1\"/>\n";
        svg << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(sy(r->median))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
      // Legend.
      double lx = x0 + 8;
      double ly = y0 + 14 + 14 * static_cast<double>(vi);
      svg << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 16)
          << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
      svg << "<text x=\"" << fmt(lx + 20) << "\" y=\"" << fmt(ly + 4)
          << "\" font-family=\"sans-serif\" font-size=\"11\">"
          << (kind == MethodKind::Mixture ? "K=" : "card=") << variants[vi] << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace structvar
