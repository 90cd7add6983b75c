#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "canopy/core/geometry.hpp"
#include "canopy/core/io.hpp"
#include "canopy/occlusion/fractions.hpp"
#include "canopy/strata/stratify.hpp"
#include "canopy/treeseg/types.hpp"

namespace canopy::app::svg {

inline constexpr double kWidth = 640, kHeight = 420, kMargin = 48;

inline std::string num(double v) { return io::fixed(v, 2); }

// Maps data coordinates into the plotting frame (y up).
struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }
};

inline void open(std::ostream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(kMargin) << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
}

inline void axes(std::ostream& out, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  out << "<g stroke=\"black\"><line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\""
      << num(f.px(f.x1)) << "\" y2=\"" << num(f.py(f.y0)) << "\"/><line x1=\"" << num(f.px(f.x0)) << "\" y1=\""
      << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(f.x0)) << "\" y2=\"" << num(f.py(f.y1)) << "\"/></g>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(kHeight - 10) << "\">" << xlabel << "</text>\n";
  out << "<text x=\"12\" y=\"" << num(kHeight / 2) << "\" transform=\"rotate(-90 12 " << num(kHeight / 2) << ")\">"
      << ylabel << "</text>\n";
  out << "<text x=\"" << num(f.px(f.x0)) << "\" y=\"" << num(f.py(f.y0) + 16) << "\">" << io::fixed(f.x0, 1)
      << "</text><text x=\"" << num(f.px(f.x1) - 24) << "\" y=\"" << num(f.py(f.y0) + 16) << "\">"
      << io::fixed(f.x1, 1) << "</text>\n";
  out << "<text x=\"4\" y=\"" << num(f.py(f.y1) + 4) << "\">" << io::fixed(f.y1, 2) << "</text>\n";
}

inline void close(std::ostream& out) { out << "</svg>\n"; }

// Height histogram (horizontal axis: height) with its smoothed curve and
// shaded salient ranges.
inline void height_histogram(std::ostream& out, const strata::HeightHistogram& h, std::span<const double> smoothed,
                             std::span<const strata::HeightRange> ranges) {
  open(out, "Height histogram and salient ranges");
  const double top = std::max(h.bin * static_cast<double>(h.counts.size()), h.bin);
  double peak = 1.0;
  for (double c : h.counts) peak = std::max(peak, c);
  for (double s : smoothed) peak = std::max(peak, s);
  const Frame f{0.0, top, 0.0, peak};
  for (const strata::HeightRange& r : ranges)
    out << "<rect x=\"" << num(f.px(r.bottom)) << "\" y=\"" << num(f.py(peak)) << "\" width=\""
        << num(f.px(r.top) - f.px(r.bottom)) << "\" height=\"" << num(f.py(0) - f.py(peak))
        << "\" fill=\"#cfe8cf\"/>\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    if (h.counts[k] == 0.0) continue;
    const double x = h.bin * static_cast<double>(k);
    out << "<rect x=\"" << num(f.px(x)) << "\" y=\"" << num(f.py(h.counts[k]))
        << "\" width=\"" << num(f.px(x + h.bin) - f.px(x)) << "\" height=\""
        << num(f.py(0) - f.py(h.counts[k])) << "\" fill=\"#7a9cc6\"/>\n";
  }
  if (!smoothed.empty()) {
    out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < smoothed.size(); ++k)
      out << (k ? " " : "") << num(f.px(h.center(k))) << ',' << num(f.py(smoothed[k]));
    out << "\"/>\n";
  }
  axes(out, f, "height (m)", "points");
  close(out);
}

// Observed layer fractions (dots) against the fitted pmf (line).
inline void fraction_fit(std::ostream& out, std::span<const occlusion::OcclusionRow> rows, double theta) {
  open(out, "Layer fractions, log-series fit theta=" + io::fixed(theta, 4));
  const double n1 = static_cast<double>(std::max<std::size_t>(rows.size(), 2));
  const Frame f{0.5, n1 + 0.5, 0.0, 1.0};
  out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << (i ? " " : "") << num(f.px(rows[i].n)) << ',' << num(f.py(rows[i].fitted));
  out << "\"/>\n";
  for (const occlusion::OcclusionRow& r : rows)
    out << "<circle cx=\"" << num(f.px(r.n)) << "\" cy=\"" << num(f.py(r.observed)) << "\" r=\"4\" fill=\"#2c3e50\"/>\n";
  axes(out, f, "layer n", "p_n");
  close(out);
}

// Crown hulls and apexes over the given extent.
inline void crown_map(std::ostream& out, std::span<const treeseg::Crown> crowns, const BBox& extent) {
  open(out, "Crown map (" + std::to_string(crowns.size()) + " crowns)");
  BBox e = extent;
  if (e.empty()) e = BBox::of(0, 0, 1, 1);
  const double span = std::max(e.width(), e.height());
  const Frame f{e.xmin, e.xmin + span, e.ymin, e.ymin + span};
  for (const treeseg::Crown& c : crowns) {
    out << "<polygon fill=\"none\" stroke=\"#27ae60\" points=\"";
    const auto& v = c.hull.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << num(f.px(v[i].x)) << ',' << num(f.py(v[i].y));
    out << "\"/><circle cx=\"" << num(f.px(c.apex.x)) << "\" cy=\"" << num(f.py(c.apex.y))
        << "\" r=\"1.5\" fill=\"#c0392b\"/>\n";
  }
  axes(out, f, "easting (m)", "northing (m)");
  close(out);
}

}  // namespace canopy::app::svg
