// Minimal deterministic SVG learning-curve plots: one line per method with a
// shaded confidence band, axes in env steps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "supe/tensor.hpp"

namespace supe {

struct CurvePoint {
  double step = 0.0, mid = 0.0, lo = 0.0, hi = 0.0;
};

struct Curve {
  std::string name;
  std::vector<CurvePoint> points;
};

namespace detail {

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

inline const char* plot_color(size_t i) {
  static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  return palette[i % 6];
}

}  // namespace detail

// Returns false (and writes nothing) when every curve is empty.
inline bool write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& ylabel, std::vector<Curve> curves) {
  curves.erase(std::remove_if(curves.begin(), curves.end(),
                              [](const Curve& c) { return c.points.empty(); }),
               curves.end());
  if (curves.empty()) {
    std::cerr << "warning: no data to plot for '" << path << "'\n";
    return false;
  }
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto& c : curves)
    for (auto& p : c.points) {
      x0 = std::min(x0, p.step);
      x1 = std::max(x1, p.step);
      y0 = std::min({y0, p.lo, p.mid});
      y1 = std::max({y1, p.hi, p.mid});
    }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double W = 720, H = 440, ml = 70, mr = 20, mt = 40, mb = 50;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  std::ofstream os(path);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
     << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes with 5 ticks each
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
     << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
     << H - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << detail::fmt_coord(px(xv)) << "\" y=\"" << H - mb + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << detail::fmt_tick(xv) << "</text>\n"
       << "<text x=\"" << ml - 8 << "\" y=\"" << detail::fmt_coord(py(yv) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << detail::fmt_tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        "env steps</text>\n"
     << "<text x=\"16\" y=\"" << H / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "transform=\"rotate(-90 16 " << H / 2 << ")\">" << ylabel << "</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* col = detail::plot_color(ci);
    // CI band
    std::string band;
    for (auto& p : c.points)
      band += detail::fmt_coord(px(p.step)) + "," + detail::fmt_coord(py(p.hi)) + " ";
    for (auto it = c.points.rbegin(); it != c.points.rend(); ++it)
      band += detail::fmt_coord(px(it->step)) + "," + detail::fmt_coord(py(it->lo)) + " ";
    os << "<polygon points=\"" << band << "\" fill=\"" << col
       << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    std::string line;
    for (auto& p : c.points)
      line += detail::fmt_coord(px(p.step)) + "," + detail::fmt_coord(py(p.mid)) + " ";
    os << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << col
       << "\" stroke-width=\"1.8\"/>\n";
    // legend entry
    double ly = mt + 16.0 * (double)ci + 6;
    os << "<line x1=\"" << W - mr - 150 << "\" y1=\"" << ly << "\" x2=\""
       << W - mr - 125 << "\" y2=\"" << ly << "\" stroke=\"" << col
       << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << W - mr - 120 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << c.name << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw error("io", "write failed for '" + path + "'");
  return true;
}

}  // namespace supe
