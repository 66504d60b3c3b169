// SPDX-License-Identifier: Apache-2.0
#pragma once

// BEV scatter and PR-curve emission. Coordinates are printed with fixed
// precision so identical inputs give identical bytes.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "radfuse/box.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/eval_metrics.hpp"
#include "radfuse/image.hpp"
#include "radfuse/voxel_encoder.hpp"

namespace radfuse {

namespace detail {

inline std::string fx(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// BEV view: forward (x) points up the image, left (y) points left.
struct BevFrame {
  GridSpec grid;
  double scale = 10.0;  // pixels per meter

  int width() const { return static_cast<int>(std::lround((grid.hi[1] - grid.lo[1]) * scale)); }
  int height() const { return static_cast<int>(std::lround((grid.hi[0] - grid.lo[0]) * scale)); }
  double px(double y) const { return (grid.hi[1] - y) * scale; }
  double py(double x) const { return (grid.hi[0] - x) * scale; }
};

}  // namespace detail

/// Raw points blue, virtual points yellow, boxes as outlines.
inline std::string bev_svg(const std::vector<HybridPoint>& points, const std::vector<Box3D>& boxes,
                           const GridSpec& grid, double scale = 10.0) {
  const detail::BevFrame f{grid, scale};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width() << "\" height=\"" << f.height() + 40
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#101418\"/>\n";
  for (const bool virt : {false, true}) {
    os << "<g fill=\"" << (virt ? "#f5d000" : "#3a8dff") << "\">\n";
    for (const auto& p : points) {
      if (p.is_virtual() != virt) continue;
      os << "<circle cx=\"" << detail::fx(f.px(p.xyz[1])) << "\" cy=\"" << detail::fx(f.py(p.xyz[0]))
         << "\" r=\"" << (virt ? "1.2" : "1.8") << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "<g fill=\"none\" stroke=\"#ff4d4d\" stroke-width=\"1.5\">\n";
  for (const auto& b : boxes) {
    os << "<polygon points=\"";
    const auto c = b.bev_corners();
    for (std::size_t i = 0; i < 4; ++i) os << (i ? " " : "") << detail::fx(f.px(c[i][1])) << ',' << detail::fx(f.py(c[i][0]));
    os << "\"/>\n";
  }
  os << "</g>\n";
  const int y = f.height() + 25;
  os << "<g font-family=\"monospace\" font-size=\"14\" fill=\"#e0e0e0\">\n"
     << "<circle cx=\"15\" cy=\"" << y - 5 << "\" r=\"4\" fill=\"#3a8dff\"/><text x=\"25\" y=\"" << y << "\">raw</text>\n"
     << "<circle cx=\"85\" cy=\"" << y - 5 << "\" r=\"4\" fill=\"#f5d000\"/><text x=\"95\" y=\"" << y
     << "\">virtual</text>\n"
     << "<rect x=\"175\" y=\"" << y - 11 << "\" width=\"12\" height=\"12\" fill=\"none\" stroke=\"#ff4d4d\"/><text x=\"195\" y=\""
     << y << "\">box</text>\n</g>\n</svg>\n";
  return os.str();
}

/// Raster version of bev_svg.
inline RgbImage bev_image(const std::vector<HybridPoint>& points, const std::vector<Box3D>& boxes, const GridSpec& grid,
                          double scale = 10.0) {
  const detail::BevFrame f{grid, scale};
  RgbImage img(f.width(), f.height(), 16);
  auto dot = [&](double x, double y, int r, std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    const int cx = static_cast<int>(std::lround(f.px(y))), cy = static_cast<int>(std::lround(f.py(x)));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, cr, cg, cb);
  };
  for (const bool virt : {false, true})
    for (const auto& p : points)
      if (p.is_virtual() == virt) {
        if (virt) {
          dot(p.xyz[0], p.xyz[1], 1, 245, 208, 0);
        } else {
          dot(p.xyz[0], p.xyz[1], 1, 58, 141, 255);
        }
      }
  for (const auto& b : boxes) {
    const auto c = b.bev_corners();
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& a = c[i];
      const auto& e = c[(i + 1) % 4];
      const int steps = std::max(1, static_cast<int>(std::hypot(e[0] - a[0], e[1] - a[1]) * scale * 2));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        img.set(static_cast<int>(std::lround(f.px(a[1] + t * (e[1] - a[1])))),
                static_cast<int>(std::lround(f.py(a[0] + t * (e[0] - a[0])))), 255, 77, 77);
      }
    }
  }
  return img;
}

/// One step curve per class with ground truth.
inline std::string pr_svg(const EvalReport& rep, bool bev = false) {
  const int w = 480, h = 360, m = 50;
  static const char* colors[] = {"#d62728", "#2ca02c", "#1f77b4", "#9467bd"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << m << "\" y=\"" << 20 << "\" width=\"" << w - m - 20
     << "\" height=\"" << h - m - 20 << "\"/></g>\n"
     << "<g font-family=\"monospace\" font-size=\"12\">\n<text x=\"" << w / 2 - 20 << "\" y=\"" << h - 12
     << "\">recall</text>\n<text x=\"4\" y=\"" << h / 2 << "\">prec</text>\n";
  const double pw = w - m - 20, ph = h - m - 20;
  int legend = 0;
  for (std::size_t c = 0; c < rep.classes.size(); ++c) {
    const auto& cr = rep.classes[c];
    const PRCurve& pr = bev ? cr.curve_bev : cr.curve_3d;
    if (pr.num_gt == 0) continue;
    os << "<polyline fill=\"none\" stroke=\"" << colors[c % 4] << "\" stroke-width=\"1.5\" points=\""
       << detail::fx(m) << ',' << detail::fx(20);
    double prev_r = 0.0;
    for (std::size_t k = 0; k < pr.recall.size(); ++k) {
      const double x = m + pw * pr.recall[k], y = 20 + ph * (1.0 - pr.precision[k]);
      os << ' ' << detail::fx(m + pw * prev_r) << ',' << detail::fx(y) << ' ' << detail::fx(x) << ',' << detail::fx(y);
      prev_r = pr.recall[k];
    }
    os << "\"/>\n";
    const auto& ap = bev ? cr.ap_bev : cr.ap_3d;
    os << "<text x=\"" << m + 10 << "\" y=\"" << h - m - 10 - 16 * legend++ << "\" fill=\"" << colors[c % 4] << "\">"
       << cr.name << " AP " << detail::fx(100.0 * ap.value_or(0.0)) << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace radfuse
