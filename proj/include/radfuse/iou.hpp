// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "radfuse/box.hpp"

namespace radfuse {

using Point2 = std::array<double, 2>;

inline double polygon_area(const std::vector<Point2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % n];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

/// Sutherland-Hodgman: clips `subject` by the convex CCW polygon `clip`.
inline std::vector<Point2> clip_convex(std::vector<Point2> subject, const std::vector<Point2>& clip) {
  auto side = [](const Point2& a, const Point2& b, const Point2& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Point2& a = clip[e];
    const Point2& b = clip[(e + 1) % clip.size()];
    std::vector<Point2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point2& cur = subject[i];
      const Point2& prev = subject[(i + subject.size() - 1) % subject.size()];
      const double sc = side(a, b, cur), sp = side(a, b, prev);
      if (sc >= 0) {
        if (sp < 0) {
          const double t = sp / (sp - sc);
          out.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
        }
        out.push_back(cur);
      } else if (sp >= 0) {
        const double t = sp / (sp - sc);
        out.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

inline std::vector<Point2> bev_polygon(const Box3D& b) {
  const auto c = b.bev_corners();
  return {c.begin(), c.end()};
}

inline double bev_intersection(const Box3D& a, const Box3D& b) {
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.l, a.w), rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return 0.0;
  const auto poly = clip_convex(bev_polygon(a), bev_polygon(b));
  return poly.size() < 3 ? 0.0 : std::max(0.0, polygon_area(poly));
}

/// Rotated-rectangle IoU in the ground plane.
inline double bev_iou(const Box3D& a, const Box3D& b) {
  // Clip the same way round for both argument orders so iou(a,b) == iou(b,a)
  // bit for bit.
  const bool swap = std::tie(b.x, b.y, b.l, b.w, b.yaw) < std::tie(a.x, a.y, a.l, a.w, a.yaw);
  const double inter = swap ? bev_intersection(b, a) : bev_intersection(a, b);
  const double uni = a.l * a.w + b.l * b.w - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

inline double vertical_overlap(const Box3D& a, const Box3D& b) {
  return std::max(0.0, std::min(a.z + a.h / 2, b.z + b.h / 2) - std::max(a.z - a.h / 2, b.z - b.h / 2));
}

inline double iou3d(const Box3D& a, const Box3D& b) {
  const double dz = vertical_overlap(a, b);
  if (dz <= 0) return 0.0;
  const bool swap = std::tie(b.x, b.y, b.l, b.w, b.yaw) < std::tie(a.x, a.y, a.l, a.w, a.yaw);
  const double inter = (swap ? bev_intersection(b, a) : bev_intersection(a, b)) * dz;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Greedy score-ordered suppression by BEV IoU (ties keep input order).
inline std::vector<std::size_t> nms_bev(const std::vector<Box3D>& boxes, double threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return boxes[i].score > boxes[j].score; });
  std::vector<std::size_t> keep;
  for (const std::size_t i : order) {
    bool suppressed = false;
    for (const std::size_t k : keep) {
      if (bev_iou(boxes[i], boxes[k]) > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(i);
  }
  return keep;
}

}  // namespace radfuse
