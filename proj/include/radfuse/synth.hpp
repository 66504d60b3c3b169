// SPDX-License-Identifier: Apache-2.0
#pragma once

// Seeded synthetic frames for end-to-end runs: boxes on a ground plane, radar
// returns on the sensor-facing faces of each box plus uniform clutter, a
// flat-shaded RGB rendering and the matching instance mask.
//
// Radar frame: x forward, y left, z up. Camera: x right, y down, z forward,
// mounted 0.2 m above and 0.1 m behind the radar.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "radfuse/box.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/geometry.hpp"
#include "radfuse/image.hpp"
#include "radfuse/io.hpp"
#include "radfuse/iou.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/voxel_encoder.hpp"

namespace radfuse {

struct SynthConfig {
  int width = 960;
  int height = 600;
  double focal = 800.0;
  Schema schema = Schema::kVod7;
  GridSpec grid;
  double ground_z = -1.2;
  int min_points = 5;
  int max_points = 50;
  double x_min = 6.0;  // forward placement range of box centers
  double x_max = 40.0;
};

struct SyntheticScene {
  std::vector<Box3D> gt;
  std::vector<bool> occluded;  // no visible silhouette pixels
  PointCloud radar;
  RgbImage image;
  InstanceMask mask;  // instance id = gt index + 1
  Calibration cal;
};

inline Calibration synth_calibration(int width, int height, double focal) {
  Calibration c = Calibration::pinhole(focal, focal, width / 2.0, height / 2.0);
  const double r2c[16] = {0, -1, 0, 0, 0, 0, -1, 0.2, 1, 0, 0, 0.1, 0, 0, 0, 1};
  std::copy(std::begin(r2c), std::end(r2c), c.r2c.begin());
  return c;
}

namespace detail {

inline const std::array<double, 3>& synth_size(int cls) {
  static const std::array<std::array<double, 3>, 3> sizes{{{3.9, 1.6, 1.56}, {0.8, 0.6, 1.73}, {1.76, 0.6, 1.73}}};
  return sizes[static_cast<std::size_t>(cls)];
}

inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Point2> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

/// Pixel centers inside the convex polygon (counter-clockwise in (u, v)).
template <typename Fn>
void fill_convex(const std::vector<Point2>& hull, int width, int height, Fn&& fn) {
  if (hull.size() < 3) return;
  double u0 = hull[0][0], u1 = u0, v0 = hull[0][1], v1 = v0;
  for (const auto& p : hull) {
    u0 = std::min(u0, p[0]);
    u1 = std::max(u1, p[0]);
    v0 = std::min(v0, p[1]);
    v1 = std::max(v1, p[1]);
  }
  const int c0 = std::max(0, static_cast<int>(std::ceil(u0))), c1 = std::min(width - 1, static_cast<int>(std::floor(u1)));
  const int r0 = std::max(0, static_cast<int>(std::ceil(v0))), r1 = std::min(height - 1, static_cast<int>(std::floor(v1)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      bool inside = true;
      for (std::size_t i = 0; i < hull.size() && inside; ++i) {
        const Point2& a = hull[i];
        const Point2& b = hull[(i + 1) % hull.size()];
        inside = (b[0] - a[0]) * (r - a[1]) - (b[1] - a[1]) * (c - a[0]) >= 0;
      }
      if (inside) fn(c, r);
    }
}

inline std::vector<float> synth_attrs(const Vec3& p, Schema schema, SplitMix64& rng, double radial_speed) {
  const double range = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  if (schema == Schema::kVod7) {
    const double vr = radial_speed + 0.1 * rng.normal();
    return {static_cast<float>(rng.uniform(-10.0, 20.0)), static_cast<float>(vr),
            static_cast<float>(vr * 0.9), static_cast<float>(-static_cast<double>(rng.below(5)))};
  }
  return {static_cast<float>(radial_speed + 0.1 * rng.normal()), static_cast<float>(range),
          static_cast<float>(rng.uniform(0.0, 30.0)), static_cast<float>(std::atan2(p[1], p[0])),
          static_cast<float>(std::atan2(p[2], std::hypot(p[0], p[1])))};
}

}  // namespace detail

/// Deterministic per (seed, n_objects, clutter); clutter points are drawn
/// uniformly in the grid outside every box, `clutter` of them exactly.
inline SyntheticScene synth_scene(std::uint64_t seed, int n_objects, int clutter, const SynthConfig& cfg = {}) {
  if (n_objects < 0 || clutter < 0) throw std::invalid_argument("synth: counts must be non-negative");
  SyntheticScene s;
  s.cal = synth_calibration(cfg.width, cfg.height, cfg.focal);
  s.radar.schema = cfg.schema;
  SplitMix64 rng(stream_key(seed, std::uint64_t{0x73796e74}));

  // Boxes, rejecting BEV overlap and anything outside the camera frustum.
  const double half_fov = std::atan(0.45 * cfg.width / cfg.focal);
  for (int i = 0, attempts = 0; i < n_objects && attempts < 200 * (n_objects + 1); ++attempts) {
    const int cls = static_cast<int>(rng.below(3));
    const auto& size = detail::synth_size(cls);
    Box3D b;
    b.cls = cls;
    b.l = size[0] * rng.uniform(0.9, 1.1);
    b.w = size[1] * rng.uniform(0.9, 1.1);
    b.h = size[2] * rng.uniform(0.9, 1.1);
    b.x = rng.uniform(cfg.x_min, std::min(cfg.x_max, cfg.grid.hi[0] - 5.0));
    b.y = b.x * std::tan(rng.uniform(-half_fov, half_fov));
    b.z = cfg.ground_z + b.h / 2;
    b.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    bool ok = b.y > cfg.grid.lo[1] + 3 && b.y < cfg.grid.hi[1] - 3;
    for (const auto& o : s.gt) {
      Box3D grown = o;
      grown.l += 0.5;
      grown.w += 0.5;
      if (!ok || bev_intersection(b, grown) > 0) ok = false;
    }
    for (const auto& c : b.corners()) {
      const auto px = project(c, s.cal);
      if (!px || px->u < 0 || px->v < 0 || px->u > cfg.width - 1 || px->v > cfg.height - 1) ok = false;
    }
    if (!ok) continue;
    s.gt.push_back(b);
    ++i;
  }

  // Returns on the faces whose outward normal points toward the sensor,
  // plus the roof; pulled 2% toward the center so they lie inside.
  for (const auto& b : s.gt) {
    const int n = cfg.min_points + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_points - cfg.min_points + 1)));
    const Vec3 eye = b.to_local({0, 0, 0});
    struct Face {
      int axis;
      double sign, area;
    };
    std::vector<Face> faces;
    const Vec3 ext{b.l, b.w, b.h};
    for (int a = 0; a < 2; ++a) {
      const double sgn = eye[static_cast<std::size_t>(a)] > 0 ? 1.0 : -1.0;
      faces.push_back({a, sgn, ext[static_cast<std::size_t>(1 - a)] * b.h});
    }
    faces.push_back({2, 1.0, b.l * b.w * 0.25});
    double total = 0;
    for (const auto& f : faces) total += f.area;
    const double speed = rng.uniform(-5.0, 5.0);
    for (int k = 0; k < n; ++k) {
      double pick = rng.uniform(0.0, total);
      std::size_t fi = 0;
      while (fi + 1 < faces.size() && pick > faces[fi].area) pick -= faces[fi++].area;
      Vec3 q{rng.uniform(-0.5, 0.5) * b.l, rng.uniform(-0.5, 0.5) * b.w, rng.uniform(-0.5, 0.5) * b.h};
      q[static_cast<std::size_t>(faces[fi].axis)] = faces[fi].sign * 0.5 * ext[static_cast<std::size_t>(faces[fi].axis)];
      for (double& c : q) c *= 0.98;
      const Vec3 p = b.to_world(q);
      s.radar.points.push_back({p, detail::synth_attrs(p, cfg.schema, rng, speed)});
    }
  }
  for (int k = 0, attempts = 0; k < clutter && attempts < 1000 * (clutter + 1); ++attempts) {
    const Vec3 p{rng.uniform(cfg.grid.lo[0], cfg.grid.hi[0]), rng.uniform(cfg.grid.lo[1], cfg.grid.hi[1]),
                 rng.uniform(cfg.ground_z, cfg.ground_z + 2.5)};
    bool inside = false;
    for (const auto& b : s.gt) inside = inside || b.contains(p, 0.1);
    if (inside) continue;
    s.radar.points.push_back({p, detail::synth_attrs(p, cfg.schema, rng, 0.0)});
    ++k;
  }

  // Painter's rendering, farthest box first.
  s.image = RgbImage(cfg.width, cfg.height);
  for (int r = 0; r < cfg.height; ++r) {
    const auto shade = static_cast<std::uint8_t>(r < cfg.height / 2 ? 150 + 60 * r / cfg.height : 90);
    for (int c = 0; c < cfg.width; ++c) s.image.set(c, r, shade, shade, static_cast<std::uint8_t>(shade + 20));
  }
  s.mask.width = cfg.width;
  s.mask.height = cfg.height;
  s.mask.labels.assign(static_cast<std::size_t>(cfg.width) * static_cast<std::size_t>(cfg.height), 0);
  std::vector<std::size_t> order(s.gt.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return to_camera(s.gt[a].center(), s.cal)[2] > to_camera(s.gt[b].center(), s.cal)[2];
  });
  static const std::uint8_t palette[3][3] = {{200, 40, 40}, {40, 160, 60}, {50, 80, 210}};
  for (const std::size_t i : order) {
    std::vector<Point2> px;
    for (const auto& c : s.gt[i].corners()) {
      const auto q = project(c, s.cal);
      if (q) px.push_back({q->u, q->v});
    }
    const auto* col = palette[s.gt[i].cls];
    detail::fill_convex(detail::convex_hull(px), cfg.width, cfg.height, [&](int c, int r) {
      s.mask.labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(cfg.width) + static_cast<std::size_t>(c)] =
          static_cast<std::int32_t>(i + 1);
      s.image.set(c, r, col[0], col[1], col[2]);
    });
  }
  std::vector<bool> seen(s.gt.size() + 1, false);
  for (const auto l : s.mask.labels) seen[static_cast<std::size_t>(l)] = true;
  s.occluded.assign(s.gt.size(), false);
  for (std::size_t i = 0; i < s.gt.size(); ++i) {
    if (seen[i + 1]) {
      s.mask.classes[static_cast<int>(i + 1)] = s.gt[i].cls;
    } else {
      s.occluded[i] = true;
    }
  }
  return s;
}

}  // namespace radfuse
