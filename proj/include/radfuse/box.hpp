// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "radfuse/geometry.hpp"

namespace radfuse {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Oriented 3D box: center (x, y, z), extents (l along heading, w, h along
/// z), heading yaw about +z. Proposals, detections and ground truth all
/// share this layout.
struct Box3D {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double yaw = 0;
  double score = 1.0;
  int cls = 0;

  Vec3 center() const { return {x, y, z}; }

  Vec3 to_local(const Vec3& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p[0] - x, dy = p[1] - y;
    return {c * dx + s * dy, -s * dx + c * dy, p[2] - z};
  }

  Vec3 to_world(const Vec3& q) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {x + c * q[0] - s * q[1], y + s * q[0] + c * q[1], z + q[2]};
  }

  bool contains(const Vec3& p, double margin = 0.0) const {
    const Vec3 q = to_local(p);
    return std::abs(q[0]) <= l / 2 + margin && std::abs(q[1]) <= w / 2 + margin &&
           std::abs(q[2]) <= h / 2 + margin;
  }

  /// BEV corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = l / 2, hw = w / 2;
    const std::array<std::array<double, 2>, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
    std::array<std::array<double, 2>, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
      out[i] = {x + c * local[i][0] - s * local[i][1], y + s * local[i][0] + c * local[i][1]};
    }
    return out;
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out{};
    std::size_t k = 0;
    for (const double sx : {-0.5, 0.5})
      for (const double sy : {-0.5, 0.5})
        for (const double sz : {-0.5, 0.5}) out[k++] = to_world({sx * l, sy * w, sz * h});
    return out;
  }
};

}  // namespace radfuse
