// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pinhole projection between the radar frame and image pixels.
//
// Pixel convention: (u, v) = (column, row), origin at the top-left pixel,
// integer coordinates at pixel centers. A pixel coordinate is assigned to
// pixel (lround(u), lround(v)).

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace radfuse {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDepthGuard = 1e-6;

struct Calibration {
  std::array<double, 12> intr{};  // 3x4 row-major
  std::array<double, 16> r2c{};   // 4x4 row-major

  static Calibration pinhole(double fx, double fy, double cx, double cy) {
    Calibration c;
    c.intr = {fx, 0, cx, 0, 0, fy, cy, 0, 0, 0, 1, 0};
    c.r2c = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    return c;
  }
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
};

inline double det3(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

inline Mat3 inverse3(const Mat3& m, const char* what) {
  const double det = det3(m);
  if (!(std::abs(det) > 1e-12)) throw GeometryError(std::string("geometry: singular ") + what);
  const double s = 1.0 / det;
  return {(m[4] * m[8] - m[5] * m[7]) * s, (m[2] * m[7] - m[1] * m[8]) * s, (m[1] * m[5] - m[2] * m[4]) * s,
          (m[5] * m[6] - m[3] * m[8]) * s, (m[0] * m[8] - m[2] * m[6]) * s, (m[2] * m[3] - m[0] * m[5]) * s,
          (m[3] * m[7] - m[4] * m[6]) * s, (m[1] * m[6] - m[0] * m[7]) * s, (m[0] * m[4] - m[1] * m[3]) * s};
}

inline Vec3 mul3(const Mat3& m, const Vec3& x) {
  return {m[0] * x[0] + m[1] * x[1] + m[2] * x[2], m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
          m[6] * x[0] + m[7] * x[1] + m[8] * x[2]};
}

inline Mat3 intrinsic_block(const Calibration& c) {
  return {c.intr[0], c.intr[1], c.intr[2], c.intr[4], c.intr[5], c.intr[6], c.intr[8], c.intr[9], c.intr[10]};
}

inline Mat3 rotation_block(const Calibration& c) {
  return {c.r2c[0], c.r2c[1], c.r2c[2], c.r2c[4], c.r2c[5], c.r2c[6], c.r2c[8], c.r2c[9], c.r2c[10]};
}

/// Throws unless the bottom row of r2c is [0,0,0,1]; with `rigid`, also
/// requires |det R| = 1 to 1e-6.
inline void validate(const Calibration& c, bool rigid = false) {
  const double tol = 1e-9;
  if (std::abs(c.r2c[12]) > tol || std::abs(c.r2c[13]) > tol || std::abs(c.r2c[14]) > tol ||
      std::abs(c.r2c[15] - 1.0) > tol) {
    throw GeometryError("geometry: r2c bottom row must be [0,0,0,1]");
  }
  const double det = det3(rotation_block(c));
  if (!(std::abs(det) > 1e-12)) throw GeometryError("geometry: r2c is not invertible");
  if (rigid && std::abs(std::abs(det) - 1.0) > 1e-6) {
    throw GeometryError("geometry: r2c rotation block is not rigid (|det| != 1)");
  }
}

inline Vec3 to_camera(const Vec3& p, const Calibration& c) {
  const auto& m = c.r2c;
  return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3], m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
          m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11]};
}

/// [u d, v d, d] = T_intr T_r2c [x y z 1]; nullopt when d <= 1e-6 (behind
/// or on the camera plane).
inline std::optional<PixelPoint> project(const Vec3& p, const Calibration& c) {
  const Vec3 xc = to_camera(p, c);
  const auto& k = c.intr;
  const double ud = k[0] * xc[0] + k[1] * xc[1] + k[2] * xc[2] + k[3];
  const double vd = k[4] * xc[0] + k[5] * xc[1] + k[6] * xc[2] + k[7];
  const double d = k[8] * xc[0] + k[9] * xc[1] + k[10] * xc[2] + k[11];
  if (!(d > kDepthGuard)) return std::nullopt;
  return PixelPoint{ud / d, vd / d, d};
}

/// Exact inverse of project(): back through intr^-1, then r2c^-1.
inline Vec3 reproject(const PixelPoint& q, const Calibration& c) {
  if (!(q.d > 0.0)) throw GeometryError("geometry: reproject needs positive depth");
  const Mat3 k_inv = inverse3(intrinsic_block(c), "intrinsic block");
  const Vec3 rhs{q.u * q.d - c.intr[3], q.v * q.d - c.intr[7], q.d - c.intr[11]};
  const Vec3 xc = mul3(k_inv, rhs);
  const Mat3 r_inv = inverse3(rotation_block(c), "extrinsic rotation");
  return mul3(r_inv, {xc[0] - c.r2c[3], xc[1] - c.r2c[7], xc[2] - c.r2c[11]});
}

/// Batched reprojection with the inverses computed once.
class Reprojector {
 public:
  explicit Reprojector(const Calibration& c)
      : cal_(c), k_inv_(inverse3(intrinsic_block(c), "intrinsic block")),
        r_inv_(inverse3(rotation_block(c), "extrinsic rotation")) {}

  Vec3 operator()(const PixelPoint& q) const {
    const Vec3 rhs{q.u * q.d - cal_.intr[3], q.v * q.d - cal_.intr[7], q.d - cal_.intr[11]};
    const Vec3 xc = mul3(k_inv_, rhs);
    return mul3(r_inv_, {xc[0] - cal_.r2c[3], xc[1] - cal_.r2c[7], xc[2] - cal_.r2c[11]});
  }

 private:
  Calibration cal_;
  Mat3 k_inv_;
  Mat3 r_inv_;
};

// --- Calibration JSON: {"intr": [12 reals], "r2c": [16 reals]} -------------

inline nlohmann::json to_json(const Calibration& c) {
  return nlohmann::json{{"intr", c.intr}, {"r2c", c.r2c}};
}

inline Calibration calibration_from_json(const nlohmann::json& j) {
  Calibration c;
  if (!j.contains("intr") || !j.contains("r2c") || j["intr"].size() != 12 || j["r2c"].size() != 16) {
    throw GeometryError("calibration: expected {\"intr\": [12 reals], \"r2c\": [16 reals]}");
  }
  for (std::size_t i = 0; i < 12; ++i) c.intr[i] = j["intr"][i].get<double>();
  for (std::size_t i = 0; i < 16; ++i) c.r2c[i] = j["r2c"][i].get<double>();
  validate(c);
  return c;
}

inline Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw GeometryError("calibration: cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw GeometryError("calibration: " + path.string() + ": " + e.what());
  }
  return calibration_from_json(j);
}

inline void save_calibration(const std::filesystem::path& path, const Calibration& c) {
  std::ofstream os(path);
  if (!os) throw GeometryError("calibration: cannot write " + path.string());
  os << to_json(c).dump(2) << '\n';
}

}  // namespace radfuse
