// SPDX-License-Identifier: Apache-2.0
#pragma once

// Instance-guided virtual point generation: project radar points into the
// image, keep the ones that land on an instance, sample new pixels around
// and inside each instance, copy depth/attributes from the nearest projected
// points and lift the samples back to 3D.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/geometry.hpp"
#include "radfuse/rng.hpp"

namespace radfuse {

class DensifyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Schema { kVod7, kTj4d8 };

/// Attribute columns after x, y, z. VoD: RCS, v_r, v_rc, scan index.
/// TJ4DRadSet: v_r, range, power, alpha, beta.
inline const std::vector<std::string>& attribute_names(Schema s) {
  static const std::vector<std::string> vod{"rcs", "v_r", "v_rc", "t"};
  static const std::vector<std::string> tj4d{"v_r", "range", "power", "alpha", "beta"};
  return s == Schema::kVod7 ? vod : tj4d;
}

inline std::size_t attribute_count(Schema s) { return attribute_names(s).size(); }

inline std::string schema_name(Schema s) { return s == Schema::kVod7 ? "vod7" : "tj4d8"; }

inline Schema parse_schema(const std::string& name) {
  if (name == "vod7") return Schema::kVod7;
  if (name == "tj4d8") return Schema::kTj4d8;
  throw DensifyError("densify: unknown schema '" + name + "' (expected vod7 or tj4d8)");
}

struct RadarPoint {
  Vec3 xyz{};
  std::vector<float> attrs;
};

/// Instance-id label map (0 = background) plus instance -> class index.
struct InstanceMask {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // row-major, height x width
  std::map<int, int> classes;

  int label(int col, int row) const {
    if (col < 0 || row < 0 || col >= width || row >= height) return 0;
    return labels[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
  }

  /// Label of the pixel a continuous coordinate rounds to.
  int label_at(double u, double v) const {
    if (!std::isfinite(u) || !std::isfinite(v)) return 0;
    return label(static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v)));
  }

  std::vector<int> instance_ids() const {
    std::vector<int> ids;
    for (const auto& [id, _] : classes) ids.push_back(id);
    return ids;
  }

  std::vector<std::array<int, 2>> pixels_of(int id) const {
    std::vector<std::array<int, 2>> px;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (labels[static_cast<std::size_t>(r) * width + c] == id) px.push_back({c, r});
    return px;
  }

  void validate(int num_classes) const {
    if (width <= 0 || height <= 0 || labels.size() != static_cast<std::size_t>(width) * height) {
      throw DensifyError("mask: label map does not match its " + std::to_string(width) + "x" +
                         std::to_string(height) + " size");
    }
    for (const std::int32_t l : labels) {
      if (l < 0) throw DensifyError("mask: negative instance label");
      if (l != 0 && classes.find(l) == classes.end()) {
        throw DensifyError("mask: instance " + std::to_string(l) + " has no class entry");
      }
    }
    for (const auto& [id, cls] : classes) {
      if (cls < 0 || cls >= num_classes) {
        throw DensifyError("mask: instance " + std::to_string(id) + " has class " + std::to_string(cls) +
                           " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
};

struct ForegroundPoint {
  double u = 0, v = 0, d = 0;
  std::vector<float> attrs;
  std::size_t source = 0;  // index into the raw point list
};

using ForegroundSets = std::map<int, std::vector<ForegroundPoint>>;

struct SamplerConfig {
  double radius = 51.0;
  double sigma1 = 7.0;
  double sigma2 = 7.0;
  int tau = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(radius > 0) || !(sigma1 > 0) || !(sigma2 > 0) || tau <= 0) {
      throw DensifyError("sampler: radius, sigmas and tau must be positive");
    }
  }
};

inline constexpr int kRejectionFactor = 1000;

struct InstanceSamples {
  std::vector<std::array<double, 2>> gaussian;
  std::vector<std::array<double, 2>> uniform;
};

/// Partitions the projected points by the instance label of their rounded
/// pixel. Points behind the camera or on background join no set.
inline ForegroundSets filter_foreground(const std::vector<RadarPoint>& points, const InstanceMask& mask,
                                        const Calibration& cal) {
  ForegroundSets sets;
  for (const int id : mask.instance_ids()) sets[id];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto px = project(points[i].xyz, cal);
    if (!px) continue;
    const int id = mask.label_at(px->u, px->v);
    if (id == 0) continue;
    sets[id].push_back({px->u, px->v, px->d, points[i].attrs, i});
  }
  return sets;
}

/// True if (u, v) lies strictly within `radius` of some foreground point.
inline bool near_foreground(double u, double v, const std::vector<ForegroundPoint>& fg, double radius) {
  const double r2 = radius * radius;
  for (const auto& p : fg) {
    const double du = u - p.u, dv = v - p.v;
    if (du * du + dv * dv < r2) return true;
  }
  return false;
}

/// Pixels of the instance outside every foreground disk.
inline std::vector<std::array<int, 2>> uniform_region(const std::vector<ForegroundPoint>& fg, const InstanceMask& mask,
                                                      int instance, double radius) {
  std::vector<std::array<int, 2>> out;
  for (const auto& px : mask.pixels_of(instance)) {
    if (!near_foreground(px[0], px[1], fg, radius)) out.push_back(px);
  }
  return out;
}

/// Gaussian samples near the foreground points plus uniform samples over the
/// rest of the instance. Randomness is keyed by (seed, frame, instance).
inline InstanceSamples sample_instance(const std::vector<ForegroundPoint>& fg, const InstanceMask& mask, int instance,
                                       const SamplerConfig& cfg, std::uint64_t frame) {
  InstanceSamples out;
  if (fg.empty()) return out;
  cfg.validate();
  SplitMix64 rng(stream_key(cfg.seed, frame, static_cast<std::uint64_t>(instance)));

  const std::size_t tau = static_cast<std::size_t>(cfg.tau);
  const std::size_t max_attempts = static_cast<std::size_t>(kRejectionFactor) * tau;
  for (std::size_t attempt = 0; attempt < max_attempts && out.gaussian.size() < tau; ++attempt) {
    const auto& c = fg[rng.below(fg.size())];
    const double u = c.u + cfg.sigma1 * rng.normal();
    const double v = c.v + cfg.sigma2 * rng.normal();
    if (mask.label_at(u, v) == instance && near_foreground(u, v, fg, cfg.radius)) {
      out.gaussian.push_back({u, v});
    }
  }

  const auto region = uniform_region(fg, mask, instance, cfg.radius);
  if (!region.empty()) {
    for (std::size_t i = 0; i < tau; ++i) {
      const auto& px = region[rng.below(region.size())];
      out.uniform.push_back({static_cast<double>(px[0]), static_cast<double>(px[1])});
    }
  }
  return out;
}

/// A sampled pixel with depth and attributes copied from a foreground point.
struct AssignedSample {
  PixelPoint pixel;
  std::vector<float> attrs;
  std::size_t neighbor = 0;  // index into the instance's foreground set
  bool from_uniform = false;
};

/// Indices of the k foreground points closest to (u, v); ties go to the
/// lower index.
inline std::vector<std::size_t> nearest_foreground(const std::vector<ForegroundPoint>& fg, double u, double v,
                                                   std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d2;
  d2.reserve(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const double du = fg[i].u - u, dv = fg[i].v - v;
    d2.emplace_back(du * du + dv * dv, i);
  }
  k = std::min(k, d2.size());
  std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(k), d2.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d2[i].second);
  return out;
}

/// Gaussian samples take their single nearest neighbor; each uniform sample
/// spawns one point per neighbor among its min(4, |Q|) nearest.
inline std::vector<AssignedSample> assign_depth(const InstanceSamples& samples,
                                                const std::vector<ForegroundPoint>& fg) {
  std::vector<AssignedSample> out;
  if (fg.empty()) return out;
  for (const auto& s : samples.gaussian) {
    const std::size_t n = nearest_foreground(fg, s[0], s[1], 1).front();
    out.push_back({{s[0], s[1], fg[n].d}, fg[n].attrs, n, false});
  }
  for (const auto& s : samples.uniform) {
    for (const std::size_t n : nearest_foreground(fg, s[0], s[1], 4)) {
      out.push_back({{s[0], s[1], fg[n].d}, fg[n].attrs, n, true});
    }
  }
  return out;
}

/// Raw or virtual point with semantic one-hot e and type one-hot r.
struct HybridPoint {
  Vec3 xyz{};
  std::vector<float> attrs;
  std::vector<float> semantic;  // raw: all ones; virtual: class one-hot
  std::array<float, 2> type{1.0f, 0.0f};  // [raw, virtual]
  int instance = 0;             // source instance for virtual points, 0 for raw
  double source_depth = 0.0;    // copied camera depth for virtual points

  bool is_virtual() const { return type[1] == 1.0f; }

  std::size_t feature_width() const { return 3 + attrs.size() + semantic.size() + 2; }

  void append_features(std::vector<float>& out) const {
    out.push_back(static_cast<float>(xyz[0]));
    out.push_back(static_cast<float>(xyz[1]));
    out.push_back(static_cast<float>(xyz[2]));
    out.insert(out.end(), attrs.begin(), attrs.end());
    out.insert(out.end(), semantic.begin(), semantic.end());
    out.push_back(type[0]);
    out.push_back(type[1]);
  }
};

struct InstanceReport {
  int instance = 0;
  int cls = 0;
  std::size_t foreground = 0;
  std::size_t gaussian = 0;
  std::size_t uniform = 0;
  std::size_t virtual_points = 0;
};

struct DensifyResult {
  std::vector<HybridPoint> points;
  std::vector<InstanceReport> instances;

  std::size_t raw_count() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(),
                                                  [](const HybridPoint& p) { return !p.is_virtual(); }));
  }
};

inline void check_schema(const std::vector<RadarPoint>& points, Schema schema) {
  const std::size_t want = attribute_count(schema);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].attrs.size() != want) {
      throw DensifyError("densify: point " + std::to_string(i) + " has " + std::to_string(points[i].attrs.size()) +
                         " attributes, schema " + schema_name(schema) + " expects " + std::to_string(want));
    }
  }
}

/// Raw points (input order, unit-padded semantics, type [1,0]) followed by
/// virtual points ordered by (instance id, sample index), type [0,1].
inline DensifyResult densify_frame(const std::vector<RadarPoint>& points, const InstanceMask& mask,
                                   const Calibration& cal, const SamplerConfig& cfg, Schema schema,
                                   int num_classes, std::uint64_t frame = 0) {
  check_schema(points, schema);
  mask.validate(num_classes);
  cfg.validate();

  DensifyResult out;
  const std::vector<float> ones(static_cast<std::size_t>(num_classes), 1.0f);
  out.points.reserve(points.size());
  for (const auto& p : points) {
    out.points.push_back({p.xyz, p.attrs, ones, {1.0f, 0.0f}, 0, 0.0});
  }

  const auto sets = filter_foreground(points, mask, cal);
  const Reprojector lift(cal);
  for (const auto& [id, fg] : sets) {
    InstanceReport rep;
    rep.instance = id;
    rep.cls = mask.classes.at(id);
    rep.foreground = fg.size();
    if (!fg.empty()) {
      const InstanceSamples samples = sample_instance(fg, mask, id, cfg, frame);
      rep.gaussian = samples.gaussian.size();
      rep.uniform = samples.uniform.size();
      std::vector<float> onehot(static_cast<std::size_t>(num_classes), 0.0f);
      onehot[static_cast<std::size_t>(rep.cls)] = 1.0f;
      for (const auto& s : assign_depth(samples, fg)) {
        out.points.push_back({lift(s.pixel), s.attrs, onehot, {0.0f, 1.0f}, id, s.pixel.d});
        ++rep.virtual_points;
      }
    }
    out.instances.push_back(rep);
  }
  return out;
}

}  // namespace radfuse
