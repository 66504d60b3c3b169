#pragma once

// 64-bit deformable attention for one query. Every sample is projected by
// the value map before the weighted sum (the textbook order).

#include <optional>
#include <string>

#include "oracles/tensor_oracle.hpp"
#include "radfuse/deformable.hpp"

namespace oracle {

struct Pixel {
  double u, v;
  double d = 0;  // camera depth
};

/// K [R t] p in homogeneous coordinates, straight from the 3x4 and 4x4.
inline std::optional<Pixel> pinhole(const radfuse::Vec3& p, const radfuse::Calibration& c) {
  double cam[4];
  for (int r = 0; r < 4; ++r) cam[r] = c.r2c[r * 4] * p[0] + c.r2c[r * 4 + 1] * p[1] + c.r2c[r * 4 + 2] * p[2] + c.r2c[r * 4 + 3];
  double img[3];
  for (int r = 0; r < 3; ++r) {
    img[r] = 0;
    for (int k = 0; k < 4; ++k) img[r] += c.intr[r * 4 + k] * cam[k];
  }
  if (img[2] <= 1e-6) return std::nullopt;
  return Pixel{img[0] / img[2], img[1] / img[2], img[2]};
}

struct DeformableOut {
  Vec image;   // F^
  Vec output;  // FFN([q, F^])
  std::vector<double> weights;
};

inline DeformableOut deformable(const Vec& q, const radfuse::Vec3& ref, const radfuse::FeaturePyramid& pyr,
                                const radfuse::Calibration& cal, const radfuse::ParamStore& s,
                                const std::string& path, const radfuse::DeformableConfig& cfg) {
  const Vec offsets = matvec(q, s.linear(path + ".offset"));
  const Vec logits = matvec(q, s.linear(path + ".attn"));
  DeformableOut out;
  out.image.assign(cfg.query_dim, 0.0);
  const auto px = pinhole(ref, cal);
  for (std::size_t m = 0; m < cfg.heads; ++m) {
    const std::size_t per = cfg.levels * cfg.points;
    const Vec a = softmax(Vec(logits.begin() + static_cast<long>(m * per), logits.begin() + static_cast<long>((m + 1) * per)));
    out.weights.insert(out.weights.end(), a.begin(), a.end());
    if (!px) continue;
    const auto& wv = s.linear(path + ".value.m" + std::to_string(m));
    const auto& wo = s.linear(path + ".output.m" + std::to_string(m));
    Vec head(cfg.head_dim, 0.0);
    for (std::size_t j = 0; j < cfg.levels; ++j)
      for (std::size_t l = 0; l < cfg.points; ++l) {
        const std::size_t idx = (m * cfg.levels + j) * cfg.points + l;
        const double stride = pyr.levels[j].stride;
        const Vec f = bilinear(pyr.levels[j].map, (px->u + offsets[2 * idx]) / stride, (px->v + offsets[2 * idx + 1]) / stride);
        const Vec g = matvec(f, wv);
        for (std::size_t i = 0; i < cfg.head_dim; ++i) head[i] += a[j * cfg.points + l] * g[i];
      }
    const Vec o = matvec(head, wo);
    for (std::size_t i = 0; i < cfg.query_dim; ++i) out.image[i] += o[i];
  }
  Vec joined = q;
  joined.insert(joined.end(), out.image.begin(), out.image.end());
  out.output = ffn(joined, s, path + ".ffn");
  return out;
}

}  // namespace oracle
