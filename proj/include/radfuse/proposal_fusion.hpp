// SPDX-License-Identifier: Apache-2.0
#pragma once

// Proposal-level fusion: grid-cell queries inside each proposal attend to the
// image pyramid, are joined with the pooled scene features through a
// per-proposal two-token self-attention, and feed the detection head.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/box.hpp"
#include "radfuse/deformable.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/ops.hpp"
#include "radfuse/parallel.hpp"

namespace radfuse {

using GridDims = std::array<std::size_t, 3>;

inline std::size_t grid_cells(const GridDims& d) { return d[0] * d[1] * d[2]; }

/// Cell order: (i * d2 + j) * d3 + k, i along l, j along w, k along h.
struct ProposalGrid {
  std::vector<Vec3> centers;    // world frame
  std::vector<Vec3> centroids;  // mean of points in the cell, center when empty
  std::vector<int> counts;
};

inline ProposalGrid build_proposal_grid(const Box3D& box, const std::vector<HybridPoint>& points, const GridDims& d) {
  if (d[0] < 1 || d[1] < 1 || d[2] < 1) throw std::invalid_argument("proposal grid: dims must be >= 1");
  const std::size_t n = grid_cells(d);
  ProposalGrid g;
  g.centers.reserve(n);
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k) {
        g.centers.push_back(box.to_world({((i + 0.5) / static_cast<double>(d[0]) - 0.5) * box.l,
                                          ((j + 0.5) / static_cast<double>(d[1]) - 0.5) * box.w,
                                          ((k + 0.5) / static_cast<double>(d[2]) - 0.5) * box.h}));
      }
  std::vector<Vec3> sums(n, Vec3{0, 0, 0});
  g.counts.assign(n, 0);
  const Vec3 ext{box.l, box.w, box.h};
  for (const auto& p : points) {
    const Vec3 q = box.to_local(p.xyz);
    std::array<std::size_t, 3> idx{};
    bool inside = true;
    for (std::size_t a = 0; a < 3 && inside; ++a) {
      const double t = (q[a] / ext[a] + 0.5) * static_cast<double>(d[a]);
      if (!(t >= 0.0) || t > static_cast<double>(d[a])) {
        inside = false;
      } else {
        idx[a] = std::min(static_cast<std::size_t>(t), d[a] - 1);
      }
    }
    if (!inside) continue;
    const std::size_t cell = (idx[0] * d[1] + idx[1]) * d[2] + idx[2];
    for (std::size_t a = 0; a < 3; ++a) sums[cell][a] += p.xyz[a];
    ++g.counts[cell];
  }
  g.centroids.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    if (g.counts[c] == 0) {
      g.centroids[c] = g.centers[c];
    } else {
      for (std::size_t a = 0; a < 3; ++a) g.centroids[c][a] = sums[c][a] / g.counts[c];
    }
  }
  return g;
}

/// Rows of (t_grid, c_grid) for all proposals, proposal-major: [N_prop * N_g, 6].
inline TensorD grid_geometry(const std::vector<ProposalGrid>& grids) {
  std::size_t rows = 0;
  for (const auto& g : grids) rows += g.centers.size();
  TensorD out({rows, 6});
  std::size_t r = 0;
  for (const auto& g : grids) {
    for (std::size_t c = 0; c < g.centers.size(); ++c, ++r) {
      for (std::size_t a = 0; a < 3; ++a) {
        out(r, a) = g.centers[c][a];
        out(r, 3 + a) = g.centroids[c][a];
      }
    }
  }
  return out;
}

enum class ResidualCoding {
  kAdditiveLogSize,  // dx = gx - bx, dl = log(gl / bl), dyaw = wrap(gyaw - byaw)
  kDiagonal,         // centers scaled by the base BEV diagonal (x, y) and height (z)
};

inline ResidualCoding parse_residual_coding(const std::string& s) {
  if (s == "additive") return ResidualCoding::kAdditiveLogSize;
  if (s == "diagonal") return ResidualCoding::kDiagonal;
  throw std::invalid_argument("unknown residual coding '" + s + "' (expected additive|diagonal)");
}

inline std::string residual_coding_name(ResidualCoding c) {
  return c == ResidualCoding::kAdditiveLogSize ? "additive" : "diagonal";
}

using Residual = std::array<double, 7>;

inline Residual encode_residual(const Box3D& gt, const Box3D& base, ResidualCoding coding) {
  Residual r{gt.x - base.x, gt.y - base.y, gt.z - base.z, std::log(gt.l / base.l), std::log(gt.w / base.w),
             std::log(gt.h / base.h), wrap_angle(gt.yaw - base.yaw)};
  if (coding == ResidualCoding::kDiagonal) {
    const double diag = std::hypot(base.l, base.w);
    r[0] /= diag;
    r[1] /= diag;
    r[2] /= base.h;
  }
  return r;
}

inline Box3D decode_residual(const Residual& r, const Box3D& base, ResidualCoding coding) {
  double sx = 1, sy = 1, sz = 1;
  if (coding == ResidualCoding::kDiagonal) {
    sx = sy = std::hypot(base.l, base.w);
    sz = base.h;
  }
  Box3D b = base;
  b.x = base.x + r[0] * sx;
  b.y = base.y + r[1] * sy;
  b.z = base.z + r[2] * sz;
  b.l = base.l * std::exp(r[3]);
  b.w = base.w * std::exp(r[4]);
  b.h = base.h * std::exp(r[5]);
  b.yaw = wrap_angle(base.yaw + r[6]);
  return b;
}

struct RefinedProposal {
  Box3D base;
  Residual residual{};
  double confidence = 0.5;

  Box3D decoded(ResidualCoding coding) const {
    Box3D b = decode_residual(residual, base, coding);
    b.score = confidence;
    b.cls = base.cls;
    return b;
  }
};

struct PlfeConfig {
  GridDims grid{6, 6, 6};
  std::size_t grid_hidden = 64;
  DeformableConfig attention;  // query_dim is the grid query width
  std::size_t msa_dim = 128;
  std::size_t msa_heads = 4;
  std::size_t head_width = 256;
  ResidualCoding coding = ResidualCoding::kAdditiveLogSize;

  std::size_t plp_width() const { return grid_cells(grid) * attention.out_dim; }

  void validate() const {
    if (msa_heads == 0 || msa_dim % msa_heads != 0) {
      throw std::invalid_argument("plfe: msa_dim must be a positive multiple of msa_heads");
    }
  }
};

inline void declare_plfe(ParamStore& store, const PlfeConfig& cfg, std::size_t slp_width) {
  cfg.validate();
  store.declare_ffn("plfe.grid.ffn", 6, cfg.grid_hidden, cfg.attention.query_dim);
  declare_deformable(store, "plfe.qgplf", cfg.attention);
  store.declare_linear("plfe.msa.proj_plp", cfg.plp_width(), cfg.msa_dim);
  store.declare_linear("plfe.msa.proj_slp", slp_width, cfg.msa_dim);
  for (const char* n : {"q", "k", "v", "o"}) store.declare_linear(std::string("plfe.msa.") + n, cfg.msa_dim, cfg.msa_dim);
  store.declare_norm("plfe.msa.norm", cfg.msa_dim);
  store.declare_linear("head.fc1", 2 * cfg.msa_dim, cfg.head_width);
  store.declare_linear("head.fc2", cfg.head_width, cfg.head_width);
  store.declare_linear("head.reg", cfg.head_width, 7);
  store.declare_linear("head.conf", cfg.head_width, 1);
}

/// F_g = FFN(t_grid, c_grid) per cell.
template <typename T = float>
BasicTensor<T> grid_encode(const TensorD& geometry, const ParamStore& store, const std::string& path = "plfe.grid.ffn") {
  return ffn<T>(geometry.cast<T>(), store, path);
}

/// Grid queries attend to the pyramid at their projected cell centers. The
/// result is reshaped per proposal: [N_prop, N_g * C].
template <typename T>
BasicTensor<T> qgplf_block(const BasicTensor<T>& queries, const std::vector<ProposalGrid>& grids,
                           const FeaturePyramid& pyr, const Calibration& cal, const ParamStore& store,
                           const DeformableConfig& cfg, unsigned workers = 1, DeformableTrace<T>* trace = nullptr,
                           const std::string& path = "plfe.qgplf") {
  std::vector<Vec3> refs;
  for (const auto& g : grids) refs.insert(refs.end(), g.centers.begin(), g.centers.end());
  const BasicTensor<T> fused = deformable_fuse<T>(queries, refs, pyr, cal, store, path, cfg, workers, trace);
  if (grids.empty()) return BasicTensor<T>({0, 0});
  const std::size_t cells = grids.front().centers.size();
  for (const auto& g : grids) {
    if (g.centers.size() != cells) throw ShapeError(path + ": proposal grids must have equal cell counts");
  }
  return fused.reshaped({grids.size(), cells * fused.dim(1)});
}

template <typename T>
struct MsaTrace {
  std::vector<T> attention;  // [N, heads, 2, 2], rows sum to one
};

/// Two tokens per proposal (projected F_PLP and F_SLP), one multi-head
/// self-attention layer, residual and LayerNorm; output [N, 2 * D_m].
template <typename T>
BasicTensor<T> plfe_fuse(const BasicTensor<T>& plp, const BasicTensor<T>& slp, const ParamStore& store,
                         std::size_t heads, unsigned workers = 1, MsaTrace<T>* trace = nullptr,
                         const std::string& path = "plfe.msa") {
  if (plp.rank() != 2 || slp.rank() != 2 || plp.dim(0) != slp.dim(0)) {
    throw ShapeError(path + ": F_PLP " + format_dims(plp.dims()) + " and F_SLP " + format_dims(slp.dims()) +
                     " must be matrices with equal row counts");
  }
  const LinearParams& p_plp = store.linear(path + ".proj_plp");
  const LinearParams& p_slp = store.linear(path + ".proj_slp");
  const LinearParams& wq = store.linear(path + ".q");
  const LinearParams& wk = store.linear(path + ".k");
  const LinearParams& wv = store.linear(path + ".v");
  const LinearParams& wo = store.linear(path + ".o");
  const NormParams& norm = store.norm(path + ".norm");
  const std::size_t dm = p_plp.fan_out();
  if (p_slp.fan_out() != dm || heads == 0 || dm % heads != 0) {
    throw ShapeError(path + ": token width " + std::to_string(dm) + " must split evenly over " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t n = plp.dim(0), dh = dm / heads;
  const T scale = T(1.0 / std::sqrt(static_cast<double>(dh)));
  BasicTensor<T> out({n, 2 * dm});
  if (trace) trace->attention.assign(n * heads * 4, T(0));

  parallel_for(n, workers, [&](std::size_t r) {
    std::array<std::vector<T>, 2> x, q, k, v, mixed;
    for (std::size_t t = 0; t < 2; ++t) {
      x[t].resize(dm);
      q[t].resize(dm);
      k[t].resize(dm);
      v[t].resize(dm);
      mixed[t].assign(dm, T(0));
    }
    linear_into<T>(plp.row(r), p_plp, x[0]);
    linear_into<T>(slp.row(r), p_slp, x[1]);
    for (std::size_t t = 0; t < 2; ++t) {
      linear_into<T>(x[t], wq, q[t]);
      linear_into<T>(x[t], wk, k[t]);
      linear_into<T>(x[t], wv, v[t]);
    }
    for (std::size_t m = 0; m < heads; ++m) {
      for (std::size_t a = 0; a < 2; ++a) {
        std::array<T, 2> s{};
        for (std::size_t b = 0; b < 2; ++b) {
          T dot(0);
          for (std::size_t i = m * dh; i < (m + 1) * dh; ++i) dot = dot + q[a][i] * k[b][i];
          s[b] = dot * scale;
        }
        softmax_inplace<T>(std::span<T>(s));
        for (std::size_t i = m * dh; i < (m + 1) * dh; ++i) mixed[a][i] = s[0] * v[0][i] + s[1] * v[1][i];
        if (trace) {
          trace->attention[((r * heads + m) * 2 + a) * 2] = s[0];
          trace->attention[((r * heads + m) * 2 + a) * 2 + 1] = s[1];
        }
      }
    }
    std::vector<T> o(dm);
    auto dst = out.row(r);
    for (std::size_t t = 0; t < 2; ++t) {
      linear_into<T>(mixed[t], wo, o);
      for (std::size_t i = 0; i < dm; ++i) o[i] = o[i] + x[t][i];
      layer_norm_into<T>(o, norm, dst.subspan(t * dm, dm));
    }
  });
  return out;
}

/// Shared two-layer MLP, then a 7-d residual and a sigmoid confidence.
inline std::vector<RefinedProposal> detect_head(const Tensor& xp, const std::vector<Box3D>& proposals,
                                                const ParamStore& store, unsigned workers = 1,
                                                const std::string& path = "head") {
  if (xp.rank() != 2 || xp.dim(0) != proposals.size()) {
    throw ShapeError(path + ": X_P " + format_dims(xp.dims()) + " does not match " +
                     std::to_string(proposals.size()) + " proposals");
  }
  const LinearParams& fc1 = store.linear(path + ".fc1");
  const LinearParams& fc2 = store.linear(path + ".fc2");
  const LinearParams& reg = store.linear(path + ".reg");
  const LinearParams& conf = store.linear(path + ".conf");
  std::vector<RefinedProposal> out(proposals.size());
  parallel_for(proposals.size(), workers, [&](std::size_t r) {
    std::vector<float> h1(fc1.fan_out()), h2(fc2.fan_out()), d(7), c(1);
    linear_into<float>(xp.row(r), fc1, h1);
    for (float& v : h1) v = relu(v);
    linear_into<float>(h1, fc2, h2);
    for (float& v : h2) v = relu(v);
    linear_into<float>(h2, reg, d);
    linear_into<float>(h2, conf, c);
    RefinedProposal& rp = out[r];
    rp.base = proposals[r];
    for (std::size_t i = 0; i < 7; ++i) rp.residual[i] = d[i];
    rp.confidence = sigmoid(static_cast<double>(c[0]));
  });
  return out;
}

}  // namespace radfuse
