// SPDX-License-Identifier: Apache-2.0
#pragma once

// Directional-derivative checks: an analytic J·v (closed form where one is
// short, forward-mode Dual evaluation otherwise) against the central
// difference (f(x + h v) - f(x - h v)) / 2h evaluated in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/deformable.hpp"
#include "radfuse/dual.hpp"
#include "radfuse/ops.hpp"
#include "radfuse/proposal_fusion.hpp"

namespace radfuse {

inline constexpr double kJvpStep = 1e-3;
inline constexpr double kJvpTolerance = 1e-4;

struct JvpReport {
  std::string op;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;  // ||Jv - fd||_inf / max(||Jv||_inf, 1e-8)
  bool kink = false;         // a hinge or cell edge lies inside the stencil
  bool pass = false;
};

/// Inputs an op needs besides x. Only the fields the op reads must be set.
struct JvpContext {
  const ParamStore* store = nullptr;
  std::string path;
  std::vector<std::size_t> axes;     // softmax_over
  const Tensor* feature = nullptr;   // bilinear_sample: x holds (u, v)
  const FeaturePyramid* pyramid = nullptr;
  const Calibration* cal = nullptr;
  std::vector<Vec3> references;      // qgslf_block
  std::vector<ProposalGrid> grids;   // qgplf_block
  DeformableConfig attention;
};

inline const std::vector<std::string>& jvp_ops() {
  static const std::vector<std::string> ops{"linear", "softmax_over", "sigmoid", "ffn",
                                            "bilinear_sample", "qgslf_block", "qgplf_block"};
  return ops;
}

namespace detail {

template <typename T>
BasicTensor<T> jvp_eval(const std::string& op, const BasicTensor<T>& x, const JvpContext& c) {
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument("jvp_check(" + op + "): context lacks " + what);
  };
  if (op == "linear") {
    need(c.store, "a parameter store");
    return linear<T>(x, *c.store, c.path);
  }
  if (op == "softmax_over") return softmax_over<T>(x, c.axes);
  if (op == "sigmoid") return sigmoid<T>(x);
  if (op == "ffn") {
    need(c.store, "a parameter store");
    return ffn<T>(x, *c.store, c.path);
  }
  if (op == "bilinear_sample") {
    need(c.feature, "a feature map");
    if (x.size() != 2) throw ShapeError("jvp_check(bilinear_sample): x must hold (u, v)");
    return bilinear_sample<T>(*c.feature, x[0], x[1]);
  }
  if (op == "qgslf_block") {
    need(c.store && c.pyramid && c.cal, "store, pyramid and calibration");
    return deformable_fuse<T>(x, c.references, *c.pyramid, *c.cal, *c.store, c.path, c.attention, 1);
  }
  if (op == "qgplf_block") {
    need(c.store && c.pyramid && c.cal, "store, pyramid and calibration");
    return qgplf_block<T>(x, c.grids, *c.pyramid, *c.cal, *c.store, c.attention, 1, nullptr, c.path);
  }
  throw std::invalid_argument("jvp_check: unsupported op '" + op + "'");
}

}  // namespace detail

/// Analytic directional derivative of `op` at x along v. Sets *kink when a
/// piecewise boundary lies within kJvpStep of x along v.
inline TensorD analytic_jvp(const std::string& op, const TensorD& x, const TensorD& v, const JvpContext& c,
                            bool* kink = nullptr) {
  if (x.dims() != v.dims()) throw ShapeError("jvp_check: v must match x, got " + format_dims(v.dims()));
  if (op == "linear") {
    // J v = v W^T (the bias drops out).
    if (!c.store) throw std::invalid_argument("jvp_check(linear): context lacks a parameter store");
    const LinearParams& p = c.store->linear(c.path);
    const LinearParams zero_bias{p.weight, Tensor(p.bias.dims())};
    if (kink) *kink = false;
    return linear<double>(v, zero_bias);
  }
  if (op == "sigmoid") {
    const TensorD s = sigmoid<double>(x);
    TensorD out(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = s[i] * (1.0 - s[i]) * v[i];
    if (kink) *kink = false;
    return out;
  }
  if (op == "softmax_over") {
    // (diag(s) - s s^T) v per slice: s * (v - <s, v>).
    const TensorD s = softmax_over<double>(x, c.axes);
    TensorD sv(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) sv[i] = s[i] * v[i];
    std::vector<bool> in_slice(x.rank(), false);
    for (const auto a : c.axes) in_slice.at(a) = true;
    TensorD out(x.dims());
    detail::for_each_slice(x.dims(), in_slice, [&](std::size_t base, const std::vector<std::size_t>& offs) {
      double dot = 0.0;
      for (const auto o : offs) dot += sv[base + o];
      for (const auto o : offs) out[base + o] = sv[base + o] - s[base + o] * dot;
    });
    if (kink) *kink = false;
    return out;
  }
  TensorDual xd(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) xd[i] = Dual(x[i], v[i]);
  KinkWatch watch{kJvpStep, false};
  KinkWatch* prev = active_kink_watch();
  active_kink_watch() = &watch;
  TensorDual yd;
  try {
    yd = detail::jvp_eval<Dual>(op, xd, c);
  } catch (...) {
    active_kink_watch() = prev;
    throw;
  }
  active_kink_watch() = prev;
  if (kink) *kink = watch.crossed;
  TensorD out(yd.dims());
  for (std::size_t i = 0; i < yd.size(); ++i) out[i] = yd[i].d;
  return out;
}

inline TensorD finite_difference_jvp(const std::string& op, const TensorD& x, const TensorD& v, const JvpContext& c,
                                     double h = kJvpStep) {
  TensorD xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += h * v[i];
    xm[i] -= h * v[i];
  }
  const TensorD fp = detail::jvp_eval<double>(op, xp, c), fm = detail::jvp_eval<double>(op, xm, c);
  TensorD out(fp.dims());
  for (std::size_t i = 0; i < fp.size(); ++i) out[i] = (fp[i] - fm[i]) / (2.0 * h);
  return out;
}

inline JvpReport jvp_check(const std::string& op, const TensorD& x, const TensorD& v, const JvpContext& c) {
  if (std::find(jvp_ops().begin(), jvp_ops().end(), op) == jvp_ops().end()) {
    throw std::invalid_argument("jvp_check: unsupported op '" + op + "'");
  }
  JvpReport r;
  r.op = op;
  const TensorD a = analytic_jvp(op, x, v, c, &r.kink);
  const TensorD fd = finite_difference_jvp(op, x, v, c);
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(a[i]));
    r.max_abs_err = std::max(r.max_abs_err, std::abs(a[i] - fd[i]));
  }
  r.max_rel_err = r.max_abs_err / std::max(scale, 1e-8);
  r.pass = !r.kink && std::isfinite(r.max_rel_err) && r.max_rel_err < kJvpTolerance;
  return r;
}

}  // namespace radfuse
