// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "radfuse/rng.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

class ParamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Affine map y = x W^T + b. weight is [out, in], bias is [out].
struct LinearParams {
  Tensor weight;
  Tensor bias;

  std::size_t fan_in() const { return weight.dim(1); }
  std::size_t fan_out() const { return weight.dim(0); }
};

/// Per-feature LayerNorm affine (gamma, beta).
struct NormParams {
  Tensor gamma;
  Tensor beta;
};

/// Borrowed view of the three layers that make up one feed-forward block.
struct FfnParams {
  const NormParams& norm;
  const LinearParams& fc1;
  const LinearParams& fc2;
};

/// Named parameter store. Paths are dotted ("hsfp.x3.qgslf.offset").
/// Shapes are declared first; init() then fills every tensor from a
/// SplitMix64 stream keyed by (seed, path), so the values of one parameter
/// never depend on which other parameters exist.
class ParamStore {
 public:
  void declare_linear(const std::string& path, std::size_t in, std::size_t out) {
    claim(path);
    linear_.emplace(path, LinearParams{Tensor({out, in}), Tensor({out})});
  }

  void declare_norm(const std::string& path, std::size_t width) {
    claim(path);
    norm_.emplace(path, NormParams{Tensor({width}, 1.0f), Tensor({width})});
  }

  void declare_ffn(const std::string& path, std::size_t in, std::size_t hidden, std::size_t out) {
    declare_norm(path + ".norm", in);
    declare_linear(path + ".fc1", in, hidden);
    declare_linear(path + ".fc2", hidden, out);
  }

  /// Glorot-uniform weights, zero biases, unit LayerNorm gain.
  void init(std::uint64_t seed) {
    seed_ = seed;
    for (auto& [path, p] : linear_) {
      const double a = std::sqrt(6.0 / static_cast<double>(p.fan_in() + p.fan_out()));
      SplitMix64 rng(stream_key(seed, std::string_view(path)));
      for (float& w : p.weight.values()) w = static_cast<float>(rng.uniform(-a, a));
      for (float& b : p.bias.values()) b = 0.0f;
    }
    for (auto& [path, p] : norm_) {
      for (float& g : p.gamma.values()) g = 1.0f;
      for (float& b : p.beta.values()) b = 0.0f;
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

  bool contains(const std::string& path) const {
    return linear_.count(path) != 0 || norm_.count(path) != 0;
  }

  const LinearParams& linear(const std::string& path) const { return find(linear_, path); }
  LinearParams& mutable_linear(const std::string& path) { return find(linear_, path); }
  const NormParams& norm(const std::string& path) const { return find(norm_, path); }
  NormParams& mutable_norm(const std::string& path) { return find(norm_, path); }

  FfnParams ffn(const std::string& path) const {
    return {norm(path + ".norm"), linear(path + ".fc1"), linear(path + ".fc2")};
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto& [p, _] : linear_) out.push_back(p);
    for (const auto& [p, _] : norm_) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : linear_) n += p.weight.size() + p.bias.size();
    for (const auto& [_, p] : norm_) n += p.gamma.size() + p.beta.size();
    return n;
  }

  const std::map<std::string, LinearParams>& linear_layers() const noexcept { return linear_; }
  const std::map<std::string, NormParams>& norm_layers() const noexcept { return norm_; }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.linear_.size() != b.linear_.size() || a.norm_.size() != b.norm_.size()) return false;
    for (const auto& [path, p] : a.linear_) {
      auto it = b.linear_.find(path);
      if (it == b.linear_.end() || !(it->second.weight == p.weight) || !(it->second.bias == p.bias))
        return false;
    }
    for (const auto& [path, p] : a.norm_) {
      auto it = b.norm_.find(path);
      if (it == b.norm_.end() || !(it->second.gamma == p.gamma) || !(it->second.beta == p.beta))
        return false;
    }
    return true;
  }

 private:
  void claim(const std::string& path) {
    if (contains(path)) throw ParamError("params: duplicate parameter path '" + path + "'");
  }

  template <typename Map>
  static decltype((std::declval<Map&>().begin()->second)) find(Map& m, const std::string& path) {
    auto it = m.find(path);
    if (it == m.end()) throw ParamError("params: missing parameter '" + path + "'");
    return it->second;
  }

  std::map<std::string, LinearParams> linear_;
  std::map<std::string, NormParams> norm_;
  std::uint64_t seed_ = 0;
};

inline ParamStore init_params(ParamStore store, std::uint64_t seed) {
  store.init(seed);
  return store;
}

}  // namespace radfuse
