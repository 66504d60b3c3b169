// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pipeline configuration. Files use a flat subset of TOML: [table] headers,
// key = value lines, scalar values (string, integer, float, bool) and
// single-line arrays of scalars. Keys are flattened to "table.key".

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "radfuse/deformable.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/eval_metrics.hpp"
#include "radfuse/proposal_fusion.hpp"
#include "radfuse/scene_fusion.hpp"
#include "radfuse/voxel_encoder.hpp"

namespace radfuse {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TomlScalar = std::variant<bool, std::int64_t, double, std::string>;
using TomlValue = std::variant<TomlScalar, std::vector<TomlScalar>>;
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Cuts a trailing comment, respecting quoted strings.
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline TomlScalar parse_scalar(const std::string& raw, const std::string& where) {
  const std::string t = trim(raw);
  if (t.empty()) throw ConfigError(where + ": missing value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw ConfigError(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) {
        const char e = t[++i];
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(t[i]);
      }
    }
    return out;
  }
  if (t == "true") return true;
  if (t == "false") return false;
  std::string num;
  for (const char c : t)
    if (c != '_') num.push_back(c);
  const bool floating = num.find_first_of(".eE") != std::string::npos || num == "inf" || num == "nan";
  try {
    std::size_t used = 0;
    if (floating) {
      const double v = std::stod(num, &used);
      if (used == num.size()) return v;
    } else {
      const long long v = std::stoll(num, &used);
      if (used == num.size()) return static_cast<std::int64_t>(v);
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError(where + ": cannot parse value '" + t + "'");
}

inline std::vector<std::string> split_array(const std::string& body) {
  std::vector<std::string> parts;
  std::string cur;
  bool quoted = false;
  for (const char c : body) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) parts.push_back(cur);
  return parts;
}

}  // namespace detail

inline TomlTable parse_toml(std::istream& is, const std::string& name = "config") {
  TomlTable out;
  std::string line, table;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    const std::string t = detail::trim(detail::strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed table header");
      table = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const std::string full = table.empty() ? key : table + "." + key;
    if (out.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    const std::string val = detail::trim(t.substr(eq + 1));
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']') throw ConfigError(where + ": arrays must fit on one line");
      std::vector<TomlScalar> arr;
      for (const auto& part : detail::split_array(val.substr(1, val.size() - 2))) {
        arr.push_back(detail::parse_scalar(part, where));
      }
      out[full] = arr;
    } else {
      out[full] = detail::parse_scalar(val, where);
    }
  }
  return out;
}

struct PipelineConfig {
  Schema schema = Schema::kVod7;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  GridSpec grid;
  SamplerConfig sampler;
  TavfeConfig tavfe;
  std::size_t backbone_width = 32;

  std::size_t pyramid_levels = 5;
  std::size_t pyramid_channels = 32;
  int pyramid_base_stride = 4;

  std::size_t heads = 4;
  std::size_t points = 4;
  std::size_t head_dim = 8;
  std::size_t fusion_hidden = 64;
  std::vector<int> hsfp_levels{3, 4};
  GridDims roi_grid{6, 6, 6};

  ProposalConfig proposals;
  std::vector<AnchorSpec> anchors{{0, 3.9, 1.6, 1.56}, {1, 0.8, 0.6, 1.73}, {2, 1.76, 0.6, 1.73}};

  std::size_t grid_hidden = 64;
  std::size_t msa_dim = 128;
  std::size_t msa_heads = 4;
  std::size_t head_width = 256;
  ResidualCoding coding = ResidualCoding::kAdditiveLogSize;
  double nms_threshold = 0.1;

  Protocol protocol = Protocol::kVodEaa;
  std::vector<double> iou_thresholds = default_iou_thresholds();
  DcaAxes dca_axes;

  int image_width = 960;
  int image_height = 600;
  double focal = 800.0;

  static PipelineConfig vod() { return {}; }

  static PipelineConfig tj4d() {
    PipelineConfig c;
    c.schema = Schema::kTj4d8;
    c.grid = {{0.0, -39.68, -4.0}, {69.12, 39.68, 2.0}, {0.08, 0.08, 0.125}};
    c.anchors = {{0, 4.56, 1.84, 1.70}, {1, 0.8, 0.6, 1.69}, {2, 1.77, 0.78, 1.60}, {3, 10.76, 2.66, 3.47}};
    c.protocol = Protocol::kTj4d;
    return c;
  }

  int num_classes() const { return static_cast<int>(class_names(protocol).size()); }

  DeformableConfig attention() const {
    DeformableConfig d;
    d.heads = heads;
    d.points = points;
    d.levels = pyramid_levels;
    d.query_dim = backbone_width;
    d.value_dim = pyramid_channels;
    d.head_dim = head_dim;
    d.ffn_hidden = fusion_hidden;
    d.out_dim = backbone_width;
    return d;
  }

  HsfpConfig hsfp() const {
    if (roi_grid[0] != roi_grid[1] || roi_grid[1] != roi_grid[2]) {
      throw ConfigError("config: scene-level RoI pooling needs a cubic grid");
    }
    return {hsfp_levels, roi_grid[0], attention()};
  }

  PlfeConfig plfe() const {
    PlfeConfig p;
    p.grid = roi_grid;
    p.grid_hidden = grid_hidden;
    p.attention = attention();
    p.msa_dim = msa_dim;
    p.msa_heads = msa_heads;
    p.head_width = head_width;
    p.coding = coding;
    return p;
  }

  std::size_t slp_width() const { return hsfp_levels.size() * grid_cells(roi_grid) * backbone_width; }

  void validate() const {
    grid.validate();
    sampler.validate();
    plfe().validate();
    hsfp();
    if (hsfp_levels.empty()) throw ConfigError("config: fusion.levels must select at least one scale");
    std::set<int> seen;
    for (const int l : hsfp_levels) {
      if (l < 1 || l > 4 || !seen.insert(l).second) throw ConfigError("config: fusion.levels entries must be distinct, in 1..4");
    }
    if (workers == 0) throw ConfigError("config: workers must be >= 1");
    if (tavfe.max_points == 0) throw ConfigError("config: voxel.max_points must be >= 1");
    if (heads == 0 || points == 0 || pyramid_levels == 0) throw ConfigError("config: attention sizes must be >= 1");
    if (iou_thresholds.size() < static_cast<std::size_t>(num_classes())) {
      throw ConfigError("config: eval.iou_thresholds needs one entry per class");
    }
    for (const auto& a : anchors) {
      if (a.cls < 0 || a.cls >= num_classes() || !(a.l > 0 && a.w > 0 && a.h > 0)) {
        throw ConfigError("config: anchor for class " + std::to_string(a.cls) + " is invalid");
      }
    }
  }
};

namespace detail {

class TableReader {
 public:
  explicit TableReader(const TomlTable& t) : t_(t) {}

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    auto it = t_.find(key);
    if (it == t_.end()) return;
    used_.insert(key);
    try {
      fn(it->second);
    } catch (const std::bad_variant_access&) {
      throw ConfigError("config: key '" + key + "' has the wrong type");
    }
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const TomlValue& v) { out = as_double(std::get<TomlScalar>(v), key); });
  }
  template <typename I>
  void integer(const std::string& key, I& out) {
    with(key, [&](const TomlValue& v) {
      const auto x = std::get<std::int64_t>(std::get<TomlScalar>(v));
      if (x < 0) throw ConfigError("config: key '" + key + "' must be non-negative");
      out = static_cast<I>(x);
    });
  }
  void signed_integer(const std::string& key, int& out) {
    with(key, [&](const TomlValue& v) { out = static_cast<int>(std::get<std::int64_t>(std::get<TomlScalar>(v))); });
  }
  void boolean(const std::string& key, bool& out) {
    with(key, [&](const TomlValue& v) { out = std::get<bool>(std::get<TomlScalar>(v)); });
  }
  void string(const std::string& key, std::string& out) {
    with(key, [&](const TomlValue& v) { out = std::get<std::string>(std::get<TomlScalar>(v)); });
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    with(key, [&](const TomlValue& v) {
      out.clear();
      for (const auto& s : std::get<std::vector<TomlScalar>>(v)) out.push_back(as_double(s, key));
    });
  }
  void vec3(const std::string& key, Vec3& out) {
    std::vector<double> v;
    numbers(key, v);
    if (used_.count(key)) {
      if (v.size() != 3) throw ConfigError("config: key '" + key + "' needs 3 numbers");
      out = {v[0], v[1], v[2]};
    }
  }

  void reject_unknown() const {
    for (const auto& [k, _] : t_) {
      if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "'");
    }
  }

  static double as_double(const TomlScalar& s, const std::string& key) {
    if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&s)) return *d;
    throw ConfigError("config: key '" + key + "' must be numeric");
  }

 private:
  const TomlTable& t_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Applies RADFUSE_SEED, when set, over the configured seed.
inline void apply_seed_env(PipelineConfig& c) {
  if (const char* env = std::getenv("RADFUSE_SEED"); env && *env) {
    try {
      if (!std::isdigit(static_cast<unsigned char>(env[0]))) throw std::invalid_argument("sign");
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
      c.seed = v;
      c.sampler.seed = v;
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("config: RADFUSE_SEED='") + env + "' is not an unsigned integer");
    }
  }
}

/// Dataset defaults (selected by dataset.schema) overridden by the table.
inline PipelineConfig config_from_table(const TomlTable& t) {
  detail::TableReader r(t);
  std::string schema = "vod7";
  r.string("dataset.schema", schema);
  PipelineConfig c = parse_schema(schema) == Schema::kTj4d8 ? PipelineConfig::tj4d() : PipelineConfig::vod();

  std::string protocol = protocol_name(c.protocol);
  r.string("eval.protocol", protocol);
  c.protocol = parse_protocol(protocol);

  r.integer("seed", c.seed);
  c.sampler.seed = c.seed;
  r.integer("workers", c.workers);

  r.vec3("grid.lo", c.grid.lo);
  r.vec3("grid.hi", c.grid.hi);
  r.vec3("grid.voxel", c.grid.voxel);

  r.number("sampler.radius", c.sampler.radius);
  r.number("sampler.sigma1", c.sampler.sigma1);
  r.number("sampler.sigma2", c.sampler.sigma2);
  r.signed_integer("sampler.tau", c.sampler.tau);

  r.integer("voxel.max_points", c.tavfe.max_points);
  r.integer("voxel.hidden", c.tavfe.hidden);
  r.integer("voxel.out", c.tavfe.out);
  r.boolean("voxel.gate_sigmoid", c.tavfe.gate_sigmoid);
  r.integer("backbone.width", c.backbone_width);

  r.integer("pyramid.levels", c.pyramid_levels);
  r.integer("pyramid.channels", c.pyramid_channels);
  r.signed_integer("pyramid.base_stride", c.pyramid_base_stride);

  r.integer("fusion.heads", c.heads);
  r.integer("fusion.points", c.points);
  r.integer("fusion.head_dim", c.head_dim);
  r.integer("fusion.ffn_hidden", c.fusion_hidden);
  r.with("fusion.levels", [&](const TomlValue& v) {
    c.hsfp_levels.clear();
    for (const auto& s : std::get<std::vector<TomlScalar>>(v)) {
      c.hsfp_levels.push_back(static_cast<int>(std::get<std::int64_t>(s)));
    }
  });
  r.with("fusion.grid", [&](const TomlValue& v) {
    const auto& a = std::get<std::vector<TomlScalar>>(v);
    if (a.size() != 3) throw ConfigError("config: fusion.grid needs 3 integers");
    for (std::size_t i = 0; i < 3; ++i) {
      const auto x = std::get<std::int64_t>(a[i]);
      if (x < 1) throw ConfigError("config: fusion.grid entries must be >= 1");
      c.roi_grid[i] = static_cast<std::size_t>(x);
    }
  });

  r.integer("proposals.top_k", c.proposals.top_k);
  r.number("proposals.bev_cell", c.proposals.bev_cell);
  r.signed_integer("proposals.min_points", c.proposals.min_points);
  const auto& names = class_names(c.protocol);
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::string key = "anchors." + names[k];
    for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::vector<double> lwh;
    r.numbers(key, lwh);
    if (lwh.empty()) continue;
    if (lwh.size() != 3) throw ConfigError("config: " + key + " needs [l, w, h]");
    bool found = false;
    for (auto& a : c.anchors) {
      if (a.cls == static_cast<int>(k)) {
        a = {static_cast<int>(k), lwh[0], lwh[1], lwh[2]};
        found = true;
      }
    }
    if (!found) c.anchors.push_back({static_cast<int>(k), lwh[0], lwh[1], lwh[2]});
  }

  r.integer("refine.grid_hidden", c.grid_hidden);
  r.integer("refine.msa_dim", c.msa_dim);
  r.integer("refine.msa_heads", c.msa_heads);
  r.integer("refine.head_width", c.head_width);
  std::string coding = residual_coding_name(c.coding);
  r.string("refine.residual", coding);
  c.coding = parse_residual_coding(coding);
  r.number("refine.nms_threshold", c.nms_threshold);

  r.numbers("eval.iou_thresholds", c.iou_thresholds);
  r.signed_integer("eval.dca_lateral_axis", c.dca_axes.lateral);
  r.signed_integer("eval.dca_forward_axis", c.dca_axes.forward);
  if (c.dca_axes.lateral < 0 || c.dca_axes.lateral > 2 || c.dca_axes.forward < 0 || c.dca_axes.forward > 2) {
    throw ConfigError("config: DCA axes must be 0, 1 or 2");
  }

  r.signed_integer("image.width", c.image_width);
  r.signed_integer("image.height", c.image_height);
  r.number("image.focal", c.focal);

  r.reject_unknown();
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("config: cannot open " + path.string());
  return config_from_table(parse_toml(is, path.filename().string()));
}

inline PipelineConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return config_from_table(parse_toml(is));
}

}  // namespace radfuse
