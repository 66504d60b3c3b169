// SPDX-License-Identifier: Apache-2.0
#pragma once

// Text formats. Every CSV starts with a header row naming its columns;
// numbers are written in shortest round-trip form so files are byte-stable
// and reload bit-exactly.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "radfuse/box.hpp"
#include "radfuse/densify.hpp"
#include "radfuse/eval_metrics.hpp"
#include "radfuse/image.hpp"
#include "radfuse/rtf.hpp"

namespace radfuse {

template <typename F>
std::string format_number(F v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim_copy(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(trim_copy(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(trim_copy(cur));
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

/// Reads a CSV with a header row; returns header and rows, skipping blank lines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline CsvTable read_csv(std::istream& is, const std::string& what) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                        " columns, got " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw FormatError(what + ": missing header row");
  return t;
}

inline std::ifstream open_in(const std::filesystem::path& p, const char* what) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError(std::string(what) + ": cannot open " + p.string());
  return is;
}

inline std::ofstream open_out(const std::filesystem::path& p, const char* what) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw FormatError(std::string(what) + ": cannot write " + p.string());
  return os;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Radar points: x,y,z then the schema's attribute columns.

inline std::vector<std::string> point_columns(Schema s) {
  std::vector<std::string> cols{"x", "y", "z"};
  for (const auto& a : attribute_names(s)) cols.push_back(a);
  return cols;
}

struct PointCloud {
  Schema schema = Schema::kVod7;
  std::vector<RadarPoint> points;
};

/// The schema is recognized from the header.
inline PointCloud read_points_csv(std::istream& is, const std::string& what = "points") {
  const auto t = detail::read_csv(is, what);
  PointCloud pc;
  if (t.header == point_columns(Schema::kVod7)) {
    pc.schema = Schema::kVod7;
  } else if (t.header == point_columns(Schema::kTj4d8)) {
    pc.schema = Schema::kTj4d8;
  } else {
    std::string got;
    for (const auto& h : t.header) got += (got.empty() ? "" : ",") + h;
    throw FormatError(what + ": header '" + got + "' matches neither vod7 (x,y,z,rcs,v_r,v_rc,t) nor tj4d8 "
                      "(x,y,z,v_r,range,power,alpha,beta)");
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = what + ":" + std::to_string(t.lines[r]);
    RadarPoint p;
    for (std::size_t a = 0; a < 3; ++a) p.xyz[a] = detail::parse_double(t.rows[r][a], where);
    for (std::size_t c = 3; c < t.header.size(); ++c) {
      p.attrs.push_back(static_cast<float>(detail::parse_double(t.rows[r][c], where)));
    }
    pc.points.push_back(std::move(p));
  }
  return pc;
}

inline void write_points_csv(std::ostream& os, const PointCloud& pc) {
  check_schema(pc.points, pc.schema);
  const auto cols = point_columns(pc.schema);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& p : pc.points) {
    os << format_number(p.xyz[0]) << ',' << format_number(p.xyz[1]) << ',' << format_number(p.xyz[2]);
    for (const float a : p.attrs) os << ',' << format_number(a);
    os << '\n';
  }
}

inline PointCloud load_points(const std::filesystem::path& p) {
  auto is = detail::open_in(p, "points");
  return read_points_csv(is, p.filename().string());
}

inline void save_points(const std::filesystem::path& p, const PointCloud& pc) {
  auto os = detail::open_out(p, "points");
  write_points_csv(os, pc);
}

// ---------------------------------------------------------------------------
// Hybrid points: point columns, then e0..e{K-1}, r_raw, r_virtual.

struct HybridCloud {
  Schema schema = Schema::kVod7;
  int num_classes = 3;
  std::vector<HybridPoint> points;
};

inline std::vector<std::string> hybrid_columns(Schema s, int num_classes) {
  auto cols = point_columns(s);
  for (int k = 0; k < num_classes; ++k) cols.push_back("e" + std::to_string(k));
  cols.push_back("r_raw");
  cols.push_back("r_virtual");
  return cols;
}

inline void write_hybrid_csv(std::ostream& os, const HybridCloud& hc) {
  const auto cols = hybrid_columns(hc.schema, hc.num_classes);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& p : hc.points) {
    if (p.attrs.size() != attribute_count(hc.schema) || p.semantic.size() != static_cast<std::size_t>(hc.num_classes)) {
      throw FormatError("hybrid: point widths do not match the " + schema_name(hc.schema) + " layout");
    }
    os << format_number(p.xyz[0]) << ',' << format_number(p.xyz[1]) << ',' << format_number(p.xyz[2]);
    for (const float a : p.attrs) os << ',' << format_number(a);
    for (const float e : p.semantic) os << ',' << format_number(e);
    os << ',' << format_number(p.type[0]) << ',' << format_number(p.type[1]) << '\n';
  }
}

inline HybridCloud read_hybrid_csv(std::istream& is, const std::string& what = "hybrid") {
  const auto t = detail::read_csv(is, what);
  HybridCloud hc;
  bool matched = false;
  for (const Schema s : {Schema::kVod7, Schema::kTj4d8}) {
    const std::size_t base = 3 + attribute_count(s);
    if (t.header.size() < base + 2) continue;
    const int k = static_cast<int>(t.header.size() - base - 2);
    if (t.header == hybrid_columns(s, k)) {
      hc.schema = s;
      hc.num_classes = k;
      matched = true;
      break;
    }
  }
  if (!matched) throw FormatError(what + ": header is not a hybrid point layout");
  const std::size_t na = attribute_count(hc.schema);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = what + ":" + std::to_string(t.lines[r]);
    const auto& row = t.rows[r];
    HybridPoint p;
    for (std::size_t a = 0; a < 3; ++a) p.xyz[a] = detail::parse_double(row[a], where);
    std::size_t c = 3;
    for (std::size_t a = 0; a < na; ++a) p.attrs.push_back(static_cast<float>(detail::parse_double(row[c++], where)));
    p.semantic.clear();
    for (int k = 0; k < hc.num_classes; ++k) p.semantic.push_back(static_cast<float>(detail::parse_double(row[c++], where)));
    p.type[0] = static_cast<float>(detail::parse_double(row[c++], where));
    p.type[1] = static_cast<float>(detail::parse_double(row[c++], where));
    hc.points.push_back(std::move(p));
  }
  return hc;
}

inline void save_hybrid(const std::filesystem::path& p, const HybridCloud& hc) {
  auto os = detail::open_out(p, "hybrid");
  write_hybrid_csv(os, hc);
}

inline HybridCloud load_hybrid(const std::filesystem::path& p) {
  auto is = detail::open_in(p, "hybrid");
  return read_hybrid_csv(is, p.filename().string());
}

// ---------------------------------------------------------------------------
// Instance masks: PGM label map plus a JSON sidecar
// {"instances": [{"id": 1, "class": "Car"}, ...]}; class may be a name or id.

inline InstanceMask load_mask(const std::filesystem::path& pgm, const std::filesystem::path& json_path,
                              const std::vector<std::string>& classes) {
  auto is = detail::open_in(pgm, "mask");
  const LabelImage img = read_pgm(is);
  auto js = detail::open_in(json_path, "mask");
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("mask: " + json_path.string() + ": " + e.what());
  }
  InstanceMask m{img.width, img.height, img.labels, {}};
  if (!j.contains("instances") || !j["instances"].is_array()) {
    throw FormatError("mask: " + json_path.string() + " lacks an 'instances' array");
  }
  for (const auto& inst : j["instances"]) {
    if (!inst.contains("id") || !inst.contains("class")) throw FormatError("mask: instance entry needs id and class");
    const int id = inst["id"].get<int>();
    int cls = -1;
    if (inst["class"].is_string()) {
      const auto name = inst["class"].get<std::string>();
      for (std::size_t k = 0; k < classes.size(); ++k)
        if (classes[k] == name) cls = static_cast<int>(k);
      if (cls < 0) throw FormatError("mask: unknown class '" + name + "'");
    } else {
      cls = inst["class"].get<int>();
    }
    if (id <= 0 || !m.classes.emplace(id, cls).second) {
      throw FormatError("mask: instance ids must be positive and unique (id " + std::to_string(id) + ")");
    }
  }
  return m;
}

inline void save_mask(const std::filesystem::path& pgm, const std::filesystem::path& json_path,
                      const InstanceMask& m, const std::vector<std::string>& classes) {
  auto os = detail::open_out(pgm, "mask");
  write_pgm(os, LabelImage{m.width, m.height, m.labels});
  nlohmann::json j;
  j["instances"] = nlohmann::json::array();
  for (const auto& [id, cls] : m.classes) {
    j["instances"].push_back({{"id", id}, {"class", classes.at(static_cast<std::size_t>(cls))}});
  }
  auto js = detail::open_out(json_path, "mask");
  js << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Boxes: x,y,z,l,w,h,yaw,score,class with an optional leading frame column.
// class is a name or an integer id.

struct FramedBox {
  int frame = 0;
  Box3D box;
};

inline void write_boxes_csv(std::ostream& os, const std::vector<FramedBox>& boxes,
                            const std::vector<std::string>& classes, bool with_frame = false) {
  os << (with_frame ? "frame," : "") << "x,y,z,l,w,h,yaw,score,class\n";
  for (const auto& fb : boxes) {
    const Box3D& b = fb.box;
    if (with_frame) os << fb.frame << ',';
    os << format_number(b.x) << ',' << format_number(b.y) << ',' << format_number(b.z) << ',' << format_number(b.l)
       << ',' << format_number(b.w) << ',' << format_number(b.h) << ',' << format_number(b.yaw) << ','
       << format_number(b.score) << ',';
    if (b.cls >= 0 && static_cast<std::size_t>(b.cls) < classes.size()) {
      os << classes[static_cast<std::size_t>(b.cls)];
    } else {
      os << b.cls;
    }
    os << '\n';
  }
}

inline void write_boxes_csv(std::ostream& os, const std::vector<Box3D>& boxes, const std::vector<std::string>& classes) {
  std::vector<FramedBox> fb;
  for (const auto& b : boxes) fb.push_back({0, b});
  write_boxes_csv(os, fb, classes, false);
}

inline std::vector<FramedBox> read_boxes_csv(std::istream& is, const std::vector<std::string>& classes,
                                             const std::string& what = "boxes") {
  const auto t = detail::read_csv(is, what);
  std::vector<std::size_t> col;
  for (const char* name : {"x", "y", "z", "l", "w", "h", "yaw", "score", "class"}) {
    const auto c = t.column(name);
    if (!c) throw FormatError(what + ": missing column '" + std::string(name) + "'");
    col.push_back(*c);
  }
  const auto frame_col = t.column("frame");
  std::vector<FramedBox> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = what + ":" + std::to_string(t.lines[r]);
    const auto& row = t.rows[r];
    FramedBox fb;
    Box3D& b = fb.box;
    double* fields[] = {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.yaw, &b.score};
    for (std::size_t i = 0; i < 8; ++i) *fields[i] = detail::parse_double(row[col[i]], where);
    const std::string& cls = row[col[8]];
    b.cls = -1;
    for (std::size_t k = 0; k < classes.size(); ++k)
      if (classes[k] == cls) b.cls = static_cast<int>(k);
    if (b.cls < 0) {
      const double id = detail::parse_double(cls, where);
      if (id != static_cast<int>(id)) throw FormatError(where + ": bad class '" + cls + "'");
      b.cls = static_cast<int>(id);
    }
    if (!(b.l > 0 && b.w > 0 && b.h > 0)) throw FormatError(where + ": box sizes must be positive");
    if (frame_col) fb.frame = static_cast<int>(detail::parse_double(row[*frame_col], where));
    if (fb.frame < 0) throw FormatError(where + ": negative frame id");
    out.push_back(fb);
  }
  return out;
}

inline std::vector<FramedBox> load_boxes(const std::filesystem::path& p, const std::vector<std::string>& classes) {
  auto is = detail::open_in(p, "boxes");
  return read_boxes_csv(is, classes, p.filename().string());
}

inline void save_boxes(const std::filesystem::path& p, const std::vector<Box3D>& boxes,
                       const std::vector<std::string>& classes) {
  auto os = detail::open_out(p, "boxes");
  write_boxes_csv(os, boxes, classes);
}

inline FrameBoxes group_by_frame(const std::vector<FramedBox>& boxes, std::size_t min_frames = 0) {
  std::size_t n = min_frames;
  for (const auto& b : boxes) n = std::max(n, static_cast<std::size_t>(b.frame) + 1);
  FrameBoxes out(n);
  for (const auto& b : boxes) out[static_cast<std::size_t>(b.frame)].push_back(b.box);
  return out;
}

}  // namespace radfuse
