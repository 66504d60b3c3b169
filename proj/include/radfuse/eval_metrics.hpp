// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radfuse/box.hpp"
#include "radfuse/iou.hpp"

namespace radfuse {

/// Boxes grouped by frame; matching never crosses frames.
using FrameBoxes = std::vector<std::vector<Box3D>>;

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

struct PRCurve {
  std::vector<double> recall;     // one entry per detection, score-descending
  std::vector<double> precision;
  std::size_t num_gt = 0;
  std::size_t true_positives = 0;
  double ap = 0.0;
};

inline constexpr int kRecallPoints = 40;

/// Score-descending greedy matching (ties in input order) against the
/// best-IoU unmatched GT of the same frame; a match needs IoU >= threshold.
/// Class filtering is the caller's job. AP interpolates precision at recall
/// 1/40, 2/40, ..., 1.
inline PRCurve average_precision(const FrameBoxes& dets, const FrameBoxes& gts, const IouFn& iou, double threshold) {
  if (dets.size() > gts.size()) throw std::invalid_argument("average_precision: detections for unknown frames");
  struct Ref {
    std::size_t frame, index;
    double score;
  };
  std::vector<Ref> order;
  for (std::size_t f = 0; f < dets.size(); ++f)
    for (std::size_t i = 0; i < dets[f].size(); ++i) order.push_back({f, i, dets[f][i].score});
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

  PRCurve pr;
  std::vector<std::vector<bool>> taken(gts.size());
  for (std::size_t f = 0; f < gts.size(); ++f) {
    taken[f].assign(gts[f].size(), false);
    pr.num_gt += gts[f].size();
  }
  std::vector<std::size_t> tp_at;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Box3D& d = dets[order[k].frame][order[k].index];
    const auto& frame_gt = gts[order[k].frame];
    double best = -1.0;
    std::size_t best_j = frame_gt.size();
    for (std::size_t j = 0; j < frame_gt.size(); ++j) {
      if (taken[order[k].frame][j]) continue;
      const double o = iou(d, frame_gt[j]);
      if (o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best_j < frame_gt.size() && best >= threshold) {
      taken[order[k].frame][best_j] = true;
      ++tp;
    }
    tp_at.push_back(tp);
    pr.recall.push_back(pr.num_gt ? static_cast<double>(tp) / static_cast<double>(pr.num_gt) : 0.0);
    pr.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  pr.true_positives = tp;
  if (pr.num_gt == 0) return pr;
  double sum = 0.0;
  for (int r = 1; r <= kRecallPoints; ++r) {
    double best = 0.0;
    for (std::size_t k = 0; k < tp_at.size(); ++k) {
      // recall_k >= r / 40, compared in integers
      if (tp_at[k] * kRecallPoints >= static_cast<std::size_t>(r) * pr.num_gt) best = std::max(best, pr.precision[k]);
    }
    sum += best;
  }
  pr.ap = sum / kRecallPoints;
  return pr;
}

inline PRCurve average_precision(const std::vector<Box3D>& dets, const std::vector<Box3D>& gts, const IouFn& iou,
                                 double threshold) {
  return average_precision(FrameBoxes{dets}, FrameBoxes{gts}, iou, threshold);
}

enum class Protocol { kVodEaa, kVodDca, kTj4d };

inline Protocol parse_protocol(const std::string& s) {
  if (s == "vod_eaa") return Protocol::kVodEaa;
  if (s == "vod_dca") return Protocol::kVodDca;
  if (s == "tj4d") return Protocol::kTj4d;
  throw std::invalid_argument("eval: unknown protocol '" + s + "' (expected vod_eaa|vod_dca|tj4d)");
}

inline std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kVodEaa: return "vod_eaa";
    case Protocol::kVodDca: return "vod_dca";
    case Protocol::kTj4d: return "tj4d";
  }
  return "?";
}

inline const std::vector<std::string>& class_names(Protocol p) {
  static const std::vector<std::string> vod{"Car", "Pedestrian", "Cyclist"};
  static const std::vector<std::string> tj4d{"Car", "Pedestrian", "Cyclist", "Truck"};
  return p == Protocol::kTj4d ? tj4d : vod;
}

/// Per-class IoU thresholds indexed by class id (car, pedestrian, cyclist, truck).
inline std::vector<double> default_iou_thresholds() { return {0.5, 0.25, 0.25, 0.5}; }

inline constexpr double kTj4dMaxRange = 70.0;

/// Axes the corridor predicate reads: |c[lateral]| < 4 and c[forward] < 25.
/// The default reads x and z verbatim.
struct DcaAxes {
  int lateral = 0;
  int forward = 2;
};

inline bool in_dca(const Box3D& b, const DcaAxes& axes = {}) {
  const Vec3 c = b.center();
  return -4.0 < c[axes.lateral] && c[axes.lateral] < 4.0 && c[axes.forward] < 25.0;
}

inline bool in_tj4d_range(const Box3D& b) { return std::hypot(b.x, b.y, b.z) < kTj4dMaxRange; }

struct ClassResult {
  std::string name;
  double threshold = 0.0;
  std::optional<double> ap_3d;  // empty when the class has no ground truth
  std::optional<double> ap_bev;
  PRCurve curve_3d, curve_bev;
};

struct EvalReport {
  Protocol protocol = Protocol::kVodEaa;
  std::vector<ClassResult> classes;
  std::optional<double> map_3d, map_bev;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["protocol"] = protocol_name(protocol);
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j["classes"] = nlohmann::json::array();
    for (const auto& c : classes) {
      j["classes"].push_back({{"class", c.name},
                              {"iou_threshold", c.threshold},
                              {"num_gt", c.curve_3d.num_gt},
                              {"num_det", c.curve_3d.recall.size()},
                              {"ap_3d", opt(c.ap_3d)},
                              {"ap_bev", opt(c.ap_bev)}});
    }
    j["map_3d"] = opt(map_3d);
    j["map_bev"] = opt(map_bev);
    return j;
  }

  std::string to_text() const {
    std::ostringstream os;
    auto cell = [](const std::optional<double>& v) {
      char buf[32];
      if (v) {
        std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * *v);
      } else {
        std::snprintf(buf, sizeof buf, "%8s", "-");
      }
      return std::string(buf);
    };
    os << "protocol " << protocol_name(protocol) << '\n';
    char head[96];
    std::snprintf(head, sizeof head, "%-12s %5s %6s %6s %8s %8s\n", "class", "iou", "gt", "det", "AP3D", "APBEV");
    os << head;
    for (const auto& c : classes) {
      char row[96];
      std::snprintf(row, sizeof row, "%-12s %5.2f %6zu %6zu ", c.name.c_str(), c.threshold, c.curve_3d.num_gt,
                    c.curve_3d.recall.size());
      os << row << cell(c.ap_3d) << ' ' << cell(c.ap_bev) << '\n';
    }
    char tail[64];
    std::snprintf(tail, sizeof tail, "%-12s %5s %6s %6s ", "mAP", "", "", "");
    os << tail << cell(map_3d) << ' ' << cell(map_bev) << '\n';
    return os.str();
  }
};

inline std::optional<double> mean_of(const std::vector<ClassResult>& cs, bool bev) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cs) {
    const auto& v = bev ? c.ap_bev : c.ap_3d;
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Region filtering is applied to detections and ground truth alike.
inline EvalReport evaluate(const FrameBoxes& dets, const FrameBoxes& gts, Protocol protocol,
                           const std::vector<double>& thresholds = default_iou_thresholds(),
                           const DcaAxes& axes = {}) {
  const auto& names = class_names(protocol);
  if (thresholds.size() < names.size()) throw std::invalid_argument("eval: one IoU threshold per class required");
  auto keep = [&](const Box3D& b) {
    switch (protocol) {
      case Protocol::kVodEaa: return true;
      case Protocol::kVodDca: return in_dca(b, axes);
      case Protocol::kTj4d: return in_tj4d_range(b);
    }
    return true;
  };
  auto check = [&](const FrameBoxes& fb, const char* what) {
    for (const auto& f : fb)
      for (const auto& b : f) {
        if (b.cls < 0 || static_cast<std::size_t>(b.cls) >= names.size()) {
          throw std::invalid_argument(std::string("eval: ") + what + " box has unknown class id " +
                                      std::to_string(b.cls) + " for protocol " + protocol_name(protocol));
        }
      }
  };
  check(dets, "detection");
  check(gts, "ground-truth");
  FrameBoxes all_gts = gts;
  if (dets.size() > all_gts.size()) all_gts.resize(dets.size());

  EvalReport rep;
  rep.protocol = protocol;
  for (std::size_t c = 0; c < names.size(); ++c) {
    auto select = [&](const FrameBoxes& fb) {
      FrameBoxes out(fb.size());
      for (std::size_t f = 0; f < fb.size(); ++f)
        for (const auto& b : fb[f])
          if (b.cls == static_cast<int>(c) && keep(b)) out[f].push_back(b);
      return out;
    };
    const FrameBoxes d = select(dets), g = select(all_gts);
    ClassResult r;
    r.name = names[c];
    r.threshold = thresholds[c];
    r.curve_3d = average_precision(d, g, iou3d, r.threshold);
    r.curve_bev = average_precision(d, g, bev_iou, r.threshold);
    if (r.curve_3d.num_gt > 0) {
      r.ap_3d = r.curve_3d.ap;
      r.ap_bev = r.curve_bev.ap;
    }
    rep.classes.push_back(std::move(r));
  }
  rep.map_3d = mean_of(rep.classes, false);
  rep.map_bev = mean_of(rep.classes, true);
  return rep;
}

}  // namespace radfuse
