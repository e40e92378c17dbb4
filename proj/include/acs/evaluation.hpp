#pragma once

// Temporal detection evaluation: non-interpolated AP with greedy best-IoU
// matching (each ground truth used once), mAP over IoU thresholds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acs/data.hpp"
#include "acs/errors.hpp"
#include "acs/inference.hpp"

namespace acs {

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;
};

inline double temporal_iou(const TimeInterval& a, const TimeInterval& b) {
  if (!(a.start < a.end) || !(b.start < b.end)) {
    throw DataError("temporal_iou: degenerate interval");
  }
  return interval_iou(a.start, a.end, b.start, b.end);
}

struct ScoredSegment {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

struct GtSegment {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
};

/// Detections are processed by descending score (stable for ties). Each one
/// is matched to the unmatched ground truth of its video with the highest
/// IoU (first in list on ties); it is a true positive when that IoU is at
/// least `iou_threshold`. AP = sum of precision at each true positive / #GT.
inline double average_precision(std::vector<ScoredSegment> dets, const std::vector<GtSegment>& gts,
                                double iou_threshold) {
  if (gts.empty()) return 0.0;
  std::stable_sort(dets.begin(), dets.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<bool> used(gts.size(), false);
  std::size_t tp = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].video_id != d.video_id) continue;
      const double iou = interval_iou(d.start, d.end, gts[j].start, gts[j].end);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      used[best_j] = true;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(gts.size());
}

struct EvalReport {
  std::vector<std::string> class_names;  // classes 1..N
  std::vector<double> thresholds;
  std::vector<std::vector<double>> ap;   // [class][threshold]
  std::vector<bool> has_gt;              // per class
  std::vector<double> map;               // per threshold
  double average_lo = 0.3;
  double average_hi = 0.7;
  double average_map = 0.0;              // mean of map over [average_lo, average_hi]

  bool in_average_range(double thr) const {
    return thr >= average_lo - 1e-9 && thr <= average_hi + 1e-9;
  }
};

inline std::vector<double> threshold_grid(double lo, double hi, double step) {
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + i * step) * 1e6) / 1e6);
  return out;
}

/// Detections and ground truth carry class indices 1..N. mAP averages over
/// classes with at least one ground-truth segment. When no requested
/// threshold falls inside [average_lo, average_hi], the average spans all
/// thresholds.
inline EvalReport map_report(const std::vector<Detection>& dets, const DatasetManifest& manifest,
                             Split split, const std::vector<double>& thresholds,
                             double average_lo = 0.3, double average_hi = 0.7) {
  const std::size_t N = manifest.num_classes();
  std::vector<std::vector<ScoredSegment>> per_class_dets(N + 1);
  std::vector<std::vector<GtSegment>> per_class_gts(N + 1);
  for (const auto& d : dets) {
    if (d.label < 1 || static_cast<std::size_t>(d.label) > N)
      throw DataError("detection for " + d.video_id + " has class " + std::to_string(d.label) +
                      " outside 1.." + std::to_string(N));
    per_class_dets[static_cast<std::size_t>(d.label)].push_back({d.video_id, d.start, d.end, d.score});
  }
  for (const VideoRecord* v : manifest.split(split))
    for (const auto& g : v->gt_segments)
      per_class_gts[static_cast<std::size_t>(g.label)].push_back({v->video_id, g.start, g.end});

  EvalReport r;
  r.class_names = manifest.class_names;
  r.thresholds = thresholds;
  r.average_lo = average_lo;
  r.average_hi = average_hi;
  r.ap.assign(N, std::vector<double>(thresholds.size(), 0.0));
  r.has_gt.assign(N, false);
  r.map.assign(thresholds.size(), 0.0);
  std::size_t counted = 0;
  for (std::size_t c = 1; c <= N; ++c) {
    r.has_gt[c - 1] = !per_class_gts[c].empty();
    if (!r.has_gt[c - 1]) continue;
    ++counted;
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      r.ap[c - 1][k] = average_precision(per_class_dets[c], per_class_gts[c], thresholds[k]);
      r.map[k] += r.ap[c - 1][k];
    }
  }
  if (counted > 0)
    for (double& m : r.map) m /= static_cast<double>(counted);

  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < thresholds.size(); ++k)
    if (r.in_average_range(thresholds[k])) s += r.map[k], ++n;
  if (n == 0)
    for (double m : r.map) s += m, ++n;
  r.average_map = n > 0 ? s / static_cast<double>(n) : 0.0;
  return r;
}

// ---------------------------------------------------------------- CSV

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Rows: one per class, then "mAP". Columns: AP@thr..., AVG(lo:hi).
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
  os << "class";
  for (double t : r.thresholds) os << ",mAP@" << format_fixed(t, 2);
  os << ",AVG(" << format_fixed(r.average_lo, 2) << ":" << format_fixed(r.average_hi, 2) << ")\n";
  auto avg_of = [&](const std::vector<double>& row) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.thresholds.size(); ++k)
      if (r.in_average_range(r.thresholds[k])) s += row[k], ++n;
    if (n == 0)
      for (double v : row) s += v, ++n;
    return n > 0 ? s / static_cast<double>(n) : 0.0;
  };
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    if (!r.has_gt[c]) continue;
    os << r.class_names[c];
    for (double v : r.ap[c]) os << "," << format_fixed(v);
    os << "," << format_fixed(avg_of(r.ap[c])) << "\n";
  }
  os << "mAP";
  for (double v : r.map) os << "," << format_fixed(v);
  os << "," << format_fixed(r.average_map) << "\n";
}

inline void write_detections_csv(std::ostream& os, const std::vector<Detection>& dets,
                                 const DatasetManifest& m) {
  os << "video_id,class_name,start_sec,end_sec,score\n";
  for (const auto& d : dets) {
    os << d.video_id << "," << m.class_names[static_cast<std::size_t>(d.label - 1)] << ","
       << format_fixed(d.start) << "," << format_fixed(d.end) << "," << format_fixed(d.score, 9)
       << "\n";
  }
}

inline std::vector<Detection> read_detections_csv(const std::filesystem::path& path,
                                                  const DatasetManifest& m) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open detections: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("video_id,class_name", 0) != 0)
    throw DataError(path.string() + ": missing detections header");
  std::vector<Detection> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 5) throw DataError(where + ": expected 5 columns");
    Detection d;
    d.video_id = cols[0];
    d.label = m.class_index(cols[1]);
    if (d.label == 0) throw DataError(where + ": unknown class '" + cols[1] + "'");
    try {
      d.start = std::stod(cols[2]);
      d.end = std::stod(cols[3]);
      d.score = std::stod(cols[4]);
    } catch (const std::exception&) {
      throw DataError(where + ": malformed number");
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace acs
