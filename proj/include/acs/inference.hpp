#pragma once

// Test-time localization: two-stream fusion, proposal generation from the
// fused attention (C1) and/or the fused action-subspace scores (C2),
// Outer-Inner-Contrastive scoring on P_o or P_a (C3), and per-class NMS.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "acs/data.hpp"
#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/model.hpp"
#include "acs/training.hpp"

namespace acs {

struct InferenceConfig {
  double beta = 0.4;
  bool c1 = true;  // proposals from the fused attention
  bool c2 = true;  // proposals from sum_n P_a|n
  bool c3 = true;  // OIC on P_a instead of P_o
  bool c4 = true;  // model trained with T-ResM
  double proposal_threshold = 0.5;
  double class_threshold = 0.1;
  double nms_iou = 0.5;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0))
      throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
    if (!c1 && !c2) throw ConfigError("at least one of C1, C2 must be enabled");
    if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("NMS IoU threshold must be in (0, 1]");
  }

  bool uses_subspace() const { return c2 || c3; }
};

struct TemporalProposal {
  std::size_t t_start = 0;  // inclusive snippet indices
  std::size_t t_end = 0;
  int label = 0;  // 1..N
  double score = 0.0;
  double start_sec = 0.0;  // t_start * d
  double end_sec = 0.0;    // (t_end + 1) * d
};

/// beta * rgb + (1 - beta) * flow, elementwise.
inline Matrix fuse(const Matrix& rgb, const Matrix& flow, double beta) {
  Matrix::require_same_shape(rgb, flow, "fuse");
  Matrix out(rgb.rows(), rgb.cols());
  for (std::size_t i = 0; i < rgb.size(); ++i) out[i] = beta * rgb[i] + (1.0 - beta) * flow[i];
  return out;
}

struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  bool operator==(const Interval&) const = default;
  auto operator<=>(const Interval&) const = default;
};

/// Maximal runs of consecutive snippets with signal > threshold.
inline std::vector<Interval> generate_proposals(const Matrix& signal, double threshold) {
  std::vector<Interval> out;
  const std::size_t T = signal.size();
  std::size_t t = 0;
  while (t < T) {
    if (signal[t] > threshold) {
      std::size_t e = t;
      while (e + 1 < T && signal[e + 1] > threshold) ++e;
      out.push_back({t, e});
      t = e + 1;
    } else {
      ++t;
    }
  }
  return out;
}

/// sum_{n=1..N} P(n, t), clamped to [0, 1]; the C2 proposal signal.
inline Matrix foreground_sum(const Matrix& scores) {
  Matrix out(1, scores.cols());
  for (std::size_t t = 0; t < scores.cols(); ++t) {
    double s = 0.0;
    for (std::size_t n = 1; n < scores.rows(); ++n) s += scores(n, t);
    out[t] = std::clamp(s, 0.0, 1.0);
  }
  return out;
}

/// Inflation length for an interval of `length` snippets: max(1, round(length / 4)).
inline std::size_t inflation_length(std::size_t length) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(length) / 4.0)));
}

/// Mean of row `label` inside [t_start, t_end] minus its mean over the two
/// flanking windows of inflation length, clipped to the video. Outer mean is
/// 0 when both flanks fall outside the video.
inline double oic_score(const Matrix& scores, std::size_t t_start, std::size_t t_end, int label) {
  const std::size_t T = scores.cols();
  if (t_start > t_end || t_end >= T)
    throw DimensionError("oic_score: interval [" + std::to_string(t_start) + ", " +
                         std::to_string(t_end) + "] outside 0.." + std::to_string(T - 1));
  if (label < 0 || static_cast<std::size_t>(label) >= scores.rows())
    throw DimensionError("oic_score: class " + std::to_string(label) + " out of range");
  const auto row = scores.row_span(static_cast<std::size_t>(label));
  // Both means are taken relative to row[t_start], which makes the score
  // exactly 0 on constant rows.
  const double ref = row[t_start];
  double inner = 0.0;
  for (std::size_t t = t_start; t <= t_end; ++t) inner += row[t] - ref;
  inner /= static_cast<double>(t_end - t_start + 1);

  const std::size_t tau = inflation_length(t_end - t_start + 1);
  const std::size_t left_lo = t_start >= tau ? t_start - tau : 0;
  const std::size_t right_hi = std::min(T - 1, t_end + tau);
  double outer = 0.0;
  std::size_t n = 0;
  for (std::size_t t = left_lo; t < t_start; ++t, ++n) outer += row[t] - ref;
  for (std::size_t t = t_end + 1; t <= right_hi; ++t, ++n) outer += row[t] - ref;
  if (n == 0) return inner + ref;
  return inner - outer / static_cast<double>(n);
}

inline double interval_iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = std::max(e1, e2) - std::min(s1, s2);
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Per-class greedy suppression in descending score order (stable for ties).
inline std::vector<TemporalProposal> nms(std::vector<TemporalProposal> props, double iou_threshold) {
  std::stable_sort(props.begin(), props.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<TemporalProposal> kept;
  for (const auto& p : props) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.label == p.label &&
          interval_iou(k.start_sec, k.end_sec, p.start_sec, p.end_sec) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

/// Per-stream forward passes needed at test time.
struct StreamInference {
  BaseOutputs base;
  Matrix action_scores;  // P_a, empty when the subspace is not used
};

struct FusedOutputs {
  Matrix attention;       // a-bar
  Matrix base_scores;     // P_o-bar
  Matrix action_scores;   // P_a-bar (empty when unused)
  Matrix video_scores;    // fused p_fg
  double beta = 0.0;
};

inline FusedOutputs fused_outputs(const Model& model, const Matrix& rgb, const Matrix& flow,
                                  const InferenceConfig& cfg) {
  StreamInference s[2];
  const Matrix* feats[2] = {&rgb, &flow};
  for (int i = 0; i < 2; ++i) {
    const StreamModel& sm = i == 0 ? model.rgb : model.flow;
    s[i].base = base_forward(*feats[i], sm.base);
    if (cfg.uses_subspace()) s[i].action_scores = subspace_forward(*feats[i], sm.subspace).P_a;
  }
  FusedOutputs f;
  f.beta = cfg.beta;
  f.attention = fuse(s[0].base.attention, s[1].base.attention, cfg.beta);
  f.base_scores = fuse(s[0].base.snippet_scores, s[1].base.snippet_scores, cfg.beta);
  f.video_scores = fuse(s[0].base.p_fg, s[1].base.p_fg, cfg.beta);
  if (cfg.uses_subspace()) f.action_scores = fuse(s[0].action_scores, s[1].action_scores, cfg.beta);
  return f;
}

/// Localizes actions in one video.
inline std::vector<TemporalProposal> localize_video(const VideoRecord& record, const Matrix& rgb,
                                                    const Matrix& flow, const Model& model,
                                                    const InferenceConfig& cfg) {
  cfg.validate();
  if (cfg.uses_subspace() && cfg.c4 != model.use_tresm()) {
    throw ConfigError(std::string("variant ") + (cfg.c4 ? "requests" : "excludes") +
                      " T-ResM but the checkpoint was trained " +
                      (model.use_tresm() ? "with" : "without") + " it");
  }
  const FusedOutputs f = fused_outputs(model, rgb, flow, cfg);

  std::vector<Interval> intervals;
  if (cfg.c1) {
    const auto v = generate_proposals(f.attention, cfg.proposal_threshold);
    intervals.insert(intervals.end(), v.begin(), v.end());
  }
  if (cfg.c2) {
    const auto v = generate_proposals(foreground_sum(f.action_scores), cfg.proposal_threshold);
    intervals.insert(intervals.end(), v.begin(), v.end());
  }
  std::sort(intervals.begin(), intervals.end());
  intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());

  const Matrix& scoring = cfg.c3 ? f.action_scores : f.base_scores;
  const double d = record.snippet_duration;
  std::vector<TemporalProposal> props;
  for (std::size_t n = 1; n <= model.num_classes(); ++n) {
    if (!(f.video_scores[n] > cfg.class_threshold)) continue;
    for (const auto& iv : intervals) {
      const double s = oic_score(scoring, iv.start, iv.end, static_cast<int>(n));
      if (!(s > 0.0)) continue;
      props.push_back({iv.start, iv.end, static_cast<int>(n), s, static_cast<double>(iv.start) * d,
                       static_cast<double>(iv.end + 1) * d});
    }
  }
  return nms(std::move(props), cfg.nms_iou);
}

struct Detection {
  std::string video_id;
  int label = 0;
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

inline std::vector<Detection> localize_all(const std::vector<VideoFeatures>& videos,
                                           const Model& model, const InferenceConfig& cfg) {
  std::vector<Detection> out;
  for (const auto& v : videos) {
    for (const auto& p : localize_video(*v.record, v.rgb, v.flow, model, cfg))
      out.push_back({v.record->video_id, p.label, p.start_sec, p.end_sec, p.score});
  }
  return out;
}

}  // namespace acs
