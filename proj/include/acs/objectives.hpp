#pragma once

// Cross-stream snippet partitioning and the Subspace module objectives:
// triplet loss over subspace prototypes, masked subspace classification
// loss, and the four-class temporal residual loss.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/ops.hpp"
#include "acs/subspace_module.hpp"

namespace acs {

/// Snippet kinds, numbered as the classes of the four-class auxiliary task.
enum class SnippetKind : int { none = -1, action = 0, context_rgb = 1, context_flow = 2, background = 3 };

struct SnippetPartition {
  std::vector<std::size_t> action;        // T_a: both streams above theta_h
  std::vector<std::size_t> context_rgb;   // T_c1: rgb high, flow low
  std::vector<std::size_t> context_flow;  // T_c2: rgb low, flow high
  std::vector<std::size_t> background;    // T_bg: both below theta_l
  std::vector<SnippetKind> kind;          // per snippet
  double theta_high = 0.0;
  double theta_low = 0.0;

  std::size_t length() const { return kind.size(); }

  /// T_c = T_c1 u T_c2, ascending.
  std::vector<std::size_t> context() const {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < kind.size(); ++t)
      if (kind[t] == SnippetKind::context_rgb || kind[t] == SnippetKind::context_flow)
        out.push_back(t);
    return out;
  }
};

inline void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw ConfigError("alpha must satisfy 0 < alpha < 0.5, got " + std::to_string(alpha));
  }
}

/// Thresholds are theta_h = 0.5 + alpha and theta_l = 0.5 - alpha; all
/// comparisons are strict, so values inside [theta_l, theta_h] on either
/// stream leave the snippet unassigned.
inline SnippetPartition partition_snippets(const Matrix& att_rgb, const Matrix& att_flow,
                                           double alpha) {
  require_alpha(alpha);
  if (att_rgb.rows() != 1 || att_flow.rows() != 1 || att_rgb.cols() != att_flow.cols()) {
    throw DimensionError("partition_snippets: attention shapes " + att_rgb.shape() + " and " +
                         att_flow.shape());
  }
  SnippetPartition p;
  p.theta_high = 0.5 + alpha;
  p.theta_low = 0.5 - alpha;
  p.kind.assign(att_rgb.cols(), SnippetKind::none);
  for (std::size_t t = 0; t < att_rgb.cols(); ++t) {
    const bool rgb_hi = att_rgb[t] > p.theta_high, rgb_lo = att_rgb[t] < p.theta_low;
    const bool flow_hi = att_flow[t] > p.theta_high, flow_lo = att_flow[t] < p.theta_low;
    if (rgb_hi && flow_hi) {
      p.action.push_back(t);
      p.kind[t] = SnippetKind::action;
    } else if (rgb_hi && flow_lo) {
      p.context_rgb.push_back(t);
      p.kind[t] = SnippetKind::context_rgb;
    } else if (rgb_lo && flow_hi) {
      p.context_flow.push_back(t);
      p.kind[t] = SnippetKind::context_flow;
    } else if (rgb_lo && flow_lo) {
      p.background.push_back(t);
      p.kind[t] = SnippetKind::background;
    }
  }
  return p;
}

// ---------------------------------------------------------------- prototypes

/// Mean feature over a snippet index set; absent when the set is empty.
struct Prototype {
  std::vector<double> mean;
  std::size_t count = 0;

  bool present() const { return count > 0; }
};

struct Prototypes {
  // Action subspace.
  Prototype A_a, A_c, A_bg;
  // Context subspace.
  Prototype C_a, C_c, C_bg;
};

inline Prototype column_mean(const Matrix& F, std::span<const std::size_t> idx) {
  Prototype p;
  p.count = idx.size();
  if (idx.empty()) return p;
  p.mean.assign(F.rows(), 0.0);
  for (std::size_t t : idx)
    for (std::size_t r = 0; r < F.rows(); ++r) p.mean[r] += F(r, t);
  for (double& v : p.mean) v /= static_cast<double>(idx.size());
  return p;
}

inline Prototypes prototypes(const SnippetPartition& part, const Matrix& F_a, const Matrix& F_c) {
  const auto ctx = part.context();
  return {column_mean(F_a, part.action), column_mean(F_a, ctx), column_mean(F_a, part.background),
          column_mean(F_c, part.action), column_mean(F_c, ctx), column_mean(F_c, part.background)};
}

// ---------------------------------------------------------------- triplet

/// Euclidean distance between the l2-normalised vectors.
inline double normalized_distance(std::span<const double> p, std::span<const double> q) {
  const auto np = l2_normalize(p), nq = l2_normalize(q);
  double s = 0.0;
  for (std::size_t i = 0; i < np.size(); ++i) s += (np[i] - nq[i]) * (np[i] - nq[i]);
  return std::sqrt(s);
}

/// Adds scale * d(normalized_distance(p, q)) to gp and gq.
inline void normalized_distance_backward(std::span<const double> p, std::span<const double> q,
                                         double scale, std::span<double> gp,
                                         std::span<double> gq) {
  const auto np = l2_normalize(p), nq = l2_normalize(q);
  std::vector<double> u(np.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = np[i] - nq[i];
    d += u[i] * u[i];
  }
  d = std::sqrt(d);
  if (d <= kNormEpsilon) return;
  for (double& v : u) v *= scale / d;
  const auto dp = l2_normalize_backward(p, u);
  for (double& v : u) v = -v;
  const auto dq = l2_normalize_backward(q, u);
  for (std::size_t i = 0; i < u.size(); ++i) {
    gp[i] += dp[i];
    gq[i] += dq[i];
  }
}

struct PrototypeGrads {
  std::vector<double> A_a, A_c, A_bg, C_a, C_c, C_bg;
};

/// Hinge terms:
///   action subspace:  [d(A_c, A_bg) - d(A_c, A_a) + m]_+
///   context subspace: [d(C_c, C_a) - d(C_c, C_bg) + m]_+
/// A term whose three prototypes are not all present contributes 0.
inline double triplet_loss(const Prototypes& p, double margin,
                           PrototypeGrads* grads = nullptr, double scale = 1.0) {
  auto term = [&](const Prototype& anchor, const Prototype& pos, const Prototype& neg,
                  std::vector<double>* ga, std::vector<double>* gp, std::vector<double>* gn) {
    if (!anchor.present() || !pos.present() || !neg.present()) return 0.0;
    const double h = normalized_distance(anchor.mean, pos.mean) -
                     normalized_distance(anchor.mean, neg.mean) + margin;
    if (h <= 0.0) return 0.0;
    if (grads) {
      const std::size_t D = anchor.mean.size();
      for (auto* g : {ga, gp, gn})
        if (g->empty()) g->assign(D, 0.0);
      normalized_distance_backward(anchor.mean, pos.mean, scale, *ga, *gp);
      normalized_distance_backward(anchor.mean, neg.mean, -scale, *ga, *gn);
    }
    return h;
  };
  PrototypeGrads dummy;
  PrototypeGrads& g = grads ? *grads : dummy;
  return term(p.A_c, p.A_bg, p.A_a, &g.A_c, &g.A_bg, &g.A_a) +
         term(p.C_c, p.C_a, p.C_bg, &g.C_c, &g.C_a, &g.C_bg);
}

/// Spreads prototype gradients back onto the feature columns they average.
inline void prototype_backward(std::span<const double> gproto, std::span<const std::size_t> idx,
                               Matrix& dF) {
  if (gproto.empty() || idx.empty()) return;
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t t : idx)
    for (std::size_t r = 0; r < dF.rows(); ++r) dF(r, t) += gproto[r] * inv;
}

// ---------------------------------------------------------------- L_s

namespace detail {

inline double bce_prob(double p, double target) {
  constexpr double floor = 1e-300;
  return target > 0.5 ? -std::log(std::max(p, floor)) : -std::log(std::max(1.0 - p, floor));
}

/// Calls visit(matrix_is_context, t, class_row, target) for every
/// constrained entry of P_a / P_c.
template <typename Visit>
void for_each_subspace_target(const SnippetPartition& part, std::span<const int> labels,
                              Visit&& visit) {
  for (std::size_t t = 0; t < part.kind.size(); ++t) {
    const SnippetKind k = part.kind[t];
    if (k == SnippetKind::none) continue;
    const bool is_action = k == SnippetKind::action;
    const bool is_context = k == SnippetKind::context_rgb || k == SnippetKind::context_flow;
    // Action subspace: labeled classes on for T_a, background on elsewhere.
    visit(false, t, std::size_t{0}, is_action ? 0.0 : 1.0);
    for (int n : labels) visit(false, t, static_cast<std::size_t>(n), is_action ? 1.0 : 0.0);
    // Context subspace: unconstrained on T_a.
    if (is_action) continue;
    visit(true, t, std::size_t{0}, is_context ? 0.0 : 1.0);
    for (int n : labels) visit(true, t, static_cast<std::size_t>(n), is_context ? 1.0 : 0.0);
  }
}

}  // namespace detail

/// Mean binary cross-entropy over the constrained entries of P_a and P_c.
/// When `dlogit_a`/`dlogit_c` are given, adds scale * dL/dlogit to them.
inline double subspace_cls_loss(const Matrix& P_a, const Matrix& P_c,
                                const SnippetPartition& part, std::span<const int> labels,
                                Matrix* dlogit_a = nullptr, Matrix* dlogit_c = nullptr,
                                double scale = 1.0) {
  std::size_t count = 0;
  double total = 0.0;
  detail::for_each_subspace_target(part, labels, [&](bool ctx, std::size_t t, std::size_t c,
                                                     double y) {
    total += detail::bce_prob(ctx ? P_c(c, t) : P_a(c, t), y);
    ++count;
  });
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  if (dlogit_a && dlogit_c) {
    detail::for_each_subspace_target(part, labels, [&](bool ctx, std::size_t t, std::size_t c,
                                                       double y) {
      if (ctx) (*dlogit_c)(c, t) += scale * inv * (P_c(c, t) - y);
      else (*dlogit_a)(c, t) += scale * inv * (P_a(c, t) - y);
    });
  }
  return total * inv;
}

// ---------------------------------------------------------------- L_r

/// Mean cross-entropy of the four-class head over partitioned snippets;
/// 0 when no snippet is partitioned.
inline double residual_loss(const Matrix& P_r, const SnippetPartition& part,
                            Matrix* dlogit_r = nullptr, double scale = 1.0) {
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t t = 0; t < part.kind.size(); ++t) {
    if (part.kind[t] == SnippetKind::none) continue;
    total -= std::log(std::max(P_r(static_cast<std::size_t>(part.kind[t]), t), 1e-300));
    ++count;
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  if (dlogit_r) {
    for (std::size_t t = 0; t < part.kind.size(); ++t) {
      if (part.kind[t] == SnippetKind::none) continue;
      const auto target = static_cast<std::size_t>(part.kind[t]);
      for (std::size_t c = 0; c < 4; ++c)
        (*dlogit_r)(c, t) += scale * inv * (P_r(c, t) - (c == target ? 1.0 : 0.0));
    }
  }
  return total * inv;
}

// ---------------------------------------------------------------- total

struct LossWeights {
  double triplet = 1.0;
  double cls = 1.0;
  double residual = 1.0;
};

struct SubspaceLoss {
  double triplet = 0.0;
  double cls = 0.0;
  double residual = 0.0;
  double total = 0.0;
};

/// L = L_t + L_s (+ L_r when the module uses T-ResM) for one stream.
/// With `grads` non-null, fills the upstream gradients for subspace_backward.
inline SubspaceLoss total_subspace_loss(const SubspaceOutputs& o, const SnippetPartition& part,
                                        std::span<const int> labels, bool use_tresm,
                                        double margin, const LossWeights& w = {},
                                        SubspaceGrads* grads = nullptr) {
  SubspaceLoss l;
  const Prototypes protos = prototypes(part, o.F_a, o.F_c);
  PrototypeGrads pg;
  l.triplet = triplet_loss(protos, margin, grads ? &pg : nullptr, w.triplet);

  if (grads) {
    const std::size_t T = o.F_a.cols();
    grads->dlogit_a = Matrix(o.P_a.rows(), T);
    grads->dlogit_c = Matrix(o.P_c.rows(), T);
    grads->dF_a = Matrix(o.F_a.rows(), T);
    grads->dF_c = Matrix(o.F_c.rows(), T);
    grads->dlogit_r = use_tresm ? Matrix(4, T) : Matrix();
    const auto ctx = part.context();
    prototype_backward(pg.A_a, part.action, grads->dF_a);
    prototype_backward(pg.A_c, ctx, grads->dF_a);
    prototype_backward(pg.A_bg, part.background, grads->dF_a);
    prototype_backward(pg.C_a, part.action, grads->dF_c);
    prototype_backward(pg.C_c, ctx, grads->dF_c);
    prototype_backward(pg.C_bg, part.background, grads->dF_c);
  }
  l.cls = subspace_cls_loss(o.P_a, o.P_c, part, labels, grads ? &grads->dlogit_a : nullptr,
                            grads ? &grads->dlogit_c : nullptr, w.cls);
  if (use_tresm) l.residual = residual_loss(o.P_r, part, grads ? &grads->dlogit_r : nullptr, w.residual);
  l.total = w.triplet * l.triplet + w.cls * l.cls + (use_tresm ? w.residual * l.residual : 0.0);
  return l;
}

}  // namespace acs
