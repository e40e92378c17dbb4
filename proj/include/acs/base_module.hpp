#pragma once

// Per-stream Base module: snippet attention, attention-weighted
// foreground/background pooling, and a shared per-class sigmoid classifier
// applied to both pooled video features and individual snippets.
//
// The classifier has no bias: with one, a = 1 everywhere (f_bg = 0) fits the
// background targets through the bias alone and the attention degenerates.

#include <cmath>
#include <span>
#include <vector>

#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/ops.hpp"
#include "acs/params.hpp"
#include "acs/rng.hpp"

namespace acs {

/// Attention FC (1 x D_o, with bias) and bias-free classifier ((N+1) x D_o).
struct BaseParams {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;  // N, excluding background
  ParamStore store;

  BaseParams() = default;
  BaseParams(std::size_t d_o, std::size_t n) : feature_dim(d_o), num_classes(n) {
    store.add("att.w", Matrix(1, d_o));
    store.add("att.b", Matrix(1, 1));
    store.add("cls.w", Matrix(n + 1, d_o));
  }

  /// Gaussian init, used by gradient checks and tests. Training starts the
  /// Base module from zeros instead (see init_model).
  static BaseParams random(std::size_t d_o, std::size_t n, Rng& rng) {
    BaseParams p(d_o, n);
    p.att_w() = random_weight(1, d_o, d_o, rng);
    p.cls_w() = random_weight(n + 1, d_o, d_o, rng);
    return p;
  }

  Matrix& att_w() { return store.at("att.w").value; }
  Matrix& att_b() { return store.at("att.b").value; }
  Matrix& cls_w() { return store.at("cls.w").value; }
  const Matrix& att_w() const { return store.at("att.w").value; }
  const Matrix& att_b() const { return store.at("att.b").value; }
  const Matrix& cls_w() const { return store.at("cls.w").value; }
};

struct BaseOutputs {
  Matrix attention;  // 1 x T
  Matrix f_fg;       // D_o x 1
  Matrix f_bg;       // D_o x 1
  Matrix p_fg;       // (N+1) x 1
  Matrix p_bg;       // (N+1) x 1
  Matrix snippet_scores;  // P_o, (N+1) x T
};

inline Matrix attention_forward(const Matrix& features, const BaseParams& params) {
  return sigmoid(affine_forward(features, params.att_w(), params.att_b()));
}

struct PooledFeatures {
  Matrix foreground;  // (1/T) sum_t a(t) F(:,t)
  Matrix background;  // (1/T) sum_t (1 - a(t)) F(:,t)
};

inline PooledFeatures pool_fg_bg(const Matrix& features, const Matrix& attention) {
  if (attention.rows() != 1 || attention.cols() != features.cols()) {
    throw DimensionError("pool_fg_bg: attention " + attention.shape() + " vs features " +
                         features.shape());
  }
  const std::size_t D = features.rows(), T = features.cols();
  PooledFeatures out{Matrix(D, 1), Matrix(D, 1)};
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t d = 0; d < D; ++d) {
    auto row = features.row_span(d);
    double fg = 0.0, bg = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      fg += attention[t] * row[t];
      bg += (1.0 - attention[t]) * row[t];
    }
    out.foreground(d, 0) = fg * inv_t;
    out.background(d, 0) = bg * inv_t;
  }
  return out;
}

/// Per-class sigmoid scores for one feature column.
inline Matrix classify_video(const Matrix& feature, const BaseParams& params) {
  return sigmoid(affine_forward(feature, params.cls_w(), Matrix(params.cls_w().rows(), 1)));
}

/// Column t equals classify_video(F(:,t)).
inline Matrix classify_snippets(const Matrix& features, const BaseParams& params) {
  return classify_video(features, params);
}

inline BaseOutputs base_forward(const Matrix& features, const BaseParams& params) {
  if (features.rows() != params.feature_dim) {
    throw DimensionError("base_forward: features " + features.shape() + ", module expects " +
                         std::to_string(params.feature_dim) + " rows");
  }
  BaseOutputs out;
  out.attention = attention_forward(features, params);
  auto pooled = pool_fg_bg(features, out.attention);
  out.f_fg = std::move(pooled.foreground);
  out.f_bg = std::move(pooled.background);
  out.p_fg = classify_video(out.f_fg, params);
  out.p_bg = classify_video(out.f_bg, params);
  out.snippet_scores = classify_snippets(features, params);
  return out;
}

namespace detail {

/// Binary cross-entropy of a probability against a 0/1 target.
inline double bce(double p, double target) {
  constexpr double floor = 1e-300;
  return target > 0.5 ? -std::log(std::max(p, floor)) : -std::log(std::max(1.0 - p, floor));
}

/// Targets of the base loss: +1/0 for constrained entries, -1 unconstrained.
inline void base_targets(std::size_t n_classes, std::span<const int> labels,
                         std::vector<double>& fg, std::vector<double>& bg) {
  fg.assign(n_classes + 1, 0.0);
  bg.assign(n_classes + 1, -1.0);
  bg[0] = 1.0;
  for (int c : labels) {
    fg[static_cast<std::size_t>(c)] = 1.0;
    bg[static_cast<std::size_t>(c)] = 0.0;
  }
}

}  // namespace detail

/// Summed binary cross-entropy over the constrained entries: every entry of
/// p_fg (labeled classes -> 1, others including background -> 0) and, in
/// p_bg, background -> 1 and labeled classes -> 0.
inline double base_loss(const BaseOutputs& out, std::span<const int> labels) {
  const std::size_t n = out.p_fg.rows() - 1;
  std::vector<double> fg, bg;
  detail::base_targets(n, labels, fg, bg);
  double loss = 0.0;
  for (std::size_t c = 0; c <= n; ++c) {
    loss += detail::bce(out.p_fg[c], fg[c]);
    if (bg[c] >= 0.0) loss += detail::bce(out.p_bg[c], bg[c]);
  }
  return loss;
}

/// Accumulates d(base_loss)/d(params) into params.store gradients.
inline void base_backward(const Matrix& features, BaseParams& params, const BaseOutputs& out,
                          std::span<const int> labels) {
  const std::size_t n = params.num_classes;
  const std::size_t T = features.cols();
  std::vector<double> fg, bg;
  detail::base_targets(n, labels, fg, bg);

  Matrix dz_fg(n + 1, 1), dz_bg(n + 1, 1);
  for (std::size_t c = 0; c <= n; ++c) {
    dz_fg[c] = out.p_fg[c] - fg[c];
    dz_bg[c] = bg[c] >= 0.0 ? out.p_bg[c] - bg[c] : 0.0;
  }
  auto& gw = params.store.at("cls.w").grad;
  Matrix gb(n + 1, 1);  // no classifier bias
  const Matrix df_fg = affine_backward(out.f_fg, params.cls_w(), dz_fg, gw, gb);
  const Matrix df_bg = affine_backward(out.f_bg, params.cls_w(), dz_bg, gw, gb);

  // f_fg - f_bg depend on a(t) through (df_fg - df_bg) . F(:,t) / T.
  Matrix da(1, T);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t d = 0; d < features.rows(); ++d) {
    const double g = (df_fg[d] - df_bg[d]) * inv_t;
    if (g == 0.0) continue;
    auto row = features.row_span(d);
    for (std::size_t t = 0; t < T; ++t) da[t] += g * row[t];
  }
  const Matrix dlogit = sigmoid_backward(out.attention, da);
  affine_backward(features, params.att_w(), dlogit, params.store.at("att.w").grad,
                  params.store.at("att.b").grad);
}

}  // namespace acs
