#pragma once

// Per-stream Subspace module.
//
//   F   = relu(W_T F_o + b_T)                       2D x T
//   F_r = F + conv2(relu(conv1(F)))   (T-ResM)      2D x T, or F_r = F
//   [F_a; F_c] = F_r                                D x T each
//   P_a = sigmoid(W_a F_a + b_a), P_c = sigmoid(W_c F_c + b_c)
//   P_r = softmax(W_r F_r + b_r)                    4 x T

#include <utility>

#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/ops.hpp"
#include "acs/params.hpp"
#include "acs/rng.hpp"

namespace acs {

struct SubspaceShape {
  std::size_t feature_dim = 0;   // D_o
  std::size_t subspace_dim = 0;  // D
  std::size_t num_classes = 0;   // N
  std::size_t res_kernel = 3;
  bool use_tresm = true;
};

struct SubspaceParams {
  SubspaceShape shape;
  ParamStore store;

  SubspaceParams() = default;
  explicit SubspaceParams(const SubspaceShape& s) : shape(s) {
    if (s.subspace_dim == 0) throw ConfigError("subspace: D must be >= 1");
    if (s.res_kernel % 2 == 0)
      throw ConfigError("subspace: T-ResM kernel size must be odd, got " +
                        std::to_string(s.res_kernel));
    const std::size_t w = 2 * s.subspace_dim, n1 = s.num_classes + 1;
    store.add("transform.w", Matrix(w, s.feature_dim));
    store.add("transform.b", Matrix(w, 1));
    if (s.use_tresm) {
      store.add("res1.w", Matrix(w, w * s.res_kernel));
      store.add("res1.b", Matrix(w, 1));
      store.add("res2.w", Matrix(w, w * s.res_kernel));
      store.add("res2.b", Matrix(w, 1));
    }
    store.add("action.w", Matrix(n1, s.subspace_dim));
    store.add("action.b", Matrix(n1, 1));
    store.add("context.w", Matrix(n1, s.subspace_dim));
    store.add("context.b", Matrix(n1, 1));
    store.add("four.w", Matrix(4, w));
    store.add("four.b", Matrix(4, 1));
  }

  static SubspaceParams random(const SubspaceShape& s, Rng& rng) {
    SubspaceParams p(s);
    const std::size_t w = 2 * s.subspace_dim;
    p.w("transform") = random_weight(w, s.feature_dim, s.feature_dim, rng);
    // Small positive bias keeps most transform units alive at init.
    p.b("transform").fill(0.1);
    if (s.use_tresm) {
      p.w("res1") = random_weight(w, w * s.res_kernel, w * s.res_kernel, rng);
      p.w("res2") = random_weight(w, w * s.res_kernel, w * s.res_kernel, rng, 0.1);
    }
    p.w("action") = random_weight(s.num_classes + 1, s.subspace_dim, s.subspace_dim, rng);
    p.w("context") = random_weight(s.num_classes + 1, s.subspace_dim, s.subspace_dim, rng);
    p.w("four") = random_weight(4, w, w, rng);
    return p;
  }

  Matrix& w(const std::string& layer) { return store.at(layer + ".w").value; }
  Matrix& b(const std::string& layer) { return store.at(layer + ".b").value; }
  const Matrix& w(const std::string& layer) const { return store.at(layer + ".w").value; }
  const Matrix& b(const std::string& layer) const { return store.at(layer + ".b").value; }
  Matrix& gw(const std::string& layer) { return store.at(layer + ".w").grad; }
  Matrix& gb(const std::string& layer) { return store.at(layer + ".b").grad; }
};

/// Forward results plus the intermediates backward needs.
struct SubspaceOutputs {
  Matrix transform_pre;  // W_T F_o + b_T
  Matrix F;              // 2D x T
  Matrix res_hidden_pre;
  Matrix res_hidden;
  Matrix F_r;
  Matrix F_a;
  Matrix F_c;
  Matrix P_a;
  Matrix P_c;
  Matrix P_r;
};

inline Matrix transform(const Matrix& features, const SubspaceParams& p, Matrix* pre = nullptr) {
  Matrix z = affine_forward(features, p.w("transform"), p.b("transform"));
  Matrix out = relu(z);
  if (pre) *pre = std::move(z);
  return out;
}

/// F + M_res(F) when T-ResM is enabled, F otherwise.
inline Matrix temporal_residual(const Matrix& F, const SubspaceParams& p,
                                Matrix* hidden_pre = nullptr, Matrix* hidden = nullptr) {
  if (!p.shape.use_tresm) return F;
  const std::size_t k = p.shape.res_kernel;
  Matrix h_pre = conv1d_forward(F, p.w("res1"), p.b("res1"), k);
  Matrix h = relu(h_pre);
  Matrix out = F + conv1d_forward(h, p.w("res2"), p.b("res2"), k);
  if (hidden_pre) *hidden_pre = std::move(h_pre);
  if (hidden) *hidden = std::move(h);
  return out;
}

struct SubspaceSplit {
  Matrix action;
  Matrix context;
};

/// First half of the rows to the action subspace, second half to context.
inline SubspaceSplit split(const Matrix& F_r) {
  if (F_r.rows() % 2 != 0) {
    throw DimensionError("split: row count must be even, got " + F_r.shape());
  }
  const std::size_t D = F_r.rows() / 2;
  return {F_r.row_block(0, D), F_r.row_block(D, D)};
}

struct SubspaceScores {
  Matrix action;   // P_a
  Matrix context;  // P_c
};

inline SubspaceScores classify_subspaces(const Matrix& F_a, const Matrix& F_c,
                                         const SubspaceParams& p) {
  return {sigmoid(affine_forward(F_a, p.w("action"), p.b("action"))),
          sigmoid(affine_forward(F_c, p.w("context"), p.b("context")))};
}

inline Matrix classify_four(const Matrix& F_r, const SubspaceParams& p) {
  return softmax_columns(affine_forward(F_r, p.w("four"), p.b("four")));
}

inline SubspaceOutputs subspace_forward(const Matrix& features, const SubspaceParams& p) {
  if (features.rows() != p.shape.feature_dim) {
    throw DimensionError("subspace_forward: features " + features.shape() + ", module expects " +
                         std::to_string(p.shape.feature_dim) + " rows");
  }
  SubspaceOutputs o;
  o.F = transform(features, p, &o.transform_pre);
  o.F_r = temporal_residual(o.F, p, &o.res_hidden_pre, &o.res_hidden);
  auto halves = split(o.F_r);
  o.F_a = std::move(halves.action);
  o.F_c = std::move(halves.context);
  auto scores = classify_subspaces(o.F_a, o.F_c, p);
  o.P_a = std::move(scores.action);
  o.P_c = std::move(scores.context);
  o.P_r = classify_four(o.F_r, p);
  return o;
}

/// Upstream gradients into the subspace module. Logit gradients are with
/// respect to the pre-sigmoid / pre-softmax activations of the heads.
struct SubspaceGrads {
  Matrix dlogit_a;  // (N+1) x T, may be empty
  Matrix dlogit_c;
  Matrix dlogit_r;  // 4 x T, may be empty
  Matrix dF_a;      // D x T, may be empty (direct feature gradients)
  Matrix dF_c;
};

/// Accumulates parameter gradients; returns d/dF_o.
inline Matrix subspace_backward(const Matrix& features, SubspaceParams& p,
                                const SubspaceOutputs& o, const SubspaceGrads& g) {
  const std::size_t D = p.shape.subspace_dim, T = features.cols();
  Matrix dF_a = g.dF_a.empty() ? Matrix(D, T) : g.dF_a;
  Matrix dF_c = g.dF_c.empty() ? Matrix(D, T) : g.dF_c;
  if (!g.dlogit_a.empty())
    dF_a += affine_backward(o.F_a, p.w("action"), g.dlogit_a, p.gw("action"), p.gb("action"));
  if (!g.dlogit_c.empty())
    dF_c += affine_backward(o.F_c, p.w("context"), g.dlogit_c, p.gw("context"), p.gb("context"));
  Matrix dF_r = vconcat(dF_a, dF_c);
  if (!g.dlogit_r.empty())
    dF_r += affine_backward(o.F_r, p.w("four"), g.dlogit_r, p.gw("four"), p.gb("four"));

  Matrix dF = dF_r;
  if (p.shape.use_tresm) {
    const std::size_t k = p.shape.res_kernel;
    const Matrix dh = conv1d_backward(o.res_hidden, p.w("res2"), k, dF_r, p.gw("res2"), p.gb("res2"));
    const Matrix dh_pre = relu_backward(o.res_hidden_pre, dh);
    dF += conv1d_backward(o.F, p.w("res1"), k, dh_pre, p.gw("res1"), p.gb("res1"));
  }
  const Matrix dz = relu_backward(o.transform_pre, dF);
  return affine_backward(features, p.w("transform"), dz, p.gw("transform"), p.gb("transform"));
}

}  // namespace acs
