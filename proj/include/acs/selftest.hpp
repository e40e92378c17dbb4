#pragma once

// Runtime self-test: finite-difference gradient checks of every layer and
// of the composed losses, plus brute-force cross-checks of the partition,
// OIC, NMS and AP routines. Used by `acs selftest`.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "acs/base_module.hpp"
#include "acs/evaluation.hpp"
#include "acs/gradcheck.hpp"
#include "acs/inference.hpp"
#include "acs/objectives.hpp"
#include "acs/subspace_module.hpp"

namespace acs {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // worst error or mismatch count
};

namespace selftest_detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * normal(rng);
  return m;
}

/// sum(G .* y(x)) has gradient backward(x, G); compared by central differences.
inline double layer_check(const std::function<Matrix(const Matrix&)>& fwd,
                          const std::function<Matrix(const Matrix&, const Matrix&)>& bwd,
                          const Matrix& x, const Matrix& G) {
  auto f = [&](const Matrix& p) {
    const Matrix y = fwd(p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += G[i] * y[i];
    return s;
  };
  return finite_diff_check(f, [&](const Matrix& p) { return bwd(p, G); }, x);
}

/// Moves entries away from the relu kink so central differences are valid.
inline Matrix away_from_zero(Matrix m) {
  for (double& v : m.values())
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - std::abs(v) : 0.05 + v;
  return m;
}

inline SnippetPartition fixed_partition(std::size_t T) {
  Matrix ar(1, T), af(1, T);
  const double hi = 0.9, lo = 0.1;
  const double rgb[] = {hi, hi, lo, lo, hi, lo};
  const double flow[] = {hi, lo, hi, lo, hi, lo};
  for (std::size_t t = 0; t < T; ++t) {
    ar[t] = rgb[t % 6];
    af[t] = flow[t % 6];
  }
  return partition_snippets(ar, af, 0.2);
}

}  // namespace selftest_detail

/// Worst relative error of every layer's backward pass.
inline std::vector<SelfTestResult> gradient_selftests(double tol = 1e-4) {
  using namespace selftest_detail;
  Rng rng = make_rng(7, "selftest.grad");
  std::vector<SelfTestResult> out;
  auto add = [&](const std::string& n, double err) { out.push_back({n, err < tol, err}); };

  {
    const Matrix W = random_matrix(3, 4, rng), b = random_matrix(3, 1, rng);
    const Matrix x = random_matrix(4, 5, rng), G = random_matrix(3, 5, rng);
    add("grad affine input", layer_check([&](const Matrix& p) { return affine_forward(p, W, b); },
                                         [&](const Matrix& p, const Matrix& g) {
                                           Matrix dW(3, 4), db(3, 1);
                                           return affine_backward(p, W, g, dW, db);
                                         },
                                         x, G));
    add("grad affine weight",
        layer_check([&](const Matrix& p) { return affine_forward(x, p, b); },
                    [&](const Matrix& p, const Matrix& g) {
                      Matrix dW(3, 4), db(3, 1);
                      affine_backward(x, p, g, dW, db);
                      return dW;
                    },
                    W, G));
  }
  {
    const Matrix x = random_matrix(3, 4, rng, 2.0), G = random_matrix(3, 4, rng);
    add("grad sigmoid", layer_check([](const Matrix& p) { return sigmoid(p); },
                                    [](const Matrix& p, const Matrix& g) {
                                      return sigmoid_backward(sigmoid(p), g);
                                    },
                                    x, G));
    add("grad relu", layer_check([](const Matrix& p) { return relu(p); },
                                 [](const Matrix& p, const Matrix& g) { return relu_backward(p, g); },
                                 away_from_zero(x), G));
    add("grad softmax", layer_check([](const Matrix& p) { return softmax_columns(p); },
                                    [](const Matrix& p, const Matrix& g) {
                                      return softmax_columns_backward(softmax_columns(p), g);
                                    },
                                    x, G));
  }
  {
    const std::size_t k = 3;
    const Matrix K = random_matrix(2, 3 * k, rng), b = random_matrix(2, 1, rng);
    const Matrix x = random_matrix(3, 6, rng), G = random_matrix(2, 6, rng);
    add("grad conv1d input", layer_check([&](const Matrix& p) { return conv1d_forward(p, K, b, k); },
                                         [&](const Matrix& p, const Matrix& g) {
                                           Matrix dK(2, 3 * k), db(2, 1);
                                           return conv1d_backward(p, K, k, g, dK, db);
                                         },
                                         x, G));
    add("grad conv1d kernel",
        layer_check([&](const Matrix& p) { return conv1d_forward(x, p, b, k); },
                    [&](const Matrix& p, const Matrix& g) {
                      Matrix dK(2, 3 * k), db(2, 1);
                      conv1d_backward(x, p, k, g, dK, db);
                      return dK;
                    },
                    K, G));
  }
  {
    const Matrix v = random_matrix(5, 1, rng), G = random_matrix(5, 1, rng);
    add("grad l2_normalize",
        layer_check(
            [](const Matrix& p) {
              const auto u = l2_normalize(p.values());
              return Matrix(u.size(), 1, std::vector<double>(u.begin(), u.end()));
            },
            [](const Matrix& p, const Matrix& g) {
              const auto d = l2_normalize_backward(p.values(), g.values());
              return Matrix(d.size(), 1, std::vector<double>(d.begin(), d.end()));
            },
            v, G));
  }
  {
    const std::size_t T = 6, D_o = 8, N = 2;
    Rng r2 = make_rng(11, "selftest.base");
    BaseParams bp = BaseParams::random(D_o, N, r2);
    const Matrix F = random_matrix(D_o, T, rng);
    const std::vector<int> labels = {1};
    add("grad base loss", finite_diff_check(
                              bp.store, [&] { return base_loss(base_forward(F, bp), labels); },
                              [&] {
                                bp.store.zero_grad();
                                base_backward(F, bp, base_forward(F, bp), labels);
                              }));
  }
  for (bool tresm : {false, true}) {
    const std::size_t T = 6, D_o = 8, D = 2, N = 2;
    Rng r2 = make_rng(13, "selftest.subspace");
    SubspaceParams sp = SubspaceParams::random({D_o, D, N, 3, tresm}, r2);
    sp.b("transform").fill(0.3);
    const Matrix F = random_matrix(D_o, T, rng);
    const SnippetPartition part = fixed_partition(T);
    const std::vector<int> labels = {2};
    auto loss = [&] {
      return total_subspace_loss(subspace_forward(F, sp), part, labels, tresm, 1.0).total;
    };
    add(std::string("grad total loss ") + (tresm ? "with" : "without") + " T-ResM",
        finite_diff_check(sp.store, loss, [&] {
          sp.store.zero_grad();
          const SubspaceOutputs o = subspace_forward(F, sp);
          SubspaceGrads g;
          total_subspace_loss(o, part, labels, tresm, 1.0, {}, &g);
          subspace_backward(F, sp, o, g);
        }));
  }
  return out;
}

/// Partition grid, OIC, NMS and AP cross-checks against direct formulations.
inline std::vector<SelfTestResult> oracle_selftests() {
  std::vector<SelfTestResult> out;
  Rng rng = make_rng(7, "selftest.oracle");

  {
    std::size_t mismatches = 0;
    for (double alpha : {0.1, 0.2, 0.3, 0.4}) {
      Matrix ar(1, 21 * 21), af(1, 21 * 21);
      for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
          ar[i * 21 + j] = i * 0.05;
          af[i * 21 + j] = j * 0.05;
        }
      const auto p = partition_snippets(ar, af, alpha);
      for (std::size_t t = 0; t < ar.size(); ++t) {
        const double hi = 0.5 + alpha, lo = 0.5 - alpha;
        SnippetKind want = SnippetKind::none;
        if (ar[t] > hi && af[t] > hi) want = SnippetKind::action;
        if (ar[t] > hi && af[t] < lo) want = SnippetKind::context_rgb;
        if (ar[t] < lo && af[t] > hi) want = SnippetKind::context_flow;
        if (ar[t] < lo && af[t] < lo) want = SnippetKind::background;
        mismatches += p.kind[t] != want;
      }
    }
    out.push_back({"partition grid", mismatches == 0, double(mismatches)});
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto T = static_cast<std::size_t>(uniform_int(rng, 1, 30));
      Matrix P(3, T);
      for (double& v : P.values()) v = uniform(rng);
      const auto a = static_cast<std::size_t>(uniform_int(rng, 0, std::int64_t(T) - 1));
      const auto b = static_cast<std::size_t>(uniform_int(rng, std::int64_t(a), std::int64_t(T) - 1));
      const auto len = b - a + 1;
      const std::size_t tau = std::max<std::size_t>(1, (len + 2) / 4);
      double inner = 0.0, outer = 0.0;
      std::size_t n_out = 0;
      for (std::size_t t = a; t <= b; ++t) inner += P(2, t);
      for (std::size_t t = 0; t < T; ++t) {
        const bool left = t < a && t + tau >= a, right = t > b && t <= b + tau;
        if (left || right) outer += P(2, t), ++n_out;
      }
      const double want = inner / double(len) - (n_out ? outer / double(n_out) : 0.0);
      worst = std::max(worst, std::abs(oic_score(P, a, b, 2) - want));
    }
    out.push_back({"oic brute force", worst < 1e-12, worst});
  }
  {
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<TemporalProposal> props;
      const int n = static_cast<int>(uniform_int(rng, 0, 8));
      for (int i = 0; i < n; ++i) {
        TemporalProposal p;
        p.t_start = static_cast<std::size_t>(uniform_int(rng, 0, 10));
        p.t_end = p.t_start + static_cast<std::size_t>(uniform_int(rng, 0, 5));
        p.start_sec = double(p.t_start);
        p.end_sec = double(p.t_end + 1);
        p.label = static_cast<int>(uniform_int(rng, 1, 2));
        p.score = uniform(rng);
        props.push_back(p);
      }
      // A proposal survives iff no higher-scored survivor of its class overlaps it too much.
      std::vector<std::size_t> idx(props.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t x, std::size_t y) { return props[x].score > props[y].score; });
      std::vector<TemporalProposal> want;
      for (std::size_t i : idx) {
        bool keep = true;
        for (const auto& w : want) {
          if (w.label != props[i].label) continue;
          const double inter = std::max(0.0, std::min(w.end_sec, props[i].end_sec) -
                                                 std::max(w.start_sec, props[i].start_sec));
          const double uni = (w.end_sec - w.start_sec) + (props[i].end_sec - props[i].start_sec) - inter;
          if (inter / uni > 0.5) keep = false;
        }
        if (keep) want.push_back(props[i]);
      }
      auto got = nms(props, 0.5);
      auto key = [](const TemporalProposal& p) {
        return std::tuple(p.label, p.t_start, p.t_end, p.score);
      };
      std::vector<std::tuple<int, std::size_t, std::size_t, double>> a, b;
      for (const auto& p : got) a.push_back(key(p));
      for (const auto& p : want) b.push_back(key(p));
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      mismatches += a != b;
    }
    out.push_back({"nms brute force", mismatches == 0, double(mismatches)});
  }
  {
    // AP oracle: among all partial matchings (each GT used once, IoU >= thr),
    // the greedy rule picks the one that, in score order, gives each
    // detection the best still-free GT. Enumerated recursively here.
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const int nd = static_cast<int>(uniform_int(rng, 0, 4)), ng = static_cast<int>(uniform_int(rng, 1, 3));
      std::vector<ScoredSegment> dets;
      std::vector<GtSegment> gts;
      for (int i = 0; i < ng; ++i) {
        const double s = double(uniform_int(rng, 0, 6));
        gts.push_back({"v", s, s + double(uniform_int(rng, 1, 4))});
      }
      for (int i = 0; i < nd; ++i) {
        const double s = double(uniform_int(rng, 0, 6));
        dets.push_back({"v", s, s + double(uniform_int(rng, 1, 4)), double(uniform_int(rng, 0, 3))});
      }
      const double thr = 0.1 * double(uniform_int(rng, 1, 9));
      auto iou = [&](std::size_t d, std::size_t g) {
        const double inter = std::max(0.0, std::min(dets[d].end, gts[g].end) -
                                               std::max(dets[d].start, gts[g].start));
        return inter / ((dets[d].end - dets[d].start) + (gts[g].end - gts[g].start) - inter);
      };
      std::vector<std::size_t> order(dets.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t x, std::size_t y) { return dets[x].score > dets[y].score; });
      std::vector<int> best_assign;
      std::vector<double> best_key;
      std::vector<int> assign(dets.size(), -1);
      std::vector<bool> used(gts.size(), false);
      std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == order.size()) {
          // Lexicographic key: per detection in score order, (iou, -gt index).
          std::vector<double> key;
          for (std::size_t i : order) {
            const int g = assign[i];
            key.push_back(g < 0 ? -1.0 : iou(i, std::size_t(g)));
            key.push_back(g < 0 ? 0.0 : -double(g));
          }
          if (best_assign.empty() || key > best_key) best_key = key, best_assign = assign;
          return;
        }
        const std::size_t i = order[k];
        // Greedy never skips an eligible best GT, so a detection is left
        // unmatched only when no free GT reaches the threshold.
        bool any = false;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (used[g]) continue;
          if (iou(i, g) < thr) continue;
          any = true;
          used[g] = true;
          assign[i] = int(g);
          rec(k + 1);
          used[g] = false;
          assign[i] = -1;
        }
        if (!any) rec(k + 1);
      };
      rec(0);
      double want = 0.0;
      std::size_t tp = 0;
      for (std::size_t k = 0; k < order.size(); ++k)
        if (!best_assign.empty() && best_assign[order[k]] >= 0) want += double(++tp) / double(k + 1);
      want /= double(gts.size());
      mismatches += std::abs(average_precision(dets, gts, thr) - want) > 1e-12;
    }
    out.push_back({"ap matching enumeration", mismatches == 0, double(mismatches)});
  }
  return out;
}

inline std::vector<SelfTestResult> run_selftests() {
  auto out = gradient_selftests();
  for (auto& r : oracle_selftests()) out.push_back(std::move(r));
  return out;
}

}  // namespace acs
