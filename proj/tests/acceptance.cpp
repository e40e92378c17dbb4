// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Usage: acceptance [--work-dir DIR] [--only N,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acs/commands.hpp"
#include "test_util.hpp"

using namespace acs;
namespace fs = std::filesystem;
using testutil::random_matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ------------------------------------------------------------------ 1

/// Worst relative error of d/dx sum(G .* f(x)) against central differences.
double layer_error(const std::function<Matrix(const Matrix&)>& f, const Matrix& analytic_for_G,
                   const Matrix& x, const Matrix& G) {
  const Matrix numeric = testutil::numeric_gradient(
      [&](const Matrix& p) { return testutil::project(f(p), G); }, x);
  return testutil::max_rel_error(analytic_for_G, numeric);
}

double store_error(ParamStore& store, const std::function<double()>& loss,
                   const std::function<void()>& backward) {
  store.zero_grad();
  backward();
  double worst = 0.0;
  for (auto& t : store) {
    const Matrix numeric = testutil::numeric_gradient(
        [&](const Matrix& v) {
          const Matrix saved = t.value;
          t.value = v;
          const double l = loss();
          t.value = saved;
          return l;
        },
        t.value);
    worst = std::max(worst, testutil::max_rel_error(t.grad, numeric));
  }
  return worst;
}

Matrix away_from_kink(Matrix m) {
  for (double& v : m.values())
    if (std::abs(v) < 1e-2) v += v < 0 ? -0.05 : 0.05;
  return m;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(101, "acceptance");
  std::vector<std::pair<std::string, double>> errs;

  {  // affine: input, weight, bias
    const Matrix x = random_matrix(4, 7, rng), W = random_matrix(3, 4, rng), b = random_matrix(3, 1, rng);
    const Matrix G = random_matrix(3, 7, rng);
    Matrix gW(3, 4), gb(3, 1);
    const Matrix dx = affine_backward(x, W, G, gW, gb);
    errs.emplace_back("affine.x", layer_error([&](const Matrix& p) { return affine_forward(p, W, b); }, dx, x, G));
    errs.emplace_back("affine.W", layer_error([&](const Matrix& p) { return affine_forward(x, p, b); }, gW, W, G));
    errs.emplace_back("affine.b", layer_error([&](const Matrix& p) { return affine_forward(x, W, p); }, gb, b, G));
  }
  {
    const Matrix x = random_matrix(3, 5, rng, 2.0), G = random_matrix(3, 5, rng);
    errs.emplace_back("sigmoid", layer_error([](const Matrix& p) { return sigmoid(p); },
                                             sigmoid_backward(sigmoid(x), G), x, G));
    const Matrix xr = away_from_kink(x);
    errs.emplace_back("relu", layer_error([](const Matrix& p) { return relu(p); }, relu_backward(xr, G), xr, G));
    errs.emplace_back("softmax", layer_error([](const Matrix& p) { return softmax_columns(p); },
                                             softmax_columns_backward(softmax_columns(x), G), x, G));
  }
  {  // conv1d on 3x9, k=3
    const Matrix x = random_matrix(3, 9, rng), K = random_matrix(4, 9, rng), b = random_matrix(4, 1, rng);
    const Matrix G = random_matrix(4, 9, rng);
    Matrix gK(4, 9), gb(4, 1);
    const Matrix dx = conv1d_backward(x, K, 3, G, gK, gb);
    errs.emplace_back("conv1d.x", layer_error([&](const Matrix& p) { return conv1d_forward(p, K, b, 3); }, dx, x, G));
    errs.emplace_back("conv1d.K", layer_error([&](const Matrix& p) { return conv1d_forward(x, p, b, 3); }, gK, K, G));
    errs.emplace_back("conv1d.b", layer_error([&](const Matrix& p) { return conv1d_forward(x, K, p, 3); }, gb, b, G));
  }
  {
    const Matrix v = random_matrix(5, 1, rng), G = random_matrix(5, 1, rng);
    const auto dv = l2_normalize_backward(v.values(), G.values());
    errs.emplace_back("l2_normalize",
                      layer_error([](const Matrix& p) { return Matrix(5, 1, l2_normalize(p.values())); },
                                  Matrix(5, 1, dv), v, G));
  }
  {  // base loss, all parameters
    BaseParams p = BaseParams::random(8, 2, rng);
    const Matrix F = random_matrix(8, 6, rng);
    const std::vector<int> labels{2};
    errs.emplace_back("base_loss", store_error(
                                       p.store, [&] { return base_loss(base_forward(F, p), labels); },
                                       [&] { base_backward(F, p, base_forward(F, p), labels); }));
  }
  // Composed L = L_t + L_s (+ L_r) on T=6, D_o=8, D=2, N=2 with a partition
  // covering all four kinds.
  Matrix att_rgb(1, 6, {0.9, 0.9, 0.1, 0.1, 0.9, 0.5}), att_flow(1, 6, {0.9, 0.1, 0.9, 0.1, 0.9, 0.5});
  const SnippetPartition part = partition_snippets(att_rgb, att_flow, 0.2);
  const std::vector<int> labels{1};
  for (bool tresm : {true, false}) {
    SubspaceParams p = SubspaceParams::random({8, 2, 2, 3, tresm}, rng);
    const Matrix F = random_matrix(8, 6, rng);
    const double margin = 3.0;  // both hinges active so the triplet term is exercised
    auto loss = [&] { return total_subspace_loss(subspace_forward(F, p), part, labels, tresm, margin).total; };
    auto backward = [&] {
      const auto o = subspace_forward(F, p);
      SubspaceGrads g;
      total_subspace_loss(o, part, labels, tresm, margin, {}, &g);
      subspace_backward(F, p, o, g);
    };
    errs.emplace_back(tresm ? "total_loss(T-ResM)" : "total_loss", store_error(p.store, loss, backward));
    if (tresm) {
      const double triplet = total_subspace_loss(subspace_forward(F, p), part, labels, true, margin).triplet;
      if (!(triplet > 0.0)) return {false, "triplet term inactive in the composed check"};
    }
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [n, e] : errs)
    if (e >= worst) worst = e, worst_name = n;
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          std::to_string(errs.size()) + " checks, max rel err " + fmt("%.2e", worst) + " (" + worst_name +
              "), " + fmt("%.2f s", secs)};
}

// ------------------------------------------------------------------ 2

Outcome criterion_partition() {
  std::size_t mismatches = 0, cells = 0;
  std::size_t kind_counts[4] = {};
  for (double alpha : {0.1, 0.2, 0.3, 0.4}) {
    Matrix a(1, 21 * 21), b(1, 21 * 21);
    for (int i = 0; i <= 20; ++i)
      for (int j = 0; j <= 20; ++j) {
        a[std::size_t(i * 21 + j)] = i * 0.05;
        b[std::size_t(i * 21 + j)] = j * 0.05;
      }
    const SnippetPartition p = partition_snippets(a, b, alpha);
    const double hi = 0.5 + alpha, lo = 0.5 - alpha;
    auto in = [](const std::vector<std::size_t>& s, std::size_t t) {
      return std::find(s.begin(), s.end(), t) != s.end();
    };
    for (std::size_t t = 0; t < a.size(); ++t, ++cells) {
      const bool want[4] = {a[t] > hi && b[t] > hi, a[t] > hi && b[t] < lo, a[t] < lo && b[t] > hi,
                            a[t] < lo && b[t] < lo};
      const bool got[4] = {in(p.action, t), in(p.context_rgb, t), in(p.context_flow, t), in(p.background, t)};
      for (int k = 0; k < 4; ++k) {
        if (want[k] != got[k]) ++mismatches;
        kind_counts[k] += want[k];
      }
    }
  }
  const bool all_kinds = kind_counts[0] && kind_counts[1] && kind_counts[2] && kind_counts[3];
  return {mismatches == 0 && all_kinds,
          std::to_string(cells) + " grid cells over 4 alphas, " + std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------------------ 3

Outcome criterion_closed_forms() {
  Rng rng = make_rng(103, "acceptance");
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix ar(1, 30), af(1, 30);
    for (double& v : ar.values()) v = uniform(rng);
    for (double& v : af.values()) v = uniform(rng);
    const auto part = partition_snippets(ar, af, 0.2);
    const Matrix half(4, 30, 0.5);
    const std::vector<int> labels{1 + trial % 3};
    worst = std::max(worst, std::abs(subspace_cls_loss(half, half, part, labels) - std::log(2.0)));
    worst = std::max(worst, std::abs(residual_loss(Matrix(4, 30, 0.25), part) - std::log(4.0)));
  }
  const Matrix v = random_matrix(6, 1, rng);
  const std::vector<double> pv(v.values().begin(), v.values().end());
  const Prototype q{pv, 3};
  const double trip = triplet_loss({q, q, q, q, q, q}, 1.0);
  worst = std::max(worst, std::abs(trip - 2.0));
  return {worst <= 1e-12, "max deviation " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 4

Outcome criterion_oic() {
  Rng rng = make_rng(104, "acceptance");
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto T = static_cast<std::size_t>(uniform_int(rng, 1, 40));
    Matrix P(3, T);
    for (double& v : P.values()) v = uniform(rng);
    const auto s = static_cast<std::size_t>(uniform_int(rng, 0, std::int64_t(T) - 1));
    const auto e = static_cast<std::size_t>(uniform_int(rng, std::int64_t(s), std::int64_t(T) - 1));
    const int n = static_cast<int>(uniform_int(rng, 1, 2));
    const std::size_t len = e - s + 1;
    // tau = max(1, round(len / 4)), halves rounded up.
    const std::size_t tau = std::max<std::size_t>(1, (len + 2) / 4);
    double inner = 0.0, outer = 0.0;
    std::size_t n_out = 0;
    for (std::size_t t = s; t <= e; ++t) inner += P(n, t);
    for (std::size_t t = (s >= tau ? s - tau : 0); t < s; ++t, ++n_out) outer += P(n, t);
    for (std::size_t t = e + 1; t <= std::min(T - 1, e + tau); ++t, ++n_out) outer += P(n, t);
    const double want = inner / double(len) - (n_out ? outer / double(n_out) : 0.0);
    worst = std::max(worst, std::abs(oic_score(P, s, e, n) - want));
  }
  std::size_t nonzero = 0, constant_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto T = static_cast<std::size_t>(uniform_int(rng, 2, 40));
    const Matrix C(2, T, uniform(rng));
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t e = s; e < T; ++e) {
        if (s == 0 && e == T - 1) continue;  // no flanks: outer mean is defined as 0
        ++constant_cases;
        nonzero += oic_score(C, s, e, 1) != 0.0;
      }
  }
  return {worst <= 1e-12 && nonzero == 0,
          "1000 random cases, max |diff| " + fmt("%.2e", worst) + "; " + std::to_string(constant_cases) +
              " constant-sequence intervals, " + std::to_string(nonzero) + " nonzero"};
}

// ------------------------------------------------------------------ 5

/// AP from an explicit search over injective detection->GT assignments that
/// satisfy the matching rule; requires the rule to admit exactly one.
double enumerated_ap(std::vector<ScoredSegment> dets, const std::vector<GtSegment>& gts, double thr,
                     bool& unique) {
  std::stable_sort(dets.begin(), dets.end(), [](auto& a, auto& b) { return a.score > b.score; });
  const std::size_t n = dets.size(), G = gts.size();
  auto iou = [&](std::size_t i, std::size_t j) {
    if (dets[i].video_id != gts[j].video_id) return -1.0;
    const double inter = std::max(0.0, std::min(dets[i].end, gts[j].end) - std::max(dets[i].start, gts[j].start));
    const double uni = std::max(dets[i].end, gts[j].end) - std::min(dets[i].start, gts[j].start);
    return inter / uni;
  };
  std::vector<std::vector<int>> ok;
  std::vector<int> assign(n, -1);
  std::function<void(std::size_t, std::set<int>&)> rec = [&](std::size_t i, std::set<int>& used) {
    if (i == n) {
      ok.push_back(assign);
      return;
    }
    // Rule: best-IoU free GT of the same video (lowest index on ties) if IoU >= thr.
    for (int j = -1; j < int(G); ++j) {
      if (j >= 0 && used.count(j)) continue;
      bool valid;
      if (j < 0) {
        valid = true;
        for (std::size_t g = 0; g < G; ++g)
          if (!used.count(int(g)) && iou(i, g) >= thr) valid = false;
      } else {
        valid = iou(i, std::size_t(j)) >= thr;
        for (std::size_t g = 0; g < G && valid; ++g) {
          if (used.count(int(g)) || int(g) == j) continue;
          const double o = iou(i, g), mine = iou(i, std::size_t(j));
          if (o > mine || (o == mine && int(g) < j)) valid = false;
        }
      }
      if (!valid) continue;
      assign[i] = j;
      if (j >= 0) used.insert(j);
      rec(i + 1, used);
      if (j >= 0) used.erase(j);
    }
  };
  std::set<int> used;
  rec(0, used);
  unique = ok.size() == 1;
  if (ok.empty() || G == 0) return 0.0;
  double ap = 0.0;
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (ok[0][i] >= 0) ap += double(++tp) / double(i + 1);
  return ap / double(G);
}

Outcome criterion_ap() {
  using D = std::vector<ScoredSegment>;
  using G = std::vector<GtSegment>;
  struct Case {
    D dets;
    G gts;
  };
  std::vector<Case> cases = {
      {{{"v", 0, 2, 0.9}}, {{"v", 0, 2}}},
      {{}, {{"v", 0, 2}}},
      {{{"v", 0, 2, 0.9}, {"v", 0, 2, 0.8}}, {{"v", 0, 2}}},
      {{{"v", 20, 22, 0.9}, {"v", 0, 4, 0.8}, {"v", 0, 3, 0.7}, {"v", 10, 13, 0.6}}, {{"v", 0, 4}, {"v", 10, 14}}},
      {{{"v", 1, 5, 0.9}, {"v", 0, 4, 0.9}, {"v", 2, 6, 0.5}}, {{"v", 0, 4}, {"v", 2, 6}, {"v", 8, 9}}},
      {{{"v", 0, 4, 0.3}, {"w", 0, 4, 0.8}}, {{"v", 0, 4}, {"w", 1, 4}, {"w", 0, 2}}},
      {{{"v", 2, 4, 0.5}, {"v", 0, 6, 0.6}, {"v", 3, 5, 0.7}, {"v", 0, 2, 0.2}}, {{"v", 0, 3}, {"v", 3, 6}}},
      {{{"v", 0, 10, 0.9}}, {{"v", 0, 5}, {"v", 5, 10}}},
  };
  // Plus every small random configuration in a seeded batch.
  Rng rng = make_rng(105, "acceptance");
  for (int i = 0; i < 3000; ++i) {
    Case c;
    const auto ng = uniform_int(rng, 0, 3), nd = uniform_int(rng, 0, 4);
    for (int g = 0; g < ng; ++g) {
      const double s = double(uniform_int(rng, 0, 8));
      c.gts.push_back({uniform(rng) < 0.85 ? "v" : "w", s, s + double(uniform_int(rng, 1, 4))});
    }
    for (int d = 0; d < nd; ++d) {
      const double s = double(uniform_int(rng, 0, 8));
      c.dets.push_back({uniform(rng) < 0.85 ? "v" : "w", s, s + double(uniform_int(rng, 1, 4)),
                        double(uniform_int(rng, 0, 3))});
    }
    cases.push_back(std::move(c));
  }
  std::size_t mismatches = 0, checks = 0;
  for (const auto& c : cases)
    for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      bool unique = false;
      const double want = enumerated_ap(c.dets, c.gts, thr, unique);
      ++checks;
      if (!unique || std::abs(average_precision(c.dets, c.gts, thr) - want) > 1e-12) ++mismatches;
    }
  const double perfect = average_precision({{"v", 3.5, 7.25, 0.4}}, {{"v", 3.5, 7.25}}, 0.9);
  return {mismatches == 0 && perfect == 1.0,
          std::to_string(checks) + " (case, threshold) checks, " + std::to_string(mismatches) +
              " mismatches; perfect detection AP " + fmt("%.3f", perfect)};
}

// ------------------------------------------------------------------ 6

std::vector<VideoFeatures> features_of(const SynthCorpus& c, Split s) {
  std::vector<VideoFeatures> out;
  for (const auto& v : c.videos)
    if (v.record.split == s) out.push_back({&v.record, v.rgb, v.flow});
  return out;
}

Outcome criterion_ablation() {
  const auto t0 = Clock::now();
  std::vector<double> gain5, gain3;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg;
    cfg.set_seed(seed);
    const SynthCorpus corpus = generate_corpus(cfg.synth);
    const DatasetManifest m = corpus.manifest();
    const auto variants = std::vector<Variant>{parse_variant("0#"), parse_variant("3#"), parse_variant("5#")};
    const TrainedModels models = train_for_variants(m, features_of(corpus, Split::train), cfg.train, variants);
    const auto rows = evaluate_variants(models, m, features_of(corpus, Split::test), cfg.inference, variants,
                                        cfg.thresholds);
    gain3.push_back(rows[1].report.average_map - rows[0].report.average_map);
    gain5.push_back(rows[2].report.average_map - rows[0].report.average_map);
    per_seed += (seed > 1 ? " " : "") + fmt("%.3f", rows[0].report.average_map) + "/" +
                fmt("%.3f", rows[1].report.average_map) + "/" + fmt("%.3f", rows[2].report.average_map);
  }
  const double m5 = median(gain5), m3 = median(gain3), secs = seconds_since(t0);
  return {m5 > 0.0 && m3 > 0.0 && secs < 3600.0,
          "median gain 5# " + fmt("%+.3f", m5) + ", 3# " + fmt("%+.3f", m3) + "; avg mAP 0#/3#/5# per seed: " +
              per_seed + "; " + fmt("%.0f s", secs)};
}

// ------------------------------------------------------------------ 7

Outcome criterion_sweep() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.set_seed(1);
  const SynthCorpus corpus = generate_corpus(cfg.synth);
  const DatasetManifest m = corpus.manifest();
  const auto rows = run_sweep(m, features_of(corpus, Split::train), features_of(corpus, Split::test), cfg.train,
                              cfg.inference, {0.1, 0.2, 0.3, 0.4}, {0.4, 0.5, 0.6}, cfg.thresholds);
  double lo[2] = {1e9, 1e9}, hi[2] = {-1e9, -1e9};
  std::size_t counts[2] = {};
  for (const auto& r : rows) {
    const int k = r.model == "full";
    lo[k] = std::min(lo[k], r.report.average_map);
    hi[k] = std::max(hi[k], r.report.average_map);
    ++counts[k];
  }
  const double base_range = hi[0] - lo[0], full_range = hi[1] - lo[1];
  return {counts[0] == 3 && counts[1] == 12 && full_range < base_range,
          "full-model range over 12 cells " + fmt("%.3f", full_range) + " vs base-only range over 3 betas " +
              fmt("%.3f", base_range) + "; " + fmt("%.0f s", seconds_since(t0))};
}

// ------------------------------------------------------------------ 8

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome criterion_determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  fs::remove_all(work);
  std::ostringstream log;
  RunConfig base;
  base.set_seed(8);
  base.out_dir = work / "corpus";
  cmd_synth(base, log);
  base.manifest = work / "corpus" / "manifest.json";
  for (const char* run : {"run1", "run2"}) {
    RunConfig c = base;
    c.out_dir = work / run;
    cmd_train(c, std::nullopt, log);
    c.checkpoint = c.out_dir / "model.ckpt";
    cmd_localize(c, log);
    c.detections = c.out_dir / "detections.csv";
    cmd_eval(c, log);
  }
  std::size_t identical = 0;
  std::string which;
  for (const char* f : {"train_log.csv", "detections.csv", "report.csv"}) {
    const std::string a = slurp(work / "run1" / f), b = slurp(work / "run2" / f);
    if (!a.empty() && a == b) ++identical;
    else which += std::string(" ") + f;
  }
  return {identical == 3, std::to_string(identical) + "/3 CSVs byte-identical" +
                              (which.empty() ? "" : " (differs:" + which + ")") + "; " +
                              fmt("%.0f s", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "acs_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string n;
      while (std::getline(ss, n, ',')) only.insert(std::stoi(n));
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--only N,...]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", criterion_gradients},
      {"partition oracle", criterion_partition},
      {"loss closed forms", criterion_closed_forms},
      {"OIC oracle", criterion_oic},
      {"evaluation oracle", criterion_ap},
      {"ablation: 5# and 3# beat 0# in median over 5 seeds", criterion_ablation},
      {"sensitivity: full-model range below base-only range", criterion_sweep},
      {"determinism of train/localize/eval", [&] { return criterion_determinism(work / "determinism"); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
