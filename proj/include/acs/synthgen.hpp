#pragma once

// Synthetic two-stream corpora with planted structure.
//
// Every video has one action class c. Snippets are of four planted kinds:
//   action          rgb: A * s_c        flow: A * u_c
//   context         rgb: A * k_c        flow: background noise
//   motion context  rgb: background     flow: A * g_c
//   background      background noise in both streams
// Background noise is Gaussian with a shared class-agnostic mean B * b (one
// direction per stream); signature-carrying entries get zero-mean Gaussian
// noise of the same deviation. k_c is built to have a chosen
// cosine similarity with s_c (and g_c with u_c), and signatures of distinct
// classes are orthogonal. Context snippets flank the action segments, which
// is what makes an appearance-only attention spill over onto them. Ground
// truth covers action segments only.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acs/data.hpp"
#include "acs/errors.hpp"
#include "acs/matrix.hpp"
#include "acs/rng.hpp"

namespace acs {

struct SynthConfig {
  std::size_t num_classes = 4;
  std::size_t train_videos = 80;
  std::size_t test_videos = 40;
  std::size_t min_snippets = 40;
  std::size_t max_snippets = 80;
  std::size_t feature_dim = 64;
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;
  std::size_t min_action_length = 4;
  std::size_t max_action_length = 12;
  double snippet_duration = 1.0;
  double context_ratio = 0.5;         // share of non-action snippets that are context
  double motion_context_ratio = 0.1;  // share of non-action snippets that are motion context
  double context_similarity = 0.7;    // cos(k_c, s_c) and cos(g_c, u_c)
  double signal_strength = 3.0;
  double noise_std = 0.3;
  double background_mean = 2.0;       // norm of the mean of background noise
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 1) throw ConfigError("synth: need at least one class");
    if (feature_dim < 2 * num_classes + 1)
      throw ConfigError("synth: feature_dim must be >= 2 * num_classes + 1");
    if (!(context_ratio >= 0.0 && context_ratio <= 1.0))
      throw ConfigError("synth: context_ratio must lie in [0, 1]");
    if (!(motion_context_ratio >= 0.0 && context_ratio + motion_context_ratio <= 1.0))
      throw ConfigError("synth: context_ratio + motion_context_ratio must lie in [0, 1]");
    if (!(context_similarity >= 0.0 && context_similarity <= 1.0))
      throw ConfigError("synth: context_similarity must lie in [0, 1]");
    if (min_actions < 1 || min_actions > max_actions)
      throw ConfigError("synth: need 1 <= min_actions <= max_actions");
    if (min_action_length < 1 || min_action_length > max_action_length)
      throw ConfigError("synth: need 1 <= min_action_length <= max_action_length");
    if (min_snippets > max_snippets) throw ConfigError("synth: min_snippets > max_snippets");
    const std::size_t need = max_actions * (max_action_length + 1) + 1;
    if (min_snippets < need)
      throw ConfigError("synth: infeasible config, videos of " + std::to_string(min_snippets) +
                        " snippets cannot hold " + std::to_string(max_actions) +
                        " actions of length " + std::to_string(max_action_length) +
                        " separated by background (need >= " + std::to_string(need) + ")");
    if (!(signal_strength > 0.0) || !(noise_std >= 0.0) || !(snippet_duration > 0.0))
      throw ConfigError("synth: strengths and durations must be positive");
  }
};

enum class PlantedKind { action, context, motion_context, background };

inline const char* to_string(PlantedKind k) {
  switch (k) {
    case PlantedKind::action: return "action";
    case PlantedKind::context: return "context";
    case PlantedKind::motion_context: return "motion_context";
    case PlantedKind::background: return "background";
  }
  return "?";
}

/// Half-open snippet range [start, end).
struct PlantedSegment {
  PlantedKind kind = PlantedKind::background;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Unit signature vectors, indexed by class - 1.
struct Signatures {
  std::vector<std::vector<double>> rgb_action;
  std::vector<std::vector<double>> rgb_context;
  std::vector<std::vector<double>> flow_action;
  std::vector<std::vector<double>> flow_motion;
  std::vector<double> rgb_background;  // unit mean direction of background noise
  std::vector<double> flow_background;
};

struct SynthVideo {
  VideoRecord record;
  Matrix rgb;   // D_o x T, values exactly representable as float
  Matrix flow;
  std::vector<PlantedKind> kinds;  // per snippet
  std::vector<PlantedSegment> segments;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<std::string> class_names;
  Signatures signatures;
  std::vector<SynthVideo> videos;

  DatasetManifest manifest() const {
    DatasetManifest m;
    m.class_names = class_names;
    m.rgb_dim = m.flow_dim = config.feature_dim;
    for (const auto& v : videos) m.videos.push_back(v.record);
    return m;
  }
};

namespace detail {

/// `count` orthonormal vectors in R^dim from Gram-Schmidt on Gaussian draws.
inline std::vector<std::vector<double>> orthonormal_set(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> out;
  while (out.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& q : out) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += v[i] * q[i];
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * q[i];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    out.push_back(std::move(v));
  }
  return out;
}

inline Signatures make_signatures(const SynthConfig& cfg) {
  Rng rng = make_rng(cfg.seed, "synth.signatures");
  const std::size_t N = cfg.num_classes;
  const double c = cfg.context_similarity, s = std::sqrt(1.0 - c * c);
  Signatures sig;
  for (int stream = 0; stream < 2; ++stream) {
    const auto basis = orthonormal_set(2 * N + 1, cfg.feature_dim, rng);
    (stream == 0 ? sig.rgb_background : sig.flow_background) = basis[2 * N];
    auto& act = stream == 0 ? sig.rgb_action : sig.flow_action;
    auto& ctx = stream == 0 ? sig.rgb_context : sig.flow_motion;
    for (std::size_t k = 0; k < N; ++k) {
      act.push_back(basis[k]);
      std::vector<double> v(cfg.feature_dim);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * basis[k][i] + s * basis[N + k][i];
      ctx.push_back(std::move(v));
    }
  }
  return sig;
}

/// Splits `total` into `parts` positive integers, uniformly at random.
inline std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng) {
  std::vector<std::size_t> cuts;
  std::vector<std::size_t> pool(total - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
  for (std::size_t i = 0; i + 1 < parts; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(pool.size()) - 1));
    std::swap(pool[i], pool[j]);
    cuts.push_back(pool[i]);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> out;
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    out.push_back(c - prev);
    prev = c;
  }
  out.push_back(total - prev);
  return out;
}

inline std::vector<PlantedKind> plan_video(const SynthConfig& cfg, std::size_t T, Rng& rng) {
  const auto k = static_cast<std::size_t>(uniform_int(
      rng, static_cast<std::int64_t>(cfg.min_actions), static_cast<std::int64_t>(cfg.max_actions)));
  std::vector<std::size_t> lengths(k);
  std::size_t action_total = 0;
  for (auto& l : lengths) {
    l = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(cfg.min_action_length),
                                             static_cast<std::int64_t>(cfg.max_action_length)));
    action_total += l;
  }
  const auto gaps = random_composition(T - action_total, k + 1, rng);

  std::vector<PlantedKind> kinds(T, PlantedKind::background);
  std::vector<std::pair<std::size_t, std::size_t>> actions;  // [start, end)
  std::size_t t = gaps[0];
  for (std::size_t i = 0; i < k; ++i) {
    actions.emplace_back(t, t + lengths[i]);
    for (std::size_t j = t; j < t + lengths[i]; ++j) kinds[j] = PlantedKind::action;
    t += lengths[i] + gaps[i + 1];
  }

  // Context grows outward from both ends of every action, one snippet per
  // flank per round, until the budget is spent or no flank can grow.
  const std::size_t non_action = T - action_total;
  std::size_t budget = static_cast<std::size_t>(std::lround(cfg.context_ratio * double(non_action)));
  std::vector<std::ptrdiff_t> left(k), right(k);
  for (std::size_t i = 0; i < k; ++i) {
    left[i] = static_cast<std::ptrdiff_t>(actions[i].first) - 1;
    right[i] = static_cast<std::ptrdiff_t>(actions[i].second);
  }
  const auto TT = static_cast<std::ptrdiff_t>(T);
  bool grew = true;
  while (budget > 0 && grew) {
    grew = false;
    for (std::size_t i = 0; i < k && budget > 0; ++i) {
      if (left[i] >= 0 && kinds[static_cast<std::size_t>(left[i])] == PlantedKind::background) {
        kinds[static_cast<std::size_t>(left[i]--)] = PlantedKind::context;
        --budget;
        grew = true;
      }
      if (budget > 0 && right[i] < TT &&
          kinds[static_cast<std::size_t>(right[i])] == PlantedKind::background) {
        kinds[static_cast<std::size_t>(right[i]++)] = PlantedKind::context;
        --budget;
        grew = true;
      }
    }
  }

  // Motion context: one run placed in the longest remaining background run,
  // keeping a background snippet on each side of it when possible.
  std::size_t motion = static_cast<std::size_t>(std::lround(cfg.motion_context_ratio * double(non_action)));
  if (motion > 0) {
    std::size_t best_start = 0, best_len = 0;
    for (std::size_t s = 0; s < T;) {
      if (kinds[s] != PlantedKind::background) {
        ++s;
        continue;
      }
      std::size_t e = s;
      while (e < T && kinds[e] == PlantedKind::background) ++e;
      if (e - s > best_len) best_start = s, best_len = e - s;
      s = e;
    }
    const std::size_t len = std::min(motion, best_len >= 3 ? best_len - 2 : 0);
    const std::size_t start = best_start + (best_len - len) / 2;
    for (std::size_t j = start; j < start + len; ++j) kinds[j] = PlantedKind::motion_context;
  }
  return kinds;
}

inline std::vector<PlantedSegment> segments_of(const std::vector<PlantedKind>& kinds) {
  std::vector<PlantedSegment> out;
  for (std::size_t s = 0; s < kinds.size();) {
    std::size_t e = s;
    while (e < kinds.size() && kinds[e] == kinds[s]) ++e;
    out.push_back({kinds[s], s, e});
    s = e;
  }
  return out;
}

/// Rounds to float precision so the feature file holds the values exactly.
inline double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace detail

/// Pure function of `cfg`: identical configs give identical corpora.
inline SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.config = cfg;
  corpus.signatures = detail::make_signatures(cfg);
  for (std::size_t c = 1; c <= cfg.num_classes; ++c)
    corpus.class_names.push_back("class" + std::to_string(c));

  const std::size_t total = cfg.train_videos + cfg.test_videos;
  const std::size_t D = cfg.feature_dim;
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng = make_rng(cfg.seed, "synth.video", i);
    SynthVideo v;
    const bool train = i < cfg.train_videos;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04zu", train ? "train" : "test",
                  train ? i : i - cfg.train_videos);
    v.record.video_id = id;
    v.record.split = train ? Split::train : Split::test;
    const auto T = static_cast<std::size_t>(uniform_int(
        rng, static_cast<std::int64_t>(cfg.min_snippets), static_cast<std::int64_t>(cfg.max_snippets)));
    const auto label = static_cast<int>(uniform_int(rng, 1, static_cast<std::int64_t>(cfg.num_classes)));
    v.record.snippet_count = T;
    v.record.snippet_duration = cfg.snippet_duration;
    v.record.labels = {label};
    v.kinds = detail::plan_video(cfg, T, rng);
    v.segments = detail::segments_of(v.kinds);
    for (const auto& s : v.segments) {
      if (s.kind == PlantedKind::action)
        v.record.gt_segments.push_back({double(s.start) * cfg.snippet_duration,
                                        double(s.end) * cfg.snippet_duration, label});
    }

    const auto cls = static_cast<std::size_t>(label - 1);
    const auto& sig = corpus.signatures;
    v.rgb = Matrix(D, T);
    v.flow = Matrix(D, T);
    for (std::size_t t = 0; t < T; ++t) {
      const std::vector<double>* rgb_sig = nullptr;
      const std::vector<double>* flow_sig = nullptr;
      switch (v.kinds[t]) {
        case PlantedKind::action:
          rgb_sig = &sig.rgb_action[cls];
          flow_sig = &sig.flow_action[cls];
          break;
        case PlantedKind::context: rgb_sig = &sig.rgb_context[cls]; break;
        case PlantedKind::motion_context: flow_sig = &sig.flow_motion[cls]; break;
        case PlantedKind::background: break;
      }
      for (std::size_t d = 0; d < D; ++d) {
        const double r = (rgb_sig ? cfg.signal_strength * (*rgb_sig)[d]
                                  : cfg.background_mean * sig.rgb_background[d]) +
                         cfg.noise_std * normal(rng);
        const double f = (flow_sig ? cfg.signal_strength * (*flow_sig)[d]
                                   : cfg.background_mean * sig.flow_background[d]) +
                         cfg.noise_std * normal(rng);
        v.rgb(d, t) = detail::as_float(r);
        v.flow(d, t) = detail::as_float(f);
      }
    }
    corpus.videos.push_back(std::move(v));
  }
  return corpus;
}

/// Writes manifest.json, features/<id>.{rgb,flow}.feat and diagnostics.json
/// under `dir`, and points every record at its feature files.
inline DatasetManifest write_corpus(SynthCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  const fs::path abs = fs::absolute(dir);
  nlohmann::json diag;
  diag["videos"] = nlohmann::json::array();
  for (auto& v : corpus.videos) {
    v.record.rgb_path = abs / "features" / (v.record.video_id + ".rgb.feat");
    v.record.flow_path = abs / "features" / (v.record.video_id + ".flow.feat");
    write_features(v.record.rgb_path, v.rgb);
    write_features(v.record.flow_path, v.flow);
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : v.segments)
      segs.push_back({{"kind", to_string(s.kind)}, {"start", s.start}, {"end", s.end}});
    diag["videos"].push_back({{"video_id", v.record.video_id}, {"label", v.record.labels.front()}, {"segments", segs}});
  }
  const DatasetManifest m = corpus.manifest();
  save_manifest(dir / "manifest.json", m);
  std::ofstream os(dir / "diagnostics.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "diagnostics.json").string());
  os << diag.dump(2) << '\n';
  return m;
}

}  // namespace acs
