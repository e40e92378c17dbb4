#pragma once

// Run configuration: a JSON file merged with command-line overrides.
//
// {
//   "seed": 0,
//   "out_dir": "runs/demo",
//   "manifest": "data/manifest.json",      // relative to the config file
//   "checkpoint": "runs/demo/model.ckpt",
//   "detections": "runs/demo/detections.csv",
//   "split": "test",
//   "synth":     { "num_classes": 4, "train_videos": 80, ... },
//   "train":     { "alpha": 0.2, "margin": 1.0, "base_epochs": 40, ... },
//   "inference": { "beta": 0.4, "c1": true, ..., "class_threshold": 0.1 },
//   "eval":      { "thresholds": [0.1, ...], "average_range": [0.3, 0.7] },
//   "ablate":    { "variants": ["0#", "1#", ...] },
//   "sweep":     { "alphas": [0.1, 0.2, 0.3, 0.4], "betas": [0.4, 0.5, 0.6] }
// }
//
// Unknown keys are rejected so that typos do not silently fall back to
// defaults. One seed drives the generator, initialization and data order.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acs/errors.hpp"
#include "acs/evaluation.hpp"
#include "acs/experiments.hpp"
#include "acs/synthgen.hpp"
#include "acs/training.hpp"

namespace acs {

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> detections;
  Split split = Split::test;
  SynthConfig synth;
  TrainConfig train;
  InferenceConfig inference;
  bool c4_explicit = false;  // otherwise C4 follows the checkpoint
  std::vector<double> thresholds = threshold_grid(0.1, 0.9, 0.1);
  double average_lo = 0.3;
  double average_hi = 0.7;
  std::vector<std::string> variants = {"0#", "1#", "2#", "3#", "4#", "5#"};
  std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> betas = {0.4, 0.5, 0.6};

  void set_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    train.seed = s;
  }

  void validate() const {
    synth.validate();
    train.validate();
    inference.validate();
    if (thresholds.empty()) throw ConfigError("eval.thresholds must not be empty");
    for (double t : thresholds)
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1]");
    if (!(average_lo <= average_hi)) throw ConfigError("eval.average_range must be [lo, hi] with lo <= hi");
    for (double a : alphas) require_alpha(a);
    for (double b : betas)
      if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("beta values must lie in [0, 1]");
    for (const auto& v : variants) parse_variant(v);
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where,
                           std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline void read_size(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  out = v.get<std::size_t>();
}

inline void read_adam(const json& obj, const char* key, AdamConfig& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& a = obj.at(key);
  const std::string w = where + "." + key;
  reject_unknown(a, w, {"lr", "beta1", "beta2", "eps"});
  read_opt(a, "lr", out.lr, w);
  read_opt(a, "beta1", out.beta1, w);
  read_opt(a, "beta2", out.beta2, w);
  read_opt(a, "eps", out.eps, w);
}

inline json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("split must be 'train' or 'test', got '" + s + "'");
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`. Relative paths are
/// resolved against `base_dir`.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j,
                              const std::filesystem::path& base_dir) {
  using namespace detail;
  reject_unknown(j, "config", {"seed", "out_dir", "manifest", "checkpoint", "detections", "split",
                               "synth", "train", "inference", "eval", "ablate", "sweep"});
  auto path_of = [&](const char* key) {
    std::string s;
    read_opt(j, key, s, "config");
    return base_dir / s;
  };
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read_opt(j, "seed", s, "config");
    cfg.set_seed(s);
  }
  if (j.contains("out_dir")) cfg.out_dir = path_of("out_dir");
  if (j.contains("manifest")) cfg.manifest = path_of("manifest");
  if (j.contains("checkpoint")) cfg.checkpoint = path_of("checkpoint");
  if (j.contains("detections")) cfg.detections = path_of("detections");
  if (j.contains("split")) {
    std::string s;
    read_opt(j, "split", s, "config");
    cfg.split = parse_split(s);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    auto& o = cfg.synth;
    const std::string w = "synth";
    reject_unknown(s, w, {"num_classes", "train_videos", "test_videos", "min_snippets",
                          "max_snippets", "feature_dim", "min_actions", "max_actions",
                          "min_action_length", "max_action_length", "snippet_duration",
                          "context_ratio", "motion_context_ratio", "context_similarity",
                          "signal_strength", "noise_std", "background_mean"});
    read_size(s, "num_classes", o.num_classes, w);
    read_size(s, "train_videos", o.train_videos, w);
    read_size(s, "test_videos", o.test_videos, w);
    read_size(s, "min_snippets", o.min_snippets, w);
    read_size(s, "max_snippets", o.max_snippets, w);
    read_size(s, "feature_dim", o.feature_dim, w);
    read_size(s, "min_actions", o.min_actions, w);
    read_size(s, "max_actions", o.max_actions, w);
    read_size(s, "min_action_length", o.min_action_length, w);
    read_size(s, "max_action_length", o.max_action_length, w);
    read_opt(s, "snippet_duration", o.snippet_duration, w);
    read_opt(s, "context_ratio", o.context_ratio, w);
    read_opt(s, "motion_context_ratio", o.motion_context_ratio, w);
    read_opt(s, "context_similarity", o.context_similarity, w);
    read_opt(s, "signal_strength", o.signal_strength, w);
    read_opt(s, "noise_std", o.noise_std, w);
    read_opt(s, "background_mean", o.background_mean, w);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    auto& o = cfg.train;
    const std::string w = "train";
    reject_unknown(t, w, {"alpha", "margin", "base_epochs", "subspace_epochs", "base_optimizer",
                          "attention_optimizer", "subspace_optimizer", "use_tresm",
                          "subspace_dim", "res_kernel", "weights"});
    read_opt(t, "alpha", o.alpha, w);
    read_opt(t, "margin", o.margin, w);
    read_opt(t, "base_epochs", o.base_epochs, w);
    read_opt(t, "subspace_epochs", o.subspace_epochs, w);
    read_adam(t, "base_optimizer", o.base_optimizer, w);
    read_adam(t, "attention_optimizer", o.attention_optimizer, w);
    read_adam(t, "subspace_optimizer", o.subspace_optimizer, w);
    read_opt(t, "use_tresm", o.use_tresm, w);
    read_size(t, "subspace_dim", o.subspace_dim, w);
    read_size(t, "res_kernel", o.res_kernel, w);
    if (t.contains("weights")) {
      const auto& lw = t.at("weights");
      reject_unknown(lw, "train.weights", {"triplet", "cls", "residual"});
      read_opt(lw, "triplet", o.weights.triplet, "train.weights");
      read_opt(lw, "cls", o.weights.cls, "train.weights");
      read_opt(lw, "residual", o.weights.residual, "train.weights");
    }
  }
  if (j.contains("inference")) {
    const auto& i = j.at("inference");
    auto& o = cfg.inference;
    const std::string w = "inference";
    reject_unknown(i, w, {"beta", "c1", "c2", "c3", "c4", "proposal_threshold", "class_threshold",
                          "nms_iou"});
    read_opt(i, "beta", o.beta, w);
    read_opt(i, "c1", o.c1, w);
    read_opt(i, "c2", o.c2, w);
    read_opt(i, "c3", o.c3, w);
    if (i.contains("c4")) {
      read_opt(i, "c4", o.c4, w);
      cfg.c4_explicit = true;
    }
    read_opt(i, "proposal_threshold", o.proposal_threshold, w);
    read_opt(i, "class_threshold", o.class_threshold, w);
    read_opt(i, "nms_iou", o.nms_iou, w);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, "eval", {"thresholds", "average_range"});
    read_opt(e, "thresholds", cfg.thresholds, "eval");
    if (e.contains("average_range")) {
      std::vector<double> r;
      read_opt(e, "average_range", r, "eval");
      if (r.size() != 2) throw ConfigError("eval.average_range must have two entries");
      cfg.average_lo = r[0];
      cfg.average_hi = r[1];
    }
  }
  if (j.contains("ablate")) {
    reject_unknown(j.at("ablate"), "ablate", {"variants"});
    read_opt(j.at("ablate"), "variants", cfg.variants, "ablate");
  }
  if (j.contains("sweep")) {
    reject_unknown(j.at("sweep"), "sweep", {"alphas", "betas"});
    read_opt(j.at("sweep"), "alphas", cfg.alphas, "sweep");
    read_opt(j.at("sweep"), "betas", cfg.betas, "sweep");
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig cfg;
  apply_config_json(cfg, j, path.parent_path());
  return cfg;
}

/// The resolved configuration, in the same schema as the input file.
inline nlohmann::json to_json(const RunConfig& c) {
  using detail::adam_json;
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.generic_string();
  if (c.manifest) j["manifest"] = c.manifest->generic_string();
  if (c.checkpoint) j["checkpoint"] = c.checkpoint->generic_string();
  if (c.detections) j["detections"] = c.detections->generic_string();
  j["split"] = to_string(c.split);
  const auto& s = c.synth;
  j["synth"] = {{"num_classes", s.num_classes},
                {"train_videos", s.train_videos},
                {"test_videos", s.test_videos},
                {"min_snippets", s.min_snippets},
                {"max_snippets", s.max_snippets},
                {"feature_dim", s.feature_dim},
                {"min_actions", s.min_actions},
                {"max_actions", s.max_actions},
                {"min_action_length", s.min_action_length},
                {"max_action_length", s.max_action_length},
                {"snippet_duration", s.snippet_duration},
                {"context_ratio", s.context_ratio},
                {"motion_context_ratio", s.motion_context_ratio},
                {"context_similarity", s.context_similarity},
                {"signal_strength", s.signal_strength},
                {"noise_std", s.noise_std},
                {"background_mean", s.background_mean}};
  const auto& t = c.train;
  j["train"] = {{"alpha", t.alpha},
                {"margin", t.margin},
                {"base_epochs", t.base_epochs},
                {"subspace_epochs", t.subspace_epochs},
                {"base_optimizer", adam_json(t.base_optimizer)},
                {"attention_optimizer", adam_json(t.attention_optimizer)},
                {"subspace_optimizer", adam_json(t.subspace_optimizer)},
                {"use_tresm", t.use_tresm},
                {"subspace_dim", t.subspace_dim},
                {"res_kernel", t.res_kernel},
                {"weights", {{"triplet", t.weights.triplet}, {"cls", t.weights.cls},
                             {"residual", t.weights.residual}}}};
  const auto& i = c.inference;
  j["inference"] = {{"beta", i.beta},
                    {"c1", i.c1},
                    {"c2", i.c2},
                    {"c3", i.c3},
                    {"proposal_threshold", i.proposal_threshold},
                    {"class_threshold", i.class_threshold},
                    {"nms_iou", i.nms_iou}};
  if (c.c4_explicit) j["inference"]["c4"] = i.c4;
  j["eval"] = {{"thresholds", c.thresholds}, {"average_range", {c.average_lo, c.average_hi}}};
  j["ablate"] = {{"variants", c.variants}};
  j["sweep"] = {{"alphas", c.alphas}, {"betas", c.betas}};
  return j;
}

}  // namespace acs
