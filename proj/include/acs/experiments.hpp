#pragma once

// Ablation over the C1..C4 variant table and the alpha x beta sensitivity
// grid, both on a single manifest.

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "acs/evaluation.hpp"
#include "acs/inference.hpp"
#include "acs/training.hpp"

namespace acs {

struct Variant {
  std::string name;
  bool c1 = false, c2 = false, c3 = false, c4 = false;

  bool uses_subspace() const { return c2 || c3; }
};

/// Rows 0#..5#: base only, +C3, C2 alone, C2+C3, C2+C3+C4, all four.
inline std::vector<Variant> standard_variants() {
  return {{"0#", true, false, false, false}, {"1#", true, false, true, false},
          {"2#", false, true, false, false}, {"3#", false, true, true, false},
          {"4#", false, true, true, true},   {"5#", true, true, true, true}};
}

inline Variant parse_variant(const std::string& name) {
  for (const auto& v : standard_variants())
    if (v.name == name || v.name == name + "#") return v;
  throw ConfigError("unknown variant '" + name + "' (expected 0#..5#)");
}

inline InferenceConfig with_variant(InferenceConfig cfg, const Variant& v) {
  cfg.c1 = v.c1;
  cfg.c2 = v.c2;
  cfg.c3 = v.c3;
  cfg.c4 = v.c4;
  return cfg;
}

/// Copy of `trained_base` whose Subspace modules are freshly initialised
/// with the given T-ResM setting and no subspace epochs done.
inline Model with_fresh_subspace(const Model& trained_base, bool use_tresm, std::uint64_t seed) {
  ModelShape shape = trained_base.shape;
  shape.use_tresm = use_tresm;
  Model m = init_model(shape, seed);
  m.rgb.base = trained_base.rgb.base;
  m.flow.base = trained_base.flow.base;
  m.base_epochs_done = trained_base.base_epochs_done;
  return m;
}

/// Models needed by a set of variants: a base-trained model, and subspace
/// models with and without T-ResM when some variant needs them.
struct TrainedModels {
  Model base_only;
  std::optional<Model> without_tresm;
  std::optional<Model> with_tresm;

  const Model& for_variant(const Variant& v) const {
    if (!v.uses_subspace()) return base_only;
    const auto& m = v.c4 ? with_tresm : without_tresm;
    if (!m) throw ConfigError("no model trained for variant " + v.name);
    return *m;
  }
};

inline TrainedModels train_for_variants(const DatasetManifest& manifest,
                                        const std::vector<VideoFeatures>& train_videos,
                                        TrainConfig cfg, const std::vector<Variant>& variants,
                                        const EpochCallback& log = {}) {
  TrainConfig base_cfg = cfg;
  base_cfg.subspace_epochs = 0;
  TrainedModels out;
  out.base_only = init_model(model_shape_for(manifest, base_cfg), cfg.seed);
  train(out.base_only, train_videos, base_cfg, log);
  for (bool tresm : {false, true}) {
    const bool needed = std::any_of(variants.begin(), variants.end(), [&](const Variant& v) {
      return v.uses_subspace() && v.c4 == tresm;
    });
    if (!needed) continue;
    TrainConfig sub_cfg = cfg;
    sub_cfg.use_tresm = tresm;
    Model m = with_fresh_subspace(out.base_only, tresm, cfg.seed);
    train(m, train_videos, sub_cfg, log);
    (tresm ? out.with_tresm : out.without_tresm) = std::move(m);
  }
  return out;
}

struct AblationRow {
  Variant variant;
  EvalReport report;
  double gain = 0.0;  // average mAP minus that of 0# (or of the first row)
};

inline std::vector<AblationRow> evaluate_variants(const TrainedModels& models,
                                                  const DatasetManifest& manifest,
                                                  const std::vector<VideoFeatures>& test_videos,
                                                  const InferenceConfig& infer,
                                                  const std::vector<Variant>& variants,
                                                  const std::vector<double>& thresholds,
                                                  Split split = Split::test,
                                                  double average_lo = 0.3, double average_hi = 0.7) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    const auto dets = localize_all(test_videos, models.for_variant(v), with_variant(infer, v));
    rows.push_back({v, map_report(dets, manifest, split, thresholds, average_lo, average_hi), 0.0});
  }
  const AblationRow* ref = nullptr;
  for (const auto& r : rows)
    if (r.variant.name == "0#") ref = &r;
  if (!ref && !rows.empty()) ref = &rows.front();
  const double base = ref ? ref->report.average_map : 0.0;
  for (auto& r : rows) r.gain = r.report.average_map - base;
  return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows,
                               const std::string& feature = "synthetic") {
  os << "variant,feature,C1,C2,C3,C4";
  if (!rows.empty()) {
    const auto& r = rows.front().report;
    for (double t : r.thresholds) os << ",mAP@" << format_fixed(t, 2);
    os << ",AVG(" << format_fixed(r.average_lo, 2) << ":" << format_fixed(r.average_hi, 2) << "),gain";
  }
  os << "\n";
  for (const auto& row : rows) {
    const auto& v = row.variant;
    os << v.name << "," << feature << "," << v.c1 << "," << v.c2 << "," << v.c3 << "," << v.c4;
    for (double m : row.report.map) os << "," << format_fixed(m);
    os << "," << format_fixed(row.report.average_map) << "," << format_fixed(row.gain) << "\n";
  }
}

struct SweepRow {
  std::string model;      // "base" (0#) or "full" (5#)
  std::optional<double> alpha;  // absent for the base-only rows
  double beta = 0.0;
  EvalReport report;
};

/// Base-only rows for every beta, then full-model rows for every
/// (alpha, beta). The Base modules are trained once and shared.
inline std::vector<SweepRow> run_sweep(const DatasetManifest& manifest,
                                       const std::vector<VideoFeatures>& train_videos,
                                       const std::vector<VideoFeatures>& test_videos,
                                       const TrainConfig& cfg, const InferenceConfig& infer,
                                       const std::vector<double>& alphas,
                                       const std::vector<double>& betas,
                                       const std::vector<double>& thresholds,
                                       const EpochCallback& log = {}, Split split = Split::test,
                                       double average_lo = 0.3, double average_hi = 0.7) {
  for (double a : alphas) require_alpha(a);
  TrainConfig base_cfg = cfg;
  base_cfg.subspace_epochs = 0;
  Model base = init_model(model_shape_for(manifest, base_cfg), cfg.seed);
  train(base, train_videos, base_cfg, log);

  const Variant base_variant = parse_variant("0#");
  const Variant full_variant = parse_variant("5#");
  std::vector<SweepRow> rows;
  for (double b : betas) {
    InferenceConfig ic = with_variant(infer, base_variant);
    ic.beta = b;
    rows.push_back({"base", std::nullopt, b,
                    map_report(localize_all(test_videos, base, ic), manifest, split, thresholds, average_lo, average_hi)});
  }
  for (double a : alphas) {
    TrainConfig sub_cfg = cfg;
    sub_cfg.alpha = a;
    sub_cfg.use_tresm = true;
    Model m = with_fresh_subspace(base, true, cfg.seed);
    train(m, train_videos, sub_cfg, log);
    for (double b : betas) {
      InferenceConfig ic = with_variant(infer, full_variant);
      ic.beta = b;
      rows.push_back({"full", a, b,
                      map_report(localize_all(test_videos, m, ic), manifest, split, thresholds, average_lo, average_hi)});
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "model,alpha,beta";
  if (!rows.empty()) {
    const auto& r = rows.front().report;
    for (double t : r.thresholds)
      if (r.in_average_range(t)) os << ",mAP@" << format_fixed(t, 2);
    os << ",AVG\n";
  }
  for (const auto& row : rows) {
    os << row.model << "," << (row.alpha ? format_fixed(*row.alpha, 2) : std::string("-")) << ","
       << format_fixed(row.beta, 2);
    for (std::size_t k = 0; k < row.report.thresholds.size(); ++k)
      if (row.report.in_average_range(row.report.thresholds[k]))
        os << "," << format_fixed(row.report.map[k]);
    os << "," << format_fixed(row.report.average_map) << "\n";
  }
}

/// max - min of average mAP over the rows of one model kind.
inline double sweep_range(const std::vector<SweepRow>& rows, const std::string& model) {
  double lo = 1e9, hi = -1e9;
  for (const auto& r : rows) {
    if (r.model != model) continue;
    lo = std::min(lo, r.report.average_map);
    hi = std::max(hi, r.report.average_map);
  }
  return hi >= lo ? hi - lo : 0.0;
}

}  // namespace acs
