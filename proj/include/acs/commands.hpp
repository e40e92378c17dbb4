#pragma once

// The CLI subcommands as library functions. Each writes its outputs under
// cfg.out_dir together with run.json, a record of the resolved
// configuration and the files produced (no timestamps, so reruns compare
// byte for byte).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acs/evaluation.hpp"
#include "acs/experiments.hpp"
#include "acs/run_config.hpp"
#include "acs/selftest.hpp"
#include "acs/synthgen.hpp"
#include "acs/training.hpp"

namespace acs {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kIoError = 3, kSelfTestFailed = 4 };

namespace cmd_detail {

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::trunc) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::out | mode);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

inline const fs::path& require_path(const std::optional<fs::path>& p, const char* what) {
  if (!p) throw ConfigError(std::string("no ") + what + " given (set it in the config or by flag)");
  if (!fs::exists(*p)) throw IoError(std::string(what) + " not found: " + p->string());
  return *p;
}

inline void write_run_record(const RunConfig& cfg, const std::string& command,
                             const std::vector<std::string>& outputs,
                             const nlohmann::json& summary = nlohmann::json::object()) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = to_json(cfg);
  j["outputs"] = outputs;
  j["summary"] = summary;
  auto os = open_out(cfg.out_dir / "run.json");
  os << j.dump(2) << '\n';
}

inline EpochCallback progress(std::ostream& log) {
  return [&log](const EpochLog& e) {
    if (e.stream != Stream::flow) return;
    if (e.epoch % 10 != 0 && e.epoch != 1) return;
    log << "  epoch " << e.epoch << " (" << e.phase << ")  L_base " << format_fixed(e.base, 4)
        << "  L " << format_fixed(e.total, 4) << '\n';
  };
}

inline EvalReport report_for(const RunConfig& cfg, const std::vector<Detection>& dets,
                             const DatasetManifest& m) {
  return map_report(dets, m, cfg.split, cfg.thresholds, cfg.average_lo, cfg.average_hi);
}

/// The configured inference flags, with C4 following the checkpoint unless
/// it was set explicitly.
inline InferenceConfig inference_for(const RunConfig& cfg, const Model& model) {
  InferenceConfig ic = cfg.inference;
  if (!cfg.c4_explicit) ic.c4 = model.use_tresm();
  return ic;
}

/// The manifest to run on: the configured one, or a synthetic corpus
/// generated into out_dir/corpus.
inline DatasetManifest manifest_or_synth(RunConfig& cfg, std::ostream& log) {
  if (cfg.manifest) return load_manifest(require_path(cfg.manifest, "manifest"));
  SynthCorpus corpus = generate_corpus(cfg.synth);
  const fs::path dir = cfg.out_dir / "corpus";
  write_corpus(corpus, dir);
  cfg.manifest = dir / "manifest.json";
  log << "no manifest given; generated a synthetic corpus in " << dir.string() << '\n';
  return load_manifest(*cfg.manifest);
}

}  // namespace cmd_detail

inline int cmd_synth(const RunConfig& cfg, std::ostream& log = std::cerr) {
  cfg.synth.validate();
  SynthCorpus corpus = generate_corpus(cfg.synth);
  const DatasetManifest m = write_corpus(corpus, cfg.out_dir);
  std::size_t gts = 0, tmin = SIZE_MAX, tmax = 0;
  for (const auto& v : m.videos) {
    gts += v.gt_segments.size();
    tmin = std::min(tmin, v.snippet_count);
    tmax = std::max(tmax, v.snippet_count);
  }
  log << "wrote " << m.videos.size() << " videos (" << cfg.synth.train_videos << " train, "
      << cfg.synth.test_videos << " test), " << m.num_classes() << " classes, D_o "
      << m.rgb_dim << ", T in [" << tmin << ", " << tmax << "], " << gts
      << " action segments to " << cfg.out_dir.string() << '\n';
  cmd_detail::write_run_record(cfg, "synth", {"manifest.json", "diagnostics.json", "features/"},
                               {{"videos", m.videos.size()}, {"gt_segments", gts}});
  return kOk;
}

/// Trains from scratch, or continues `resume` up to the configured epoch
/// totals. Writes model.ckpt and train_log.csv.
inline int cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume,
                     std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  cfg.validate();
  const DatasetManifest m = load_manifest(cmd_detail::require_path(cfg.manifest, "manifest"));
  const auto videos = load_split(m, Split::train);
  Model model;
  if (resume) {
    model = load_model(cmd_detail::require_path(resume, "checkpoint to resume"));
    if (model.shape.rgb_dim != m.rgb_dim || model.shape.flow_dim != m.flow_dim ||
        model.shape.num_classes != m.num_classes())
      throw ConfigError("checkpoint shape does not match the manifest");
    log << "resuming after " << model.base_epochs_done << " base and "
        << model.subspace_epochs_done << " subspace epochs\n";
  } else {
    model = init_model(model_shape_for(m, cfg.train), cfg.seed);
  }

  const fs::path log_path = cfg.out_dir / "train_log.csv";
  const bool append = resume && fs::exists(log_path);
  auto csv = cmd_detail::open_out(log_path, append ? std::ios::app : std::ios::trunc);
  if (!append) write_log_header(csv);
  const auto show = cmd_detail::progress(log);
  train(model, videos, cfg.train, [&](const EpochLog& e) {
    write_log_row(csv, e);
    show(e);
  });
  save_model(cfg.out_dir / "model.ckpt", model);
  log << "saved " << (cfg.out_dir / "model.ckpt").string() << '\n';
  cmd_detail::write_run_record(cfg, "train", {"model.ckpt", "train_log.csv"},
                               {{"base_epochs", model.base_epochs_done},
                                {"subspace_epochs", model.subspace_epochs_done}});
  return kOk;
}

/// Writes detections.csv for the configured split.
inline int cmd_localize(const RunConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  const DatasetManifest m = load_manifest(cmd_detail::require_path(cfg.manifest, "manifest"));
  const Model model = load_model(cmd_detail::require_path(cfg.checkpoint, "checkpoint"));
  const auto videos = load_split(m, cfg.split);
  const auto dets = localize_all(videos, model, cmd_detail::inference_for(cfg, model));
  auto os = cmd_detail::open_out(cfg.out_dir / "detections.csv");
  write_detections_csv(os, dets, m);
  log << dets.size() << " detections on " << videos.size() << " " << to_string(cfg.split)
      << " videos\n";
  cmd_detail::write_run_record(cfg, "localize", {"detections.csv"}, {{"detections", dets.size()}});
  return kOk;
}

/// Writes report.csv (per-class AP and mAP per threshold).
inline int cmd_eval(const RunConfig& cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  const DatasetManifest m = load_manifest(cmd_detail::require_path(cfg.manifest, "manifest"));
  const auto dets = read_detections_csv(cmd_detail::require_path(cfg.detections, "detections"), m);
  const EvalReport r = cmd_detail::report_for(cfg, dets, m);
  auto os = cmd_detail::open_out(cfg.out_dir / "report.csv");
  write_report_csv(os, r);
  log << "average mAP(" << format_fixed(r.average_lo, 2) << ":" << format_fixed(r.average_hi, 2)
      << ") = " << format_fixed(r.average_map, 4) << '\n';
  cmd_detail::write_run_record(cfg, "eval", {"report.csv"}, {{"average_map", r.average_map}});
  return kOk;
}

/// Trains what the requested variants need (or reuses checkpoints already
/// in out_dir) and writes ablation.csv.
inline int cmd_ablate(RunConfig cfg, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  cfg.validate();
  const DatasetManifest m = cmd_detail::manifest_or_synth(cfg, log);
  std::vector<Variant> variants;
  for (const auto& v : cfg.variants) variants.push_back(parse_variant(v));
  const auto train_videos = load_split(m, Split::train);
  const auto eval_videos = load_split(m, cfg.split);

  const fs::path ck[3] = {cfg.out_dir / "ablate_base.ckpt", cfg.out_dir / "ablate_subspace.ckpt",
                          cfg.out_dir / "ablate_subspace_tresm.ckpt"};
  auto needs = [&](bool tresm) {
    return std::any_of(variants.begin(), variants.end(),
                       [&](const Variant& v) { return v.uses_subspace() && v.c4 == tresm; });
  };
  const bool cached = fs::exists(ck[0]) && (!needs(false) || fs::exists(ck[1])) &&
                      (!needs(true) || fs::exists(ck[2]));
  TrainedModels models;
  if (cached) {
    log << "reusing checkpoints in " << cfg.out_dir.string() << '\n';
    models.base_only = load_model(ck[0]);
    if (needs(false)) models.without_tresm = load_model(ck[1]);
    if (needs(true)) models.with_tresm = load_model(ck[2]);
  } else {
    models = train_for_variants(m, train_videos, cfg.train, variants, cmd_detail::progress(log));
    fs::create_directories(cfg.out_dir);
    save_model(ck[0], models.base_only);
    if (models.without_tresm) save_model(ck[1], *models.without_tresm);
    if (models.with_tresm) save_model(ck[2], *models.with_tresm);
  }
  const auto rows = evaluate_variants(models, m, eval_videos, cfg.inference, variants, cfg.thresholds,
                                      cfg.split, cfg.average_lo, cfg.average_hi);
  auto os = cmd_detail::open_out(cfg.out_dir / "ablation.csv");
  write_ablation_csv(os, rows);
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& r : rows) {
    log << r.variant.name << "  average mAP " << format_fixed(r.report.average_map, 4) << "  gain "
        << format_fixed(r.gain, 4) << '\n';
    summary[r.variant.name] = r.report.average_map;
  }
  cmd_detail::write_run_record(cfg, "ablate", {"ablation.csv"}, summary);
  return kOk;
}

/// Writes sweep.csv: base-only rows per beta, full-model rows per (alpha, beta).
inline int cmd_sweep(RunConfig cfg, std::ostream& log = std::cerr) {
  cfg.validate();
  const DatasetManifest m = cmd_detail::manifest_or_synth(cfg, log);
  const auto train_videos = load_split(m, Split::train);
  const auto eval_videos = load_split(m, cfg.split);
  const auto rows = run_sweep(m, train_videos, eval_videos, cfg.train, cfg.inference, cfg.alphas,
                              cfg.betas, cfg.thresholds, cmd_detail::progress(log), cfg.split,
                              cfg.average_lo, cfg.average_hi);
  auto os = cmd_detail::open_out(cfg.out_dir / "sweep.csv");
  write_sweep_csv(os, rows);
  const double base_range = sweep_range(rows, "base"), full_range = sweep_range(rows, "full");
  log << "average mAP range: base " << format_fixed(base_range, 4) << ", full "
      << format_fixed(full_range, 4) << '\n';
  cmd_detail::write_run_record(cfg, "sweep", {"sweep.csv"},
                               {{"base_range", base_range}, {"full_range", full_range}});
  return kOk;
}

inline int cmd_selftest(std::ostream& out = std::cout) {
  bool ok = true;
  for (const auto& r : run_selftests()) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.value << ")\n";
    ok = ok && r.passed;
  }
  out << (ok ? "all self-tests passed\n" : "self-test FAILED\n");
  return ok ? kOk : kSelfTestFailed;
}

}  // namespace acs
