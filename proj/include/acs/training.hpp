#pragma once

// Two-phase training: both streams' Base modules first, then both
// streams' Subspace modules with the Base modules frozen. Every step is a
// single video.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "acs/data.hpp"
#include "acs/model.hpp"
#include "acs/objectives.hpp"

namespace acs {

struct TrainConfig {
  double alpha = 0.2;
  double margin = 1.0;
  int base_epochs = 40;
  int subspace_epochs = 60;
  // The attention learns slower than the classifier so that the classifier
  // settles first; with equal rates the attention tends to saturate at 1.
  AdamConfig base_optimizer{.lr = 1e-2};
  AdamConfig attention_optimizer{.lr = 3e-4};
  AdamConfig subspace_optimizer{};
  std::uint64_t seed = 0;
  bool use_tresm = true;
  std::size_t subspace_dim = 0;  // 0: D_o / 4
  std::size_t res_kernel = 3;
  LossWeights weights{};

  void validate() const {
    require_alpha(alpha);
    if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
    if (base_epochs < 0 || subspace_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (res_kernel % 2 == 0) throw ConfigError("T-ResM kernel size must be odd");
  }
};

/// Mean pre-step losses over one epoch for one stream.
struct EpochLog {
  int epoch = 0;  // 1-based, counted across both phases
  const char* phase = "base";
  Stream stream = Stream::rgb;
  double base = 0.0;
  double triplet = 0.0;
  double cls = 0.0;
  double residual = 0.0;
  double total = 0.0;
};

inline void write_log_header(std::ostream& os) {
  os << "epoch,phase,stream,L_base,L_t,L_s,L_r,L\n";
}

inline void write_log_row(std::ostream& os, const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%s,%.9f,%.9f,%.9f,%.9f,%.9f\n", e.epoch, e.phase,
                to_string(e.stream), e.base, e.triplet, e.cls, e.residual, e.total);
  os << buf;
}

/// Features of one video for both streams.
struct VideoFeatures {
  const VideoRecord* record = nullptr;
  Matrix rgb;
  Matrix flow;

  const Matrix& stream(Stream s) const { return s == Stream::rgb ? rgb : flow; }
};

inline std::vector<VideoFeatures> load_split(const DatasetManifest& m, Split split) {
  std::vector<VideoFeatures> out;
  for (const VideoRecord* v : m.split(split)) {
    out.push_back({v, load_features(*v, Stream::rgb).data, load_features(*v, Stream::flow).data});
  }
  return out;
}

/// Attention of both frozen Base modules, partitioned with `alpha`.
inline SnippetPartition partition_video(const Model& model, const VideoFeatures& v, double alpha) {
  return partition_snippets(attention_forward(v.rgb, model.rgb.base),
                            attention_forward(v.flow, model.flow.base), alpha);
}

using EpochCallback = std::function<void(const EpochLog&)>;

inline ModelShape model_shape_for(const DatasetManifest& m, const TrainConfig& cfg) {
  return {m.rgb_dim, m.flow_dim, m.num_classes(), cfg.subspace_dim, cfg.res_kernel,
          cfg.use_tresm};
}

/// Runs the remaining epochs of both phases on `model` (which may be a fresh
/// init_model() or a resumed checkpoint). Deterministic given cfg.seed.
inline void train(Model& model, const std::vector<VideoFeatures>& videos, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (videos.empty()) throw DataError("train: the manifest has no training videos");
  if (model.use_tresm() != cfg.use_tresm)
    throw ConfigError("train: checkpoint T-ResM setting differs from the configuration");

  std::vector<std::size_t> order(videos.size());
  auto shuffled = [&](int epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, "order", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, std::int64_t(i) - 1))]);
  };
  const double inv_n = 1.0 / static_cast<double>(videos.size());

  while (model.base_epochs_done < cfg.base_epochs) {
    const int epoch = model.base_epochs_done + 1;
    shuffled(epoch);
    EpochLog logs[2] = {{epoch, "base", Stream::rgb}, {epoch, "base", Stream::flow}};
    for (std::size_t idx : order) {
      const VideoFeatures& v = videos[idx];
      for (int si = 0; si < 2; ++si) {
        const Stream s = si == 0 ? Stream::rgb : Stream::flow;
        BaseParams& bp = model.stream(s).base;
        const Matrix& F = v.stream(s);
        bp.store.zero_grad();
        const BaseOutputs out = base_forward(F, bp);
        const double loss = base_loss(out, v.record->labels);
        base_backward(F, bp, out, v.record->labels);
        for (auto& p : bp.store)
          adam_step(p, p.name.starts_with("att.") ? cfg.attention_optimizer : cfg.base_optimizer);
        logs[si].base += loss * inv_n;
        logs[si].total += loss * inv_n;
      }
    }
    model.base_epochs_done = epoch;
    if (on_epoch)
      for (const auto& l : logs) on_epoch(l);
  }

  if (model.subspace_epochs_done >= cfg.subspace_epochs) return;

  // Base modules are frozen from here on, so partitions are fixed per video.
  std::vector<SnippetPartition> parts;
  std::vector<double> frozen_base[2];
  parts.reserve(videos.size());
  for (const auto& v : videos) {
    parts.push_back(partition_video(model, v, cfg.alpha));
    for (int si = 0; si < 2; ++si) {
      const Stream s = si == 0 ? Stream::rgb : Stream::flow;
      frozen_base[si].push_back(
          base_loss(base_forward(v.stream(s), model.stream(s).base), v.record->labels));
    }
  }

  while (model.subspace_epochs_done < cfg.subspace_epochs) {
    const int epoch = cfg.base_epochs + model.subspace_epochs_done + 1;
    shuffled(epoch);
    EpochLog logs[2] = {{epoch, "subspace", Stream::rgb}, {epoch, "subspace", Stream::flow}};
    for (std::size_t idx : order) {
      const VideoFeatures& v = videos[idx];
      for (int si = 0; si < 2; ++si) {
        const Stream s = si == 0 ? Stream::rgb : Stream::flow;
        SubspaceParams& sp = model.stream(s).subspace;
        const Matrix& F = v.stream(s);
        sp.store.zero_grad();
        const SubspaceOutputs out = subspace_forward(F, sp);
        SubspaceGrads g;
        const SubspaceLoss l = total_subspace_loss(out, parts[idx], v.record->labels,
                                                   cfg.use_tresm, cfg.margin, cfg.weights, &g);
        subspace_backward(F, sp, out, g);
        adam_step(sp.store, cfg.subspace_optimizer);
        logs[si].base += frozen_base[si][idx] * inv_n;
        logs[si].triplet += l.triplet * inv_n;
        logs[si].cls += l.cls * inv_n;
        logs[si].residual += l.residual * inv_n;
        logs[si].total += l.total * inv_n;
      }
    }
    ++model.subspace_epochs_done;
    if (on_epoch)
      for (const auto& l : logs) on_epoch(l);
  }
}

}  // namespace acs
