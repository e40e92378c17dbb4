#pragma once

// Two-stream model (Base + Subspace per stream) and its checkpoint mapping.

#include <filesystem>
#include <string>

#include "acs/base_module.hpp"
#include "acs/checkpoint.hpp"
#include "acs/data.hpp"
#include "acs/subspace_module.hpp"

namespace acs {

struct StreamModel {
  BaseParams base;
  SubspaceParams subspace;
};

struct ModelShape {
  std::size_t rgb_dim = 0;
  std::size_t flow_dim = 0;
  std::size_t num_classes = 0;
  std::size_t subspace_dim = 0;  // 0: feature_dim / 4
  std::size_t res_kernel = 3;
  bool use_tresm = true;
};

struct Model {
  ModelShape shape;
  StreamModel rgb;
  StreamModel flow;
  int base_epochs_done = 0;
  int subspace_epochs_done = 0;

  StreamModel& stream(Stream s) { return s == Stream::rgb ? rgb : flow; }
  const StreamModel& stream(Stream s) const { return s == Stream::rgb ? rgb : flow; }
  std::size_t num_classes() const { return shape.num_classes; }
  bool use_tresm() const { return shape.use_tresm; }
};

inline SubspaceShape subspace_shape(const ModelShape& s, Stream stream) {
  const std::size_t d_o = stream == Stream::rgb ? s.rgb_dim : s.flow_dim;
  const std::size_t D = s.subspace_dim != 0 ? s.subspace_dim : std::max<std::size_t>(1, d_o / 4);
  return {d_o, D, s.num_classes, s.res_kernel, s.use_tresm};
}

/// Fresh model: zero Base modules, random Subspace modules drawn from
/// per-stream sub-streams of `seed`.
inline Model init_model(const ModelShape& shape, std::uint64_t seed) {
  Model m;
  m.shape = shape;
  for (Stream s : {Stream::rgb, Stream::flow}) {
    const std::size_t d_o = s == Stream::rgb ? shape.rgb_dim : shape.flow_dim;
    Rng sub_rng = make_rng(seed, std::string("init.subspace.") + to_string(s));
    // Zero start: with random weights the attention can settle on the
    // inverted (background-attending) solution, which classifies equally well.
    m.stream(s).base = BaseParams(d_o, shape.num_classes);
    m.stream(s).subspace = SubspaceParams::random(subspace_shape(shape, s), sub_rng);
  }
  return m;
}

inline CheckpointRecords model_records(const Model& m) {
  CheckpointRecords recs;
  const auto& s = m.shape;
  recs.push_back({"meta.shape", Matrix(1, 6, {double(s.rgb_dim), double(s.flow_dim),
                                              double(s.num_classes),
                                              double(subspace_shape(s, Stream::rgb).subspace_dim),
                                              double(s.res_kernel), s.use_tresm ? 1.0 : 0.0})});
  recs.push_back({"meta.epochs", Matrix(1, 2, {double(m.base_epochs_done),
                                               double(m.subspace_epochs_done)})});
  for (Stream st : {Stream::rgb, Stream::flow}) {
    const std::string p = to_string(st);
    append_store(recs, p + ".base.", m.stream(st).base.store);
    append_store(recs, p + ".subspace.", m.stream(st).subspace.store);
  }
  return recs;
}

inline void save_model(const std::filesystem::path& path, const Model& m) {
  save_checkpoint(path, model_records(m));
}

inline Model load_model(const std::filesystem::path& path) {
  const auto recs = load_checkpoint(path);
  const Matrix* shape = find_record(recs, "meta.shape");
  const Matrix* epochs = find_record(recs, "meta.epochs");
  if (!shape || shape->size() != 6 || !epochs || epochs->size() != 2)
    throw IoError(path.string() + ": missing or malformed model metadata");
  ModelShape s;
  s.rgb_dim = static_cast<std::size_t>((*shape)[0]);
  s.flow_dim = static_cast<std::size_t>((*shape)[1]);
  s.num_classes = static_cast<std::size_t>((*shape)[2]);
  s.subspace_dim = static_cast<std::size_t>((*shape)[3]);
  s.res_kernel = static_cast<std::size_t>((*shape)[4]);
  s.use_tresm = (*shape)[5] != 0.0;
  Model m;
  m.shape = s;
  for (Stream st : {Stream::rgb, Stream::flow}) {
    const std::size_t d_o = st == Stream::rgb ? s.rgb_dim : s.flow_dim;
    m.stream(st).base = BaseParams(d_o, s.num_classes);
    m.stream(st).subspace = SubspaceParams(subspace_shape(s, st));
    const std::string p = to_string(st);
    restore_store(recs, p + ".base.", m.stream(st).base.store);
    restore_store(recs, p + ".subspace.", m.stream(st).subspace.store);
  }
  m.base_epochs_done = static_cast<int>((*epochs)[0]);
  m.subspace_epochs_done = static_cast<int>((*epochs)[1]);
  return m;
}

}  // namespace acs
