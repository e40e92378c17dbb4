#pragma once

// Dataset schema and on-disk formats.
//
// Feature file (one per video and stream):
//   "ACSFEAT1", u32 T, u32 D_o, then T*D_o f32 values, snippet-major
//   (all D_o values of snippet 0 first). Little-endian throughout.
//   Loaded as a D_o x T matrix of doubles.
//
// Manifest: JSON document, see docs/manifest.md.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acs/binary_io.hpp"
#include "acs/errors.hpp"
#include "acs/matrix.hpp"

namespace acs {

enum class Stream { rgb, flow };

inline const char* to_string(Stream s) { return s == Stream::rgb ? "rgb" : "flow"; }

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct GroundTruthSegment {
  double start = 0.0;  // seconds
  double end = 0.0;
  int label = 0;  // 1..N

  bool operator==(const GroundTruthSegment&) const = default;
};

struct VideoRecord {
  std::string video_id;
  Split split = Split::train;
  std::size_t snippet_count = 0;
  double snippet_duration = 1.0;
  std::vector<int> labels;  // sorted, unique, each in 1..N
  std::filesystem::path rgb_path;   // absolute after loading
  std::filesystem::path flow_path;
  std::vector<GroundTruthSegment> gt_segments;

  const std::filesystem::path& feature_path(Stream s) const {
    return s == Stream::rgb ? rgb_path : flow_path;
  }
  double duration() const { return static_cast<double>(snippet_count) * snippet_duration; }

  bool operator==(const VideoRecord&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;  // classes 1..N; class 0 is background
  std::vector<VideoRecord> videos;
  std::size_t rgb_dim = 0;   // D_o per stream, filled in by load_manifest
  std::size_t flow_dim = 0;

  std::size_t num_classes() const { return class_names.size(); }

  std::vector<const VideoRecord*> split(Split s) const {
    std::vector<const VideoRecord*> out;
    for (const auto& v : videos)
      if (v.split == s) out.push_back(&v);
    return out;
  }

  const VideoRecord* find(const std::string& id) const {
    for (const auto& v : videos)
      if (v.video_id == id) return &v;
    return nullptr;
  }

  int class_index(const std::string& name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i)
      if (class_names[i] == name) return static_cast<int>(i) + 1;
    return 0;
  }

  std::size_t feature_dim(Stream s) const { return s == Stream::rgb ? rgb_dim : flow_dim; }
};

struct FeatureSequence {
  Stream stream = Stream::rgb;
  Matrix data;  // D_o x T

  std::size_t dim() const { return data.rows(); }
  std::size_t length() const { return data.cols(); }
};

struct FeatureHeader {
  std::size_t snippet_count = 0;
  std::size_t dim = 0;
};

// ---------------------------------------------------------------- features

inline FeatureHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file: " + path.string());
  binio::expect_magic(is, "ACSFEAT1", path.string());
  FeatureHeader h;
  h.snippet_count = binio::read_le<std::uint32_t>(is, path.string() + " header");
  h.dim = binio::read_le<std::uint32_t>(is, path.string() + " header");
  return h;
}

/// Writes `data` (D_o x T) narrowed to 32-bit floats.
inline void write_features(const std::filesystem::path& path, const Matrix& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open feature file for writing: " + path.string());
  binio::write_magic(os, "ACSFEAT1");
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.cols()));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.rows()));
  for (std::size_t t = 0; t < data.cols(); ++t)
    for (std::size_t d = 0; d < data.rows(); ++d)
      binio::write_le<float>(os, static_cast<float>(data(d, t)));
  if (!os) throw IoError("failed writing feature file: " + path.string());
}

inline Matrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file: " + path.string());
  const std::string where = path.string();
  binio::expect_magic(is, "ACSFEAT1", where);
  const auto T = binio::read_le<std::uint32_t>(is, where + " header");
  const auto D = binio::read_le<std::uint32_t>(is, where + " header");
  std::vector<float> raw(static_cast<std::size_t>(T) * D);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size() * sizeof(float)))) {
    throw IoError("truncated file while reading " + where);
  }
  Matrix m(D, T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const float v = raw[t * D + d];
      if (!std::isfinite(v)) {
        throw DataError(where + ": non-finite value at snippet " + std::to_string(t) +
                        ", channel " + std::to_string(d));
      }
      m(d, t) = static_cast<double>(v);
    }
  }
  return m;
}

inline FeatureSequence load_features(const VideoRecord& record, Stream stream) {
  FeatureSequence seq{stream, read_feature_file(record.feature_path(stream))};
  if (seq.length() != record.snippet_count) {
    throw DataError(record.video_id + ": " + to_string(stream) + " features have T=" +
                    std::to_string(seq.length()) + ", manifest declares " +
                    std::to_string(record.snippet_count));
  }
  return seq;
}

// ---------------------------------------------------------------- manifest

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& obj, const char* key,
                                   const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

inline std::string get_string(const nlohmann::json& obj, const char* key,
                              const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_string()) throw DataError(where + "." + key + ": expected string");
  return v.get<std::string>();
}

inline double get_number(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_number()) throw DataError(where + "." + key + ": expected number");
  return v.get<double>();
}

inline std::int64_t get_integer(const nlohmann::json& obj, const char* key,
                                const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_number_integer()) throw DataError(where + "." + key + ": expected integer");
  return v.get<std::int64_t>();
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const DatasetManifest& m,
                                       const std::filesystem::path& base_dir) {
  nlohmann::json j;
  j["class_names"] = m.class_names;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos) {
    nlohmann::json jv;
    jv["video_id"] = v.video_id;
    jv["split"] = to_string(v.split);
    jv["snippet_count"] = v.snippet_count;
    jv["snippet_duration"] = v.snippet_duration;
    jv["labels"] = v.labels;
    jv["rgb_path"] = std::filesystem::proximate(v.rgb_path, base_dir).generic_string();
    jv["flow_path"] = std::filesystem::proximate(v.flow_path, base_dir).generic_string();
    jv["gt_segments"] = nlohmann::json::array();
    for (const auto& g : v.gt_segments)
      jv["gt_segments"].push_back({{"start", g.start}, {"end", g.end}, {"class", g.label}});
    j["videos"].push_back(std::move(jv));
  }
  return j;
}

/// Writes the manifest with feature paths relative to the manifest's directory.
inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open manifest for writing: " + path.string());
  os << manifest_to_json(m, std::filesystem::absolute(path).parent_path()).dump(2) << '\n';
  if (!os) throw IoError("failed writing manifest: " + path.string());
}

/// Parses and eagerly validates a manifest. Relative feature paths are
/// resolved against the manifest's directory; both feature headers of every
/// video are read to check T and the per-stream feature width.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const std::string root = path.filename().string();
  const auto base = std::filesystem::absolute(path).parent_path();

  DatasetManifest m;
  const auto& names = detail::field(j, "class_names", root);
  if (!names.is_array() || names.empty())
    throw DataError(root + ".class_names: expected non-empty array");
  for (const auto& n : names) {
    if (!n.is_string()) throw DataError(root + ".class_names: expected strings");
    m.class_names.push_back(n.get<std::string>());
  }
  const auto N = static_cast<std::int64_t>(m.class_names.size());

  const auto& videos = detail::field(j, "videos", root);
  if (!videos.is_array()) throw DataError(root + ".videos: expected array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto& jv = videos[i];
    std::string where = root + ".videos[" + std::to_string(i) + "]";
    VideoRecord v;
    v.video_id = detail::get_string(jv, "video_id", where);
    where += " (" + v.video_id + ")";
    if (!seen.insert(v.video_id).second) throw DataError(where + ": duplicate video_id");

    const std::string split = detail::get_string(jv, "split", where);
    if (split == "train") v.split = Split::train;
    else if (split == "test") v.split = Split::test;
    else throw DataError(where + ".split: expected 'train' or 'test', got '" + split + "'");

    const auto T = detail::get_integer(jv, "snippet_count", where);
    if (T < 1) throw DataError(where + ".snippet_count: must be >= 1");
    v.snippet_count = static_cast<std::size_t>(T);
    v.snippet_duration = detail::get_number(jv, "snippet_duration", where);
    if (!(v.snippet_duration > 0.0)) throw DataError(where + ".snippet_duration: must be > 0");

    const auto& labels = detail::field(jv, "labels", where);
    if (!labels.is_array() || labels.empty())
      throw DataError(where + ".labels: expected non-empty array");
    std::set<int> label_set;
    for (const auto& l : labels) {
      if (!l.is_number_integer()) throw DataError(where + ".labels: expected integers");
      const auto c = l.get<std::int64_t>();
      if (c < 1 || c > N)
        throw DataError(where + ".labels: class " + std::to_string(c) + " outside 1.." +
                        std::to_string(N));
      label_set.insert(static_cast<int>(c));
    }
    v.labels.assign(label_set.begin(), label_set.end());

    v.rgb_path = base / detail::get_string(jv, "rgb_path", where);
    v.flow_path = base / detail::get_string(jv, "flow_path", where);
    v.rgb_path = v.rgb_path.lexically_normal();
    v.flow_path = v.flow_path.lexically_normal();

    if (jv.contains("gt_segments")) {
      const auto& segs = jv.at("gt_segments");
      if (!segs.is_array()) throw DataError(where + ".gt_segments: expected array");
      for (std::size_t s = 0; s < segs.size(); ++s) {
        const std::string sw = where + ".gt_segments[" + std::to_string(s) + "]";
        GroundTruthSegment g;
        g.start = detail::get_number(segs[s], "start", sw);
        g.end = detail::get_number(segs[s], "end", sw);
        const auto c = detail::get_integer(segs[s], "class", sw);
        if (c < 1 || c > N) throw DataError(sw + ".class: outside 1.." + std::to_string(N));
        g.label = static_cast<int>(c);
        if (!(0.0 <= g.start && g.start < g.end && g.end <= v.duration() + 1e-9))
          throw DataError(sw + ": need 0 <= start < end <= " + std::to_string(v.duration()));
        v.gt_segments.push_back(g);
      }
    }

    for (Stream s : {Stream::rgb, Stream::flow}) {
      const auto& p = v.feature_path(s);
      if (!std::filesystem::exists(p))
        throw IoError(where + ": " + to_string(s) + " feature file not found: " + p.string());
      const FeatureHeader h = read_feature_header(p);
      if (h.snippet_count != v.snippet_count)
        throw DataError(where + ": " + p.string() + " declares T=" +
                        std::to_string(h.snippet_count) + ", manifest says " +
                        std::to_string(v.snippet_count));
      std::size_t& dim = s == Stream::rgb ? m.rgb_dim : m.flow_dim;
      if (dim == 0) dim = h.dim;
      if (h.dim != dim)
        throw DataError(where + ": " + to_string(s) + " feature width " + std::to_string(h.dim) +
                        " differs from " + std::to_string(dim) + " used by earlier videos");
    }
    m.videos.push_back(std::move(v));
  }
  return m;
}

}  // namespace acs
