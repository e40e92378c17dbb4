#pragma once

// Checkpoint container:
//   "ACSCKPT1"
//   u32 record count
//   per record: u32 name length, name bytes, u32 rows, u32 cols,
//               rows*cols f64 values, row-major
// All integers and floats little-endian.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "acs/binary_io.hpp"
#include "acs/matrix.hpp"
#include "acs/params.hpp"

namespace acs {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

using CheckpointRecords = std::vector<NamedMatrix>;

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointRecords& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  binio::write_magic(os, "ACSCKPT1");
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.value.rows()));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.value.cols()));
    for (double v : r.value.values()) binio::write_le<double>(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

inline CheckpointRecords load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  const std::string where = path.string();
  binio::expect_magic(is, "ACSCKPT1", where);
  const auto count = binio::read_le<std::uint32_t>(is, where + " record count");
  CheckpointRecords out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read_le<std::uint32_t>(is, where + " name length");
    if (len > 4096) throw IoError(where + ": implausible record name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated file while reading " + where);
    const auto rows = binio::read_le<std::uint32_t>(is, where + " rows of " + name);
    const auto cols = binio::read_le<std::uint32_t>(is, where + " cols of " + name);
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) v = binio::read_le<double>(is, where + " values of " + name);
    out.push_back({std::move(name), Matrix(rows, cols, std::move(values))});
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IoError(where + ": trailing bytes after " + std::to_string(count) + " records");
  }
  return out;
}

/// Appends every parameter of `store` as "<prefix><name>", plus its Adam
/// state under "adam.m/", "adam.v/" and "adam.t/" so training can resume.
inline void append_store(CheckpointRecords& out, const std::string& prefix,
                         const ParamStore& store) {
  for (const auto& p : store) out.push_back({prefix + p.name, p.value});
  for (const auto& p : store) {
    out.push_back({"adam.m/" + prefix + p.name, p.moment1});
    out.push_back({"adam.v/" + prefix + p.name, p.moment2});
    out.push_back({"adam.t/" + prefix + p.name, Matrix(1, 1, static_cast<double>(p.steps))});
  }
}

inline const Matrix* find_record(const CheckpointRecords& recs, const std::string& name) {
  for (const auto& r : recs)
    if (r.name == name) return &r.value;
  return nullptr;
}

/// Overwrites every parameter of `store` from "<prefix><name>" records,
/// validating shapes. Adam state is restored when present.
inline void restore_store(const CheckpointRecords& recs, const std::string& prefix,
                          ParamStore& store) {
  for (auto& p : store) {
    const Matrix* v = find_record(recs, prefix + p.name);
    if (!v) throw IoError("checkpoint is missing parameter " + prefix + p.name);
    if (v->rows() != p.value.rows() || v->cols() != p.value.cols()) {
      throw IoError("checkpoint parameter " + prefix + p.name + " has shape " + v->shape() +
                    ", model expects " + p.value.shape());
    }
    p.value = *v;
    const Matrix* m = find_record(recs, "adam.m/" + prefix + p.name);
    const Matrix* s = find_record(recs, "adam.v/" + prefix + p.name);
    const Matrix* t = find_record(recs, "adam.t/" + prefix + p.name);
    if (m && s && t && m->size() == p.value.size() && s->size() == p.value.size()) {
      p.moment1 = *m;
      p.moment2 = *s;
      p.steps = static_cast<long long>((*t)[0]);
    }
  }
}

}  // namespace acs
