#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "acs/errors.hpp"

namespace acs::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError("truncated file while reading " + what);
  }
  return v;
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& path) {
  char buf[8] = {};
  if (!is.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw IoError(path + ": bad magic, expected " + std::string(magic, 8));
  }
}

}  // namespace acs::binio
