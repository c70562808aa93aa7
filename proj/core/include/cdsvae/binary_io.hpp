#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cdsvae/error.hpp"

// Little-endian primitives shared by the dataset and checkpoint formats.
namespace cdsvae::io {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_floats(std::ostream& os, std::span<const float> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError("unexpected end of file");
  return value;
}

inline void get_floats(std::istream& is, std::span<float> out) {
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (!is) throw FormatError("unexpected end of file");
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  is.read(buf, 4);
  if (!is || std::string(buf, 4) != std::string(magic, 4)) {
    throw FormatError(std::string("bad magic, expected '") + magic + "'");
  }
}

}  // namespace cdsvae::io
