#pragma once

// Little-endian stream helpers shared by the model and dataset containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "cvnn/error.hpp"

namespace cvnn::detail {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IntegrityError("truncated file while reading " + what);
  return v;
}

inline std::string get_bytes(std::istream& is, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n)))
    throw IntegrityError("truncated file while reading " + what);
  return s;
}

}  // namespace cvnn::detail
