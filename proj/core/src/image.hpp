#pragma once

// Internal helpers for H x W x C / N x H x W x C tensors.

#include <string>

#include "cvnn/ctensor.hpp"
#include "cvnn/error.hpp"

namespace cvnn::detail {

struct ImageDims {
  std::size_t n, h, w, c;
  bool batched;

  std::size_t index(std::size_t i, std::size_t y, std::size_t x, std::size_t ch) const noexcept {
    return ((i * h + y) * w + x) * c + ch;
  }
  Shape shape(std::size_t hh, std::size_t ww, std::size_t cc) const {
    return batched ? Shape{n, hh, ww, cc} : Shape{hh, ww, cc};
  }
};

inline ImageDims image_dims(const Shape& s, const char* what) {
  if (s.rank() == 3) return {1, s[0], s[1], s[2], false};
  if (s.rank() == 4) return {s[0], s[1], s[2], s[3], true};
  throw DimensionError(std::string(what) + " expects H x W x C or N x H x W x C, got " + s.to_string());
}

}  // namespace cvnn::detail
