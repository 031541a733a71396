// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/image.hpp"

#include <cmath>

#include "splathead/errors.hpp"

namespace splathead {

GeomImage::GeomImage(int width, int height, int channels, ImageKind kind, double fill)
    : width_(width), height_(height), channels_(channels), kind_(kind) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw InvalidInputError("GeomImage: dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool is_binary_mask(const GeomImage& mask) {
  for (double v : mask.data()) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

bool all_finite(const GeomImage& img) {
  for (double v : img.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace splathead
