// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace splathead {

// Semantic tag for geometry rasters. Depth and Mask are single channel,
// Normal and Color carry 3 channels, Feature is free-width.
enum class ImageKind { Depth, Normal, Color, Feature, Mask };

// Dense row-major raster of doubles. Pixel (x, y) spans channels
// [(y * width + x) * channels, ...). y grows downward to match image and
// camera conventions used throughout.
class GeomImage {
 public:
  GeomImage() = default;
  GeomImage(int width, int height, int channels, ImageKind kind, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  ImageKind kind() const { return kind_; }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const GeomImage& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  ImageKind kind_ = ImageKind::Depth;
  std::vector<double> data_;
};

// True when every pixel is exactly 0 or 1.
bool is_binary_mask(const GeomImage& mask);

// True when no value in the image is NaN or infinite.
bool all_finite(const GeomImage& img);

}  // namespace splathead
