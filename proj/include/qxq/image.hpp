#pragma once

#include <cstddef>
#include <vector>

#include "qxq/errors.hpp"

namespace qxq {

// Planar 3-channel image at sensor level, samples nominally in [0, 1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> planes;  // R plane, then G, then B; row-major within each plane

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), planes(static_cast<size_t>(w) * h * 3, 0.0f) {
    if (w <= 0 || h <= 0) fail(ErrorKind::Geometry, "image dimensions must be positive");
  }

  size_t plane_size() const { return static_cast<size_t>(width) * height; }

  float& at(int channel, int x, int y) {
    return planes[plane_size() * channel + static_cast<size_t>(y) * width + x];
  }
  float at(int channel, int x, int y) const {
    return planes[plane_size() * channel + static_cast<size_t>(y) * width + x];
  }

  const float* plane(int channel) const { return planes.data() + plane_size() * channel; }
  float* plane(int channel) { return planes.data() + plane_size() * channel; }
};

}  // namespace qxq
