#pragma once

#include <array>
#include <string>
#include <vector>

#include "qxq/image.hpp"

namespace qxq {

enum class Channel : int { R = 0, G = 1, B = 2 };

// Color filter array geometry. group_size is the side of one same-color photosite
// group (1 = standard Bayer, 2 = Quad, 3 = Nona, 4 = QxQ); the macro pattern is the
// 2x2 arrangement of groups, one R, one B and two G per macro cell. The spatial
// period is 2 * group_size in both axes.
struct CfaSpec {
  int group_size = 4;
  std::array<Channel, 4> macro = {Channel::R, Channel::G, Channel::G, Channel::B};  // row-major 2x2

  static CfaSpec make(int group_size, const std::string& pattern = "RGGB");

  int period() const { return 2 * group_size; }
  std::string pattern_string() const;
};

Channel color_at(const CfaSpec& cfa, int x, int y);

// Single-channel CFA-filtered frame, samples in [0, 1].
struct MosaicImage {
  int width = 0;
  int height = 0;
  std::vector<float> plane;  // row-major
  CfaSpec cfa;

  MosaicImage() = default;
  MosaicImage(int w, int h, const CfaSpec& spec)
      : width(w), height(h), plane(static_cast<size_t>(w) * h, 0.0f), cfa(spec) {
    if (w <= 0 || h <= 0) fail(ErrorKind::Geometry, "mosaic dimensions must be positive");
    if (w % spec.period() != 0 || h % spec.period() != 0)
      fail(ErrorKind::Geometry, "mosaic dimensions must be multiples of the CFA period " +
                                    std::to_string(spec.period()));
  }

  float& at(int x, int y) { return plane[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return plane[static_cast<size_t>(y) * width + x]; }
};

// Apply the CFA: out(x, y) = rgb[color_at(x, y)](x, y). Dimensions must be period multiples.
MosaicImage mosaic(const RgbImage& rgb, const CfaSpec& cfa);

// Largest top-left crop whose sides are multiples of the CFA period.
RgbImage crop_to_period(const RgbImage& rgb, const CfaSpec& cfa);

// Per-channel bilinear interpolation across each channel's sampled lattice, mirror
// handling at the borders. Sampled positions are reproduced exactly.
RgbImage classical_demosaic(const MosaicImage& m);

}  // namespace qxq
