#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qxq/cfa.hpp"
#include "qxq/image.hpp"

namespace qxq {

inline constexpr int kRawMaxSample = 1023;  // 10 significant bits
inline constexpr int kDefaultBlackLevel = 64;

enum class ByteOrder { Little, Big };

// Headerless planar RGB frame from a three-sensor camera: all red samples first,
// then green, then blue, row-major, 10 bits stored in 2 bytes each.
struct Raw3ccdFrame {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> planes;  // 3 * width * height samples, R then G then B
  int black_level = kDefaultBlackLevel;

  size_t plane_size() const { return static_cast<size_t>(width) * height; }
  uint16_t sample(int channel, int x, int y) const {
    return planes[plane_size() * channel + static_cast<size_t>(y) * width + x];
  }
};

// Headerless single-plane CFA frame, same sample encoding as the 3CCD format.
struct RawQxqFrame {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> plane;
  int black_level = kDefaultBlackLevel;
  CfaSpec cfa;

  uint16_t sample(int x, int y) const { return plane[static_cast<size_t>(y) * width + x]; }
};

Raw3ccdFrame decode_3ccd(std::span<const uint8_t> bytes, int width, int height,
                         ByteOrder order = ByteOrder::Little);
RawQxqFrame decode_qxq(std::span<const uint8_t> bytes, int width, int height, const CfaSpec& cfa,
                       ByteOrder order = ByteOrder::Little);

std::vector<uint8_t> encode_3ccd(const Raw3ccdFrame& frame, ByteOrder order = ByteOrder::Little);
std::vector<uint8_t> encode_qxq(const RawQxqFrame& frame, ByteOrder order = ByteOrder::Little);

// out = max(sample - offset, 0) / (1023 - offset), so the black level maps to 0.0
// and full scale to exactly 1.0.
float black_level_compensate(uint16_t sample, int offset = kDefaultBlackLevel);
void black_level_compensate(std::span<const uint16_t> samples, int offset, std::span<float> out);

RgbImage compensate(const Raw3ccdFrame& frame);
MosaicImage compensate(const RawQxqFrame& frame);

// 8-bit PNG export, round(v * 255) per sample; samples must already be in [0, 1].
void export_png8(const RgbImage& image, const std::filesystem::path& path);
void export_png8_gray(const MosaicImage& image, const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace qxq
