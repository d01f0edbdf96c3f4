#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qxq/image.hpp"

namespace qxq {

// Minimal PNG codec (zlib-backed). Writes 8-bit RGB or grayscale, non-interlaced.
// Reads 8-bit gray / RGB / RGBA non-interlaced files, which covers the corpus this
// toolkit prepares; anything fancier is rejected with a format error.
void png_write_rgb8(const std::filesystem::path& path, const uint8_t* rgb, int width, int height);
void png_write_gray8(const std::filesystem::path& path, const uint8_t* gray, int width,
                     int height);

// Returns samples scaled to [0, 1]; grayscale is replicated to three planes.
RgbImage png_read(const std::filesystem::path& path);

bool png_signature_matches(const std::vector<uint8_t>& bytes);

}  // namespace qxq
