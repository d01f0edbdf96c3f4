#include "qxq/png_io.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>

#include "qxq/rawio.hpp"

namespace qxq {

namespace {

constexpr std::array<uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<uint32_t>(crc));
}

void write_png(const std::filesystem::path& path, const uint8_t* samples, int width, int height,
               int channels) {
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(width));
  put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(channels == 3 ? 2 : 0);              // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter method
  ihdr.push_back(0);                                  // not interlaced

  size_t stride = static_cast<size_t>(width) * channels;
  std::vector<uint8_t> scanlines;
  scanlines.reserve((stride + 1) * height);
  for (int y = 0; y < height; ++y) {
    scanlines.push_back(0);  // filter type None
    scanlines.insert(scanlines.end(), samples + y * stride, samples + (y + 1) * stride);
  }

  uLongf bound = compressBound(static_cast<uLong>(scanlines.size()));
  std::vector<uint8_t> idat(bound);
  if (compress2(idat.data(), &bound, scanlines.data(), static_cast<uLong>(scanlines.size()), 6) !=
      Z_OK)
    fail(ErrorKind::Io, "zlib compression failed");
  idat.resize(bound);

  std::vector<uint8_t> file(kSignature.begin(), kSignature.end());
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", idat);
  append_chunk(file, "IEND", {});
  write_file(path, file);
}

uint8_t paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace

bool png_signature_matches(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSignature.data(), 8) == 0;
}

void png_write_rgb8(const std::filesystem::path& path, const uint8_t* rgb, int width, int height) {
  write_png(path, rgb, width, height, 3);
}

void png_write_gray8(const std::filesystem::path& path, const uint8_t* gray, int width,
                     int height) {
  write_png(path, gray, width, height, 1);
}

RgbImage png_read(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (!png_signature_matches(bytes)) fail(ErrorKind::Format, "not a PNG file: " + path.string());

  int width = 0, height = 0, color_type = -1;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) fail(ErrorKind::Format, "truncated PNG chunk");
    std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
    const uint8_t* payload = &bytes[pos + 8];
    if (type == "IHDR") {
      if (len != 13) fail(ErrorKind::Format, "bad IHDR length");
      width = static_cast<int>(get_u32(payload));
      height = static_cast<int>(get_u32(payload + 4));
      int bit_depth = payload[8];
      color_type = payload[9];
      if (bit_depth != 8) fail(ErrorKind::Format, "only 8-bit PNG supported");
      if (color_type != 0 && color_type != 2 && color_type != 6)
        fail(ErrorKind::Format, "unsupported PNG color type " + std::to_string(color_type));
      if (payload[12] != 0) fail(ErrorKind::Format, "interlaced PNG not supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || idat.empty()) fail(ErrorKind::Format, "PNG missing image data");

  int channels = color_type == 2 ? 3 : (color_type == 6 ? 4 : 1);
  size_t stride = static_cast<size_t>(width) * channels;
  uLongf raw_len = static_cast<uLongf>((stride + 1) * height);
  std::vector<uint8_t> raw(raw_len);
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != (stride + 1) * static_cast<size_t>(height))
    fail(ErrorKind::Format, "PNG inflate failed: " + path.string());

  // Undo per-row filters in place.
  std::vector<uint8_t> prev(stride, 0);
  std::vector<uint8_t> row(stride);
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1)];
    uint8_t filter = src[0];
    for (size_t i = 0; i < stride; ++i) {
      int x = src[1 + i];
      int a = i >= static_cast<size_t>(channels) ? row[i - channels] : 0;
      int b = prev[i];
      int c = i >= static_cast<size_t>(channels) ? prev[i - channels] : 0;
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, c); break;
        default: fail(ErrorKind::Format, "unknown PNG filter " + std::to_string(filter));
      }
      row[i] = static_cast<uint8_t>(x);
    }
    for (int xx = 0; xx < width; ++xx) {
      float r, g, b2;
      if (channels == 1) {
        r = g = b2 = row[xx] / 255.0f;
      } else {
        r = row[xx * channels + 0] / 255.0f;
        g = row[xx * channels + 1] / 255.0f;
        b2 = row[xx * channels + 2] / 255.0f;
      }
      out.at(0, xx, y) = r;
      out.at(1, xx, y) = g;
      out.at(2, xx, y) = b2;
    }
    std::swap(prev, row);
  }
  return out;
}

}  // namespace qxq
