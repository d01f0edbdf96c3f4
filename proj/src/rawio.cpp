#include "qxq/rawio.hpp"

#include <cmath>
#include <fstream>

#include "qxq/png_io.hpp"

namespace qxq {

namespace {

std::vector<uint16_t> decode_samples(std::span<const uint8_t> bytes, size_t count,
                                     ByteOrder order) {
  std::vector<uint16_t> samples(count);
  for (size_t i = 0; i < count; ++i) {
    uint16_t lo = bytes[2 * i], hi = bytes[2 * i + 1];
    uint16_t v = order == ByteOrder::Little ? static_cast<uint16_t>(lo | (hi << 8))
                                            : static_cast<uint16_t>((lo << 8) | hi);
    if (v > kRawMaxSample)
      fail(ErrorKind::Range, "sample " + std::to_string(i) + " = " + std::to_string(v) +
                                 " exceeds the 10-bit maximum 1023");
    samples[i] = v;
  }
  return samples;
}

void encode_samples(const std::vector<uint16_t>& samples, ByteOrder order,
                    std::vector<uint8_t>& out) {
  out.resize(samples.size() * 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    uint16_t v = samples[i];
    if (v > kRawMaxSample)
      fail(ErrorKind::Range, "sample " + std::to_string(i) + " = " + std::to_string(v) +
                                 " exceeds the 10-bit maximum 1023");
    if (order == ByteOrder::Little) {
      out[2 * i] = static_cast<uint8_t>(v & 0xff);
      out[2 * i + 1] = static_cast<uint8_t>(v >> 8);
    } else {
      out[2 * i] = static_cast<uint8_t>(v >> 8);
      out[2 * i + 1] = static_cast<uint8_t>(v & 0xff);
    }
  }
}

void check_length(size_t actual, size_t expected, const char* kind) {
  if (actual != expected)
    fail(ErrorKind::Format, std::string(kind) + " frame needs " + std::to_string(expected) +
                                " bytes, got " + std::to_string(actual));
}

}  // namespace

Raw3ccdFrame decode_3ccd(std::span<const uint8_t> bytes, int width, int height, ByteOrder order) {
  if (width <= 0 || height <= 0) fail(ErrorKind::Parameter, "frame dimensions must be positive");
  size_t count = static_cast<size_t>(width) * height * 3;
  check_length(bytes.size(), count * 2, "3CCD");
  Raw3ccdFrame frame;
  frame.width = width;
  frame.height = height;
  frame.planes = decode_samples(bytes, count, order);
  return frame;
}

RawQxqFrame decode_qxq(std::span<const uint8_t> bytes, int width, int height, const CfaSpec& cfa,
                       ByteOrder order) {
  if (width <= 0 || height <= 0) fail(ErrorKind::Parameter, "frame dimensions must be positive");
  size_t count = static_cast<size_t>(width) * height;
  check_length(bytes.size(), count * 2, "QxQ");
  RawQxqFrame frame;
  frame.width = width;
  frame.height = height;
  frame.plane = decode_samples(bytes, count, order);
  frame.cfa = cfa;
  return frame;
}

std::vector<uint8_t> encode_3ccd(const Raw3ccdFrame& frame, ByteOrder order) {
  std::vector<uint8_t> out;
  encode_samples(frame.planes, order, out);
  return out;
}

std::vector<uint8_t> encode_qxq(const RawQxqFrame& frame, ByteOrder order) {
  std::vector<uint8_t> out;
  encode_samples(frame.plane, order, out);
  return out;
}

float black_level_compensate(uint16_t sample, int offset) {
  if (offset < 0) fail(ErrorKind::Parameter, "black level offset must be >= 0");
  if (offset >= kRawMaxSample)
    fail(ErrorKind::Parameter,
         "black level offset " + std::to_string(offset) + " leaves no dynamic range");
  int shifted = std::max(static_cast<int>(sample) - offset, 0);
  return static_cast<float>(shifted) / static_cast<float>(kRawMaxSample - offset);
}

void black_level_compensate(std::span<const uint16_t> samples, int offset, std::span<float> out) {
  if (out.size() != samples.size()) fail(ErrorKind::Shape, "output span size mismatch");
  if (offset < 0) fail(ErrorKind::Parameter, "black level offset must be >= 0");
  if (offset >= kRawMaxSample)
    fail(ErrorKind::Parameter,
         "black level offset " + std::to_string(offset) + " leaves no dynamic range");
  float scale = 1.0f / static_cast<float>(kRawMaxSample - offset);
  for (size_t i = 0; i < samples.size(); ++i) {
    int shifted = std::max(static_cast<int>(samples[i]) - offset, 0);
    out[i] = static_cast<float>(shifted) * scale;
  }
}

RgbImage compensate(const Raw3ccdFrame& frame) {
  RgbImage out(frame.width, frame.height);
  black_level_compensate(frame.planes, frame.black_level, out.planes);
  return out;
}

MosaicImage compensate(const RawQxqFrame& frame) {
  MosaicImage out(frame.width, frame.height, frame.cfa);
  black_level_compensate(frame.plane, frame.black_level, out.plane);
  return out;
}

namespace {

uint8_t quantize8(float v, const char* what) {
  if (!(v >= 0.0f && v <= 1.0f))
    fail(ErrorKind::Range, std::string(what) + " sample " + std::to_string(v) +
                               " outside [0, 1]; clamp before export");
  return static_cast<uint8_t>(std::lround(v * 255.0f));
}

}  // namespace

void export_png8(const RgbImage& image, const std::filesystem::path& path) {
  std::vector<uint8_t> interleaved(static_cast<size_t>(image.width) * image.height * 3);
  size_t i = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) interleaved[i++] = quantize8(image.at(c, x, y), "RGB");
  png_write_rgb8(path, interleaved.data(), image.width, image.height);
}

void export_png8_gray(const MosaicImage& image, const std::filesystem::path& path) {
  std::vector<uint8_t> gray(static_cast<size_t>(image.width) * image.height);
  size_t i = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) gray[i++] = quantize8(image.at(x, y), "mosaic");
  png_write_gray8(path, gray.data(), image.width, image.height);
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::streamoff size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) fail(ErrorKind::Io, "short read from " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace qxq
