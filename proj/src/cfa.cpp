#include "qxq/cfa.hpp"

#include <algorithm>

namespace qxq {

CfaSpec CfaSpec::make(int group_size, const std::string& pattern) {
  if (group_size < 1)
    fail(ErrorKind::Config, "CFA group_size must be >= 1, got " + std::to_string(group_size));
  if (pattern.size() != 4)
    fail(ErrorKind::Config, "CFA macro pattern must have 4 letters, got '" + pattern + "'");
  CfaSpec spec;
  spec.group_size = group_size;
  int reds = 0, greens = 0, blues = 0;
  for (int i = 0; i < 4; ++i) {
    switch (pattern[i]) {
      case 'R': spec.macro[i] = Channel::R; ++reds; break;
      case 'G': spec.macro[i] = Channel::G; ++greens; break;
      case 'B': spec.macro[i] = Channel::B; ++blues; break;
      default: fail(ErrorKind::Config, "CFA pattern letter must be R, G or B: '" + pattern + "'");
    }
  }
  if (reds != 1 || greens != 2 || blues != 1)
    fail(ErrorKind::Config, "CFA macro cell needs one R, two G, one B: '" + pattern + "'");
  return spec;
}

std::string CfaSpec::pattern_string() const {
  std::string s;
  for (Channel c : macro) s += "RGB"[static_cast<int>(c)];
  return s;
}

Channel color_at(const CfaSpec& cfa, int x, int y) {
  int row = (y / cfa.group_size) % 2;
  int col = (x / cfa.group_size) % 2;
  return cfa.macro[row * 2 + col];
}

MosaicImage mosaic(const RgbImage& rgb, const CfaSpec& cfa) {
  if (rgb.width % cfa.period() != 0 || rgb.height % cfa.period() != 0)
    fail(ErrorKind::Geometry, "image " + std::to_string(rgb.width) + "x" +
                                  std::to_string(rgb.height) +
                                  " is not a multiple of the CFA period " +
                                  std::to_string(cfa.period()));
  MosaicImage out(rgb.width, rgb.height, cfa);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x)
      out.at(x, y) = rgb.at(static_cast<int>(color_at(cfa, x, y)), x, y);
  return out;
}

RgbImage crop_to_period(const RgbImage& rgb, const CfaSpec& cfa) {
  int p = cfa.period();
  int w = (rgb.width / p) * p;
  int h = (rgb.height / p) * p;
  if (w == 0 || h == 0)
    fail(ErrorKind::Geometry, "image smaller than one CFA period");
  if (w == rgb.width && h == rgb.height) return rgb;
  RgbImage out(w, h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, x, y) = rgb.at(c, x, y);
  return out;
}

namespace {

// Piecewise-linear evaluation over knot positions; queries outside the knot span are
// mirrored back across the boundary knot, clamped if the reflection overshoots.
void interp_line(const std::vector<int>& knots, const std::vector<float>& values, int n,
                 float* out, size_t stride) {
  if (knots.size() == 1) {
    for (int q = 0; q < n; ++q) out[q * stride] = values[0];
    return;
  }
  for (int q = 0; q < n; ++q) {
    int qq = q;
    if (qq < knots.front()) qq = 2 * knots.front() - qq;
    if (qq > knots.back()) qq = 2 * knots.back() - qq;
    qq = std::clamp(qq, knots.front(), knots.back());
    auto it = std::upper_bound(knots.begin(), knots.end(), qq);
    size_t hi = static_cast<size_t>(it - knots.begin());
    if (hi == knots.size()) hi = knots.size() - 1;
    size_t lo = hi - 1;
    if (qq == knots[lo]) {
      out[q * stride] = values[lo];
      continue;
    }
    float t = static_cast<float>(qq - knots[lo]) / static_cast<float>(knots[hi] - knots[lo]);
    out[q * stride] = values[lo] + (values[hi] - values[lo]) * t;
  }
}

}  // namespace

RgbImage classical_demosaic(const MosaicImage& m) {
  const int w = m.width, h = m.height;
  RgbImage out(w, h);
  std::vector<float> filled(static_cast<size_t>(w) * h);
  std::vector<int> sample_rows;
  std::vector<int> knots;
  std::vector<float> values;

  for (int c = 0; c < 3; ++c) {
    sample_rows.clear();
    // Horizontal pass over rows that carry samples of this channel.
    for (int y = 0; y < h; ++y) {
      knots.clear();
      values.clear();
      for (int x = 0; x < w; ++x) {
        if (static_cast<int>(color_at(m.cfa, x, y)) == c) {
          knots.push_back(x);
          values.push_back(m.at(x, y));
        }
      }
      if (knots.empty()) continue;
      sample_rows.push_back(y);
      interp_line(knots, values, w, filled.data() + static_cast<size_t>(y) * w, 1);
    }
    // Vertical pass across the filled rows.
    values.resize(sample_rows.size());
    for (int x = 0; x < w; ++x) {
      for (size_t i = 0; i < sample_rows.size(); ++i)
        values[i] = filled[static_cast<size_t>(sample_rows[i]) * w + x];
      interp_line(sample_rows, values, h, out.plane(c) + x, static_cast<size_t>(w));
    }
  }
  return out;
}

}  // namespace qxq
