#include "qxq/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qxq {

MosaicImage crop_tile(const MosaicImage& m, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > m.width || y0 + h > m.height)
    fail(ErrorKind::Geometry, "tile out of bounds");
  MosaicImage out(w, h, m.cfa);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = m.at(x0 + x, y0 + y);
  return out;
}

RgbImage demosaic_tiled(const MosaicImage& m, int tile, int overlap, const DemosaicFn& fn) {
  if (tile <= 0 || (m.width <= tile && m.height <= tile)) return fn(m);
  int period = m.cfa.period();
  if (tile % period != 0 || overlap % period != 0 || overlap <= 0 || overlap * 2 >= tile)
    fail(ErrorKind::Config,
         "tile and overlap must be positive CFA-period multiples with 2*overlap < tile");

  auto positions = [&](int extent) {
    std::vector<int> at;
    int step = tile - overlap;
    for (int p = 0;; p += step) {
      if (p + tile >= extent) {
        int last = ((extent - tile) / period) * period;
        if (at.empty() || last > at.back()) at.push_back(std::max(0, last));
        break;
      }
      at.push_back(p);
    }
    return at;
  };
  const std::vector<int> xs = positions(m.width), ys = positions(m.height);

  const size_t plane = static_cast<size_t>(m.width) * m.height;
  RgbImage out(m.width, m.height);
  std::vector<float> acc(plane * 3, 0.0f);
  std::vector<float> wsum(plane, 0.0f);

  for (int y0 : ys)
    for (int x0 : xs) {
      int tw = std::min(tile, m.width - x0), th = std::min(tile, m.height - y0);
      RgbImage part = fn(crop_tile(m, x0, y0, tw, th));
      for (int y = 0; y < th; ++y) {
        float wy = 1.0f;
        if (y0 > 0) wy = std::min(wy, (y + 1.0f) / overlap);
        if (y0 + th < m.height) wy = std::min(wy, static_cast<float>(th - y) / overlap);
        for (int x = 0; x < tw; ++x) {
          float w = wy;
          if (x0 > 0) w = std::min(w, (x + 1.0f) / overlap);
          if (x0 + tw < m.width) w = std::min(w, static_cast<float>(tw - x) / overlap);
          size_t px = static_cast<size_t>(y0 + y) * m.width + (x0 + x);
          wsum[px] += w;
          for (int c = 0; c < 3; ++c) acc[plane * c + px] += w * part.at(c, x, y);
        }
      }
    }
  for (int c = 0; c < 3; ++c)
    for (size_t px = 0; px < plane; ++px) out.planes[plane * c + px] = acc[plane * c + px] / wsum[px];
  return out;
}

}  // namespace qxq
