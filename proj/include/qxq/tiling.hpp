#pragma once

#include <functional>

#include "qxq/cfa.hpp"

namespace qxq {

using DemosaicFn = std::function<RgbImage(const MosaicImage&)>;

// Overlap-blended tiled inference for frames larger than one tile. Tiles are
// anchored on CFA-period multiples so the color phase is preserved; interior
// pixels covered by a single tile reproduce the untiled result bit for bit for
// position-local demosaicers. tile <= 0 disables tiling.
RgbImage demosaic_tiled(const MosaicImage& m, int tile, int overlap, const DemosaicFn& fn);

MosaicImage crop_tile(const MosaicImage& m, int x0, int y0, int w, int h);

}  // namespace qxq
