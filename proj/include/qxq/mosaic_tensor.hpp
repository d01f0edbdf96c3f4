#pragma once

#include "qxq/cfa.hpp"
#include "qxq/tensor.hpp"

namespace qxq {

// Raw mosaic viewed as a full-resolution single-channel tensor (1, 1, H, W).
Tensor gray_image(const MosaicImage& m);

// 4-channel half-resolution packing: channel k at (i, j) takes the mosaic sample
// at (2i + k/2, 2j + k%2). Inverse of depth_to_space.
Tensor space_to_depth(const MosaicImage& m, int factor = 2);
MosaicImage depth_to_space(const Tensor& packed, const CfaSpec& cfa, int factor = 2);

Tensor tensor_from_rgb(const RgbImage& img);
RgbImage rgb_from_tensor(const Tensor& t);

}  // namespace qxq
