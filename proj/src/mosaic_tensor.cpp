#include "qxq/mosaic_tensor.hpp"

namespace qxq {

Tensor gray_image(const MosaicImage& m) {
  return Tensor::from_data(Shape{1, 1, m.height, m.width}, m.plane);
}

Tensor space_to_depth(const MosaicImage& m, int factor) {
  if (m.height % factor != 0 || m.width % factor != 0)
    fail(ErrorKind::Geometry, "space_to_depth needs dimensions divisible by " +
                                  std::to_string(factor) + ", got " + std::to_string(m.width) +
                                  "x" + std::to_string(m.height));
  return pixel_unshuffle(gray_image(m), factor);
}

MosaicImage depth_to_space(const Tensor& packed, const CfaSpec& cfa, int factor) {
  const Shape& s = packed.shape();
  if (s.n != 1 || s.c != factor * factor)
    fail(ErrorKind::Shape, "depth_to_space expects (1," + std::to_string(factor * factor) +
                               ",h,w), got " + s.str());
  Tensor flat = pixel_shuffle(packed, factor);
  MosaicImage m(flat.shape().w, flat.shape().h, cfa);
  auto src = flat.data();
  std::copy(src.begin(), src.end(), m.plane.begin());
  return m;
}

Tensor tensor_from_rgb(const RgbImage& img) {
  return Tensor::from_data(Shape{1, 3, img.height, img.width}, img.planes);
}

RgbImage rgb_from_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 3)
    fail(ErrorKind::Shape, "rgb_from_tensor expects (1,3,h,w), got " + s.str());
  RgbImage img(s.w, s.h);
  auto src = t.data();
  std::copy(src.begin(), src.end(), img.planes.begin());
  return img;
}

}  // namespace qxq
