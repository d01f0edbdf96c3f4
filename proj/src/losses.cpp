#include "qxq/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace qxq {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> taps(size);
  double sum = 0.0;
  double center = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    double d = i - center;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

PerceptualExtractor::PerceptualExtractor(uint64_t seed) {
  const int widths[4] = {3, 8, 16, 32};
  for (int i = 0; i < 3; ++i) {
    RngStream rng(seed, "perceptual:stage" + std::to_string(i));
    weights_.push_back(kaiming_uniform(Shape{widths[i + 1], widths[i], 3, 3}, rng));
    weights_.back().set_requires_grad(false);
  }
}

Tensor PerceptualExtractor::features(const Tensor& x) const {
  if (x.shape().c != 3)
    fail(ErrorKind::Shape, "perceptual features expect 3 channels, got " + x.shape().str());
  Tensor f = x;
  for (const Tensor& w : weights_) f = leaky_relu(conv2d(f, w, Tensor(), 2, 1), 0.2f);
  return f;
}

Tensor PerceptualExtractor::loss(const Tensor& a, const Tensor& b) const {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::Shape,
         "perceptual loss shapes differ: " + a.shape().str() + " vs " + b.shape().str());
  return mse(features(a), features(b));
}

// ---- PSNR ----

double psnr_metric(const Tensor& a, const Tensor& b, double peak) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::Shape, "psnr shapes differ: " + a.shape().str() + " vs " + b.shape().str());
  auto da = a.data(), db = b.data();
  double sum = 0.0;
  for (size_t i = 0; i < da.size(); ++i) {
    double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sum += d * d;
  }
  double mse = sum / static_cast<double>(da.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_metric(const RgbImage& a, const RgbImage& b, double peak) {
  return psnr_metric(Tensor::from_data(Shape{1, 3, a.height, a.width}, a.planes),
                     Tensor::from_data(Shape{1, 3, b.height, b.width}, b.planes), peak);
}

// ---- MS-SSIM ----

int ms_ssim_scales_that_fit(int h, int w, int requested) {
  int fits = 0;
  while (fits < requested && std::min(h, w) >= kSsimWindow) {
    ++fits;
    h /= 2;
    w /= 2;
  }
  return fits;
}

namespace {

std::vector<double> renormalized_weights(int scales) {
  std::vector<double> w(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales);
  double sum = 0.0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

void check_ms_ssim_inputs(const Shape& a, const Shape& b, int scales) {
  if (!(a == b))
    fail(ErrorKind::Shape, "ms_ssim shapes differ: " + a.str() + " vs " + b.str());
  if (scales < 1 || scales > static_cast<int>(kMsSsimWeights.size()))
    fail(ErrorKind::Parameter, "ms_ssim scales must be 1..5");
  if (std::min(a.h, a.w) < kSsimWindow)
    fail(ErrorKind::Geometry, "image " + a.str() + " smaller than the " +
                                  std::to_string(kSsimWindow) + "x" +
                                  std::to_string(kSsimWindow) + " SSIM window");
}

// Double-precision plane pyramid used by the metric path.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
};

Plane halve(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int i = 0; i < out.h; ++i)
    for (int j = 0; j < out.w; ++j)
      out.v[static_cast<size_t>(i) * out.w + j] =
          0.25 * (p.v[(2 * i) * static_cast<size_t>(p.w) + 2 * j] +
                  p.v[(2 * i) * static_cast<size_t>(p.w) + 2 * j + 1] +
                  p.v[(2 * i + 1) * static_cast<size_t>(p.w) + 2 * j] +
                  p.v[(2 * i + 1) * static_cast<size_t>(p.w) + 2 * j + 1]);
  return out;
}

Plane blur_valid_d(const Plane& p, const std::vector<double>& taps) {
  int k = static_cast<int>(taps.size());
  Plane tmp{p.h, p.w - k + 1, {}};
  tmp.v.resize(static_cast<size_t>(tmp.h) * tmp.w);
  for (int i = 0; i < tmp.h; ++i)
    for (int j = 0; j < tmp.w; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += p.v[static_cast<size_t>(i) * p.w + j + t] * taps[t];
      tmp.v[static_cast<size_t>(i) * tmp.w + j] = acc;
    }
  Plane out{p.h - k + 1, p.w - k + 1, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int i = 0; i < out.h; ++i)
    for (int j = 0; j < out.w; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += tmp.v[static_cast<size_t>(i + t) * tmp.w + j] * taps[t];
      out.v[static_cast<size_t>(i) * out.w + j] = acc;
    }
  return out;
}

}  // namespace

double ms_ssim_metric(const Tensor& a, const Tensor& b, int scales) {
  check_ms_ssim_inputs(a.shape(), b.shape(), scales);
  const Shape& s = a.shape();
  int effective = ms_ssim_scales_that_fit(s.h, s.w, scales);
  std::vector<double> weights = renormalized_weights(effective);
  const std::vector<double> taps = gaussian_window(kSsimWindow, kSsimSigma);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;

  const int planes = s.n * s.c;
  size_t plane_len = static_cast<size_t>(s.h) * s.w;
  double result = 1.0;

  std::vector<Plane> pa(planes), pb(planes);
  auto da = a.data(), db = b.data();
  for (int p = 0; p < planes; ++p) {
    pa[p] = {s.h, s.w, std::vector<double>(da.begin() + p * plane_len, da.begin() + (p + 1) * plane_len)};
    pb[p] = {s.h, s.w, std::vector<double>(db.begin() + p * plane_len, db.begin() + (p + 1) * plane_len)};
  }

  for (int scale = 0; scale < effective; ++scale) {
    if (scale > 0)
      for (int p = 0; p < planes; ++p) {
        pa[p] = halve(pa[p]);
        pb[p] = halve(pb[p]);
      }
    bool last = scale == effective - 1;
    double acc = 0.0;
    size_t count = 0;
    for (int p = 0; p < planes; ++p) {
      Plane mua = blur_valid_d(pa[p], taps);
      Plane mub = blur_valid_d(pb[p], taps);
      Plane a2{pa[p].h, pa[p].w, pa[p].v}, b2 = {pb[p].h, pb[p].w, pb[p].v},
            ab{pa[p].h, pa[p].w, pa[p].v};
      for (size_t i = 0; i < a2.v.size(); ++i) {
        ab.v[i] = pa[p].v[i] * pb[p].v[i];
        a2.v[i] = pa[p].v[i] * pa[p].v[i];
        b2.v[i] = pb[p].v[i] * pb[p].v[i];
      }
      Plane saa = blur_valid_d(a2, taps), sbb = blur_valid_d(b2, taps), sab = blur_valid_d(ab, taps);
      for (size_t i = 0; i < mua.v.size(); ++i) {
        double ma = mua.v[i], mb = mub.v[i];
        double va = saa.v[i] - ma * ma;
        double vb = sbb.v[i] - mb * mb;
        double vab = sab.v[i] - ma * mb;
        double cs = (2.0 * vab + c2) / (va + vb + c2);
        if (last) {
          double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
          acc += lum * cs;
        } else {
          acc += cs;
        }
      }
      count += mua.v.size();
    }
    double mean = acc / static_cast<double>(count);
    mean = std::max(mean, 0.0);
    result *= std::pow(mean, weights[scale]);
  }
  return result;
}

double ms_ssim_metric(const RgbImage& a, const RgbImage& b, int scales) {
  return ms_ssim_metric(Tensor::from_data(Shape{1, 3, a.height, a.width}, a.planes),
                        Tensor::from_data(Shape{1, 3, b.height, b.width}, b.planes), scales);
}

Tensor ms_ssim_graph(const Tensor& a, const Tensor& b, int scales) {
  check_ms_ssim_inputs(a.shape(), b.shape(), scales);
  int effective = ms_ssim_scales_that_fit(a.shape().h, a.shape().w, scales);
  std::vector<double> weights = renormalized_weights(effective);
  std::vector<double> taps_d = gaussian_window(kSsimWindow, kSsimSigma);
  std::vector<float> taps(taps_d.begin(), taps_d.end());
  const float c1 = static_cast<float>(kSsimK1 * kSsimK1);
  const float c2 = static_cast<float>(kSsimK2 * kSsimK2);

  Tensor xa = a, xb = b;
  Tensor result;
  for (int scale = 0; scale < effective; ++scale) {
    if (scale > 0) {
      xa = avg_pool2(xa);
      xb = avg_pool2(xb);
    }
    Tensor mua = blur_valid(xa, taps);
    Tensor mub = blur_valid(xb, taps);
    Tensor saa = sub(blur_valid(mul(xa, xa), taps), mul(mua, mua));
    Tensor sbb = sub(blur_valid(mul(xb, xb), taps), mul(mub, mub));
    Tensor sab = sub(blur_valid(mul(xa, xb), taps), mul(mua, mub));
    Tensor cs = divide(add_scalar(mul_scalar(sab, 2.0f), c2),
                       add_scalar(add(saa, sbb), c2));
    Tensor scale_term;
    if (scale == effective - 1) {
      Tensor lum = divide(add_scalar(mul_scalar(mul(mua, mub), 2.0f), c1),
                          add_scalar(add(mul(mua, mua), mul(mub, mub)), c1));
      scale_term = mean_all(mul(lum, cs));
    } else {
      scale_term = mean_all(cs);
    }
    // A non-positive scale mean clamps the factor to zero with zero gradient;
    // pow at the origin would blow up the backward pass.
    Tensor factor = scale_term.scalar() > 1e-8f
                        ? pow_scalar(scale_term, static_cast<float>(weights[scale]))
                        : mul_scalar(scale_term, 0.0f);
    result = result.defined() ? mul(result, factor) : factor;
  }
  return result;
}

Tensor level1_loss(const Tensor& student_half, const Tensor& gt_half, const LossWeights& w,
                   const PerceptualExtractor& perceptual) {
  Tensor loss = mse(student_half, gt_half);
  if (w.lambda1 > 0.0f)
    loss = add(loss, mul_scalar(perceptual.loss(student_half, gt_half), w.lambda1));
  return loss;
}

Tensor level0_loss(const Tensor& student_full, const Tensor& gt_full, const LossWeights& w,
                   const PerceptualExtractor& perceptual) {
  Tensor loss = mse(student_full, gt_full);
  if (w.lambda1 > 0.0f)
    loss = add(loss, mul_scalar(perceptual.loss(student_full, gt_full), w.lambda1));
  if (w.lambda2 > 0.0f) {
    Tensor one_minus = add_scalar(mul_scalar(ms_ssim_graph(student_full, gt_full), -1.0f), 1.0f);
    loss = add(loss, mul_scalar(one_minus, w.lambda2));
  }
  return loss;
}

Regressor::Regressor(int student_channels, int teacher_channels, uint64_t seed, int index)
    : teacher_channels_(teacher_channels) {
  RngStream rng(seed, "regressor:" + std::to_string(index));
  weight_ = std::make_shared<Parameter>(
      "regressor" + std::to_string(index) + ".weight",
      kaiming_uniform(Shape{teacher_channels, student_channels, 1, 1}, rng));
  bias_ = std::make_shared<Parameter>("regressor" + std::to_string(index) + ".bias",
                                      Tensor::zeros(Shape{1, teacher_channels, 1, 1}));
  bias_->value.set_requires_grad(true);
  params_ = {weight_, bias_};
}

Tensor Regressor::forward(const Tensor& tap) const {
  return conv2d(tap, weight_->value, bias_->value, 1, 0);
}

Tensor distill_loss(const Tensor& student_tap, const Tensor& teacher_tap, const Regressor& reg) {
  Tensor projected = reg.forward(student_tap);
  Tensor target = teacher_tap.detach();
  if (!(projected.shape() == target.shape()))
    fail(ErrorKind::Shape, "distill features " + projected.shape().str() +
                               " do not match teacher features " + target.shape().str());
  return mse(projected, target);
}

Tensor total_loss(const Tensor& level0, const Tensor& distill, float alpha) {
  if (alpha < 0.0f) fail(ErrorKind::Parameter, "alpha must be >= 0");
  if (alpha == 0.0f) return level0;
  return add(level0, mul_scalar(distill, alpha));
}

std::string format_metric_table(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "method\tPSNR\tMS-SSIM\tparams\tMACs\n";
  for (const MetricRow& r : rows) {
    out << r.method << '\t';
    if (std::isinf(r.psnr))
      out << "inf";
    else
      out << std::fixed << std::setprecision(4) << r.psnr;
    out << '\t' << std::fixed << std::setprecision(6) << r.ms_ssim << '\t' << r.params << '\t'
        << r.macs << '\n';
  }
  return out.str();
}

}  // namespace qxq
