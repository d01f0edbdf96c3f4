#pragma once

#include <array>
#include <vector>

#include "qxq/model.hpp"
#include "qxq/optim.hpp"
#include "qxq/tensor.hpp"

namespace qxq {

struct LossWeights {
  float lambda1 = 0.0f;  // perceptual weight
  float lambda2 = 0.0f;  // MS-SSIM weight
  float alpha = 0.0f;    // distillation weight

  static LossWeights level1_preset() { return {0.1f, 0.0f, 0.0f}; }
  static LossWeights level0_preset() { return {1.0f, 0.4f, 10.0f}; }
};

// Frozen, seeded 3-stage strided conv feature extractor (3 -> 8 -> 16 -> 32,
// leaky-ReLU). Stands in for a pretrained backbone as the perceptual feature
// source; its weights are constants, never trained, and the seed is part of
// the run configuration.
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(uint64_t seed);

  Tensor features(const Tensor& x) const;
  Tensor loss(const Tensor& a, const Tensor& b) const;  // MSE between features

 private:
  std::vector<Tensor> weights_;
};

// ---- metrics (double precision, evaluation path) ----

// 10 * log10(peak^2 / MSE); +infinity for identical inputs.
double psnr_metric(const Tensor& a, const Tensor& b, double peak = 1.0);
double psnr_metric(const RgbImage& a, const RgbImage& b, double peak = 1.0);

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Number of scales that actually fit min(h, w) given the 11-tap window,
// capped at `requested`; 0 means even one window does not fit.
int ms_ssim_scales_that_fit(int h, int w, int requested);

double ms_ssim_metric(const Tensor& a, const Tensor& b, int scales = 5);
double ms_ssim_metric(const RgbImage& a, const RgbImage& b, int scales = 5);

// ---- differentiable losses ----

// Multi-scale SSIM as a graph scalar; same algorithm and constants as the
// metric path, auto-reducing the scale count with renormalized weights.
Tensor ms_ssim_graph(const Tensor& a, const Tensor& b, int scales = 5);

// ||I_S1 - I_GT1||^2 (mean-normalized) + lambda1 * perceptual
Tensor level1_loss(const Tensor& student_half, const Tensor& gt_half, const LossWeights& w,
                   const PerceptualExtractor& perceptual);

// MSE + lambda1 * perceptual + lambda2 * (1 - MS-SSIM)
Tensor level0_loss(const Tensor& student_full, const Tensor& gt_full, const LossWeights& w,
                   const PerceptualExtractor& perceptual);

// 1x1 conv aligning student tap channels to teacher tap channels; trained
// jointly with the student.
class Regressor {
 public:
  Regressor(int student_channels, int teacher_channels, uint64_t seed, int index);

  Tensor forward(const Tensor& tap) const;
  const std::vector<ParamPtr>& params() const { return params_; }
  int out_channels() const { return teacher_channels_; }

 private:
  ParamPtr weight_;
  ParamPtr bias_;
  std::vector<ParamPtr> params_;
  int teacher_channels_ = 0;
};

// Mean squared distance between R(F_S) and the (detached) teacher feature map.
Tensor distill_loss(const Tensor& student_tap, const Tensor& teacher_tap, const Regressor& reg);

// level0 + alpha * distill; with alpha == 0 the distillation term is dropped
// from the graph entirely.
Tensor total_loss(const Tensor& level0, const Tensor& distill, float alpha);

// Gaussian window taps shared by the SSIM paths.
std::vector<double> gaussian_window(int size, double sigma);

struct MetricRow {
  std::string method;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  int64_t params = 0;
  int64_t macs = 0;
};

// Delimited text table: method, PSNR, MS-SSIM, params, MACs.
std::string format_metric_table(const std::vector<MetricRow>& rows);

}  // namespace qxq
