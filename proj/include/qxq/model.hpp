#pragma once

#include <string>
#include <vector>

#include "qxq/cfa.hpp"
#include "qxq/mosaic_tensor.hpp"
#include "qxq/optim.hpp"
#include "qxq/tensor.hpp"

namespace qxq {

enum class HeadActivation { Sigmoid, Tanh };
enum class UpsampleKind { Subpixel, Bilinear };

// Shared configuration for the student and its 5-level teacher. The student runs
// at half the teacher's width everywhere. Desk-scale default is a teacher width
// of 8 (student 4); the paper-scale teacher is 32 (student 16).
struct ModelConfig {
  int teacher_base_channels = 8;
  int level1_blocks = 3;
  int lower_level_blocks = 2;  // paired 3x3 conv blocks per teacher level 2..5
  HeadActivation head_activation = HeadActivation::Sigmoid;
  bool use_residual_gray = true;
  UpsampleKind upsample_kind = UpsampleKind::Subpixel;
  CfaSpec cfa = CfaSpec::make(4, "RGGB");

  int student_base_channels() const { return teacher_base_channels / 2; }
  void validate() const;
};

inline const std::vector<int> kMultiConvKernels = {3, 5, 7, 9};

// ---- layer building blocks ----

class ParamRegistry {
 public:
  ParamPtr add(const std::string& path, Tensor value);
  const std::vector<ParamPtr>& all() const { return params_; }
  std::vector<ParamPtr> with_prefix(const std::string& prefix) const;
  ParamPtr find(const std::string& path) const;

 private:
  std::vector<ParamPtr> params_;
};

struct ConvStats {
  int64_t params = 0;
  int64_t macs_per_pixel = 0;  // multiply by the conv's own output plane size
  int out_div = 1;             // output downscale factor relative to the full-res mosaic
};

class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, const std::string& path, int cout, int cin, int k, int padding,
              int out_div, uint64_t seed, bool with_bias = true);

  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;  // h, w = full-res mosaic size

  int cout() const { return cout_; }

 private:
  ParamPtr weight_;
  ParamPtr bias_;
  int k_ = 0, cout_ = 0, cin_ = 0, padding_ = 0, out_div_ = 1;
};

// Parallel same-padding convolutions, one branch per kernel size, outputs
// channel-concatenated, then leaky-ReLU.
class MultiConvBlock {
 public:
  MultiConvBlock() = default;
  MultiConvBlock(ParamRegistry& reg, const std::string& path, int cin, int channels,
                 const std::vector<int>& kernels, int out_div, uint64_t seed,
                 bool with_bias = true);

  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;

 private:
  std::vector<Conv2dLayer> branches_;
};

// Two 3x3 conv + leaky-ReLU pairs (the teacher's lower-level block).
class PairedConvBlock {
 public:
  PairedConvBlock() = default;
  PairedConvBlock(ParamRegistry& reg, const std::string& path, int cin, int channels, int out_div,
                  uint64_t seed);

  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;

 private:
  Conv2dLayer first_, second_;
};

// 2x upsampler: 3x3 conv C -> 4C, leaky-ReLU, pixel shuffle (invertible
// rearrangement); or parameter-free bilinear interpolation.
class Upsample2x {
 public:
  Upsample2x() = default;
  Upsample2x(ParamRegistry& reg, const std::string& path, int channels, UpsampleKind kind,
             int in_div, uint64_t seed);

  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;

 private:
  UpsampleKind kind_ = UpsampleKind::Subpixel;
  Conv2dLayer conv_;
};

class ImageHead {
 public:
  ImageHead() = default;
  ImageHead(ParamRegistry& reg, const std::string& path, int cin, int k, int out_div,
            HeadActivation activation, uint64_t seed);

  Tensor forward(const Tensor& x) const;
  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;

 private:
  Conv2dLayer conv_;
  HeadActivation activation_ = HeadActivation::Sigmoid;
};

// ---- networks ----

struct StudentOutput {
  Tensor rgb_full;  // (1,3,H,W)
  Tensor rgb_half;  // (1,3,H/2,W/2), the level-1 image head
  Tensor tap;       // level1.block0.out, the distillation feature
};

inline constexpr const char* kTapName = "level1.block0.out";

class StudentNet {
 public:
  StudentNet(const ModelConfig& cfg, uint64_t seed);

  StudentOutput forward(const MosaicImage& m) const;
  StudentOutput forward(const Tensor& packed, const Tensor& gray) const;

  const std::vector<ParamPtr>& params() const { return registry_.all(); }
  std::vector<ParamPtr> level1_params() const { return registry_.with_prefix("level1."); }
  const ModelConfig& config() const { return cfg_; }

  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;
  int tap_channels() const { return cfg_.student_base_channels(); }
  void set_trainable(bool trainable);

  // Builder-reported ablation deltas against this configuration.
  int64_t gray_path_param_delta() const;
  int64_t upsample_param_delta() const;

 private:
  ModelConfig cfg_;
  ParamRegistry registry_;
  std::vector<MultiConvBlock> level1_blocks_;
  ImageHead level1_head_;
  Upsample2x upsample_;
  Conv2dLayer final_conv_;
};

struct TeacherOutput {
  Tensor rgb_full;
  std::vector<Tensor> level_rgb;  // index 0 unused; [l] = level-l head output, l = 1..5
  Tensor tap;                     // level1.block0.out
};

class TeacherNet {
 public:
  static constexpr int kLevels = 5;

  TeacherNet(const ModelConfig& cfg, uint64_t seed);

  // Builds the graph down to `to_level` (0 = full network with final output).
  TeacherOutput forward(const MosaicImage& m, int to_level = 0) const;

  const std::vector<ParamPtr>& params() const { return registry_.all(); }
  // Parameters reachable when training with the level-l head (levels 5..l).
  std::vector<ParamPtr> params_down_to(int level) const;
  const ModelConfig& config() const { return cfg_; }

  int64_t param_count() const;
  int64_t mac_count(int h, int w) const;
  int tap_channels() const { return cfg_.teacher_base_channels; }
  void set_trainable(bool trainable);
  int64_t upsample_param_delta() const;  // subpixel-vs-bilinear parameter difference

  int channels_at(int level) const;

 private:
  ModelConfig cfg_;
  ParamRegistry registry_;
  std::vector<PairedConvBlock> lower_blocks_[kLevels + 1];  // [2..5]
  std::vector<MultiConvBlock> level1_blocks_;
  ImageHead heads_[kLevels + 1];  // [1..5]
  Upsample2x upsamples_[kLevels + 1];  // [l] upsamples level-l features; [1] feeds level 0
  Conv2dLayer final_conv_;
};

}  // namespace qxq
