#include "qxq/model.hpp"

#include <algorithm>

namespace qxq {

void ModelConfig::validate() const {
  if (teacher_base_channels < 4 || teacher_base_channels % 2 != 0)
    fail(ErrorKind::Config, "teacher_base_channels must be an even number >= 4, got " +
                                std::to_string(teacher_base_channels));
  int kernels = static_cast<int>(kMultiConvKernels.size());
  if (student_base_channels() % kernels != 0 || teacher_base_channels % kernels != 0)
    fail(ErrorKind::Config, "level-1 widths (" + std::to_string(student_base_channels()) + "/" +
                                std::to_string(teacher_base_channels) +
                                ") must be divisible by the " + std::to_string(kernels) +
                                " parallel kernel branches");
  if (level1_blocks < 1 || lower_level_blocks < 1)
    fail(ErrorKind::Config, "block counts must be >= 1");
}

ParamPtr ParamRegistry::add(const std::string& path, Tensor value) {
  for (const ParamPtr& p : params_)
    if (p->path == path) fail(ErrorKind::Config, "duplicate parameter path '" + path + "'");
  params_.push_back(std::make_shared<Parameter>(path, std::move(value)));
  return params_.back();
}

std::vector<ParamPtr> ParamRegistry::with_prefix(const std::string& prefix) const {
  std::vector<ParamPtr> out;
  for (const ParamPtr& p : params_)
    if (p->path.starts_with(prefix)) out.push_back(p);
  return out;
}

ParamPtr ParamRegistry::find(const std::string& path) const {
  for (const ParamPtr& p : params_)
    if (p->path == path) return p;
  return nullptr;
}

Conv2dLayer::Conv2dLayer(ParamRegistry& reg, const std::string& path, int cout, int cin, int k,
                         int padding, int out_div, uint64_t seed, bool with_bias)
    : k_(k), cout_(cout), cin_(cin), padding_(padding), out_div_(out_div) {
  RngStream rng(seed, "init:" + path);
  weight_ = reg.add(path + ".weight", kaiming_uniform(Shape{cout, cin, k, k}, rng));
  if (with_bias) bias_ = reg.add(path + ".bias", Tensor::zeros(Shape{1, cout, 1, 1}));
  if (bias_) bias_->value.set_requires_grad(true);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return conv2d(x, weight_->value, bias_ ? bias_->value : Tensor(), 1, padding_);
}

int64_t Conv2dLayer::param_count() const {
  int64_t n = static_cast<int64_t>(cout_) * cin_ * k_ * k_;
  if (bias_) n += cout_;
  return n;
}

int64_t Conv2dLayer::mac_count(int h, int w) const {
  return static_cast<int64_t>(cout_) * cin_ * k_ * k_ * (h / out_div_) * (w / out_div_);
}

MultiConvBlock::MultiConvBlock(ParamRegistry& reg, const std::string& path, int cin, int channels,
                               const std::vector<int>& kernels, int out_div, uint64_t seed,
                               bool with_bias) {
  if (kernels.empty() || channels % static_cast<int>(kernels.size()) != 0)
    fail(ErrorKind::Config, "block width " + std::to_string(channels) + " not divisible by " +
                                std::to_string(kernels.size()) + " branches");
  int per_branch = channels / static_cast<int>(kernels.size());
  for (int k : kernels)
    branches_.emplace_back(reg, path + ".k" + std::to_string(k), per_branch, cin, k, k / 2,
                           out_div, seed, with_bias);
}

Tensor MultiConvBlock::forward(const Tensor& x) const {
  std::vector<Tensor> outs;
  outs.reserve(branches_.size());
  for (const Conv2dLayer& branch : branches_) outs.push_back(branch.forward(x));
  return leaky_relu(concat_channels(outs), 0.2f);
}

int64_t MultiConvBlock::param_count() const {
  int64_t n = 0;
  for (const Conv2dLayer& b : branches_) n += b.param_count();
  return n;
}

int64_t MultiConvBlock::mac_count(int h, int w) const {
  int64_t n = 0;
  for (const Conv2dLayer& b : branches_) n += b.mac_count(h, w);
  return n;
}

PairedConvBlock::PairedConvBlock(ParamRegistry& reg, const std::string& path, int cin,
                                 int channels, int out_div, uint64_t seed)
    : first_(reg, path + ".conv0", channels, cin, 3, 1, out_div, seed),
      second_(reg, path + ".conv1", channels, channels, 3, 1, out_div, seed) {}

Tensor PairedConvBlock::forward(const Tensor& x) const {
  return leaky_relu(second_.forward(leaky_relu(first_.forward(x), 0.2f)), 0.2f);
}

int64_t PairedConvBlock::param_count() const {
  return first_.param_count() + second_.param_count();
}

int64_t PairedConvBlock::mac_count(int h, int w) const {
  return first_.mac_count(h, w) + second_.mac_count(h, w);
}

Upsample2x::Upsample2x(ParamRegistry& reg, const std::string& path, int channels,
                       UpsampleKind kind, int in_div, uint64_t seed)
    : kind_(kind) {
  if (kind_ == UpsampleKind::Subpixel)
    conv_ = Conv2dLayer(reg, path + ".conv", channels * 4, channels, 3, 1, in_div, seed);
}

Tensor Upsample2x::forward(const Tensor& x) const {
  if (kind_ == UpsampleKind::Bilinear) return bilinear_upsample2x(x);
  return pixel_shuffle(leaky_relu(conv_.forward(x), 0.2f), 2);
}

int64_t Upsample2x::param_count() const {
  return kind_ == UpsampleKind::Subpixel ? conv_.param_count() : 0;
}

int64_t Upsample2x::mac_count(int h, int w) const {
  return kind_ == UpsampleKind::Subpixel ? conv_.mac_count(h, w) : 0;
}

ImageHead::ImageHead(ParamRegistry& reg, const std::string& path, int cin, int k, int out_div,
                     HeadActivation activation, uint64_t seed)
    : conv_(reg, path, 3, cin, k, k / 2, out_div, seed), activation_(activation) {}

Tensor ImageHead::forward(const Tensor& x) const {
  Tensor y = conv_.forward(x);
  return activation_ == HeadActivation::Sigmoid ? sigmoid_act(y) : tanh_act(y);
}

int64_t ImageHead::param_count() const { return conv_.param_count(); }
int64_t ImageHead::mac_count(int h, int w) const { return conv_.mac_count(h, w); }

// ---- student ----

StudentNet::StudentNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.student_base_channels();
  int cin = 4;  // packed mosaic
  for (int b = 0; b < cfg_.level1_blocks; ++b) {
    level1_blocks_.emplace_back(registry_, "level1.block" + std::to_string(b), cin, c,
                                kMultiConvKernels, 2, seed);
    cin = c;
  }
  level1_head_ = ImageHead(registry_, "level1.head", c, 3, 2, cfg_.head_activation, seed);
  upsample_ = Upsample2x(registry_, "level0.upsample", c, cfg_.upsample_kind, 2, seed);
  int final_cin = c + (cfg_.use_residual_gray ? 1 : 0);
  final_conv_ = Conv2dLayer(registry_, "level0.final", 3, final_cin, 1, 0, 1, seed);
}

StudentOutput StudentNet::forward(const MosaicImage& m) const {
  return forward(space_to_depth(m, 2), gray_image(m));
}

StudentOutput StudentNet::forward(const Tensor& packed, const Tensor& gray) const {
  StudentOutput out;
  Tensor x = packed;
  for (size_t b = 0; b < level1_blocks_.size(); ++b) {
    x = level1_blocks_[b].forward(x);
    if (b == 0) out.tap = x;
  }
  out.rgb_half = level1_head_.forward(x);
  Tensor up = upsample_.forward(x);
  Tensor head_in = cfg_.use_residual_gray ? concat_channels({up, gray}) : up;
  Tensor y = final_conv_.forward(head_in);
  out.rgb_full = cfg_.head_activation == HeadActivation::Sigmoid ? sigmoid_act(y) : tanh_act(y);
  return out;
}

int64_t StudentNet::param_count() const {
  int64_t n = 0;
  for (const ParamPtr& p : registry_.all()) n += static_cast<int64_t>(p->value.numel());
  return n;
}

int64_t StudentNet::mac_count(int h, int w) const {
  int64_t n = 0;
  for (const MultiConvBlock& b : level1_blocks_) n += b.mac_count(h, w);
  n += level1_head_.mac_count(h, w);
  n += upsample_.mac_count(h, w);
  n += final_conv_.mac_count(h, w);
  return n;
}

void StudentNet::set_trainable(bool trainable) {
  for (const ParamPtr& p : registry_.all()) p->value.set_requires_grad(trainable);
}

int64_t StudentNet::gray_path_param_delta() const {
  return 3;  // one extra 1x1 input channel into the 3 output channels
}

int64_t StudentNet::upsample_param_delta() const {
  const int c = cfg_.student_base_channels();
  return static_cast<int64_t>(4 * c) * c * 9 + 4 * c;
}

// ---- teacher ----

int TeacherNet::channels_at(int level) const {
  return cfg_.teacher_base_channels << (level - 1);
}

TeacherNet::TeacherNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  for (int level = kLevels; level >= 2; --level) {
    const int c = channels_at(level);
    const int div = 1 << level;
    const std::string name = "level" + std::to_string(level);
    int cin = level == kLevels ? 4 : channels_at(level + 1) + 4;
    if (level < kLevels)
      upsamples_[level] = Upsample2x(registry_, name + ".upsample_in", channels_at(level + 1),
                                     cfg_.upsample_kind, div << 1, seed);
    for (int b = 0; b < cfg_.lower_level_blocks; ++b) {
      lower_blocks_[level].emplace_back(registry_, name + ".block" + std::to_string(b), cin, c,
                                        div, seed);
      cin = c;
    }
    heads_[level] = ImageHead(registry_, name + ".head", c, 3, div, cfg_.head_activation, seed);
  }

  const int c1 = channels_at(1);
  upsamples_[1] = Upsample2x(registry_, "level1.upsample_in", channels_at(2), cfg_.upsample_kind,
                             4, seed);
  int cin = channels_at(2) + 4;
  for (int b = 0; b < cfg_.level1_blocks; ++b) {
    level1_blocks_.emplace_back(registry_, "level1.block" + std::to_string(b), cin, c1,
                                kMultiConvKernels, 2, seed);
    cin = c1;
  }
  heads_[1] = ImageHead(registry_, "level1.head", c1, 3, 2, cfg_.head_activation, seed);
  upsamples_[0] = Upsample2x(registry_, "level0.upsample", c1, cfg_.upsample_kind, 2, seed);
  int final_cin = c1 + (cfg_.use_residual_gray ? 1 : 0);
  final_conv_ = Conv2dLayer(registry_, "level0.final", 3, final_cin, 1, 0, 1, seed);
}

TeacherOutput TeacherNet::forward(const MosaicImage& m, int to_level) const {
  if (to_level < 0 || to_level > kLevels)
    fail(ErrorKind::Parameter, "to_level must be in [0, 5]");
  TeacherOutput out;
  out.level_rgb.resize(kLevels + 1);

  // Scaled copies of the packed input, one per level.
  std::vector<Tensor> scaled(kLevels + 1);
  scaled[1] = space_to_depth(m, 2);
  for (int level = 2; level <= kLevels; ++level) scaled[level] = avg_pool2(scaled[level - 1]);

  Tensor f;
  for (int level = kLevels; level >= std::max(to_level, 2); --level) {
    Tensor x = level == kLevels ? scaled[level]
                                : concat_channels({upsamples_[level].forward(f), scaled[level]});
    for (const PairedConvBlock& block : lower_blocks_[level]) x = block.forward(x);
    f = x;
    out.level_rgb[level] = heads_[level].forward(f);
  }
  if (to_level >= 2) return out;

  Tensor x = concat_channels({upsamples_[1].forward(f), scaled[1]});
  for (size_t b = 0; b < level1_blocks_.size(); ++b) {
    x = level1_blocks_[b].forward(x);
    if (b == 0) out.tap = x;
  }
  out.level_rgb[1] = heads_[1].forward(x);
  if (to_level == 1) return out;

  Tensor up = upsamples_[0].forward(x);
  Tensor head_in = cfg_.use_residual_gray ? concat_channels({up, gray_image(m)}) : up;
  Tensor y = final_conv_.forward(head_in);
  out.rgb_full = cfg_.head_activation == HeadActivation::Sigmoid ? sigmoid_act(y) : tanh_act(y);
  return out;
}

std::vector<ParamPtr> TeacherNet::params_down_to(int level) const {
  std::vector<ParamPtr> out;
  auto append = [&](const std::vector<ParamPtr>& more) {
    out.insert(out.end(), more.begin(), more.end());
  };
  for (int l = kLevels; l >= std::max(level, 2); --l) {
    const std::string name = "level" + std::to_string(l);
    append(registry_.with_prefix(name + ".block"));
    if (l < kLevels) append(registry_.with_prefix(name + ".upsample_in"));
  }
  if (level <= 1) {
    append(registry_.with_prefix("level1.block"));
    append(registry_.with_prefix("level1.upsample_in"));
  }
  if (level >= 1)
    append(registry_.with_prefix("level" + std::to_string(level) + ".head"));
  if (level == 0) append(registry_.with_prefix("level0."));
  return out;
}

int64_t TeacherNet::param_count() const {
  int64_t n = 0;
  for (const ParamPtr& p : registry_.all()) n += static_cast<int64_t>(p->value.numel());
  return n;
}

int64_t TeacherNet::mac_count(int h, int w) const {
  int64_t n = 0;
  for (int level = 2; level <= kLevels; ++level) {
    for (const PairedConvBlock& b : lower_blocks_[level]) n += b.mac_count(h, w);
    n += heads_[level].mac_count(h, w);
    n += upsamples_[level - 1].mac_count(h, w);  // upsample consumed one level up
  }
  for (const MultiConvBlock& b : level1_blocks_) n += b.mac_count(h, w);
  n += heads_[1].mac_count(h, w);
  n += upsamples_[0].mac_count(h, w);
  n += final_conv_.mac_count(h, w);
  return n;
}

void TeacherNet::set_trainable(bool trainable) {
  for (const ParamPtr& p : registry_.all()) p->value.set_requires_grad(trainable);
}

int64_t TeacherNet::upsample_param_delta() const {
  // One upsample stage per level transition (5->4 .. 1->0), each a 3x3 C -> 4C conv.
  int64_t n = 0;
  for (int level = 1; level <= kLevels; ++level) {
    int64_t c = channels_at(level);
    n += 4 * c * c * 9 + 4 * c;
  }
  return n;
}

}  // namespace qxq
