#include "qxq/config.hpp"

#include <fstream>
#include <sstream>

namespace qxq {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    return std::stoi(v);
  } catch (...) {
    fail(ErrorKind::Config, "key '" + key + "' needs an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (...) {
    fail(ErrorKind::Config, "key '" + key + "' needs a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::Config, "key '" + key + "' needs true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(key, item));
  }
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

void RunConfig::apply_kv(const std::string& key, const std::string& value) {
  if (key == "seed") seed = static_cast<uint64_t>(std::stoull(value));
  else if (key == "cfa.group_size") model.cfa = CfaSpec::make(to_int(key, value), model.cfa.pattern_string());
  else if (key == "cfa.pattern") model.cfa = CfaSpec::make(model.cfa.group_size, value);
  else if (key == "model.teacher_base_channels") model.teacher_base_channels = to_int(key, value);
  else if (key == "model.level1_blocks") model.level1_blocks = to_int(key, value);
  else if (key == "model.lower_level_blocks") model.lower_level_blocks = to_int(key, value);
  else if (key == "model.head_activation") {
    if (value == "sigmoid") model.head_activation = HeadActivation::Sigmoid;
    else if (value == "tanh") model.head_activation = HeadActivation::Tanh;
    else fail(ErrorKind::Config, "model.head_activation must be sigmoid or tanh");
  } else if (key == "model.use_residual_gray") model.use_residual_gray = to_bool(key, value);
  else if (key == "model.upsample_kind") {
    if (value == "subpixel") model.upsample_kind = UpsampleKind::Subpixel;
    else if (value == "bilinear") model.upsample_kind = UpsampleKind::Bilinear;
    else fail(ErrorKind::Config, "model.upsample_kind must be subpixel or bilinear");
  } else if (key == "adam.lr") adam.lr = static_cast<float>(to_double(key, value));
  else if (key == "adam.beta1") adam.beta1 = static_cast<float>(to_double(key, value));
  else if (key == "adam.beta2") adam.beta2 = static_cast<float>(to_double(key, value));
  else if (key == "adam.eps") adam.eps = static_cast<float>(to_double(key, value));
  else if (key == "train.level1_epochs") level1_epochs = to_int(key, value);
  else if (key == "train.level1_lambda1") level1_lambda1 = static_cast<float>(to_double(key, value));
  else if (key == "train.level0_lambda1") level0_lambda1 = static_cast<float>(to_double(key, value));
  else if (key == "train.level0_lambda2") level0_lambda2 = static_cast<float>(to_double(key, value));
  else if (key == "train.alpha") alpha = static_cast<float>(to_double(key, value));
  else if (key == "train.level0_epoch_budget") level0_epoch_budget = to_int(key, value);
  else if (key == "train.teacher_epochs_per_level") teacher_epochs_per_level = to_int(key, value);
  else if (key == "train.teacher_checkpoint_epochs") teacher_checkpoint_epochs = to_int_list(key, value);
  else if (key == "distill.mode") {
    if (value == "saturation") mode = SwitchMode::Saturation;
    else if (value == "schedule") mode = SwitchMode::Schedule;
    else fail(ErrorKind::Config, "distill.mode must be saturation or schedule");
  } else if (key == "distill.sigma") sigma = to_double(key, value);
  else if (key == "distill.switch_epochs") switch_epochs = to_int_list(key, value);
  else if (key == "distill.carry_regressor") carry_regressor = to_bool(key, value);
  else if (key == "data.manifest") manifest = value;
  else if (key == "data.dir_3ccd") dir_3ccd = value;
  else if (key == "data.dir_common") dir_common = value;
  else if (key == "data.raw_width") raw_width = to_int(key, value);
  else if (key == "data.raw_height") raw_height = to_int(key, value);
  else if (key == "data.patch_size") patch_size = to_int(key, value);
  else if (key == "data.variance_threshold") variance_threshold = static_cast<float>(to_double(key, value));
  else if (key == "data.split_ratio") split_ratio = static_cast<float>(to_double(key, value));
  else if (key == "infer.tile") tile = to_int(key, value);
  else if (key == "infer.tile_overlap") tile_overlap = to_int(key, value);
  else if (key == "run_root") run_root = value;
  else fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config,
           path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    cfg.apply_kv(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return cfg;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "adam.beta1 = " << adam.beta1 << "\n";
  out << "adam.beta2 = " << adam.beta2 << "\n";
  out << "adam.eps = " << adam.eps << "\n";
  out << "adam.lr = " << adam.lr << "\n";
  out << "cfa.group_size = " << model.cfa.group_size << "\n";
  out << "cfa.pattern = " << model.cfa.pattern_string() << "\n";
  out << "data.dir_3ccd = " << dir_3ccd << "\n";
  out << "data.dir_common = " << dir_common << "\n";
  out << "data.manifest = " << manifest << "\n";
  out << "data.patch_size = " << patch_size << "\n";
  out << "data.raw_height = " << raw_height << "\n";
  out << "data.raw_width = " << raw_width << "\n";
  out << "data.split_ratio = " << split_ratio << "\n";
  out << "data.variance_threshold = " << variance_threshold << "\n";
  out << "distill.carry_regressor = " << (carry_regressor ? "true" : "false") << "\n";
  out << "distill.mode = " << (mode == SwitchMode::Saturation ? "saturation" : "schedule") << "\n";
  out << "distill.sigma = " << sigma << "\n";
  out << "distill.switch_epochs = " << join(switch_epochs) << "\n";
  out << "infer.tile = " << tile << "\n";
  out << "infer.tile_overlap = " << tile_overlap << "\n";
  out << "model.head_activation = "
      << (model.head_activation == HeadActivation::Sigmoid ? "sigmoid" : "tanh") << "\n";
  out << "model.level1_blocks = " << model.level1_blocks << "\n";
  out << "model.lower_level_blocks = " << model.lower_level_blocks << "\n";
  out << "model.teacher_base_channels = " << model.teacher_base_channels << "\n";
  out << "model.upsample_kind = "
      << (model.upsample_kind == UpsampleKind::Subpixel ? "subpixel" : "bilinear") << "\n";
  out << "model.use_residual_gray = " << (model.use_residual_gray ? "true" : "false") << "\n";
  out << "run_root = " << run_root << "\n";
  out << "seed = " << seed << "\n";
  out << "train.alpha = " << alpha << "\n";
  out << "train.level0_epoch_budget = " << level0_epoch_budget << "\n";
  out << "train.level0_lambda1 = " << level0_lambda1 << "\n";
  out << "train.level0_lambda2 = " << level0_lambda2 << "\n";
  out << "train.level1_epochs = " << level1_epochs << "\n";
  out << "train.level1_lambda1 = " << level1_lambda1 << "\n";
  out << "train.teacher_checkpoint_epochs = " << join(teacher_checkpoint_epochs) << "\n";
  out << "train.teacher_epochs_per_level = " << teacher_epochs_per_level << "\n";
  return out.str();
}

DistillOptions RunConfig::distill_options() const {
  DistillOptions opts;
  opts.adam = adam;
  opts.seed = seed;
  opts.weights = level0_weights();
  opts.mode = mode;
  opts.sigma = sigma;
  opts.switch_epochs = switch_epochs;
  opts.epoch_budget = level0_epoch_budget;
  opts.carry_regressor = carry_regressor;
  return opts;
}

TrainOptions RunConfig::level1_options() const {
  TrainOptions opts;
  opts.adam = adam;
  opts.seed = seed;
  opts.weights = level1_weights();
  return opts;
}

TeacherTrainOptions RunConfig::teacher_options() const {
  TeacherTrainOptions opts;
  opts.adam = adam;
  opts.seed = seed;
  opts.epochs_per_level = teacher_epochs_per_level;
  opts.checkpoint_epochs = teacher_checkpoint_epochs;
  opts.level_weights = {level1_lambda1, 0.0f, 0.0f};
  opts.final_weights = {level0_lambda1, level0_lambda2, 0.0f};
  return opts;
}

}  // namespace qxq
