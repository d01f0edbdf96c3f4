#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qxq/distill.hpp"
#include "qxq/model.hpp"

namespace qxq {

// Fully resolved run configuration: defaults, overridden by a key = value
// config file, overridden by CLI flags. A serialized copy is written next to
// every run's outputs.
struct RunConfig {
  uint64_t seed = 7;

  ModelConfig model;
  AdamConfig adam;

  int level1_epochs = 40;
  float level1_lambda1 = 0.1f;
  float level0_lambda1 = 1.0f;
  float level0_lambda2 = 0.4f;
  float alpha = 10.0f;
  int level0_epoch_budget = 30;

  int teacher_epochs_per_level = 2;
  std::vector<int> teacher_checkpoint_epochs = {2, 4};

  SwitchMode mode = SwitchMode::Schedule;
  double sigma = 1e-6;
  std::vector<int> switch_epochs = {7, 20};
  bool carry_regressor = false;

  std::string manifest;
  std::string dir_3ccd;
  std::string dir_common;
  int raw_width = 1600, raw_height = 1200;
  int patch_size = 448;
  float variance_threshold = 1e-3f;
  float split_ratio = 0.9f;

  int tile = 512;
  int tile_overlap = 32;

  std::string run_root = "runs";

  void apply_kv(const std::string& key, const std::string& value);
  static RunConfig from_file(const std::filesystem::path& path);
  std::string serialize() const;

  LossWeights level1_weights() const { return {level1_lambda1, 0.0f, 0.0f}; }
  LossWeights level0_weights() const { return {level0_lambda1, level0_lambda2, alpha}; }
  DistillOptions distill_options() const;
  TrainOptions level1_options() const;
  TeacherTrainOptions teacher_options() const;
};

}  // namespace qxq
