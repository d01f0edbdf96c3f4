#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qxq/checkpoint.hpp"
#include "qxq/datapipe.hpp"
#include "qxq/losses.hpp"
#include "qxq/model.hpp"

namespace qxq {

// Fires when the population variance of the last `window` per-epoch values of
// the monitored loss drops below sigma.
struct SaturationDetector {
  int window = 5;
  double sigma = 1e-6;
  std::vector<double> history;

  void add(double value) { history.push_back(value); }
  void reset() { history.clear(); }
};

bool detect_saturation(const SaturationDetector& detector);

// Ordered teacher parameter snapshots T1..Tk, least-trained first. Tk is not
// required to be fully trained.
struct TeacherBank {
  std::vector<CheckpointMap> checkpoints;

  size_t size() const { return checkpoints.size(); }
  void save(const std::filesystem::path& dir) const;
  static TeacherBank load_dir(const std::filesystem::path& dir);
};

struct TrainEvent {
  int epoch = 0;
  std::string phase;          // "solo" or "distill<i>"
  double monitored_loss = 0.0;
  std::string transition;     // new phase name (or "end") when a switch is tied to this epoch
};

void write_event_log(const std::filesystem::path& path, const std::vector<TrainEvent>& events);
std::vector<TrainEvent> read_event_log(const std::filesystem::path& path);

// Feeds the logged per-phase monitored losses through a fresh detector and
// returns the epochs at which it fires; used to audit saturation-mode logs.
std::vector<int> replay_saturation_transitions(const std::vector<TrainEvent>& events, double sigma,
                                               int window = 5);

double mean_image_mse(const Tensor& a, const Tensor& b);

// ---- training loops ----

struct TrainOptions {
  AdamConfig adam;
  uint64_t seed = 0;
  LossWeights weights = LossWeights::level1_preset();
};

struct EpochLog {
  std::vector<double> epoch_losses;
};

// Level-1 pretraining against 2x-downscaled ground truth, no distillation.
EpochLog train_level1(StudentNet& student, const Dataset& dataset, int epochs,
                      const TrainOptions& opts, const PerceptualExtractor& perceptual);

struct TeacherTrainOptions {
  AdamConfig adam;
  uint64_t seed = 0;
  int epochs_per_level = 2;               // levels 5..1
  std::vector<int> checkpoint_epochs;     // final-phase epochs to snapshot, strictly increasing
  LossWeights level_weights = LossWeights::level1_preset();
  LossWeights final_weights = LossWeights::level0_preset();
};

// Sequential lowest-to-highest level training; snapshots the full parameter
// set at each listed epoch of the final full-network phase.
TeacherBank train_teacher(TeacherNet& teacher, const Dataset& dataset,
                          const TeacherTrainOptions& opts, const PerceptualExtractor& perceptual);

enum class SwitchMode { Saturation, Schedule };

struct DistillOptions {
  AdamConfig adam;
  uint64_t seed = 0;
  LossWeights weights = LossWeights::level0_preset();
  SwitchMode mode = SwitchMode::Schedule;
  double sigma = 1e-6;
  std::vector<int> switch_epochs = {7, 20};  // schedule mode: entry epochs of distill(i)
  int epoch_budget = 30;
  bool carry_regressor = false;
};

// Resumable progress of the level-0 run.
struct DistillState {
  int next_epoch = 1;
  int phase_index = 0;  // 0 = solo, i = distilling from T_i
  std::vector<double> detector_history;
};

struct DistillResult {
  std::vector<TrainEvent> events;
  DistillState state;
  std::shared_ptr<Regressor> regressor;  // live regressor at the end of the run, if any
};

using EpochHook =
    std::function<void(int epoch, const DistillState& state, const Regressor* regressor)>;

// Level-0 progressive distillation per the switching policy. The student level 1
// must be initialized from level-1 training and level 0 freshly initialized;
// the whole student trains jointly. Teacher parameters are never updated.
DistillResult train_level0_progressive(StudentNet& student, TeacherNet& teacher,
                                       const TeacherBank& bank, const Dataset& dataset,
                                       const DistillOptions& opts,
                                       const PerceptualExtractor& perceptual,
                                       const DistillState* resume_from = nullptr,
                                       const CheckpointMap* resume_params = nullptr,
                                       const EpochHook& hook = {});

// Plain full-image loop (no distillation machinery) with the same batch
// ordering; the alpha = 0 progressive run must match it bit for bit.
EpochLog train_level0_solo(StudentNet& student, const Dataset& dataset, int epochs,
                           const TrainOptions& opts, const PerceptualExtractor& perceptual);

}  // namespace qxq
