#include "qxq/distill.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace qxq {

bool detect_saturation(const SaturationDetector& detector) {
  if (static_cast<int>(detector.history.size()) < detector.window) return false;
  size_t start = detector.history.size() - detector.window;
  double mean = 0.0;
  for (int i = 0; i < detector.window; ++i) mean += detector.history[start + i];
  mean /= detector.window;
  double var = 0.0;
  for (int i = 0; i < detector.window; ++i) {
    double d = detector.history[start + i] - mean;
    var += d * d;
  }
  var /= detector.window;
  return var < detector.sigma;
}

void TeacherBank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    std::vector<ParamPtr> params;
    for (const auto& [name, entry] : checkpoints[i])
      params.push_back(std::make_shared<Parameter>(
          name, Tensor::from_data(entry.shape, entry.data)));
    save_checkpoint(dir / ("teacher_T" + std::to_string(i + 1) + ".ckpt"), params);
  }
}

TeacherBank TeacherBank::load_dir(const std::filesystem::path& dir) {
  TeacherBank bank;
  for (size_t i = 1;; ++i) {
    std::filesystem::path file = dir / ("teacher_T" + std::to_string(i) + ".ckpt");
    if (!std::filesystem::exists(file)) break;
    bank.checkpoints.push_back(load_checkpoint(file));
  }
  if (bank.checkpoints.empty())
    fail(ErrorKind::Data, "no teacher checkpoints found in " + dir.string());
  return bank;
}

void write_event_log(const std::filesystem::path& path, const std::vector<TrainEvent>& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write event log " + path.string());
  for (const TrainEvent& e : events) {
    nlohmann::json row{{"epoch", e.epoch}, {"phase", e.phase}, {"monitored_loss", e.monitored_loss}};
    if (!e.transition.empty()) row["transition"] = e.transition;
    out << row.dump() << "\n";
  }
}

std::vector<TrainEvent> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open event log " + path.string());
  std::vector<TrainEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    TrainEvent e;
    e.epoch = row.at("epoch").get<int>();
    e.phase = row.at("phase").get<std::string>();
    e.monitored_loss = row.at("monitored_loss").get<double>();
    if (row.contains("transition")) e.transition = row.at("transition").get<std::string>();
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<int> replay_saturation_transitions(const std::vector<TrainEvent>& events, double sigma,
                                               int window) {
  SaturationDetector detector{window, sigma, {}};
  std::vector<int> fired;
  std::string phase;
  for (const TrainEvent& e : events) {
    if (e.phase != phase) {
      detector.reset();
      phase = e.phase;
    }
    detector.add(e.monitored_loss);
    if (detect_saturation(detector)) {
      fired.push_back(e.epoch);
      detector.reset();
    }
  }
  return fired;
}

double mean_image_mse(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::Shape, "mse shapes differ: " + a.shape().str() + " vs " + b.shape().str());
  auto da = a.data(), db = b.data();
  double sum = 0.0;
  for (size_t i = 0; i < da.size(); ++i) {
    double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(da.size());
}

namespace {

std::vector<uint32_t> epoch_order(uint64_t seed, const std::string& tag, int epoch, size_t n) {
  RngStream rng(seed, "data:" + tag, static_cast<uint64_t>(epoch));
  return rng.permutation(n);
}

void check_nonempty(const Dataset& dataset) {
  if (dataset.size(Split::Train) == 0) fail(ErrorKind::Data, "training split is empty");
}

}  // namespace

EpochLog train_level1(StudentNet& student, const Dataset& dataset, int epochs,
                      const TrainOptions& opts, const PerceptualExtractor& perceptual) {
  check_nonempty(dataset);
  student.set_trainable(true);
  EpochLog log;
  const size_t n = dataset.size(Split::Train);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double total = 0.0;
    for (uint32_t idx : epoch_order(opts.seed, "level1", epoch, n)) {
      TrainingTriple triple = dataset.load(Split::Train, idx);
      StudentOutput out = student.forward(triple.mosaic);
      Tensor loss =
          level1_loss(out.rgb_half, tensor_from_rgb(triple.half_gt), opts.weights, perceptual);
      total += loss.scalar();
      loss.backward();
      adam_step(reachable_params(loss, student.params()), opts.adam);
    }
    log.epoch_losses.push_back(total / static_cast<double>(n));
  }
  return log;
}

TeacherBank train_teacher(TeacherNet& teacher, const Dataset& dataset,
                          const TeacherTrainOptions& opts, const PerceptualExtractor& perceptual) {
  check_nonempty(dataset);
  if (opts.checkpoint_epochs.empty())
    fail(ErrorKind::Config, "teacher bank needs at least one checkpoint epoch");
  for (size_t i = 1; i < opts.checkpoint_epochs.size(); ++i)
    if (opts.checkpoint_epochs[i] <= opts.checkpoint_epochs[i - 1])
      fail(ErrorKind::Config, "checkpoint epochs must be strictly increasing");

  teacher.set_trainable(true);
  const size_t n = dataset.size(Split::Train);

  // Lowest level first; every level trained so far keeps training.
  for (int level = TeacherNet::kLevels; level >= 1; --level) {
    for (int epoch = 1; epoch <= opts.epochs_per_level; ++epoch) {
      for (uint32_t idx :
           epoch_order(opts.seed, "teacher:level" + std::to_string(level), epoch, n)) {
        TrainingTriple triple = dataset.load(Split::Train, idx);
        RgbImage gt = triple.full_gt;
        for (int d = 0; d < level; ++d) gt = downscale2x(gt);
        TeacherOutput out = teacher.forward(triple.mosaic, level);
        Tensor loss = level1_loss(out.level_rgb[level], tensor_from_rgb(gt), opts.level_weights,
                                  perceptual);
        loss.backward();
        adam_step(reachable_params(loss, teacher.params()), opts.adam);
      }
    }
  }

  // Final phase: the whole network against the full-resolution target, with a
  // snapshot at each listed epoch.
  TeacherBank bank;
  int final_epochs = opts.checkpoint_epochs.back();
  size_t next_snapshot = 0;
  for (int epoch = 1; epoch <= final_epochs; ++epoch) {
    for (uint32_t idx : epoch_order(opts.seed, "teacher:level0", epoch, n)) {
      TrainingTriple triple = dataset.load(Split::Train, idx);
      TeacherOutput out = teacher.forward(triple.mosaic, 0);
      Tensor loss = level0_loss(out.rgb_full, tensor_from_rgb(triple.full_gt),
                                opts.final_weights, perceptual);
      loss.backward();
      adam_step(reachable_params(loss, teacher.params()), opts.adam);
    }
    if (next_snapshot < opts.checkpoint_epochs.size() &&
        epoch == opts.checkpoint_epochs[next_snapshot]) {
      bank.checkpoints.push_back(snapshot_params(teacher.params()));
      ++next_snapshot;
    }
  }
  return bank;
}

namespace {

std::string phase_name(int phase_index) {
  return phase_index == 0 ? "solo" : "distill" + std::to_string(phase_index);
}

}  // namespace

DistillResult train_level0_progressive(StudentNet& student, TeacherNet& teacher,
                                       const TeacherBank& bank, const Dataset& dataset,
                                       const DistillOptions& opts,
                                       const PerceptualExtractor& perceptual,
                                       const DistillState* resume_from,
                                       const CheckpointMap* resume_params, const EpochHook& hook) {
  check_nonempty(dataset);
  if (bank.size() == 0) fail(ErrorKind::Config, "teacher bank is empty");
  if (opts.mode == SwitchMode::Schedule)
    for (size_t i = 1; i < opts.switch_epochs.size(); ++i)
      if (opts.switch_epochs[i] <= opts.switch_epochs[i - 1])
        fail(ErrorKind::Config, "switch epochs must be strictly increasing");

  student.set_trainable(true);
  teacher.set_trainable(false);
  if (!resume_from) reset_optimizer(student.params());

  const int k = static_cast<int>(bank.size());
  const size_t n = dataset.size(Split::Train);
  const float alpha = opts.weights.alpha;

  DistillResult result;
  result.state = resume_from ? *resume_from : DistillState{};
  SaturationDetector detector{5, opts.sigma, result.state.detector_history};

  std::shared_ptr<Regressor> regressor;
  auto enter_phase = [&](int phase_index) {
    apply_checkpoint(bank.checkpoints[phase_index - 1], teacher.params());
    if (!regressor || !opts.carry_regressor)
      regressor = std::make_shared<Regressor>(student.tap_channels(), teacher.tap_channels(),
                                              opts.seed, phase_index);
  };
  if (result.state.phase_index > 0) {
    enter_phase(result.state.phase_index);
    if (resume_params && regressor) apply_checkpoint(*resume_params, regressor->params());
  }
  if (resume_params) apply_checkpoint(*resume_params, student.params());

  for (int epoch = result.state.next_epoch; epoch <= opts.epoch_budget; ++epoch) {
    std::string transition;
    if (opts.mode == SwitchMode::Schedule) {
      while (result.state.phase_index < k &&
             result.state.phase_index < static_cast<int>(opts.switch_epochs.size()) &&
             opts.switch_epochs[result.state.phase_index] == epoch) {
        ++result.state.phase_index;
        enter_phase(result.state.phase_index);
        transition = phase_name(result.state.phase_index);
      }
    }
    const int phase = result.state.phase_index;

    double monitored = 0.0;
    for (uint32_t idx : epoch_order(opts.seed, "level0", epoch, n)) {
      TrainingTriple triple = dataset.load(Split::Train, idx);
      Tensor gt = tensor_from_rgb(triple.full_gt);
      StudentOutput out = student.forward(triple.mosaic);
      Tensor loss = level0_loss(out.rgb_full, gt, opts.weights, perceptual);
      if (phase > 0) {
        TeacherOutput tout = teacher.forward(triple.mosaic, 1);
        Tensor dl = distill_loss(out.tap, tout.tap, *regressor);
        monitored += dl.scalar();
        loss = total_loss(loss, dl, alpha);
      } else {
        monitored += mean_image_mse(out.rgb_full, gt);
      }
      loss.backward();
      std::vector<ParamPtr> candidates = student.params();
      if (phase > 0 && regressor)
        candidates.insert(candidates.end(), regressor->params().begin(),
                          regressor->params().end());
      adam_step(reachable_params(loss, candidates), opts.adam);
    }
    monitored /= static_cast<double>(n);
    result.events.push_back({epoch, phase_name(phase), monitored, transition});

    bool stop = false;
    if (opts.mode == SwitchMode::Saturation) {
      detector.add(monitored);
      if (detect_saturation(detector)) {
        if (result.state.phase_index < k) {
          ++result.state.phase_index;
          enter_phase(result.state.phase_index);
          result.events.back().transition = phase_name(result.state.phase_index);
          detector.reset();
        } else {
          // Last teacher's phase saturated: normal termination.
          result.events.back().transition = "end";
          stop = true;
        }
      }
    }
    result.state.detector_history = detector.history;
    result.state.next_epoch = epoch + 1;
    if (hook) hook(epoch, result.state, regressor.get());
    if (stop) break;
  }
  result.regressor = regressor;
  return result;
}

EpochLog train_level0_solo(StudentNet& student, const Dataset& dataset, int epochs,
                           const TrainOptions& opts, const PerceptualExtractor& perceptual) {
  check_nonempty(dataset);
  student.set_trainable(true);
  reset_optimizer(student.params());
  EpochLog log;
  const size_t n = dataset.size(Split::Train);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double monitored = 0.0;
    for (uint32_t idx : epoch_order(opts.seed, "level0", epoch, n)) {
      TrainingTriple triple = dataset.load(Split::Train, idx);
      Tensor gt = tensor_from_rgb(triple.full_gt);
      StudentOutput out = student.forward(triple.mosaic);
      Tensor loss = level0_loss(out.rgb_full, gt, opts.weights, perceptual);
      monitored += mean_image_mse(out.rgb_full, gt);
      loss.backward();
      adam_step(reachable_params(loss, student.params()), opts.adam);
    }
    log.epoch_losses.push_back(monitored / static_cast<double>(n));
  }
  return log;
}

}  // namespace qxq
