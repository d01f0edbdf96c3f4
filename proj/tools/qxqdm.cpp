// qxqdm: command-line front end for the QxQ demosaicing toolkit.
// Subcommands: convert, prepare, train, eval, demosaic.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "qxq/config.hpp"
#include "qxq/datapipe.hpp"
#include "qxq/distill.hpp"
#include "qxq/losses.hpp"
#include "qxq/model.hpp"
#include "qxq/png_io.hpp"
#include "qxq/rawio.hpp"
#include "qxq/tiling.hpp"

namespace {

using namespace qxq;

CfaSpec parse_cfa(const std::string& text) {
  size_t comma = text.find(',');
  if (comma == std::string::npos)
    return CfaSpec::make(std::stoi(text));
  int group = std::stoi(text.substr(0, comma));
  std::string pattern = text.substr(comma + 1);
  while (!pattern.empty() && pattern.front() == ' ') pattern.erase(pattern.begin());
  return CfaSpec::make(group, pattern);
}

void clamp_unit(RgbImage& img) {
  for (float& v : img.planes) v = std::clamp(v, 0.0f, 1.0f);
}

// Center crop on the raw sample grid, aligned to the CFA period so the color
// phase is preserved.
RawQxqFrame center_crop_to_period(const RawQxqFrame& frame, const CfaSpec& cfa) {
  int p = cfa.period();
  int w = (frame.width / p) * p;
  int h = (frame.height / p) * p;
  if (w == 0 || h == 0) fail(ErrorKind::Geometry, "frame smaller than one CFA period");
  int x0 = ((frame.width - w) / 2 / p) * p;
  int y0 = ((frame.height - h) / 2 / p) * p;
  RawQxqFrame out;
  out.width = w;
  out.height = h;
  out.black_level = frame.black_level;
  out.cfa = frame.cfa;
  out.plane.resize(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.plane[static_cast<size_t>(y) * w + x] = frame.sample(x0 + x, y0 + y);
  return out;
}

RgbImage student_demosaic(const StudentNet& student, const MosaicImage& m) {
  StudentOutput out = student.forward(m);
  RgbImage img = rgb_from_tensor(out.rgb_full);
  clamp_unit(img);
  return img;
}

// ---- subcommand bodies ----

int cmd_convert(const std::string& input, const std::string& kind, int width, int height,
                const std::string& cfa_text, const std::string& out, bool big_endian,
                const std::string& mosaic_kind) {
  ByteOrder order = big_endian ? ByteOrder::Big : ByteOrder::Little;
  auto bytes = read_file(input);
  if (kind == "3ccd") {
    Raw3ccdFrame frame = decode_3ccd(bytes, width, height, order);
    RgbImage img = compensate(frame);
    export_png8(img, out);
    std::cout << "wrote " << out << " (" << width << "x" << height << ")\n";
    if (mosaic_kind == "qxq") {
      CfaSpec cfa = parse_cfa(cfa_text);
      RgbImage cropped = crop_to_period(img, cfa);
      MosaicImage mos = mosaic(cropped, cfa);
      std::filesystem::path p(out);
      std::filesystem::path mout = p.parent_path() / (p.stem().string() + "_mosaic.png");
      export_png8_gray(mos, mout);
      std::cout << "wrote " << mout.string() << "\n";
    }
  } else if (kind == "qxq") {
    RawQxqFrame frame = decode_qxq(bytes, width, height, parse_cfa(cfa_text), order);
    MosaicImage mos = compensate(frame);
    export_png8_gray(mos, out);
    std::cout << "wrote " << out << " (" << width << "x" << height << ")\n";
  } else {
    fail(ErrorKind::Parameter, "kind must be 3ccd or qxq");
  }
  return 0;
}

int cmd_prepare(const RunConfig& cfg, const std::string& out_path) {
  HybridOptions opts;
  opts.patch_size = cfg.patch_size;
  opts.variance_threshold = cfg.variance_threshold;
  opts.split_ratio = cfg.split_ratio;
  opts.seed = cfg.seed;
  opts.raw_width = cfg.raw_width;
  opts.raw_height = cfg.raw_height;
  std::filesystem::path out = out_path;
  std::filesystem::path base = out.has_parent_path() ? out.parent_path() : ".";
  DatasetManifest manifest =
      build_hybrid(cfg.dir_3ccd, cfg.dir_common, cfg.model.cfa, opts, base);
  manifest.save(out);
  std::cout << "manifest: " << out.string() << " (" << manifest.count(Split::Train)
            << " train / " << manifest.count(Split::Test) << " test patches)\n";
  return 0;
}

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.resolved"; }
  std::filesystem::path level1() const { return dir / "level1.ckpt"; }
  std::filesystem::path bank() const { return dir / "teacher_bank"; }
  std::filesystem::path student() const { return dir / "student.ckpt"; }
  std::filesystem::path level0_last() const { return dir / "level0_last.ckpt"; }
  std::filesystem::path events() const { return dir / "events.jsonl"; }
  std::filesystem::path losses() const { return dir / "losses.csv"; }
  std::filesystem::path state() const { return dir / "state.json"; }
};

Dataset open_dataset(const RunConfig& cfg) {
  if (cfg.manifest.empty()) fail(ErrorKind::Data, "no dataset manifest configured");
  std::filesystem::path mpath = cfg.manifest;
  if (!std::filesystem::exists(mpath))
    fail(ErrorKind::Data, "manifest " + mpath.string() + " does not exist");
  DatasetManifest manifest = DatasetManifest::load(mpath);
  std::filesystem::path base = mpath.has_parent_path() ? mpath.parent_path() : ".";
  return Dataset(std::move(manifest), base);
}

int cmd_train(RunConfig cfg, const std::string& out_dir, bool resume,
              const std::string& bank_dir) {
  RunPaths paths;
  if (!out_dir.empty()) {
    paths.dir = out_dir;
  } else {
    const char* root = std::getenv("QXQDM_RUN_ROOT");
    paths.dir = std::filesystem::path(root ? root : cfg.run_root) /
                ("run-seed" + std::to_string(cfg.seed));
  }
  std::filesystem::create_directories(paths.dir);

  Dataset dataset = open_dataset(cfg);
  {
    std::ofstream out(paths.config());
    out << cfg.serialize();
  }

  nlohmann::json state = nlohmann::json::object();
  if (resume && std::filesystem::exists(paths.state())) {
    std::ifstream in(paths.state());
    in >> state;
  }
  auto save_state = [&](const nlohmann::json& s) {
    std::ofstream out(paths.state(), std::ios::trunc);
    out << s.dump(2) << "\n";
  };

  PerceptualExtractor perceptual(cfg.seed);
  StudentNet student(cfg.model, cfg.seed);

  // Stage 1: level-1 pretraining.
  if (state.value("level1_done", false)) {
    apply_checkpoint(load_checkpoint(paths.level1()), student.level1_params());
    std::cout << "level1: restored from " << paths.level1().string() << "\n";
  } else {
    EpochLog log = train_level1(student, dataset, cfg.level1_epochs, cfg.level1_options(),
                                perceptual);
    save_checkpoint(paths.level1(), student.level1_params());
    std::ofstream losses(paths.losses(), std::ios::trunc);
    losses << "stage,epoch,loss\n";
    for (size_t i = 0; i < log.epoch_losses.size(); ++i)
      losses << "level1," << i + 1 << "," << log.epoch_losses[i] << "\n";
    state["level1_done"] = true;
    save_state(state);
    std::cout << "level1: " << cfg.level1_epochs << " epochs, final loss "
              << (log.epoch_losses.empty() ? 0.0 : log.epoch_losses.back()) << "\n";
  }

  // Stage 2: teacher bank.
  TeacherNet teacher(cfg.model, cfg.seed + 1);
  TeacherBank bank;
  if (!bank_dir.empty()) {
    bank = TeacherBank::load_dir(bank_dir);
    std::cout << "teacher bank: loaded " << bank.size() << " checkpoints from " << bank_dir
              << "\n";
  } else if (state.value("teacher_done", false)) {
    bank = TeacherBank::load_dir(paths.bank());
    std::cout << "teacher bank: restored " << bank.size() << " checkpoints\n";
  } else {
    bank = train_teacher(teacher, dataset, cfg.teacher_options(), perceptual);
    bank.save(paths.bank());
    state["teacher_done"] = true;
    save_state(state);
    std::cout << "teacher bank: trained " << bank.size() << " checkpoints\n";
  }

  // Stage 3: progressive distillation at level 0.
  DistillState resume_state;
  CheckpointMap resume_params;
  const DistillState* resume_ptr = nullptr;
  const CheckpointMap* resume_params_ptr = nullptr;
  if (state.contains("level0") && resume) {
    auto s = state["level0"];
    resume_state.next_epoch = s.value("next_epoch", 1);
    resume_state.phase_index = s.value("phase_index", 0);
    for (double v : s.value("detector_history", std::vector<double>{}))
      resume_state.detector_history.push_back(v);
    resume_params = load_checkpoint(paths.level0_last());
    resume_ptr = &resume_state;
    resume_params_ptr = &resume_params;
    std::cout << "level0: resuming at epoch " << resume_state.next_epoch << "\n";
  }

  std::vector<TrainEvent> all_events;
  if (resume_ptr && std::filesystem::exists(paths.events()))
    all_events = read_event_log(paths.events());

  EpochHook hook = [&](int epoch, const DistillState& st, const Regressor* reg) {
    std::vector<ParamPtr> params = student.params();
    if (reg) params.insert(params.end(), reg->params().begin(), reg->params().end());
    save_checkpoint(paths.level0_last(), params, /*with_optimizer_state=*/true);
    nlohmann::json s = state;
    s["level0"] = {{"next_epoch", st.next_epoch},
                   {"phase_index", st.phase_index},
                   {"detector_history", st.detector_history}};
    save_state(s);
    (void)epoch;
  };

  DistillResult result = train_level0_progressive(student, teacher, bank, dataset,
                                                  cfg.distill_options(), perceptual, resume_ptr,
                                                  resume_params_ptr, hook);
  all_events.insert(all_events.end(), result.events.begin(), result.events.end());
  write_event_log(paths.events(), all_events);
  save_checkpoint(paths.student(), student.params());
  {
    std::ofstream losses(paths.losses(), std::ios::app);
    for (const TrainEvent& e : all_events)
      losses << e.phase << "," << e.epoch << "," << e.monitored_loss << "\n";
  }
  std::cout << "level0: " << result.events.size() << " epochs this run; checkpoints in "
            << paths.dir.string() << "\n";
  for (const TrainEvent& e : all_events)
    if (!e.transition.empty())
      std::cout << "  transition at epoch " << e.epoch << " -> " << e.transition << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint, const std::string& split_name,
             const std::string& baseline, bool self_test) {
  Dataset dataset = open_dataset(cfg);
  Split split = split_name == "train" ? Split::Train : Split::Test;
  size_t n = dataset.size(split);
  if (n == 0) fail(ErrorKind::Data, "evaluation split '" + split_name + "' is empty");

  StudentNet student(cfg.model, cfg.seed);
  apply_checkpoint(load_checkpoint(checkpoint), student.params());
  student.set_trainable(false);

  double psnr_sum = 0.0, ssim_sum = 0.0;
  double base_psnr_sum = 0.0, base_ssim_sum = 0.0;
  int psnr_finite = 0;
  std::cout << "image\tmethod\tPSNR\tMS-SSIM\n";
  for (size_t i = 0; i < n; ++i) {
    TrainingTriple triple = dataset.load(split, i);
    RgbImage model_out = student_demosaic(student, triple.mosaic);
    double p = psnr_metric(model_out, triple.full_gt);
    double s = ms_ssim_metric(model_out, triple.full_gt);
    if (std::isfinite(p)) {
      psnr_sum += p;
      ++psnr_finite;
    }
    ssim_sum += s;
    std::cout << i << "\tstudent\t" << (std::isinf(p) ? std::string("inf") : std::to_string(p))
              << "\t" << s << "\n";
    if (baseline == "classical") {
      RgbImage base = classical_demosaic(triple.mosaic);
      double bp = psnr_metric(base, triple.full_gt);
      double bs = ms_ssim_metric(base, triple.full_gt);
      base_psnr_sum += std::isfinite(bp) ? bp : 0.0;
      base_ssim_sum += bs;
      std::cout << i << "\tclassical\t"
                << (std::isinf(bp) ? std::string("inf") : std::to_string(bp)) << "\t" << bs
                << "\n";
    }
  }

  TrainingTriple probe = dataset.load(split, 0);
  int hw = probe.full_gt.height;
  std::vector<MetricRow> rows;
  rows.push_back({"student", psnr_finite ? psnr_sum / psnr_finite :
                  std::numeric_limits<double>::infinity(),
                  ssim_sum / static_cast<double>(n), student.param_count(),
                  student.mac_count(hw, probe.full_gt.width)});
  if (baseline == "classical")
    rows.push_back({"classical", base_psnr_sum / static_cast<double>(n),
                    base_ssim_sum / static_cast<double>(n), 0, 0});
  if (self_test) {
    double p = psnr_metric(probe.full_gt, probe.full_gt);
    double s = ms_ssim_metric(probe.full_gt, probe.full_gt);
    rows.push_back({"identity-check", p, s, 0, 0});
  }
  std::cout << "\n" << format_metric_table(rows);
  return 0;
}

int cmd_demosaic(RunConfig cfg, const std::string& checkpoint, bool classical,
                 const std::string& input, int width, int height, const std::string& out,
                 bool center_crop, bool big_endian) {
  auto bytes = read_file(input);
  RawQxqFrame frame =
      decode_qxq(bytes, width, height, cfg.model.cfa, big_endian ? ByteOrder::Big : ByteOrder::Little);
  int period = cfg.model.cfa.period();
  if (frame.width % period != 0 || frame.height % period != 0) {
    if (!center_crop)
      fail(ErrorKind::Geometry, "frame " + std::to_string(width) + "x" + std::to_string(height) +
                                    " is not a multiple of the CFA period " +
                                    std::to_string(period) + "; pass --crop to center-crop");
    frame = center_crop_to_period(frame, cfg.model.cfa);
  }
  MosaicImage mos = compensate(frame);

  std::function<RgbImage(const MosaicImage&)> fn;
  StudentNet student(cfg.model, cfg.seed);
  if (classical) {
    fn = [](const MosaicImage& m) { return classical_demosaic(m); };
  } else {
    if (checkpoint.empty()) fail(ErrorKind::Parameter, "need --checkpoint or --classical");
    apply_checkpoint(load_checkpoint(checkpoint), student.params());
    student.set_trainable(false);
    fn = [&student](const MosaicImage& m) { return student_demosaic(student, m); };
  }
  RgbImage outimg = demosaic_tiled(mos, cfg.tile, cfg.tile_overlap, fn);
  clamp_unit(outimg);
  export_png8(outimg, out);
  std::cout << "wrote " << out << " (" << outimg.width << "x" << outimg.height << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QxQ Bayer demosaicing toolkit"};
  app.require_subcommand(1);

  std::string config_path, cfa_text = "4,RGGB", input, out, kind = "qxq";
  std::string checkpoint, split_name = "test", baseline, mosaic_kind, bank_dir, out_dir;
  std::string mode_text, switch_epochs_text;
  int width = 0, height = 0;
  int tile = -1;
  uint64_t seed = 0;
  bool has_seed = false, big_endian = false, resume = false, classical = false;
  bool center_crop = false, self_test = false;
  double sigma = -1.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--seed", seed, "RNG seed override")->each([&](const std::string&) {
      has_seed = true;
    });
    cmd->add_option("--cfa", cfa_text, "CFA spec, e.g. 4,RGGB");
  };

  CLI::App* convert = app.add_subcommand("convert", "decode a RAW dump to PNG");
  add_common(convert);
  convert->add_option("input", input, "RAW file")->required();
  convert->add_option("--kind", kind, "3ccd or qxq")->required();
  convert->add_option("--width", width)->required();
  convert->add_option("--height", height)->required();
  convert->add_option("--out", out, "output PNG")->required();
  convert->add_flag("--big-endian", big_endian, "decode big-endian samples");
  convert->add_option("--mosaic", mosaic_kind, "also write the CFA-mosaicked preview (qxq)");

  CLI::App* prepare = app.add_subcommand("prepare", "build a hybrid dataset manifest");
  add_common(prepare);
  std::string raw_dir, common_dir;
  int raw_w = -1, raw_h = -1, patch = -1;
  double split_ratio = -1.0, variance = -1.0;
  prepare->add_option("--raw-dir", raw_dir, "directory of 3CCD .raw dumps");
  prepare->add_option("--common-dir", common_dir, "directory of ISP-processed .png images");
  prepare->add_option("--out", out, "manifest path")->required();
  prepare->add_option("--raw-width", raw_w);
  prepare->add_option("--raw-height", raw_h);
  prepare->add_option("--patch", patch, "patch size");
  prepare->add_option("--split-ratio", split_ratio);
  prepare->add_option("--variance-threshold", variance);

  CLI::App* train = app.add_subcommand("train", "run the full training pipeline");
  add_common(train);
  std::string manifest_path;
  train->add_option("--manifest", manifest_path, "dataset manifest");
  train->add_option("--out-dir", out_dir, "run directory (default $QXQDM_RUN_ROOT/run-seedN)");
  train->add_flag("--resume", resume, "continue from the run directory's state");
  train->add_option("--teacher-bank", bank_dir, "use an existing teacher bank directory");
  train->add_option("--mode", mode_text, "saturation or schedule");
  train->add_option("--sigma", sigma, "saturation variance threshold");
  train->add_option("--switch-epochs", switch_epochs_text, "schedule switch epochs, e.g. 7,20");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "student checkpoint")->required();
  eval->add_option("--manifest", manifest_path, "dataset manifest");
  eval->add_option("--split", split_name, "train or test");
  eval->add_option("--baseline", baseline, "add a baseline row: classical");
  eval->add_flag("--self-test", self_test, "add an identity-pair metrics row");

  CLI::App* demosaic_cmd = app.add_subcommand("demosaic", "demosaic a QxQ RAW frame to PNG");
  add_common(demosaic_cmd);
  demosaic_cmd->add_option("input", input, "QxQ RAW file")->required();
  demosaic_cmd->add_option("--checkpoint", checkpoint, "student checkpoint");
  demosaic_cmd->add_flag("--classical", classical, "use the conventional baseline");
  demosaic_cmd->add_option("--width", width)->required();
  demosaic_cmd->add_option("--height", height)->required();
  demosaic_cmd->add_option("--out", out, "output PNG")->required();
  demosaic_cmd->add_option("--tile", tile, "tile size for tiled inference (0 = untiled)");
  demosaic_cmd->add_flag("--crop", center_crop, "center-crop to a CFA-period multiple");
  demosaic_cmd->add_flag("--big-endian", big_endian);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
    if (has_seed) cfg.seed = seed;
    if (convert->count("--cfa") || prepare->count("--cfa") || train->count("--cfa") ||
        eval->count("--cfa") || demosaic_cmd->count("--cfa"))
      cfg.model.cfa = parse_cfa(cfa_text);
    if (!manifest_path.empty()) cfg.manifest = manifest_path;
    if (!mode_text.empty()) cfg.apply_kv("distill.mode", mode_text);
    if (sigma >= 0.0) cfg.sigma = sigma;
    if (!switch_epochs_text.empty()) cfg.apply_kv("distill.switch_epochs", switch_epochs_text);
    if (tile >= 0) cfg.tile = tile;

    if (convert->parsed())
      return cmd_convert(input, kind, width, height, cfa_text, out, big_endian, mosaic_kind);
    if (prepare->parsed()) {
      if (!raw_dir.empty()) cfg.dir_3ccd = raw_dir;
      if (!common_dir.empty()) cfg.dir_common = common_dir;
      if (raw_w > 0) cfg.raw_width = raw_w;
      if (raw_h > 0) cfg.raw_height = raw_h;
      if (patch > 0) cfg.patch_size = patch;
      if (split_ratio >= 0.0) cfg.split_ratio = static_cast<float>(split_ratio);
      if (variance >= 0.0) cfg.variance_threshold = static_cast<float>(variance);
      return cmd_prepare(cfg, out);
    }
    if (train->parsed()) return cmd_train(cfg, out_dir, resume, bank_dir);
    if (eval->parsed()) return cmd_eval(cfg, checkpoint, split_name, baseline, self_test);
    if (demosaic_cmd->parsed())
      return cmd_demosaic(cfg, checkpoint, classical, input, width, height, out, center_crop,
                          big_endian);
  } catch (const qxq::Error& e) {
    std::cerr << "error[" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
