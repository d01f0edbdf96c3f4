#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "qxq/cfa.hpp"
#include "qxq/checkpoint.hpp"
#include "qxq/datapipe.hpp"
#include "qxq/distill.hpp"
#include "qxq/png_io.hpp"
#include "qxq/rawio.hpp"
#include "qxq/tiling.hpp"

using namespace qxq;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
  fs::path log = fs::temp_directory_path() / "qxq_cli_out.txt";
  std::string cmd = std::string(QXQDM_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string text(std::istreambuf_iterator<char>(in), {});
  return {WEXITSTATUS(rc), text};
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RgbImage smooth_image(int size, uint64_t seed) {
  RngStream rng(seed, "cli-smooth");
  RgbImage img(size, size);
  const int knots = 3;
  std::vector<float> grid(3 * knots * knots);
  for (float& v : grid) v = rng.next_uniform(0.05f, 0.95f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        float gx = static_cast<float>(x) / (size - 1) * (knots - 1);
        float gy = static_cast<float>(y) / (size - 1) * (knots - 1);
        int x0 = std::min(static_cast<int>(gx), knots - 2);
        int y0 = std::min(static_cast<int>(gy), knots - 2);
        float tx = gx - x0, ty = gy - y0;
        auto g = [&](int yy, int xx) { return grid[(c * knots + yy) * knots + xx]; };
        img.at(c, x, y) = (g(y0, x0) * (1 - tx) + g(y0, x0 + 1) * tx) * (1 - ty) +
                          (g(y0 + 1, x0) * (1 - tx) + g(y0 + 1, x0 + 1) * tx) * ty;
      }
  return img;
}

void write_3ccd(const fs::path& path, const RgbImage& img) {
  Raw3ccdFrame frame;
  frame.width = img.width;
  frame.height = img.height;
  frame.planes.resize(img.planes.size());
  for (size_t i = 0; i < img.planes.size(); ++i)
    frame.planes[i] = static_cast<uint16_t>(std::lround(64 + img.planes[i] * (1023 - 64)));
  write_file(path, encode_3ccd(frame));
}

void write_qxq(const fs::path& path, const MosaicImage& m) {
  RawQxqFrame frame;
  frame.width = m.width;
  frame.height = m.height;
  frame.cfa = m.cfa;
  frame.plane.resize(m.plane.size());
  for (size_t i = 0; i < m.plane.size(); ++i)
    frame.plane[i] = static_cast<uint16_t>(std::lround(64 + m.plane[i] * (1023 - 64)));
  write_file(path, encode_qxq(frame));
}

std::string smoke_config(const fs::path& manifest) {
  std::string cfg;
  cfg += "seed = 21\n";
  cfg += "model.teacher_base_channels = 8\n";
  cfg += "adam.lr = 1e-3\n";
  cfg += "train.level1_epochs = 4\n";
  cfg += "train.teacher_epochs_per_level = 1\n";
  cfg += "train.teacher_checkpoint_epochs = 1,2\n";
  cfg += "train.level0_epoch_budget = 5\n";
  cfg += "distill.mode = schedule\n";
  cfg += "distill.switch_epochs = 2,4\n";
  cfg += "data.manifest = " + manifest.string() + "\n";
  return cfg;
}

}  // namespace

TEST_CASE("convert decodes a 3ccd frame and mosaicks on request") {
  fs::path dir = fresh_dir("qxq_cli_convert");
  RgbImage img = smooth_image(64, 1);
  write_3ccd(dir / "frame.raw", img);

  auto res = run_cli("convert " + (dir / "frame.raw").string() +
                     " --kind 3ccd --width 64 --height 64 --out " + (dir / "frame.png").string() +
                     " --mosaic qxq --cfa 4,RGGB");
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "frame.png"));
  CHECK(fs::exists(dir / "frame_mosaic.png"));
  RgbImage preview = png_read(dir / "frame.png");
  CHECK(preview.width == 64);
  CHECK(preview.height == 64);
}

TEST_CASE("convert reports format errors with a machine-parsable class") {
  fs::path dir = fresh_dir("qxq_cli_badraw");
  std::vector<uint8_t> bytes(23, 0);
  write_file(dir / "bad.raw", bytes);
  auto res = run_cli("convert " + (dir / "bad.raw").string() +
                     " --kind 3ccd --width 2 --height 2 --out " + (dir / "x.png").string());
  CHECK(res.exit_code != 0);
  CHECK(res.output.find("error[format]") != std::string::npos);
}

TEST_CASE("prepare then train runs every phase and writes run artifacts") {
  fs::path dir = fresh_dir("qxq_cli_train");
  fs::create_directories(dir / "common");
  for (int i = 0; i < 4; ++i)
    export_png8(smooth_image(32, 40 + i), dir / "common" / ("s" + std::to_string(i) + ".png"));

  auto prep = run_cli("prepare --common-dir " + (dir / "common").string() + " --out " +
                      (dir / "manifest.txt").string() +
                      " --patch 32 --split-ratio 1.0 --variance-threshold 0 --seed 21");
  CHECK(prep.exit_code == 0);
  CHECK(fs::exists(dir / "manifest.txt"));

  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << smoke_config(dir / "manifest.txt");
  }
  auto train = run_cli("train --config " + (dir / "run.cfg").string() + " --out-dir " +
                       (dir / "run").string());
  INFO(train.output);
  CHECK(train.exit_code == 0);
  CHECK(fs::exists(dir / "run" / "config.resolved"));
  CHECK(fs::exists(dir / "run" / "level1.ckpt"));
  CHECK(fs::exists(dir / "run" / "teacher_bank" / "teacher_T1.ckpt"));
  CHECK(fs::exists(dir / "run" / "teacher_bank" / "teacher_T2.ckpt"));
  CHECK(fs::exists(dir / "run" / "student.ckpt"));
  CHECK(fs::exists(dir / "run" / "events.jsonl"));

  auto events = read_event_log(dir / "run" / "events.jsonl");
  REQUIRE(events.size() == 5);
  CHECK(events[1].transition == "distill1");
  CHECK(events[3].transition == "distill2");

  SUBCASE("missing manifest is a data error") {
    auto res = run_cli("train --manifest " + (dir / "nope.txt").string());
    CHECK(res.exit_code != 0);
    CHECK(res.output.find("error[data]") != std::string::npos);
  }

  SUBCASE("eval prints per-image rows and the metric table") {
    auto eval = run_cli("eval --config " + (dir / "run.cfg").string() + " --checkpoint " +
                        (dir / "run" / "student.ckpt").string() +
                        " --split train --baseline classical --self-test");
    INFO(eval.output);
    CHECK(eval.exit_code == 0);
    CHECK(eval.output.find("method\tPSNR\tMS-SSIM\tparams\tMACs") != std::string::npos);
    CHECK(eval.output.find("student") != std::string::npos);
    CHECK(eval.output.find("classical") != std::string::npos);
    CHECK(eval.output.find("identity-check\tinf") != std::string::npos);

    auto empty = run_cli("eval --config " + (dir / "run.cfg").string() + " --checkpoint " +
                         (dir / "run" / "student.ckpt").string() + " --split test");
    CHECK(empty.exit_code != 0);
    CHECK(empty.output.find("error[data]") != std::string::npos);
  }

  SUBCASE("eval rejects a checkpoint built for another architecture") {
    std::ofstream cfg(dir / "wide.cfg");
    cfg << smoke_config(dir / "manifest.txt");
    cfg << "model.teacher_base_channels = 16\n";
    cfg.close();
    auto res = run_cli("eval --config " + (dir / "wide.cfg").string() + " --checkpoint " +
                       (dir / "run" / "student.ckpt").string() + " --split train");
    CHECK(res.exit_code != 0);
    CHECK(res.output.find("error[load]") != std::string::npos);
    CHECK(res.output.find("level1.block0") != std::string::npos);
  }

  SUBCASE("resume continues to a bit-identical final checkpoint") {
    // interrupted variant: same config but a 3-epoch budget, then resume at 5
    std::ofstream cfg(dir / "short.cfg");
    cfg << smoke_config(dir / "manifest.txt");
    cfg << "train.level0_epoch_budget = 3\n";
    cfg.close();
    auto part = run_cli("train --config " + (dir / "short.cfg").string() + " --out-dir " +
                        (dir / "run2").string());
    CHECK(part.exit_code == 0);
    auto full = run_cli("train --config " + (dir / "run.cfg").string() + " --out-dir " +
                        (dir / "run2").string() + " --resume");
    INFO(full.output);
    CHECK(full.exit_code == 0);

    auto a = load_checkpoint(dir / "run" / "student.ckpt");
    auto b = load_checkpoint(dir / "run2" / "student.ckpt");
    CHECK(bitwise_equal(a, b));

    auto events2 = read_event_log(dir / "run2" / "events.jsonl");
    REQUIRE(events2.size() == 5);
    CHECK(events2[4].epoch == 5);
  }

  SUBCASE("demosaic with the trained checkpoint and the classical baseline") {
    RgbImage img = smooth_image(32, 99);
    MosaicImage m = mosaic(img, CfaSpec::make(4));
    write_qxq(dir / "frame.raw", m);
    auto model_run = run_cli("demosaic " + (dir / "frame.raw").string() + " --checkpoint " +
                             (dir / "run" / "student.ckpt").string() +
                             " --config " + (dir / "run.cfg").string() +
                             " --width 32 --height 32 --out " + (dir / "model.png").string());
    INFO(model_run.output);
    CHECK(model_run.exit_code == 0);
    CHECK(fs::exists(dir / "model.png"));

    auto classical_run = run_cli("demosaic " + (dir / "frame.raw").string() +
                                 " --classical --width 32 --height 32 --cfa 4,RGGB --out " +
                                 (dir / "classical.png").string());
    CHECK(classical_run.exit_code == 0);
    RgbImage out = png_read(dir / "classical.png");
    CHECK(out.width == 32);
  }
}

TEST_CASE("classical demosaic of a constant mosaic is constant through the CLI") {
  fs::path dir = fresh_dir("qxq_cli_constant");
  CfaSpec cfa = CfaSpec::make(4);
  MosaicImage m(32, 32, cfa);
  std::fill(m.plane.begin(), m.plane.end(), 0.5f);
  write_qxq(dir / "flat.raw", m);
  auto res = run_cli("demosaic " + (dir / "flat.raw").string() +
                     " --classical --width 32 --height 32 --cfa 4,RGGB --out " +
                     (dir / "flat.png").string());
  CHECK(res.exit_code == 0);
  RgbImage out = png_read(dir / "flat.png");
  float expected = out.planes[0];
  for (float v : out.planes) CHECK(v == expected);
}

TEST_CASE("tiled inference is bit-identical to untiled in the interior") {
  RngStream rng(50, "tiling");
  CfaSpec cfa = CfaSpec::make(4);
  const int size = 1024, tile = 512, overlap = 32;
  MosaicImage m(size, size, cfa);
  for (float& v : m.plane) v = rng.next_uniform();

  RgbImage untiled = classical_demosaic(m);
  RgbImage tiled =
      demosaic_tiled(m, tile, overlap, [](const MosaicImage& t) { return classical_demosaic(t); });

  // With tile 512 / overlap 32 the first tile spans [0, 512) and its fade zone
  // starts at 480; everything in [0, 440)^2 is single-coverage, full-weight and
  // away from any interior tile edge, so the local baseline must reproduce the
  // untiled result bit for bit there.
  size_t mismatched = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 440; ++y)
      for (int x = 0; x < 440; ++x)
        if (untiled.at(c, x, y) != tiled.at(c, x, y)) ++mismatched;
  CHECK(mismatched == 0);

  // Seams on white-noise input deviate by the mirror-boundary error times the
  // fade weight; bound it loosely and require near-agreement on average.
  double worst = 0.0, sum = 0.0;
  for (size_t i = 0; i < untiled.planes.size(); ++i) {
    double d = std::abs(static_cast<double>(untiled.planes[i]) - tiled.planes[i]);
    worst = std::max(worst, d);
    sum += d;
  }
  CHECK(worst < 0.6);
  CHECK(sum / static_cast<double>(untiled.planes.size()) < 5e-3);
}

TEST_CASE("tiled inference on smooth frames agrees tightly everywhere") {
  CfaSpec cfa = CfaSpec::make(4);
  RgbImage img = smooth_image(1024, 123);
  MosaicImage m = mosaic(img, cfa);
  RgbImage untiled = classical_demosaic(m);
  RgbImage tiled = demosaic_tiled(m, 512, 32,
                                  [](const MosaicImage& t) { return classical_demosaic(t); });
  for (size_t i = 0; i < untiled.planes.size(); ++i)
    CHECK(std::abs(untiled.planes[i] - tiled.planes[i]) < 1e-2f);
}

TEST_CASE("demosaic requires period-multiple frames unless cropping is requested") {
  fs::path dir = fresh_dir("qxq_cli_crop");
  CfaSpec cfa = CfaSpec::make(2);  // period 4
  MosaicImage m(16, 16, cfa);
  std::fill(m.plane.begin(), m.plane.end(), 0.25f);
  write_qxq(dir / "m.raw", m);
  // claim a 20x... wait, frame bytes must match; use an actually non-multiple frame
  RawQxqFrame frame;
  frame.width = 18;
  frame.height = 18;
  frame.cfa = cfa;
  frame.plane.assign(18 * 18, 200);
  write_file(dir / "odd.raw", encode_qxq(frame));

  auto fail_run = run_cli("demosaic " + (dir / "odd.raw").string() +
                          " --classical --width 18 --height 18 --cfa 2,RGGB --out " +
                          (dir / "x.png").string());
  CHECK(fail_run.exit_code != 0);
  CHECK(fail_run.output.find("error[geometry]") != std::string::npos);

  auto crop_run = run_cli("demosaic " + (dir / "odd.raw").string() +
                          " --classical --crop --width 18 --height 18 --cfa 2,RGGB --out " +
                          (dir / "cropped.png").string());
  CHECK(crop_run.exit_code == 0);
  RgbImage out = png_read(dir / "cropped.png");
  CHECK(out.width == 16);
  CHECK(out.height == 16);
}
