#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qxq/losses.hpp"

using namespace qxq;

TEST_CASE("perceptual loss is zero for identical inputs and symmetric") {
  PerceptualExtractor perceptual(3);
  RngStream rng(1, "perc");
  Tensor a = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tensor b = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  CHECK(perceptual.loss(a, a).scalar() == 0.0f);
  CHECK(perceptual.loss(a, b).scalar() == doctest::Approx(perceptual.loss(b, a).scalar()));
}

TEST_CASE("perceptual loss separates distinct images across seeds") {
  RngStream rng(2, "perc-sep");
  Tensor a = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tensor b = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    PerceptualExtractor perceptual(seed);
    CHECK(perceptual.loss(a, b).scalar() > 0.0f);
  }
}

TEST_CASE("perceptual extractor weights are frozen") {
  PerceptualExtractor perceptual(3);
  Tensor a = Tensor::from_data(Shape{1, 3, 8, 8}, std::vector<float>(192, 0.3f), true);
  Tensor b = Tensor::zeros(Shape{1, 3, 8, 8});
  Tensor loss = perceptual.loss(a, b);
  loss.backward();
  CHECK(a.has_grad());  // gradients flow to the inputs, not the extractor
}

TEST_CASE("psnr hand values") {
  Tensor a = Tensor::from_data(Shape{1, 1, 1, 1}, {0.0f});
  Tensor b = Tensor::from_data(Shape{1, 1, 1, 1}, {0.5f});
  CHECK(psnr_metric(a, b) == doctest::Approx(6.0206).epsilon(1e-4));
  CHECK(std::isinf(psnr_metric(a, a)));
  CHECK(psnr_metric(a, b, 1.0) - psnr_metric(a, b, 0.5) == doctest::Approx(6.0206).epsilon(1e-4));
}

TEST_CASE("psnr rejects shape mismatches") {
  Tensor a = Tensor::zeros(Shape{1, 1, 2, 2});
  Tensor b = Tensor::zeros(Shape{1, 1, 2, 3});
  CHECK_THROWS_AS(psnr_metric(a, b), Error);
}

TEST_CASE("ms_ssim of an image with itself is exactly 1") {
  RngStream rng(4, "ssim-self");
  Tensor a = oracle::random_tensor(Shape{1, 3, 32, 32}, rng, 0.0f, 1.0f);
  CHECK(ms_ssim_metric(a, a) == 1.0);
  CHECK(ms_ssim_graph(a, a).scalar() == 1.0f);
}

TEST_CASE("ms_ssim constant-vs-constant matches the reference chain") {
  Tensor a = Tensor::full(Shape{1, 1, 32, 32}, 0.3f);
  Tensor b = Tensor::full(Shape{1, 1, 32, 32}, 0.6f);
  double mine = ms_ssim_metric(a, b);
  double ref = oracle::ms_ssim_reference({a.data().begin(), a.data().end()},
                                         {b.data().begin(), b.data().end()}, 1, 32, 32, 5);
  CHECK(mine == doctest::Approx(ref).epsilon(1e-9));
  CHECK(std::abs(mine - ref) < 1e-6);
}

TEST_CASE("ms_ssim matches the reference on random pairs and is symmetric") {
  RngStream rng(5, "ssim-ref");
  for (int trial = 0; trial < 6; ++trial) {
    int h = 24 + static_cast<int>(rng.next_u32() % 40);
    int w = 24 + static_cast<int>(rng.next_u32() % 40);
    Tensor a = oracle::random_tensor(Shape{1, 3, h, w}, rng, 0.0f, 1.0f);
    Tensor b = oracle::random_tensor(Shape{1, 3, h, w}, rng, 0.0f, 1.0f);
    double mine = ms_ssim_metric(a, b);
    double ref = oracle::ms_ssim_reference({a.data().begin(), a.data().end()},
                                           {b.data().begin(), b.data().end()}, 3, h, w, 5);
    CHECK(std::abs(mine - ref) < 1e-6);
    CHECK(ms_ssim_metric(a, b) == ms_ssim_metric(b, a));
  }
}

TEST_CASE("ms_ssim auto-reduces scales and rejects sub-window images") {
  Tensor small = Tensor::full(Shape{1, 1, 16, 16}, 0.4f);
  CHECK(ms_ssim_scales_that_fit(16, 16, 5) == 1);
  CHECK(ms_ssim_scales_that_fit(64, 64, 5) == 3);
  CHECK(ms_ssim_scales_that_fit(176, 176, 5) == 5);
  CHECK_NOTHROW(ms_ssim_metric(small, small));
  Tensor tiny = Tensor::full(Shape{1, 1, 8, 8}, 0.4f);
  CHECK_THROWS_AS(ms_ssim_metric(tiny, tiny), Error);
}

TEST_CASE("graph ms_ssim tracks the metric path closely") {
  RngStream rng(6, "ssim-graph");
  for (int trial = 0; trial < 3; ++trial) {
    Tensor a = oracle::random_tensor(Shape{1, 3, 48, 48}, rng, 0.0f, 1.0f);
    Tensor b = oracle::random_tensor(Shape{1, 3, 48, 48}, rng, 0.0f, 1.0f);
    CHECK(static_cast<double>(ms_ssim_graph(a, b).scalar()) ==
          doctest::Approx(ms_ssim_metric(a, b)).epsilon(1e-4));
  }
}

TEST_CASE("level1 loss composes mse and the perceptual term") {
  PerceptualExtractor perceptual(7);
  RngStream rng(7, "l1");
  Tensor a = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tensor b = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  LossWeights w = LossWeights::level1_preset();
  float expected = mse(a, b).scalar() + w.lambda1 * perceptual.loss(a, b).scalar();
  CHECK(level1_loss(a, b, w, perceptual).scalar() == doctest::Approx(expected).epsilon(1e-6));
  CHECK(level1_loss(a, a, w, perceptual).scalar() == 0.0f);
  LossWeights no_perc{0.0f, 0.0f, 0.0f};
  CHECK(level1_loss(a, b, no_perc, perceptual).scalar() == mse(a, b).scalar());
  // hand evaluation of the weighting itself
  CHECK(0.5 + 0.1 * 0.2 == doctest::Approx(0.52));
}

TEST_CASE("level0 loss composes mse, perceptual and ms-ssim terms") {
  PerceptualExtractor perceptual(8);
  RngStream rng(8, "l0");
  Tensor a = oracle::random_tensor(Shape{1, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor b = oracle::random_tensor(Shape{1, 3, 32, 32}, rng, 0.0f, 1.0f);
  LossWeights w = LossWeights::level0_preset();
  float expected = mse(a, b).scalar() + w.lambda1 * perceptual.loss(a, b).scalar() +
                   w.lambda2 * (1.0f - ms_ssim_graph(a, b).scalar());
  CHECK(level0_loss(a, b, w, perceptual).scalar() == doctest::Approx(expected).epsilon(1e-5));
  CHECK(level0_loss(a, a, w, perceptual).scalar() == 0.0f);
  // hand evaluation of the preset arithmetic: mse .1, perceptual .05, ms-ssim .9
  CHECK(0.1 + 1.0 * 0.05 + 0.4 * (1.0 - 0.9) == doctest::Approx(0.19));
}

TEST_CASE("distill loss is zero when the teacher equals the regressed student") {
  RngStream rng(9, "distill0");
  Regressor reg(4, 8, 9, 1);
  Tensor f_s = oracle::random_tensor(Shape{1, 4, 8, 8}, rng);
  Tensor f_t = reg.forward(f_s);
  CHECK(distill_loss(f_s, f_t, reg).scalar() == 0.0f);
}

TEST_CASE("distill gradients reach the student and regressor but not the teacher") {
  RngStream rng(10, "distill-grad");
  Regressor reg(4, 8, 10, 1);
  Tensor f_s = oracle::random_tensor(Shape{1, 4, 8, 8}, rng, -1.0f, 1.0f, true);
  Tensor f_t = oracle::random_tensor(Shape{1, 8, 8, 8}, rng, -1.0f, 1.0f, true);
  Tensor loss = distill_loss(f_s, f_t, reg);
  loss.backward();
  CHECK(f_s.has_grad());
  CHECK(reg.params()[0]->value.has_grad());
  CHECK(!f_t.has_grad());  // detached
}

TEST_CASE("distill loss equals the brute-force mean of squared differences") {
  RngStream rng(11, "distill-ref");
  Regressor reg(4, 8, 11, 2);
  Tensor f_s = oracle::random_tensor(Shape{1, 4, 8, 8}, rng);
  Tensor f_t = oracle::random_tensor(Shape{1, 8, 8, 8}, rng);
  Tensor projected = reg.forward(f_s);
  double acc = 0.0;
  for (size_t i = 0; i < projected.numel(); ++i) {
    double d = static_cast<double>(projected.data()[i]) - static_cast<double>(f_t.data()[i]);
    acc += d * d;
  }
  acc /= static_cast<double>(projected.numel());
  CHECK(static_cast<double>(distill_loss(f_s, f_t, reg).scalar()) ==
        doctest::Approx(acc).epsilon(1e-5));
}

TEST_CASE("distill loss rejects channel mismatches after regression") {
  RngStream rng(12, "distill-shape");
  Regressor reg(4, 8, 12, 1);
  Tensor f_s = oracle::random_tensor(Shape{1, 4, 8, 8}, rng);
  Tensor f_t = oracle::random_tensor(Shape{1, 6, 8, 8}, rng);
  CHECK_THROWS_AS(distill_loss(f_s, f_t, reg), Error);
}

TEST_CASE("total loss weighting") {
  Tensor l0 = Tensor::from_data(Shape{1, 1, 1, 1}, {0.19f});
  Tensor dl = Tensor::from_data(Shape{1, 1, 1, 1}, {0.03f});
  CHECK(total_loss(l0, dl, 10.0f).scalar() == doctest::Approx(0.49f).epsilon(1e-6));
  CHECK(total_loss(l0, dl, 0.0f).scalar() == 0.19f);
  // linear in both arguments
  CHECK(total_loss(l0, dl, 2.0f).scalar() == doctest::Approx(0.19f + 2.0f * 0.03f));
  CHECK_THROWS_AS(total_loss(l0, dl, -1.0f), Error);
}

TEST_CASE("composite level0 + distill gradient check on a tiny net") {
  const double tol = 1e-3;
  PerceptualExtractor perceptual(13);
  RngStream rng(13, "composite");
  Regressor reg(2, 3, 13, 1);
  Tensor w = oracle::random_tensor(Shape{2, 1, 3, 3}, rng, -0.5f, 0.5f, true);
  Tensor head = oracle::random_tensor(Shape{3, 2, 1, 1}, rng, -0.5f, 0.5f, true);
  Tensor x = oracle::random_tensor(Shape{1, 1, 16, 16}, rng, 0.0f, 1.0f);
  Tensor gt = oracle::random_tensor(Shape{1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tensor f_t = oracle::random_tensor(Shape{1, 3, 16, 16}, rng);
  LossWeights lw = LossWeights::level0_preset();

  auto forward = [&]() {
    Tensor feat = leaky_relu(conv2d(x, w, Tensor(), 1, 1), 0.2f);
    Tensor out = sigmoid_act(conv2d(feat, head, Tensor(), 1, 0));
    Tensor l0 = level0_loss(out, gt, lw, perceptual);
    Tensor dl = distill_loss(feat, f_t, reg);
    return total_loss(l0, dl, lw.alpha);
  };
  Tensor loss = forward();
  loss.backward();
  std::vector<float> gw(w.grad().begin(), w.grad().end());
  std::vector<float> gh(head.grad().begin(), head.grad().end());
  auto eval = [&]() { return static_cast<double>(forward().scalar()); };
  // smaller step: the ms-ssim chain has large higher-order terms
  CHECK(oracle::gradient_disagreement(gw, oracle::finite_difference(w, eval, 3e-4)) < tol);
  CHECK(oracle::gradient_disagreement(gh, oracle::finite_difference(head, eval, 3e-4)) < tol);
}

TEST_CASE("metric table formatting mirrors the reporting columns") {
  std::vector<MetricRow> rows = {{"student", 31.25, 0.971, 42000, 1700000},
                                 {"identity", std::numeric_limits<double>::infinity(), 1.0, 0, 0}};
  std::string table = format_metric_table(rows);
  CHECK(table.find("method\tPSNR\tMS-SSIM\tparams\tMACs") == 0);
  CHECK(table.find("student\t31.2500") != std::string::npos);
  CHECK(table.find("inf") != std::string::npos);
}
