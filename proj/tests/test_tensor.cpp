#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "qxq/optim.hpp"
#include "qxq/tensor.hpp"

using namespace qxq;

namespace {

// Scalar probe loss: sum(op_out * fixed random weights); keeps per-element
// gradients O(1) so finite differences stay well-conditioned.
Tensor probe_loss(const Tensor& y, RngStream& rng) {
  std::vector<float> w(y.numel());
  for (float& v : w) v = rng.next_uniform(-1.0f, 1.0f);
  Tensor weights = Tensor::from_data(y.shape(), std::move(w));
  return mul_scalar(mean_all(mul(y, weights)), static_cast<float>(y.numel()));
}

}  // namespace

TEST_CASE("conv2d sums a ones kernel over a ones input") {
  Tensor x = Tensor::full(Shape{1, 1, 3, 3}, 1.0f);
  Tensor w = Tensor::full(Shape{1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.scalar() == 9.0f);
}

TEST_CASE("conv2d with an identity 1x1 kernel is the identity") {
  RngStream rng(1, "conv-id");
  Tensor x = oracle::random_tensor(Shape{2, 1, 4, 5}, rng);
  Tensor w = Tensor::full(Shape{1, 1, 1, 1}, 1.0f);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  for (size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches the nested-loop reference") {
  RngStream rng(2, "conv-ref");
  Tensor x = oracle::random_tensor(Shape{1, 2, 5, 5}, rng);
  Tensor w = oracle::random_tensor(Shape{3, 2, 3, 3}, rng);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  auto ref = oracle::conv2d_reference({x.data().begin(), x.data().end()}, 1, 2, 5, 5,
                                      {w.data().begin(), w.data().end()}, 3, 3, 1, 0);
  REQUIRE(y.numel() == ref.size());
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("conv2d matches the reference across shapes, kernels and strides") {
  RngStream rng(3, "conv-sweep");
  for (int n : {1, 2})
    for (int cin : {1, 3})
      for (int k : {1, 3, 5})
        for (int stride : {1, 2})
          for (int pad : {0, k / 2}) {
            int h = 7, w = 6;
            if (h + 2 * pad < k) continue;
            Tensor x = oracle::random_tensor(Shape{n, cin, h, w}, rng);
            Tensor kw = oracle::random_tensor(Shape{2, cin, k, k}, rng);
            std::vector<float> bias_v = {rng.next_uniform(), rng.next_uniform()};
            Tensor bias = Tensor::from_data(Shape{1, 2, 1, 1}, bias_v);
            Tensor y = conv2d(x, kw, bias, stride, pad);
            auto ref = oracle::conv2d_reference({x.data().begin(), x.data().end()}, n, cin, h, w,
                                                {kw.data().begin(), kw.data().end()}, 2, k,
                                                stride, pad, &bias_v);
            REQUIRE(y.numel() == ref.size());
            for (size_t i = 0; i < ref.size(); ++i)
              CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-4));
          }
}

TEST_CASE("conv2d rejects channel mismatches with both shapes named") {
  Tensor x = Tensor::zeros(Shape{1, 2, 4, 4});
  Tensor w = Tensor::zeros(Shape{1, 3, 3, 3});
  try {
    conv2d(x, w, Tensor(), 1, 1);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
    CHECK(std::string(e.what()).find("(1,2,4,4)") != std::string::npos);
    CHECK(std::string(e.what()).find("(1,3,3,3)") != std::string::npos);
  }
}

TEST_CASE("elementwise op values") {
  Tensor x = Tensor::from_data(Shape{1, 1, 1, 2}, {-1.0f, 2.0f});
  Tensor y = leaky_relu(x, 0.2f);
  CHECK(y.data()[0] == doctest::Approx(-0.2f));
  CHECK(y.data()[1] == 2.0f);

  RngStream rng(4, "elementwise");
  Tensor a = oracle::random_tensor(Shape{1, 2, 3, 3}, rng);
  CHECK(mse(a, a).scalar() == 0.0f);

  Tensor big = Tensor::zeros(Shape{1, 4, 8, 8});
  Tensor small = Tensor::zeros(Shape{1, 1, 8, 8});
  CHECK(concat_channels({big, small}).shape() == Shape{1, 5, 8, 8});
}

TEST_CASE("pixel_shuffle follows the stated index mapping") {
  Tensor x = Tensor::from_data(Shape{1, 4, 1, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
  Tensor y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.data()[0] == 1.0f);
  CHECK(y.data()[1] == 2.0f);
  CHECK(y.data()[2] == 3.0f);
  CHECK(y.data()[3] == 4.0f);
  CHECK_THROWS_AS(pixel_shuffle(Tensor::zeros(Shape{1, 3, 2, 2}), 2), Error);
}

TEST_CASE("pixel_shuffle and unshuffle are inverse value-preserving bijections") {
  RngStream rng(5, "shuffle");
  Tensor x = oracle::random_tensor(Shape{2, 8, 3, 4}, rng);
  Tensor y = pixel_unshuffle(pixel_shuffle(x, 2), 2);
  for (size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  std::vector<float> a(x.data().begin(), x.data().end());
  Tensor shuffled = pixel_shuffle(x, 2);
  std::vector<float> b(shuffled.data().begin(), shuffled.data().end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("bilinear_upsample2x matches the reference and keeps constants") {
  Tensor c = Tensor::full(Shape{1, 3, 4, 4}, 0.25f);
  Tensor up = bilinear_upsample2x(c);
  CHECK(up.shape() == Shape{1, 3, 8, 8});
  for (float v : up.data()) CHECK(v == doctest::Approx(0.25f));

  RngStream rng(6, "upsample");
  Tensor x = oracle::random_tensor(Shape{1, 1, 5, 7}, rng);
  Tensor y = bilinear_upsample2x(x);
  auto ref = oracle::upsample2x_reference({x.data().begin(), x.data().end()}, 5, 7);
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("backward of a weighted mean") {
  RngStream rng(7, "backward-mean");
  Tensor x = oracle::random_tensor(Shape{1, 1, 2, 3}, rng);
  Tensor w = oracle::random_tensor(Shape{1, 1, 2, 3}, rng, -1.0f, 1.0f, true);
  Tensor loss = mean_all(mul(w, x));
  loss.backward();
  auto g = w.grad();
  for (size_t i = 0; i < g.size(); ++i)
    CHECK(g[i] == doctest::Approx(x.data()[i] / 6.0f).epsilon(1e-6));
}

TEST_CASE("parameters the loss does not reach get no gradient") {
  Tensor w = Tensor::from_data(Shape{1, 1, 1, 1}, {2.0f}, true);
  Tensor x = Tensor::from_data(Shape{1, 1, 1, 1}, {3.0f}, true);
  Tensor loss = mean_all(mul(x, x));
  loss.backward();
  CHECK(!w.has_grad());
  CHECK(x.has_grad());
}

TEST_CASE("backward requires a scalar and accumulates across calls") {
  Tensor x = Tensor::from_data(Shape{1, 1, 1, 2}, {1.0f, 2.0f}, true);
  CHECK_THROWS_AS(mul(x, x).backward(), Error);
  Tensor loss = mean_all(x);
  loss.backward();
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(1.0f));  // 2 * 1/2
}

TEST_CASE("finite differences agree with autodiff for every op") {
  const double tol = 1e-3;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    RngStream rng(seed, "gradcheck");
    auto check_unary = [&](auto make, Shape in_shape, float lo, float hi) {
      Tensor x = oracle::random_tensor(in_shape, rng, lo, hi, true);
      RngStream probe_rng(seed, "gradcheck-probe");
      Tensor loss = probe_loss(make(x), probe_rng);
      loss.backward();
      std::vector<float> autodiff(x.grad().begin(), x.grad().end());
      auto fd = oracle::finite_difference(x, [&]() {
        RngStream r2(seed, "gradcheck-probe");
        return static_cast<double>(probe_loss(make(x), r2).scalar());
      });
      CHECK(oracle::gradient_disagreement(autodiff, fd) < tol);
    };

    check_unary([](const Tensor& x) { return leaky_relu(x, 0.2f); }, Shape{1, 2, 3, 3}, 0.1f, 1.0f);
    check_unary([](const Tensor& x) { return tanh_act(x); }, Shape{1, 2, 3, 3}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return sigmoid_act(x); }, Shape{1, 2, 3, 3}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return pixel_shuffle(x, 2); }, Shape{1, 4, 3, 3}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return pixel_unshuffle(x, 2); }, Shape{1, 1, 4, 4}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return avg_pool2(x); }, Shape{1, 2, 4, 4}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return bilinear_upsample2x(x); }, Shape{1, 1, 3, 4}, -1.0f, 1.0f);
    check_unary([](const Tensor& x) { return pow_scalar(x, 0.7f); }, Shape{1, 1, 3, 3}, 0.2f, 1.0f);
    check_unary([](const Tensor& x) { return blur_valid(x, {0.25f, 0.5f, 0.25f}); },
                Shape{1, 1, 5, 5}, -1.0f, 1.0f);

    // binary ops, both arguments
    {
      Tensor a = oracle::random_tensor(Shape{1, 2, 3, 3}, rng, 0.5f, 1.5f, true);
      Tensor b = oracle::random_tensor(Shape{1, 2, 3, 3}, rng, 0.5f, 1.5f, true);
      RngStream probe_rng(seed, "gradcheck-bin");
      Tensor loss = probe_loss(divide(mul(a, b), add(a, b)), probe_rng);
      loss.backward();
      std::vector<float> ga(a.grad().begin(), a.grad().end());
      std::vector<float> gb(b.grad().begin(), b.grad().end());
      auto eval = [&]() {
        RngStream r2(seed, "gradcheck-bin");
        return static_cast<double>(probe_loss(divide(mul(a, b), add(a, b)), r2).scalar());
      };
      CHECK(oracle::gradient_disagreement(ga, oracle::finite_difference(a, eval)) < tol);
      CHECK(oracle::gradient_disagreement(gb, oracle::finite_difference(b, eval)) < tol);
    }

    // conv2d: input, weight and bias gradients
    {
      Tensor x = oracle::random_tensor(Shape{1, 2, 4, 4}, rng, -1.0f, 1.0f, true);
      Tensor w = oracle::random_tensor(Shape{3, 2, 3, 3}, rng, -0.7f, 0.7f, true);
      Tensor b = oracle::random_tensor(Shape{1, 3, 1, 1}, rng, -0.3f, 0.3f, true);
      RngStream probe_rng(seed, "gradcheck-conv");
      Tensor loss = probe_loss(conv2d(x, w, b, 1, 1), probe_rng);
      loss.backward();
      std::vector<float> gx(x.grad().begin(), x.grad().end());
      std::vector<float> gw(w.grad().begin(), w.grad().end());
      std::vector<float> gb(b.grad().begin(), b.grad().end());
      auto eval = [&]() {
        RngStream r2(seed, "gradcheck-conv");
        return static_cast<double>(probe_loss(conv2d(x, w, b, 1, 1), r2).scalar());
      };
      CHECK(oracle::gradient_disagreement(gx, oracle::finite_difference(x, eval)) < tol);
      CHECK(oracle::gradient_disagreement(gw, oracle::finite_difference(w, eval)) < tol);
      CHECK(oracle::gradient_disagreement(gb, oracle::finite_difference(b, eval)) < tol);
    }

    // concat and mse
    {
      Tensor a = oracle::random_tensor(Shape{1, 2, 3, 3}, rng, -1.0f, 1.0f, true);
      Tensor b = oracle::random_tensor(Shape{1, 1, 3, 3}, rng, -1.0f, 1.0f, true);
      Tensor target = oracle::random_tensor(Shape{1, 3, 3, 3}, rng);
      Tensor loss = mse(concat_channels({a, b}), target);
      loss.backward();
      std::vector<float> ga(a.grad().begin(), a.grad().end());
      auto eval = [&]() {
        return static_cast<double>(mse(concat_channels({a, b}), target).scalar());
      };
      CHECK(oracle::gradient_disagreement(ga, oracle::finite_difference(a, eval)) < tol);
    }
  }
}

TEST_CASE("adam first step has magnitude close to the learning rate") {
  for (float g : {0.5f, 3.0f, 0.01f}) {
    auto p = std::make_shared<Parameter>("w", Tensor::from_data(Shape{1, 1, 1, 1}, {0.0f}, true));
    p->value.grad()[0] = g;
    AdamConfig cfg;
    adam_step({p}, cfg);
    float delta = -p->value.data()[0];
    CHECK(delta >= 0.99f * cfg.lr);
    CHECK(delta <= cfg.lr);
  }
}

TEST_CASE("adam with zero gradient leaves the parameter unchanged") {
  auto p = std::make_shared<Parameter>("w", Tensor::from_data(Shape{1, 1, 1, 1}, {0.75f}, true));
  p->value.grad();  // allocate zeros
  adam_step({p});
  CHECK(p->value.data()[0] == 0.75f);
}

TEST_CASE("adam without a populated gradient is a state error") {
  auto p = std::make_shared<Parameter>("w", Tensor::from_data(Shape{1, 1, 1, 1}, {0.75f}, true));
  CHECK_THROWS_AS(adam_step({p}), Error);
}

TEST_CASE("adam with beta1=beta2=0 and tiny eps degenerates to sign-SGD") {
  AdamConfig cfg;
  cfg.beta1 = 0.0f;
  cfg.beta2 = 0.0f;
  cfg.eps = 1e-16f;
  cfg.lr = 0.01f;
  for (float g : {2.5f, -0.3f}) {
    auto p = std::make_shared<Parameter>("w", Tensor::from_data(Shape{1, 1, 1, 1}, {0.0f}, true));
    p->value.grad()[0] = g;
    adam_step({p}, cfg);
    CHECK(p->value.data()[0] ==
          doctest::Approx(-cfg.lr * (g > 0 ? 1.0f : -1.0f)).epsilon(1e-4));
  }
}

TEST_CASE("adam drives a scalar quadratic to its minimum") {
  auto w = std::make_shared<Parameter>("w", Tensor::from_data(Shape{1, 1, 1, 1}, {0.0f}, true));
  AdamConfig cfg;
  cfg.lr = 1e-3f;  // faster desk-scale variant; the paper-rate run lives in acceptance
  for (int step = 0; step < 5000; ++step) {
    float value = w->value.data()[0];
    w->value.grad()[0] += value - 3.0f;  // d/dw of 0.5*(w-3)^2
    adam_step({w}, cfg);
  }
  CHECK(std::abs(w->value.data()[0] - 3.0f) < 1e-2);
}

TEST_CASE("reachable_params filters by graph membership") {
  auto a = std::make_shared<Parameter>("a", Tensor::from_data(Shape{1, 1, 1, 1}, {1.0f}, true));
  auto b = std::make_shared<Parameter>("b", Tensor::from_data(Shape{1, 1, 1, 1}, {2.0f}, true));
  Tensor loss = mean_all(mul(a->value, a->value));
  auto reach = reachable_params(loss, {a, b});
  REQUIRE(reach.size() == 1);
  CHECK(reach[0]->path == "a");
}
