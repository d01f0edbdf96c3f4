#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qxq/errors.hpp"

namespace qxq {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  size_t numel() const {
    return static_cast<size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Dense NCHW float tensor participating in a define-by-run reverse-mode graph.
// Copies share the underlying node. Gradients of leaf tensors (parameters)
// accumulate across backward() calls until cleared; gradients of interior nodes
// are scratch, reset on every sweep.
class Tensor {
 public:
  struct Node;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  size_t numel() const { return shape().numel(); }

  std::span<float> data();
  std::span<const float> data() const;
  float scalar() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<float> grad();             // allocates zeroed storage on first use
  std::span<const float> grad() const;
  void clear_grad();

  // Reverse topological sweep from a scalar; seeds d(loss)/d(loss) = 1.
  void backward() const;

  Tensor detach() const;

  Node* node() const { return node_.get(); }

  using BackwardFn = std::function<void(const Tensor& self)>;
  static Tensor make_op(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                        BackwardFn backward);

  const std::vector<Tensor>& parents() const;

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// ---- elementwise and structural ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor pow_scalar(const Tensor& a, float exponent);

Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor relu(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor sigmoid_act(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// ---- spatial ops ----

// out(n, c, r*i + a, r*j + b) = in(n, c*r^2 + a*r + b, i, j)
Tensor pixel_shuffle(const Tensor& x, int r = 2);
Tensor pixel_unshuffle(const Tensor& x, int r = 2);

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

Tensor avg_pool2(const Tensor& x);
Tensor bilinear_upsample2x(const Tensor& x);

// Separable valid correlation with the same 1D kernel on both axes, per channel.
Tensor blur_valid(const Tensor& x, const std::vector<float>& taps);

}  // namespace qxq
