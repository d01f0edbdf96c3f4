#include "qxq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace qxq {

struct Tensor::Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until touched
  bool requires_grad = false;
  bool leaf = true;
  std::vector<Tensor> parents;
  BackwardFn backward;
};

Tensor Tensor::zeros(Shape shape) { return full(shape, 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.assign(shape.numel(), value);
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  if (data.size() != shape.numel())
    fail(ErrorKind::Shape, "data length " + std::to_string(data.size()) + " does not match " +
                               shape.str());
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
  if (!node_) fail(ErrorKind::State, "undefined tensor");
  return node_->shape;
}

std::span<float> Tensor::data() { return node_->data; }
std::span<const float> Tensor::data() const { return node_->data; }

float Tensor::scalar() const {
  if (numel() != 1) fail(ErrorKind::Shape, "expected a scalar tensor, got " + shape().str());
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<float> Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0f);
  return node_->grad;
}

std::span<const float> Tensor::grad() const {
  if (node_->grad.empty()) fail(ErrorKind::State, "gradient never populated");
  return node_->grad;
}

void Tensor::clear_grad() {
  if (node_) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = shape();
  node->data = node_->data;
  return Tensor(std::move(node));
}

const std::vector<Tensor>& Tensor::parents() const { return node_->parents; }

Tensor Tensor::make_op(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                       BackwardFn backward) {
  bool needs_grad = false;
  for (const Tensor& p : parents)
    if (p.requires_grad()) needs_grad = true;
  auto node = std::make_shared<Node>();
  node->shape = shape;
  if (data.size() != shape.numel()) fail(ErrorKind::Shape, "op output size mismatch");
  node->data = std::move(data);
  node->requires_grad = needs_grad;
  node->leaf = false;
  if (needs_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (numel() != 1)
    fail(ErrorKind::Shape, "backward requires a scalar loss, got " + shape().str());

  // Post-order DFS; interior grads are zeroed fresh, leaf grads accumulate.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  std::unordered_set<Node*> seen;
  if (!node_->requires_grad) return;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].node_.get();
      ++idx;
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->leaf)
      node->grad.assign(node->shape.numel(), 0.0f);
    else if (node->grad.empty())
      node->grad.assign(node->shape.numel(), 0.0f);
  }
  node_->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(Tensor(std::shared_ptr<Node>(node_, node)));
  }
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    fail(ErrorKind::Shape,
         std::string(op) + ": shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
}

std::span<float> grad_of(const Tensor& t) { return const_cast<Tensor&>(t).grad(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& self) {
    auto g = self.grad();
    if (a.requires_grad()) {
      auto ga = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& self) {
    auto g = self.grad();
    if (a.requires_grad()) {
      auto ga = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& self) {
    auto g = self.grad();
    auto da = a.data(), db = b.data();
    if (a.requires_grad()) {
      auto ga = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da[i];
    }
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "divide");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] / db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& self) {
    auto g = self.grad();
    auto da = a.data(), db = b.data();
    if (a.requires_grad()) {
      auto ga = grad_of(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / db[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_of(b);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * da[i] / (db[i] * db[i]);
    }
  });
}

Tensor add_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + s;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [a](const Tensor& self) {
    auto g = self.grad();
    auto ga = grad_of(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor mul_scalar(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * s;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [a, s](const Tensor& self) {
    auto g = self.grad();
    auto ga = grad_of(a);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

Tensor pow_scalar(const Tensor& a, float exponent) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(da[i], exponent);
  return Tensor::make_op(a.shape(), std::move(out), {a}, [a, exponent](const Tensor& self) {
    auto g = self.grad();
    auto da = a.data();
    auto ga = grad_of(a);
    for (size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * exponent * std::pow(da[i], exponent - 1.0f);
  });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  std::vector<float> out(x.numel());
  auto dx = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = dx[i] >= 0.0f ? dx[i] : slope * dx[i];
  return Tensor::make_op(x.shape(), std::move(out), {x}, [x, slope](const Tensor& self) {
    auto g = self.grad();
    auto dx = x.data();
    auto gx = grad_of(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += dx[i] >= 0.0f ? g[i] : slope * g[i];
  });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0f); }

Tensor tanh_act(const Tensor& x) {
  std::vector<float> out(x.numel());
  auto dx = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(dx[i]);
  return Tensor::make_op(x.shape(), std::move(out), {x}, [x](const Tensor& self) {
    auto g = self.grad();
    auto dy = self.data();
    auto gx = grad_of(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0f - dy[i] * dy[i]);
  });
}

Tensor sigmoid_act(const Tensor& x) {
  std::vector<float> out(x.numel());
  auto dx = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-dx[i]));
  return Tensor::make_op(x.shape(), std::move(out), {x}, [x](const Tensor& self) {
    auto g = self.grad();
    auto dy = self.data();
    auto gx = grad_of(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dy[i] * (1.0f - dy[i]);
  });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail(ErrorKind::Shape, "concat of zero tensors");
  Shape s0 = xs[0].shape();
  int channels = 0;
  for (const Tensor& x : xs) {
    const Shape& s = x.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      fail(ErrorKind::Shape, "concat: incompatible shapes " + s0.str() + " vs " + s.str());
    channels += s.c;
  }
  Shape out_shape{s0.n, channels, s0.h, s0.w};
  std::vector<float> out(out_shape.numel());
  size_t plane = static_cast<size_t>(s0.h) * s0.w;
  for (int n = 0; n < s0.n; ++n) {
    size_t offset = static_cast<size_t>(n) * channels * plane;
    for (const Tensor& x : xs) {
      auto dx = x.data();
      size_t len = static_cast<size_t>(x.shape().c) * plane;
      std::copy_n(dx.data() + static_cast<size_t>(n) * len, len, out.data() + offset);
      offset += len;
    }
  }
  return Tensor::make_op(out_shape, std::move(out), xs, [xs, plane](const Tensor& self) {
    auto g = self.grad();
    const Shape& so = self.shape();
    for (int n = 0; n < so.n; ++n) {
      size_t offset = static_cast<size_t>(n) * so.c * plane;
      for (const Tensor& x : xs) {
        size_t len = static_cast<size_t>(x.shape().c) * plane;
        if (x.requires_grad()) {
          auto gx = grad_of(x);
          for (size_t i = 0; i < len; ++i) gx[static_cast<size_t>(n) * len + i] += g[offset + i];
        }
        offset += len;
      }
    }
  });
}

Tensor mean_all(const Tensor& x) {
  double sum = 0.0;
  for (float v : x.data()) sum += v;
  float m = static_cast<float>(sum / static_cast<double>(x.numel()));
  return Tensor::make_op(Shape{1, 1, 1, 1}, {m}, {x}, [x](const Tensor& self) {
    float g = self.grad()[0] / static_cast<float>(x.numel());
    auto gx = grad_of(x);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  auto da = a.data(), db = b.data();
  double sum = 0.0;
  for (size_t i = 0; i < da.size(); ++i) {
    double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sum += d * d;
  }
  float m = static_cast<float>(sum / static_cast<double>(a.numel()));
  return Tensor::make_op(Shape{1, 1, 1, 1}, {m}, {a, b}, [a, b](const Tensor& self) {
    float g = self.grad()[0] * 2.0f / static_cast<float>(a.numel());
    auto da = a.data(), db = b.data();
    if (a.requires_grad()) {
      auto ga = grad_of(a);
      for (size_t i = 0; i < da.size(); ++i) ga[i] += g * (da[i] - db[i]);
    }
    if (b.requires_grad()) {
      auto gb = grad_of(b);
      for (size_t i = 0; i < da.size(); ++i) gb[i] -= g * (da[i] - db[i]);
    }
  });
}

}  // namespace qxq
