#include "qxq/optim.hpp"

#include <cmath>
#include <unordered_set>

namespace qxq {

void adam_step(const std::vector<ParamPtr>& params, const AdamConfig& cfg) {
  for (const ParamPtr& p : params) {
    if (!p->value.has_grad())
      fail(ErrorKind::State, "adam_step: no gradient for parameter '" + p->path + "'");
    ++p->step_count;
    double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(p->step_count));
    double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(p->step_count));
    auto g = p->value.grad();
    auto w = p->value.data();
    for (size_t i = 0; i < w.size(); ++i) {
      double grad = g[i];
      double m = cfg.beta1 * static_cast<double>(p->adam_m[i]) + (1.0 - cfg.beta1) * grad;
      double v = cfg.beta2 * static_cast<double>(p->adam_v[i]) + (1.0 - cfg.beta2) * grad * grad;
      p->adam_m[i] = static_cast<float>(m);
      p->adam_v[i] = static_cast<float>(v);
      double step = cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - step);
    }
    p->value.clear_grad();
  }
}

void zero_grads(const std::vector<ParamPtr>& params) {
  for (const ParamPtr& p : params) p->value.clear_grad();
}

void reset_optimizer(const std::vector<ParamPtr>& params) {
  for (const ParamPtr& p : params) {
    std::fill(p->adam_m.begin(), p->adam_m.end(), 0.0f);
    std::fill(p->adam_v.begin(), p->adam_v.end(), 0.0f);
    p->step_count = 0;
    p->value.clear_grad();
  }
}

std::vector<ParamPtr> reachable_params(const Tensor& loss,
                                       const std::vector<ParamPtr>& candidates) {
  std::unordered_set<const Tensor::Node*> seen;
  std::vector<const Tensor*> stack = {&loss};
  std::vector<Tensor::Node*> reach;
  while (!stack.empty()) {
    const Tensor* t = stack.back();
    stack.pop_back();
    if (!t->defined() || seen.count(t->node())) continue;
    seen.insert(t->node());
    for (const Tensor& parent : t->parents()) stack.push_back(&parent);
  }
  std::vector<ParamPtr> out;
  for (const ParamPtr& p : candidates)
    if (seen.count(p->value.node())) out.push_back(p);
  return out;
}

Tensor kaiming_uniform(Shape shape, RngStream& rng) {
  int fan_in = shape.c * shape.h * shape.w;
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::vector<float> data(shape.numel());
  for (float& v : data) v = rng.next_uniform(-bound, bound);
  return Tensor::from_data(shape, std::move(data), true);
}

}  // namespace qxq
