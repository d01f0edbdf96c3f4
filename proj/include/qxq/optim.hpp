#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qxq/rng.hpp"
#include "qxq/tensor.hpp"

namespace qxq {

// Trainable tensor plus its ADAM moment accumulators. Identified by a stable
// layer-path string used in checkpoints (e.g. "level1.block0.k5.weight").
struct Parameter {
  std::string path;
  Tensor value;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  int64_t step_count = 0;

  Parameter(std::string p, Tensor v) : path(std::move(p)), value(std::move(v)) {
    value.set_requires_grad(true);
    adam_m.assign(value.numel(), 0.0f);
    adam_v.assign(value.numel(), 0.0f);
  }
};

using ParamPtr = std::shared_ptr<Parameter>;

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
};

// Bias-corrected ADAM update; gradients are consumed (cleared) by the step.
// A parameter whose gradient was never populated since the last step is a
// state error: the caller passed a group the loss does not reach.
void adam_step(const std::vector<ParamPtr>& params, const AdamConfig& cfg = {});

void zero_grads(const std::vector<ParamPtr>& params);

// Clears ADAM moments and step counts (fresh optimizer for a new stage).
void reset_optimizer(const std::vector<ParamPtr>& params);

// Subset of `candidates` whose value tensors appear as leaves of the loss graph.
std::vector<ParamPtr> reachable_params(const Tensor& loss, const std::vector<ParamPtr>& candidates);

// Kaiming-uniform fan-in init for a conv kernel (Cout, Cin, k, k).
Tensor kaiming_uniform(Shape shape, RngStream& rng);

}  // namespace qxq
