#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qxq {

// Deterministic RNG streams keyed by (seed, purpose tag). Independent streams keep
// unrelated consumers from shifting each other's sequences: adding a new consumer
// (say, a distillation regressor) must not change parameter init or batch order.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view tag, uint64_t index = 0);

  uint32_t next_u32() { return engine_(); }

  // Uniform in [0, 1) built from the top 24 bits; identical across platforms.
  float next_uniform();

  // Uniform in [lo, hi).
  float next_uniform(float lo, float hi);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<uint32_t> permutation(size_t n);

  std::mt19937& engine() { return engine_; }

 private:
  std::mt19937 engine_;
};

uint64_t fnv1a64(std::string_view text);

}  // namespace qxq
