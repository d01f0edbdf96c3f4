#include "qxq/rng.hpp"

#include <vector>

namespace qxq {

uint64_t fnv1a64(std::string_view text) {
  uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

RngStream::RngStream(uint64_t seed, std::string_view tag, uint64_t index) {
  uint64_t h = fnv1a64(tag);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(h),    static_cast<uint32_t>(h >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32)};
  engine_.seed(seq);
}

float RngStream::next_uniform() {
  return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f);
}

float RngStream::next_uniform(float lo, float hi) { return lo + (hi - lo) * next_uniform(); }

std::vector<uint32_t> RngStream::permutation(size_t n) {
  std::vector<uint32_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);
  for (size_t i = n; i > 1; --i) {
    size_t j = engine_() % i;
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace qxq
