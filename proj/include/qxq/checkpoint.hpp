#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qxq/optim.hpp"
#include "qxq/tensor.hpp"

namespace qxq {

// Flat checkpoint container: versioned header, then one record per tensor,
// keyed by layer path, little-endian float32 payloads. Optimizer moments are
// stored as "<path>#adam_m" / "#adam_v" / "#step" entries when requested.
struct CheckpointEntry {
  Shape shape;
  std::vector<float> data;
};

using CheckpointMap = std::map<std::string, CheckpointEntry>;

void save_checkpoint(const std::filesystem::path& path, const std::vector<ParamPtr>& params,
                     bool with_optimizer_state = false);
CheckpointMap load_checkpoint(const std::filesystem::path& path);

// Copies entries into matching parameters; unknown or missing names and shape
// mismatches raise a load error naming the first offending layer path.
// Restores optimizer state when present in the map.
void apply_checkpoint(const CheckpointMap& map, const std::vector<ParamPtr>& params);

// Parameter snapshot/compare helpers (bitwise).
CheckpointMap snapshot_params(const std::vector<ParamPtr>& params);
bool bitwise_equal(const CheckpointMap& a, const CheckpointMap& b);

}  // namespace qxq
