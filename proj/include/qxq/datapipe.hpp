#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qxq/cfa.hpp"
#include "qxq/image.hpp"

namespace qxq {

RgbImage inverse_gamma(const RgbImage& img, float gamma = 2.2f);

// Non-overlapping grid origins from (0, 0); the remainder is discarded.
std::vector<std::pair<int, int>> patch_grid(int width, int height, int size, int stride);
RgbImage extract_patch(const RgbImage& img, int x, int y, int size);
std::vector<RgbImage> crop_patches(const RgbImage& img, int size = 448, int stride = 448);

// Keep iff the mean over channels of the per-channel population variance
// reaches the threshold.
bool variance_keep(const RgbImage& patch, float threshold);

RgbImage downscale2x(const RgbImage& img);  // 2x2 box average

enum class SourceKind { Raw3ccd, Common };
enum class Split { Train, Test };

struct ManifestRecord {
  std::string source_path;  // relative to the manifest location
  SourceKind kind = SourceKind::Common;
  Split split = Split::Train;
  int x = 0, y = 0;  // patch origin
};

struct DatasetManifest {
  CfaSpec cfa;
  int patch_size = 448;
  int raw_width = 0, raw_height = 0;  // dimensions of the headerless 3CCD sources
  std::vector<ManifestRecord> records;

  size_t count(Split split) const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

struct HybridOptions {
  int patch_size = 448;
  float variance_threshold = 1e-3f;
  float split_ratio = 0.9f;  // fraction of source images assigned to train
  uint64_t seed = 0;
  int raw_width = 0, raw_height = 0;
};

// Scans the two source directories (3CCD .raw dumps and ISP-processed .png
// images), applies black-level compensation resp. inverse gamma, crops the
// patch grid, variance-filters, and splits train/test at the source-image
// level. Unreadable files are logged to stderr and skipped. Paths in the
// returned manifest are relative to `manifest_base`.
DatasetManifest build_hybrid(const std::filesystem::path& dir_3ccd,
                             const std::filesystem::path& dir_common, const CfaSpec& cfa,
                             const HybridOptions& options,
                             const std::filesystem::path& manifest_base);

struct TrainingTriple {
  MosaicImage mosaic;
  RgbImage half_gt;
  RgbImage full_gt;
};

// Loads triples from a manifest, caching decoded source images.
class Dataset {
 public:
  Dataset(DatasetManifest manifest, std::filesystem::path base_dir);

  size_t size(Split split) const;
  TrainingTriple load(Split split, size_t index) const;
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  const RgbImage& source_image(const ManifestRecord& record) const;

  DatasetManifest manifest_;
  std::filesystem::path base_dir_;
  std::vector<size_t> train_indices_;
  std::vector<size_t> test_indices_;
  mutable std::unordered_map<std::string, RgbImage> cache_;
};

}  // namespace qxq
