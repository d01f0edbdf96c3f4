#include "qxq/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qxq/png_io.hpp"
#include "qxq/rawio.hpp"
#include "qxq/rng.hpp"

namespace qxq {

RgbImage inverse_gamma(const RgbImage& img, float gamma) {
  if (gamma <= 0.0f) fail(ErrorKind::Parameter, "gamma must be positive");
  RgbImage out(img.width, img.height);
  for (size_t i = 0; i < img.planes.size(); ++i) {
    float v = img.planes[i];
    if (!(v >= 0.0f && v <= 1.0f))
      fail(ErrorKind::Range, "inverse_gamma input sample " + std::to_string(v) + " outside [0,1]");
    out.planes[i] = std::pow(v, gamma);
  }
  return out;
}

std::vector<std::pair<int, int>> patch_grid(int width, int height, int size, int stride) {
  std::vector<std::pair<int, int>> grid;
  for (int y = 0; y + size <= height; y += stride)
    for (int x = 0; x + size <= width; x += stride) grid.emplace_back(x, y);
  return grid;
}

RgbImage extract_patch(const RgbImage& img, int x, int y, int size) {
  if (x < 0 || y < 0 || x + size > img.width || y + size > img.height)
    fail(ErrorKind::Geometry, "patch at (" + std::to_string(x) + "," + std::to_string(y) +
                                  ") size " + std::to_string(size) + " out of bounds");
  RgbImage out(size, size);
  for (int c = 0; c < 3; ++c)
    for (int j = 0; j < size; ++j)
      for (int i = 0; i < size; ++i) out.at(c, i, j) = img.at(c, x + i, y + j);
  return out;
}

std::vector<RgbImage> crop_patches(const RgbImage& img, int size, int stride) {
  std::vector<RgbImage> out;
  for (auto [x, y] : patch_grid(img.width, img.height, size, stride))
    out.push_back(extract_patch(img, x, y, size));
  return out;
}

bool variance_keep(const RgbImage& patch, float threshold) {
  double total = 0.0;
  size_t n = patch.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float* p = patch.plane(c);
    double sum = 0.0, sum2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sum += p[i];
      sum2 += static_cast<double>(p[i]) * p[i];
    }
    double mean = sum / static_cast<double>(n);
    total += sum2 / static_cast<double>(n) - mean * mean;
  }
  return total / 3.0 >= static_cast<double>(threshold);
}

RgbImage downscale2x(const RgbImage& img) {
  if (img.width % 2 != 0 || img.height % 2 != 0)
    fail(ErrorKind::Geometry, "downscale2x needs even dimensions, got " +
                                  std::to_string(img.width) + "x" + std::to_string(img.height));
  RgbImage out(img.width / 2, img.height / 2);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.at(c, x, y) = 0.25f * (img.at(c, 2 * x, 2 * y) + img.at(c, 2 * x + 1, 2 * y) +
                                   img.at(c, 2 * x, 2 * y + 1) + img.at(c, 2 * x + 1, 2 * y + 1));
  return out;
}

// ---- manifest ----

size_t DatasetManifest::count(Split split) const {
  size_t n = 0;
  for (const ManifestRecord& r : records)
    if (r.split == split) ++n;
  return n;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path.string());
  out << "qxq-manifest v1\n";
  out << "cfa " << cfa.group_size << " " << cfa.pattern_string() << "\n";
  out << "patch " << patch_size << "\n";
  out << "raw " << raw_width << " " << raw_height << "\n";
  for (const ManifestRecord& r : records)
    out << "record " << (r.kind == SourceKind::Raw3ccd ? "3ccd" : "common") << " "
        << (r.split == Split::Train ? "train" : "test") << " " << r.x << " " << r.y << " "
        << r.source_path << "\n";
  if (!out) fail(ErrorKind::Io, "short write to manifest " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "qxq-manifest v1")
    fail(ErrorKind::Format, "not a dataset manifest: " + path.string());
  DatasetManifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tag;
    row >> tag;
    if (tag == "cfa") {
      int g;
      std::string pattern;
      row >> g >> pattern;
      m.cfa = CfaSpec::make(g, pattern);
    } else if (tag == "patch") {
      row >> m.patch_size;
    } else if (tag == "raw") {
      row >> m.raw_width >> m.raw_height;
    } else if (tag == "record") {
      ManifestRecord r;
      std::string kind, split;
      row >> kind >> split >> r.x >> r.y;
      r.kind = kind == "3ccd" ? SourceKind::Raw3ccd : SourceKind::Common;
      r.split = split == "train" ? Split::Train : Split::Test;
      std::getline(row, r.source_path);
      if (!r.source_path.empty() && r.source_path.front() == ' ')
        r.source_path.erase(r.source_path.begin());
      if (!row && r.source_path.empty())
        fail(ErrorKind::Format, "malformed manifest record: " + line);
      m.records.push_back(std::move(r));
    } else {
      fail(ErrorKind::Format, "unknown manifest line: " + line);
    }
  }
  return m;
}

namespace {

RgbImage load_source(const std::filesystem::path& path, SourceKind kind, int raw_width,
                     int raw_height) {
  if (kind == SourceKind::Raw3ccd) {
    auto bytes = read_file(path);
    Raw3ccdFrame frame = decode_3ccd(bytes, raw_width, raw_height);
    return compensate(frame);
  }
  // ISP-processed image: revert gamma correction to approximate sensor-linear
  // statistics.
  return inverse_gamma(png_read(path));
}

}  // namespace

DatasetManifest build_hybrid(const std::filesystem::path& dir_3ccd,
                             const std::filesystem::path& dir_common, const CfaSpec& cfa,
                             const HybridOptions& options,
                             const std::filesystem::path& manifest_base) {
  if (options.split_ratio < 0.0f || options.split_ratio > 1.0f)
    fail(ErrorKind::Parameter, "split_ratio must be in [0, 1]");

  struct Source {
    std::filesystem::path path;
    SourceKind kind;
  };
  std::vector<Source> sources;
  auto scan = [&](const std::filesystem::path& dir, SourceKind kind, const char* ext) {
    if (dir.empty()) return;
    if (!std::filesystem::is_directory(dir))
      fail(ErrorKind::Data, "source directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string e = entry.path().extension().string();
      std::transform(e.begin(), e.end(), e.begin(), ::tolower);
      if (e == ext) found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    for (auto& p : found) sources.push_back({std::move(p), kind});
  };
  scan(dir_3ccd, SourceKind::Raw3ccd, ".raw");
  scan(dir_common, SourceKind::Common, ".png");
  if (sources.empty()) fail(ErrorKind::Data, "no source images found");

  // Seeded shuffle decides the split at source-image level so no patches of one
  // image land on both sides.
  RngStream rng(options.seed, "split");
  std::vector<uint32_t> order = rng.permutation(sources.size());
  size_t train_count = static_cast<size_t>(
      std::lround(static_cast<double>(options.split_ratio) * static_cast<double>(sources.size())));
  std::vector<Split> split(sources.size(), Split::Test);
  for (size_t i = 0; i < train_count && i < sources.size(); ++i)
    split[order[i]] = Split::Train;

  DatasetManifest manifest;
  manifest.cfa = cfa;
  manifest.patch_size = options.patch_size;
  manifest.raw_width = options.raw_width;
  manifest.raw_height = options.raw_height;

  for (size_t s = 0; s < sources.size(); ++s) {
    RgbImage img;
    try {
      img = load_source(sources[s].path, sources[s].kind, options.raw_width, options.raw_height);
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << sources[s].path.string() << ": " << e.what() << "\n";
      continue;
    }
    std::string rel =
        std::filesystem::relative(sources[s].path, manifest_base).generic_string();
    for (auto [x, y] : patch_grid(img.width, img.height, options.patch_size, options.patch_size)) {
      RgbImage patch = extract_patch(img, x, y, options.patch_size);
      if (!variance_keep(patch, options.variance_threshold)) continue;
      manifest.records.push_back({rel, sources[s].kind, split[s], x, y});
    }
  }
  if (manifest.records.empty())
    fail(ErrorKind::Data, "no patches survived cropping and variance filtering");
  return manifest;
}

// ---- dataset loader ----

Dataset::Dataset(DatasetManifest manifest, std::filesystem::path base_dir)
    : manifest_(std::move(manifest)), base_dir_(std::move(base_dir)) {
  for (size_t i = 0; i < manifest_.records.size(); ++i) {
    if (manifest_.records[i].split == Split::Train)
      train_indices_.push_back(i);
    else
      test_indices_.push_back(i);
  }
}

size_t Dataset::size(Split split) const {
  return split == Split::Train ? train_indices_.size() : test_indices_.size();
}

const RgbImage& Dataset::source_image(const ManifestRecord& record) const {
  auto it = cache_.find(record.source_path);
  if (it != cache_.end()) return it->second;
  RgbImage img = load_source(base_dir_ / record.source_path, record.kind, manifest_.raw_width,
                             manifest_.raw_height);
  return cache_.emplace(record.source_path, std::move(img)).first->second;
}

TrainingTriple Dataset::load(Split split, size_t index) const {
  const auto& indices = split == Split::Train ? train_indices_ : test_indices_;
  if (index >= indices.size())
    fail(ErrorKind::Data, "dataset index " + std::to_string(index) + " out of range");
  const ManifestRecord& record = manifest_.records[indices[index]];
  RgbImage patch =
      extract_patch(source_image(record), record.x, record.y, manifest_.patch_size);
  patch = crop_to_period(patch, manifest_.cfa);
  TrainingTriple triple{mosaic(patch, manifest_.cfa), downscale2x(patch), patch};
  return triple;
}

}  // namespace qxq
