#include "qxq/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace qxq {

namespace {

constexpr char kMagic[8] = {'Q', 'X', 'Q', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  out.write(b, 4);
}

uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

void write_entry(std::ofstream& out, const std::string& name, const Shape& shape,
                 const std::vector<float>& data) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<uint32_t>(shape.n));
  put_u32(out, static_cast<uint32_t>(shape.c));
  put_u32(out, static_cast<uint32_t>(shape.h));
  put_u32(out, static_cast<uint32_t>(shape.w));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<ParamPtr>& params,
                     bool with_optimizer_state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  uint32_t count = static_cast<uint32_t>(params.size() * (with_optimizer_state ? 4 : 1));
  put_u32(out, count);
  for (const ParamPtr& p : params) {
    auto view = p->value.data();
    std::vector<float> data(view.begin(), view.end());
    write_entry(out, p->path, p->value.shape(), data);
    if (with_optimizer_state) {
      write_entry(out, p->path + "#adam_m", p->value.shape(), p->adam_m);
      write_entry(out, p->path + "#adam_v", p->value.shape(), p->adam_v);
      write_entry(out, p->path + "#step", Shape{1, 1, 1, 1},
                  {static_cast<float>(p->step_count)});
    }
  }
  if (!out) fail(ErrorKind::Io, "short write to checkpoint " + path.string());
}

CheckpointMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail(ErrorKind::Format, "not a checkpoint file: " + path.string());
  uint32_t count = get_u32(in);
  CheckpointMap map;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32(in);
    if (!in || name_len > 4096) fail(ErrorKind::Format, "corrupt checkpoint entry header");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    CheckpointEntry entry;
    entry.shape.n = static_cast<int>(get_u32(in));
    entry.shape.c = static_cast<int>(get_u32(in));
    entry.shape.h = static_cast<int>(get_u32(in));
    entry.shape.w = static_cast<int>(get_u32(in));
    entry.data.resize(entry.shape.numel());
    in.read(reinterpret_cast<char*>(entry.data.data()),
            static_cast<std::streamsize>(entry.data.size() * sizeof(float)));
    if (!in) fail(ErrorKind::Format, "truncated checkpoint entry '" + name + "'");
    map.emplace(std::move(name), std::move(entry));
  }
  return map;
}

void apply_checkpoint(const CheckpointMap& map, const std::vector<ParamPtr>& params) {
  for (const ParamPtr& p : params) {
    auto it = map.find(p->path);
    if (it == map.end())
      fail(ErrorKind::Load, "checkpoint is missing parameter '" + p->path + "'");
    if (!(it->second.shape == p->value.shape()))
      fail(ErrorKind::Load, "checkpoint shape " + it->second.shape.str() + " for '" + p->path +
                                "' does not match model shape " + p->value.shape().str());
    auto dst = p->value.data();
    std::copy(it->second.data.begin(), it->second.data.end(), dst.begin());
    auto m = map.find(p->path + "#adam_m");
    auto v = map.find(p->path + "#adam_v");
    auto t = map.find(p->path + "#step");
    if (m != map.end() && v != map.end() && t != map.end()) {
      p->adam_m = m->second.data;
      p->adam_v = v->second.data;
      p->step_count = static_cast<int64_t>(t->second.data[0]);
    }
  }
}

CheckpointMap snapshot_params(const std::vector<ParamPtr>& params) {
  CheckpointMap map;
  for (const ParamPtr& p : params) {
    auto view = p->value.data();
    map.emplace(p->path,
                CheckpointEntry{p->value.shape(), std::vector<float>(view.begin(), view.end())});
  }
  return map;
}

bool bitwise_equal(const CheckpointMap& a, const CheckpointMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, entry] : a) {
    auto it = b.find(name);
    if (it == b.end()) return false;
    if (!(it->second.shape == entry.shape)) return false;
    if (std::memcmp(entry.data.data(), it->second.data.data(),
                    entry.data.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace qxq
