#include "slt/checkpoint.hpp"

#include <fstream>

#include "slt/binio.hpp"
#include "slt/error.hpp"

namespace slt::ckpt {

namespace {
constexpr uint64_t kCkptMagic = 0x3154504b43544c53ull;  // "SLTCKPT1"
}  // namespace

void save_checkpoint(const nn::ParamStore& store, const std::string& stage_tag,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write checkpoint: " + path);
  binio::write_u64(os, kCkptMagic);
  binio::write_u64(os, 1);  // format version
  binio::write_bytes(os, stage_tag);
  binio::write_u64(os, store.map().size());
  for (const auto& [name, p] : store.map()) {
    binio::write_bytes(os, name);
    binio::write_u64(os, static_cast<uint64_t>(p.stage));
    binio::write_u64(os, p.decay_exempt ? 1 : 0);
    binio::write_u64(os, p.value.rank());
    for (int64_t d : p.value.shape()) binio::write_i64(os, d);
    binio::write_f64s(os, p.value.vec());
  }
}

CheckpointInfo load_checkpoint(nn::ParamStore& store,
                               const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint: " + path);
  if (binio::read_u64(is) != kCkptMagic) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  const uint64_t version = binio::read_u64(is);
  if (version != 1) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  CheckpointInfo info;
  info.stage_tag = binio::read_bytes(is);
  info.param_count = static_cast<int64_t>(binio::read_u64(is));
  for (int64_t i = 0; i < info.param_count; ++i) {
    const std::string name = binio::read_bytes(is);
    const auto stage = static_cast<nn::Stage>(binio::read_u64(is));
    const bool decay_exempt = binio::read_u64(is) != 0;
    const int64_t rank = static_cast<int64_t>(binio::read_u64(is));
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = binio::read_i64(is);
    Tensor value(dims);
    for (int64_t k = 0; k < value.size(); ++k) value[k] = binio::read_f64(is);
    store.create(name, std::move(value), decay_exempt, stage);
  }
  return info;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint: " + path);
  if (binio::read_u64(is) != kCkptMagic) {
    throw ValidationError("not a checkpoint file: " + path);
  }
  (void)binio::read_u64(is);
  CheckpointInfo info;
  info.stage_tag = binio::read_bytes(is);
  info.param_count = static_cast<int64_t>(binio::read_u64(is));
  return info;
}

uint64_t params_digest(const nn::ParamStore& store, nn::Stage stage) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, p] : store.map()) {
    if (p.stage != stage) continue;
    h = binio::fnv1a(name.data(), name.size(), h);
    h = binio::fnv1a(p.value.data(),
                     static_cast<size_t>(p.value.size()) * sizeof(double), h);
  }
  return h;
}

void save_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors,
                  const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write tensor file: " + path);
  binio::write_u64(os, kCkptMagic);
  binio::write_u64(os, 1);
  binio::write_bytes(os, "tensors");
  binio::write_u64(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    binio::write_bytes(os, name);
    binio::write_u64(os, 0);
    binio::write_u64(os, 0);
    binio::write_u64(os, t.rank());
    for (int64_t d : t.shape()) binio::write_i64(os, d);
    binio::write_f64s(os, t.vec());
  }
}

std::vector<std::pair<std::string, Tensor>> load_tensors(
    const std::string& path) {
  nn::ParamStore store;
  const CheckpointInfo info = load_checkpoint(store, path);
  (void)info;
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, p] : store.map()) {
    out.emplace_back(name, p.value);
  }
  return out;
}

}  // namespace slt::ckpt
