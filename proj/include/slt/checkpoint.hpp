#pragma once

#include <string>
#include <utility>
#include <vector>

#include "slt/nn.hpp"
#include "slt/tensor.hpp"

namespace slt::ckpt {

// Checkpoint layout (all integers little-endian):
//   magic, format version, stage tag, parameter count,
//   then per parameter: name, stage byte, decay_exempt byte, rank, dims,
//   raw doubles. Round-trips bit-exactly.
struct CheckpointInfo {
  std::string stage_tag;  // "experts" or "fusion"
  int64_t param_count = 0;
};

void save_checkpoint(const nn::ParamStore& store, const std::string& stage_tag,
                     const std::string& path);

// Creates the stored parameters in `store` (names must not already exist).
CheckpointInfo load_checkpoint(nn::ParamStore& store, const std::string& path);

// Header only.
CheckpointInfo peek_checkpoint(const std::string& path);

// FNV-1a over the raw value bytes of all parameters in the given stage, in
// name order. Used to verify the frozen-experts contract.
uint64_t params_digest(const nn::ParamStore& store, nn::Stage stage);

// Named-tensor container (the lattice format consumed by `decode`).
void save_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors,
                  const std::string& path);
std::vector<std::pair<std::string, Tensor>> load_tensors(
    const std::string& path);

}  // namespace slt::ckpt
