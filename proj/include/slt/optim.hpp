#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "slt/nn.hpp"
#include "slt/tensor.hpp"

namespace slt::optim {

// AdamW with decoupled weight decay, bias correction and global-norm
// gradient clipping applied before the update.
struct OptimizerState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int64_t step = 0;

  std::map<std::string, Tensor> m;  // first moments, keyed like the store
  std::map<std::string, Tensor> v;  // second moments
};

// Clips the global gradient norm over non-frozen parameters to clip_norm
// (no-op when clip_norm <= 0). Returns the pre-clip norm. With a scope
// prefix, only parameters whose name starts with it participate.
double clip_global_norm(nn::ParamStore& store, double clip_norm,
                        const std::string& scope = "");

// One AdamW update. Throws NumericalError on a non-finite gradient; frozen
// parameters are untouched; decay_exempt parameters skip weight decay.
// A non-empty scope restricts the update (and the clip) to parameters whose
// name starts with that prefix, so branches can own separate optimizers
// over one shared store.
void adamw_step(nn::ParamStore& store, OptimizerState& opt,
                const std::string& scope = "");

// Linear warmup 0 -> lr_max over `warmup` steps, then cosine to lr_min at
// total_steps. Continuous at step == warmup.
double lr_schedule(int64_t step, int64_t warmup, double lr_max, double lr_min,
                   int64_t total_steps);

}  // namespace slt::optim
