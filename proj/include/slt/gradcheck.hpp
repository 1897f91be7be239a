#pragma once

#include <functional>
#include <map>
#include <string>

#include "slt/nn.hpp"

namespace slt {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t coords_checked = 0;
  std::map<std::string, double> per_param;  // name -> max relative error
};

// Central-difference check of reverse-mode gradients over every coordinate
// of every non-frozen parameter in the store.
//
//   loss_fn       re-evaluates the scalar loss at the store's current values
//                 (must not touch gradients)
//   compute_grads zeroes gradients and runs one forward+backward pass
//
// relative error = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::function<void()>& compute_grads,
                                  nn::ParamStore& store, double h = 1e-5);

}  // namespace slt
