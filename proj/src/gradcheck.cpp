#include "slt/gradcheck.hpp"

#include <cmath>

namespace slt {

GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  const std::function<void()>& compute_grads,
                                  nn::ParamStore& store, double h) {
  compute_grads();
  GradCheckResult res;
  for (auto& [name, p] : store.map()) {
    if (p.frozen) continue;
    for (int64_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double f_plus = loss_fn();
      p.value[i] = saved - h;
      const double f_minus = loss_fn();
      p.value[i] = saved;
      const double g_fd = (f_plus - f_minus) / (2.0 * h);
      const double g_ad = p.grad[i];
      const double rel = std::abs(g_ad - g_fd) /
                         std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
      ++res.coords_checked;
      auto [it, inserted] = res.per_param.try_emplace(name, rel);
      if (!inserted && rel > it->second) it->second = rel;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace slt
