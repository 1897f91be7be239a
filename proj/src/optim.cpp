#include "slt/optim.hpp"

#include <cmath>

#include "slt/error.hpp"

namespace slt::optim {

namespace {

bool in_scope(const std::string& name, const std::string& scope) {
  return scope.empty() || name.rfind(scope, 0) == 0;
}

}  // namespace

double clip_global_norm(nn::ParamStore& store, double clip_norm,
                        const std::string& scope) {
  double sq = 0.0;
  for (auto& [name, p] : store.map()) {
    if (p.frozen || !in_scope(name, scope)) continue;
    for (int64_t i = 0; i < p.grad.size(); ++i) sq += p.grad[i] * p.grad[i];
  }
  const double norm = std::sqrt(sq);
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double s = clip_norm / norm;
    for (auto& [name, p] : store.map()) {
      if (p.frozen || !in_scope(name, scope)) continue;
      for (int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] *= s;
    }
  }
  return norm;
}

void adamw_step(nn::ParamStore& store, OptimizerState& opt,
                const std::string& scope) {
  for (auto& [name, p] : store.map()) {
    if (p.frozen || !in_scope(name, scope)) continue;
    if (!p.grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter '" + name + "'");
    }
  }
  clip_global_norm(store, opt.clip_norm, scope);
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (auto& [name, p] : store.map()) {
    if (p.frozen || !in_scope(name, scope)) continue;
    Tensor& m = opt.m.try_emplace(name, Tensor::zeros(p.value.shape()))
                    .first->second;
    Tensor& v = opt.v.try_emplace(name, Tensor::zeros(p.value.shape()))
                    .first->second;
    const double wd = p.decay_exempt ? 0.0 : opt.weight_decay;
    for (int64_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -=
          opt.lr * (mhat / (std::sqrt(vhat) + opt.eps) + wd * p.value[i]);
    }
  }
}

double lr_schedule(int64_t step, int64_t warmup, double lr_max, double lr_min,
                   int64_t total_steps) {
  if (total_steps <= warmup) {
    throw ValidationError("lr_schedule: total_steps must exceed warmup");
  }
  if (step < 0) throw ValidationError("lr_schedule: negative step");
  if (step < warmup) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (step >= total_steps) return lr_min;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * progress));
}

}  // namespace slt::optim
