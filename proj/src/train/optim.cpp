#include "recall/train/optim.hpp"

#include <cmath>

#include "recall/core/errors.hpp"

namespace recall {

template <class Real>
StepReport adamw_step(ParameterSet<Real>& params, AdamState<Real>& state, const TrainConfig& cfg, double lr) {
  auto& items = params.items();
  if (state.m.empty()) {
    for (const auto& p : items) {
      state.m.emplace_back(p.tensor.size(), Real(0));
      state.v.emplace_back(p.tensor.size(), Real(0));
    }
  }
  require(state.m.size() == items.size(), "adamw_step: optimizer state does not match the parameter set");

  double sq = 0;
  for (const auto& p : items) {
    if (!p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad) {
      if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient in parameter '" + p.name + "'");
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  StepReport report;
  report.grad_norm = std::sqrt(sq);
  report.clip_scale = report.grad_norm > cfg.max_grad_norm ? cfg.max_grad_norm / report.grad_norm : 1.0;
  report.lr = lr;

  const std::size_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const Real b1 = static_cast<Real>(cfg.beta1), b2 = static_cast<Real>(cfg.beta2);
  const Real scale = static_cast<Real>(report.clip_scale);
  const Real step_size = static_cast<Real>(lr / bc1);
  const Real inv_sqrt_bc2 = static_cast<Real>(1.0 / std::sqrt(bc2));
  const Real eps = static_cast<Real>(cfg.adam_eps);

  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const Real decay = items[i].decay ? static_cast<Real>(1.0 - lr * cfg.weight_decay) : Real(1);
    const bool has_grad = p.has_grad();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const Real g = has_grad ? p.grad[k] * scale : Real(0);
      m[k] = b1 * m[k] + (Real(1) - b1) * g;
      v[k] = b2 * v[k] + (Real(1) - b2) * g * g;
      p.data[k] *= decay;
      p.data[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
  return report;
}

template StepReport adamw_step(ParameterSet<float>&, AdamState<float>&, const TrainConfig&, double);
template StepReport adamw_step(ParameterSet<double>&, AdamState<double>&, const TrainConfig&, double);

}  // namespace recall
