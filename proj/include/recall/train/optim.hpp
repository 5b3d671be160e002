#pragma once

#include <vector>

#include "recall/blocks/params.hpp"
#include "recall/train/config.hpp"

namespace recall {

template <class Real>
struct AdamState {
  std::vector<std::vector<Real>> m, v;
  std::size_t step = 0;
};

struct StepReport {
  double grad_norm = 0;  // before clipping
  double clip_scale = 1;
  double lr = 0;
};

// One AdamW update on the gradients stored in `params`:
// global-norm clipping to max_grad_norm, then bias-corrected moments, then
// decoupled weight decay on parameters flagged for decay.
// A non-finite gradient raises NumericError naming the parameter.
template <class Real>
StepReport adamw_step(ParameterSet<Real>& params, AdamState<Real>& state, const TrainConfig& cfg, double lr);

}  // namespace recall
