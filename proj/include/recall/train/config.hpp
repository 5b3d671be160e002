#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace recall {

struct TrainConfig {
  double peak_lr = 1e-4;
  double warmup_fraction = 0.1;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
  double accuracy_threshold = 0.95;
  // Validation cadence in steps; 0 = every 1/64 of the budget.
  std::size_t eval_every = 0;
  std::size_t val_size = 10000;
  // Embedding snapshot cadence in steps; 0 = every 25% of the budget.
  std::size_t snapshot_every = 0;
  // Position task only: per-index accuracy at each evaluation, this many samples per index.
  std::size_t per_position_samples = 0;
  // Abort when the training loss exceeds divergence_factor x the initial loss
  // at divergence_patience consecutive evaluations.
  double divergence_factor = 10.0;
  std::size_t divergence_patience = 3;

  std::size_t warmup_steps() const;
  std::size_t resolved_eval_every() const;
  std::size_t resolved_snapshot_every() const;
};

std::vector<std::string> validate(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors);

// Linear warmup 0 -> peak over the first warmup_fraction of steps, then cosine
// decay to exactly 0 at total_steps. Defined for 0 <= step <= total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

}  // namespace recall
