#include "recall/train/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "recall/core/errors.hpp"
#include "recall/core/json_fields.hpp"

namespace recall {

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
}

std::size_t TrainConfig::resolved_eval_every() const {
  return eval_every != 0 ? eval_every : std::max<std::size_t>(1, total_steps / 64);
}

std::size_t TrainConfig::resolved_snapshot_every() const {
  return snapshot_every != 0 ? snapshot_every : std::max<std::size_t>(1, total_steps / 4);
}

std::vector<std::string> validate(const TrainConfig& c) {
  std::vector<std::string> errs;
  if (!(c.peak_lr > 0) || !std::isfinite(c.peak_lr)) errs.push_back("peak_lr must be > 0");
  if (!(c.warmup_fraction > 0 && c.warmup_fraction < 1)) errs.push_back("warmup_fraction must lie in (0, 1)");
  if (c.total_steps == 0) errs.push_back("total_steps must be >= 1");
  if (c.batch_size == 0) errs.push_back("batch_size must be >= 1");
  if (!(c.beta1 >= 0 && c.beta1 < 1)) errs.push_back("beta1 must lie in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) errs.push_back("beta2 must lie in [0, 1)");
  if (!(c.adam_eps > 0)) errs.push_back("adam_eps must be > 0");
  if (!(c.weight_decay >= 0)) errs.push_back("weight_decay must be >= 0");
  if (!(c.max_grad_norm > 0)) errs.push_back("max_grad_norm must be > 0");
  if (!(c.accuracy_threshold > 0 && c.accuracy_threshold <= 1)) errs.push_back("accuracy_threshold must lie in (0, 1]");
  if (c.val_size == 0) errs.push_back("val_size must be >= 1");
  if (c.per_position_samples != 0 && c.per_position_samples < 30)
    errs.push_back("per_position_samples must be 0 (off) or >= 30");
  if (!(c.divergence_factor > 1)) errs.push_back("divergence_factor must be > 1");
  if (c.divergence_patience == 0) errs.push_back("divergence_patience must be >= 1");
  return errs;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["peak_lr"] = c.peak_lr;
  j["warmup_fraction"] = c.warmup_fraction;
  j["total_steps"] = c.total_steps;
  j["batch_size"] = c.batch_size;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["weight_decay"] = c.weight_decay;
  j["max_grad_norm"] = c.max_grad_norm;
  j["seed"] = c.seed;
  j["accuracy_threshold"] = c.accuracy_threshold;
  j["eval_every"] = c.resolved_eval_every();
  j["val_size"] = c.val_size;
  j["snapshot_every"] = c.resolved_snapshot_every();
  j["per_position_samples"] = c.per_position_samples;
  j["divergence_factor"] = c.divergence_factor;
  j["divergence_patience"] = c.divergence_patience;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
  TrainConfig c;
  FieldReader r(j, "train", errors);
  r.read("peak_lr", c.peak_lr);
  r.read("warmup_fraction", c.warmup_fraction);
  r.read("total_steps", c.total_steps);
  r.read("batch_size", c.batch_size);
  r.read("beta1", c.beta1);
  r.read("beta2", c.beta2);
  r.read("adam_eps", c.adam_eps);
  r.read("weight_decay", c.weight_decay);
  r.read("max_grad_norm", c.max_grad_norm);
  r.read("seed", c.seed);
  r.read("accuracy_threshold", c.accuracy_threshold);
  r.read("eval_every", c.eval_every);
  r.read("val_size", c.val_size);
  r.read("snapshot_every", c.snapshot_every);
  r.read("per_position_samples", c.per_position_samples);
  r.read("divergence_factor", c.divergence_factor);
  r.read("divergence_patience", c.divergence_patience);
  r.finish();
  for (auto& e : validate(c)) errors.push_back("train: " + e);
  return c;
}

double lr_at(std::size_t step, const TrainConfig& c) {
  require(step <= c.total_steps,
          "lr_at: step " + std::to_string(step) + " outside 0.." + std::to_string(c.total_steps));
  const std::size_t warm = c.warmup_steps();
  if (step < warm) return c.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  const std::size_t span = c.total_steps - warm;
  if (span == 0) return 0.0;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return std::max(0.0, 0.5 * c.peak_lr * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace recall
