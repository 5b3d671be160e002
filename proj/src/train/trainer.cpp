#include "recall/train/trainer.hpp"

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "recall/analysis/geometry.hpp"
#include "recall/core/errors.hpp"
#include "recall/core/ops.hpp"
#include "recall/core/rng.hpp"
#include "recall/train/evaluate.hpp"
#include "recall/train/optim.hpp"

namespace recall {

SeedStreams::SeedStreams(std::uint64_t root)
    : data(derive_seed(root, "data")),
      init(derive_seed(root, "init")),
      val(derive_seed(root, "val")),
      eval(derive_seed(root, "eval")) {}

std::string to_string(TrainStatus s) {
  switch (s) {
    case TrainStatus::threshold_reached: return "threshold_reached";
    case TrainStatus::budget_exhausted: return "budget_exhausted";
    case TrainStatus::diverged: return "diverged";
    case TrainStatus::numeric_failure: return "numeric_failure";
  }
  return "unknown";
}

namespace {

// Each step allocates and frees the same large tape buffers. Keeping them on
// the heap instead of fresh mmaps avoids page-fault churn (~15% of step time).
void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
}

std::vector<Example> training_batch(const TaskConfig& task, std::uint64_t stream, std::size_t step,
                                    std::size_t batch_size) {
  std::vector<Example> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(generate_example(derive_seed(stream, step * batch_size + i), task));
  return batch;
}

double loss_and_grad(const ModelConfig& model, ParameterSet<float>& params, const std::vector<Example>& examples) {
  const Batch b = make_batch(examples);
  params.zero_grad();
  Tape<float> tape;
  const auto logits = model_forward(tape, model, params, b.tokens);
  const auto loss = ops::cross_entropy_masked(logits, b.targets, b.mask);
  require(!loss.empty_mask, "train: batch has no supervised positions");
  tape.backward(loss.loss);
  return static_cast<double>(loss.loss.item());
}

}  // namespace

TrainResult train(const ModelConfig& model, const TaskConfig& task, const TrainConfig& cfg, const TrainHooks& hooks) {
  check_config(model);
  std::vector<std::string> errs;
  for (auto& e : validate(task)) errs.push_back("task: " + e);
  for (auto& e : validate(cfg)) errs.push_back("train: " + e);
  if (model.vocab_size != task.vocab().size())
    errs.push_back("model.vocab_size " + std::to_string(model.vocab_size) + " does not match the task vocabulary (" +
                   std::to_string(task.vocab().size()) + ")");
  if (!errs.empty()) {
    std::string msg = "invalid training setup:";
    for (auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  tune_allocator();
  const auto t0 = std::chrono::steady_clock::now();
  const SeedStreams seeds(cfg.seed);
  ParameterSet<float> params = init_parameters(model, seeds.init).cast<float>();
  AdamState<float> adam;
  const auto val = generate_examples(seeds.val, cfg.val_size, task);
  const bool track_positions = task.kind == TaskKind::position && cfg.per_position_samples > 0;
  const std::size_t eval_every = cfg.resolved_eval_every();
  const std::size_t snapshot_every = cfg.resolved_snapshot_every();

  TrainResult result;
  ModelRunner runner(model, params);
  double window_loss = 0;
  std::size_t window_steps = 0;
  double last_norm = 0;

  auto record = [&](std::size_t step) {
    TrainRecord r;
    r.step = step;
    r.examples_seen = step * cfg.batch_size;
    r.lr = lr_at(step, cfg);
    r.train_loss = window_steps ? window_loss / static_cast<double>(window_steps) : result.initial_loss;
    r.grad_norm = last_norm;
    r.val_loss = mean_masked_loss(runner, val);
    r.val_accuracy = string_accuracy(runner, val);
    if (track_positions) r.per_position = per_position_accuracy(runner, task, cfg.per_position_samples, seeds.eval);
    if (model.is_twostream()) r.gates = gate_magnitudes(model, params.cast<double>());
    if (step % snapshot_every == 0 || step == cfg.total_steps) {
      EmbeddingSnapshot snap{step, tensor_cast<double>(params.get(kEmbedName))};
      if (hooks.on_snapshot) r.snapshot = hooks.on_snapshot(snap);
      result.snapshots.push_back(std::move(snap));
    }
    window_loss = 0;
    window_steps = 0;
    if (hooks.on_record) hooks.on_record(r);
    result.records.push_back(r);
    return r;
  };

  {
    // The initial loss is measured on the first training batch, before any update.
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const Batch b = make_batch(training_batch(task, seeds.data, 0, cfg.batch_size));
    result.initial_loss =
        static_cast<double>(ops::cross_entropy_masked(model_forward(tape, model, params, b.tokens), b.targets, b.mask)
                                .loss.item());
  }
  result.status = TrainStatus::budget_exhausted;
  DivergenceMonitor divergence(result.initial_loss, cfg.divergence_factor, cfg.divergence_patience);
  TrainRecord last = record(0);

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    try {
      const double loss = loss_and_grad(model, params, training_batch(task, seeds.data, step - 1, cfg.batch_size));
      if (!std::isfinite(loss)) throw NumericError("train: non-finite loss at step " + std::to_string(step));
      last_norm = adamw_step(params, adam, cfg, lr_at(step, cfg)).grad_norm;
      window_loss += loss;
      ++window_steps;
    } catch (const NumericError& e) {
      result.status = TrainStatus::numeric_failure;
      result.message = e.what();
      result.steps = step;
      break;
    }
    result.steps = step;
    if (step % eval_every != 0 && step % snapshot_every != 0 && step != cfg.total_steps) continue;

    last = record(step);
    if (last.val_accuracy >= cfg.accuracy_threshold) {
      result.status = TrainStatus::threshold_reached;
      break;
    }
    if (divergence.update(last.train_loss)) {
      result.status = TrainStatus::diverged;
      result.message = "training loss above " + format_real(cfg.divergence_factor) + "x the initial loss (" +
                       format_real(result.initial_loss) + ") at " + std::to_string(divergence.strikes()) +
                       " consecutive evaluations";
      break;
    }
  }

  result.final_accuracy = last.val_accuracy;
  result.params = params.cast<double>();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrainLogWriter::TrainLogWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open training log '" + path.string() + "' for writing");
  out_ << kHeader << '\n';
  out_.flush();
}

void TrainLogWriter::append(const TrainRecord& r) {
  out_ << r.step << ',' << r.examples_seen << ',' << format_real(r.lr) << ',' << format_real(r.train_loss) << ','
       << format_real(r.grad_norm) << ',' << format_real(r.val_loss) << ',' << format_real(r.val_accuracy) << ',';
  for (std::size_t i = 0; i < r.per_position.size(); ++i) out_ << (i ? ";" : "") << format_real(r.per_position[i]);
  out_ << ',';
  for (std::size_t i = 0; i < r.gates.size(); ++i) out_ << (i ? ";" : "") << format_real(r.gates[i]);
  out_ << ',' << r.snapshot << '\n';
  out_.flush();
}

nlohmann::ordered_json to_json(const TrainRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["examples_seen"] = r.examples_seen;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["grad_norm"] = r.grad_norm;
  j["val_loss"] = r.val_loss;
  j["val_accuracy"] = r.val_accuracy;
  if (!r.per_position.empty()) j["per_position"] = r.per_position;
  if (!r.gates.empty()) j["gates"] = r.gates;
  if (!r.snapshot.empty()) j["snapshot"] = r.snapshot;
  return j;
}

nlohmann::ordered_json to_json(const TrainResult& r) {
  nlohmann::ordered_json j;
  j["status"] = to_string(r.status);
  if (!r.message.empty()) j["message"] = r.message;
  j["steps"] = r.steps;
  j["initial_loss"] = r.initial_loss;
  j["final_accuracy"] = r.final_accuracy;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& rec : r.records) j["records"].push_back(to_json(rec));
  return j;
}

}  // namespace recall
