#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "recall/blocks/model.hpp"
#include "recall/task/generators.hpp"
#include "recall/train/config.hpp"

namespace recall {

// Independent random streams derived from TrainConfig::seed.
struct SeedStreams {
  std::uint64_t data, init, val, eval;
  explicit SeedStreams(std::uint64_t root);
};

// One row per evaluation: every eval_every steps, at snapshot steps and at the
// last step. Step 0 is recorded before any update.
struct TrainRecord {
  std::size_t step = 0;
  std::size_t examples_seen = 0;  // step * batch_size
  double lr = 0;
  double train_loss = 0;  // mean over the steps since the previous record
  double grad_norm = 0;   // last pre-clip norm
  double val_loss = 0;
  double val_accuracy = 0;  // teacher-forced string accuracy
  std::vector<double> per_position;
  std::vector<double> gates;  // |tanh(alpha)| per layer, two-stream models only
  std::string snapshot;  // reference returned by the snapshot hook, if any
};

// Counts consecutive evaluations whose training loss exceeds factor x initial.
class DivergenceMonitor {
 public:
  DivergenceMonitor(double initial_loss, double factor, std::size_t patience)
      : limit_(factor * initial_loss), patience_(patience) {}
  // True once `patience` consecutive losses were above the limit.
  bool update(double loss) {
    strikes_ = loss > limit_ ? strikes_ + 1 : 0;
    return strikes_ >= patience_;
  }
  std::size_t strikes() const { return strikes_; }

 private:
  double limit_;
  std::size_t patience_;
  std::size_t strikes_ = 0;
};

enum class TrainStatus { threshold_reached, budget_exhausted, diverged, numeric_failure };
std::string to_string(TrainStatus s);

struct EmbeddingSnapshot {
  std::size_t step = 0;
  Tensor<double> embed;
};

struct TrainResult {
  TrainStatus status = TrainStatus::budget_exhausted;
  std::string message;
  std::size_t steps = 0;
  double initial_loss = 0;
  double final_accuracy = 0;
  std::vector<TrainRecord> records;
  std::vector<EmbeddingSnapshot> snapshots;
  ParameterSet<double> params;
  double seconds = 0;
};

struct TrainHooks {
  // Called for each record as soon as it is complete.
  std::function<void(const TrainRecord&)> on_record;
  // Called at snapshot steps; the return value is stored as the record's snapshot reference.
  std::function<std::string(const EmbeddingSnapshot&)> on_snapshot;
};

// Next-token training with the masked loss: float32 parameters, AdamW, lr_at
// schedule, periodic validation, stop at accuracy_threshold or budget.
// Deterministic given the three configs.
TrainResult train(const ModelConfig& model, const TaskConfig& task, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Append-only CSV log with a fixed header.
class TrainLogWriter {
 public:
  static constexpr const char* kHeader =
      "step,examples_seen,lr,train_loss,grad_norm,val_loss,val_accuracy,per_position,gates,snapshot";
  explicit TrainLogWriter(const std::filesystem::path& path);
  void append(const TrainRecord& r);

 private:
  std::ofstream out_;
};

std::string format_real(double v);
nlohmann::ordered_json to_json(const TrainRecord& r);
// Final report: status, counts and every record (no parameters).
nlohmann::ordered_json to_json(const TrainResult& r);

}  // namespace recall
