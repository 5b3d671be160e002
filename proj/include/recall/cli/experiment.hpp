#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "recall/analysis/geometry.hpp"
#include "recall/blocks/config.hpp"
#include "recall/task/generators.hpp"
#include "recall/train/config.hpp"

namespace recall {

inline constexpr int kArtifactFormatVersion = 1;

struct EvalPlan {
  // Empty: derived from the task, base x {1, 1.5, 2, 3, 4} with base = max_len (n-gram) or seq_len
  // (position; capped by the position tokens and n_regular).
  std::vector<std::size_t> extrapolation_lengths;
  std::size_t extrapolation_samples = 200;
  // Empty: {2, 3, 4, 10} for the n-gram task, nothing for the position task.
  std::vector<std::size_t> duplicate_s;
  std::size_t duplicate_samples = 200;
  std::vector<std::size_t> knn_ks{1, 2, 4, 8};
  Metric knn_metric = Metric::cosine;
  // Acceptance gate on the final validation accuracy; 0 disables it.
  double min_accuracy = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  // Run directory; relative paths resolve against the output root. Empty: the name.
  std::string output_dir;
  // One run per seed; each overrides train.seed.
  std::vector<std::uint64_t> seeds{0};
  ModelConfig model;
  TaskConfig task;
  TrainConfig train;
  EvalPlan eval;
};

// Defaults filled in (derived lengths, vocabulary size). Idempotent.
ExperimentConfig resolve(ExperimentConfig cfg);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Collects every problem across all sections; throws ConfigError listing them.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
// Comment-tolerant JSON (// and /* */ comments).
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json parse_config_text(const std::string& text, const std::string& origin);

// Output root: $RECALL_OUTPUT_ROOT if set, else "runs".
std::filesystem::path output_root();
std::filesystem::path experiment_dir(const ExperimentConfig& cfg);
std::filesystem::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  bool ok = false;             // every stage completed
  bool accepted = true;        // min_accuracy gate (true when disabled)
  std::string status;          // train status or failed stage
  double final_accuracy = 0;
  double train_seconds = 0;
};

// Stages operate on one seed directory. Each writes its artifacts and merges
// its file list into report.json.
RunOutcome train_stage(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);
void eval_stage(const std::filesystem::path& dir);
void analyze_stage(const std::filesystem::path& dir);

// generate -> train -> eval -> analyze for every seed into fresh directories.
// A stage failure leaves partial artifacts plus failure.json and is reported
// in the outcome; configuration problems throw ConfigError before any output.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg);
std::vector<RunOutcome> run_experiment(const std::filesystem::path& config_path);

}  // namespace recall
