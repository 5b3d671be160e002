#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recall/blocks/model.hpp"
#include "recall/task/generators.hpp"

namespace recall {

// Right-padded batch for teacher forcing. Padding uses id 0 with mask 0; every
// block is causal, so padding never influences real positions.
struct Batch {
  TokenBatch tokens;
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;
};

Batch make_batch(std::span<const Example> examples);

// Anything that maps a token batch to next-token logits [B, T, V].
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual Tensor<float> logits(const TokenBatch& tokens) = 0;
};

class ModelRunner final : public LanguageModel {
 public:
  ModelRunner(const ModelConfig& cfg, ParameterSet<float>& params) : cfg_(cfg), params_(params) {}
  std::size_t vocab_size() const override { return cfg_.vocab_size; }
  Tensor<float> logits(const TokenBatch& tokens) override { return model_logits(cfg_, params_, tokens); }

 private:
  const ModelConfig& cfg_;
  ParameterSet<float>& params_;
};

// Index of the largest logit; ties resolve to the lowest id.
std::int32_t argmax_row(std::span<const float> row);

inline constexpr std::size_t kEvalBatch = 64;

// Fraction of examples whose every masked-in target token is the argmax under
// teacher forcing (string-level, not token-level).
double string_accuracy(LanguageModel& model, std::span<const Example> examples);

// Mean masked cross-entropy per response token over the examples.
double mean_masked_loss(LanguageModel& model, std::span<const Example> examples);

// Greedy continuation of each prompt: argmax (lowest id on ties), stopping
// after max_new tokens or once `eos` is emitted (eos included). eos < 0 disables stopping.
std::vector<std::vector<std::int32_t>> greedy_decode(LanguageModel& model,
                                                     const std::vector<std::vector<std::int32_t>>& prompts,
                                                     std::size_t max_new, std::int32_t eos);
std::vector<std::int32_t> greedy_decode(LanguageModel& model, const std::vector<std::int32_t>& prompt,
                                        std::size_t max_new, std::int32_t eos);

// Fraction of examples whose greedy continuation equals the response exactly.
double greedy_accuracy(LanguageModel& model, std::span<const Example> examples, std::int32_t eos);

struct LengthAccuracy {
  std::size_t length = 0;
  double accuracy = 0;
  std::size_t n_samples = 0;
};

// Greedy string accuracy on fresh examples at each context length.
// Position task: a length beyond the position vocabulary is a config error.
std::vector<LengthAccuracy> extrapolation_sweep(LanguageModel& model, const TaskConfig& task,
                                                const std::vector<std::size_t>& lengths,
                                                std::size_t samples_per_length, std::uint64_t seed);

// Position task: teacher-forced string accuracy with the query forced to each
// 1-based index l in 1..seq_len, equal samples per index.
std::vector<double> per_position_accuracy(LanguageModel& model, const TaskConfig& task,
                                          std::size_t samples_per_index, std::uint64_t seed);

struct PreferenceResult {
  std::size_t s = 0;
  std::size_t samples = 0;
  std::size_t errors = 0;
  std::vector<std::size_t> counts;  // matches per segment
  double error_rate = 0;
  std::vector<double> preference;  // counts normalized over matched cases
};

// Duplicate-query evaluation: greedy-decode k tokens and attribute the output
// to the segment whose candidate it matches, or count an error.
PreferenceResult duplicate_preference(LanguageModel& model, const TaskConfig& task, std::size_t s,
                                      std::size_t samples, std::uint64_t seed);

struct LossFloor {
  double per_token = 0;  // log V: uniform prediction of one answer token
  double two_token = 0;  // log(V) / 2: answer uniform, EOS mastered
};
LossFloor loss_floor(std::size_t V);

}  // namespace recall
