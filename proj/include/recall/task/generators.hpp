#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recall/task/example.hpp"

namespace recall {

struct TaskConfig {
  TaskKind kind = TaskKind::ngram;
  std::size_t n_regular = 26;

  // n-gram retrieval: context length uniform in [min_len, max_len].
  std::size_t n = 2;
  std::size_t k = 3;
  Layout layout = Layout::suffix;
  std::size_t min_len = 5;
  std::size_t max_len = 32;
  // Segments holding one query occurrence each (1 = unique query).
  std::size_t duplicates = 1;

  // Position retrieval: context length, and the number of position tokens in
  // the vocabulary (0 = seq_len). Evaluating longer contexts needs more.
  std::size_t seq_len = 16;
  std::size_t max_positions = 0;

  Vocabulary vocab() const;
};

std::vector<std::string> validate(const TaskConfig& cfg);
nlohmann::ordered_json to_json(const TaskConfig& cfg);
TaskConfig task_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors);

// n-gram retrieval. The context is split into `duplicates` equal segments
// (length rounded down to a multiple), each holding exactly one query
// occurrence followed by its own k-gram; all k-grams are pairwise distinct.
// Layout suffix: context SEP query; prefix: query SEP context.
// Placement is by rejection sampling, then constructive repair; GenerationError
// if both fail.
Example gen_ngram_example(std::uint64_t seed, const TaskConfig& cfg);

// Position retrieval: seq_len distinct regular tokens, query = token at a
// uniformly drawn 1-based index l (or `forced_l` when nonzero), response [p_l, EOS].
Example gen_position_example(std::uint64_t seed, const TaskConfig& cfg, std::size_t forced_l = 0);

// Dispatches on cfg.kind.
Example generate_example(std::uint64_t seed, const TaskConfig& cfg);

// Per-example seeds: derive_seed(stream_seed, index).
std::vector<Example> generate_examples(std::uint64_t stream_seed, std::size_t count, const TaskConfig& cfg);

}  // namespace recall
