#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace recall {

enum class TaskKind { ngram, position };
enum class Layout { suffix, prefix };

std::string to_string(TaskKind k);
std::string to_string(Layout l);
TaskKind parse_task_kind(const std::string& s);
Layout parse_layout(const std::string& s);

// Token id layout: regular tokens 0..n_regular-1, then SEP, EOS, then the
// position tokens p_1..p_L.
struct Vocabulary {
  std::size_t n_regular = 0;
  std::size_t n_positions = 0;

  std::int32_t sep() const { return static_cast<std::int32_t>(n_regular); }
  std::int32_t eos() const { return static_cast<std::int32_t>(n_regular + 1); }
  // 1-based index l -> id of p_l.
  std::int32_t position(std::size_t l) const;
  std::size_t size() const { return n_regular + 2 + n_positions; }

  bool is_regular(std::int32_t id) const { return id >= 0 && static_cast<std::size_t>(id) < n_regular; }
  bool is_position(std::int32_t id) const {
    return id >= static_cast<std::int32_t>(n_regular + 2) && static_cast<std::size_t>(id) < size();
  }
  // Inverse of position(): p_l -> l, 0 for any other id.
  std::size_t position_index(std::int32_t id) const { return is_position(id) ? id - n_regular - 1 : 0; }
};

struct ExampleMeta {
  TaskKind task = TaskKind::ngram;
  Layout variant = Layout::suffix;
  std::size_t n = 0, k = 0;
  // Context sequence length.
  std::size_t L = 0;
  // 1-based start of the (first) query occurrence in the context.
  std::size_t l = 0;
  std::size_t s = 1;
  // One k-gram per segment; candidates[0] is the training target.
  std::vector<std::vector<std::int32_t>> candidates;
};

// One prompt/response pair. The model reads prompt ++ response and is scored
// only on predicting the response tokens.
struct Example {
  std::vector<std::int32_t> prompt;
  std::vector<std::int32_t> response;
  ExampleMeta meta;

  // Teacher-forcing view: input = (prompt ++ response) without its last token,
  // target = the same stream shifted left by one, mask true exactly where the
  // target is a response token.
  std::vector<std::int32_t> input() const;
  std::vector<std::int32_t> target() const;
  std::vector<std::uint8_t> mask() const;
  std::size_t length() const { return prompt.size() + response.size() - 1; }
};

// One JSON object per example, fields in order: input, target, mask, prompt_length, meta.
nlohmann::ordered_json to_json(const Example& e);
Example example_from_json(const nlohmann::json& j);

}  // namespace recall
