#include "recall/task/example.hpp"

#include "recall/core/errors.hpp"

namespace recall {

std::string to_string(TaskKind k) { return k == TaskKind::ngram ? "ngram" : "position"; }
std::string to_string(Layout l) { return l == Layout::suffix ? "suffix" : "prefix"; }

TaskKind parse_task_kind(const std::string& s) {
  if (s == "ngram") return TaskKind::ngram;
  if (s == "position") return TaskKind::position;
  throw ConfigError("unknown task '" + s + "' (expected ngram or position)");
}

Layout parse_layout(const std::string& s) {
  if (s == "suffix") return Layout::suffix;
  if (s == "prefix") return Layout::prefix;
  throw ConfigError("unknown layout '" + s + "' (expected suffix or prefix)");
}

std::int32_t Vocabulary::position(std::size_t l) const {
  require(l >= 1 && l <= n_positions,
          "position index " + std::to_string(l) + " outside 1.." + std::to_string(n_positions));
  return static_cast<std::int32_t>(n_regular + 1 + l);
}

std::vector<std::int32_t> Example::input() const {
  std::vector<std::int32_t> v(prompt);
  v.insert(v.end(), response.begin(), response.end() - 1);
  return v;
}

std::vector<std::int32_t> Example::target() const {
  std::vector<std::int32_t> v(prompt.begin() + 1, prompt.end());
  v.insert(v.end(), response.begin(), response.end());
  return v;
}

std::vector<std::uint8_t> Example::mask() const {
  std::vector<std::uint8_t> m(length(), 0);
  for (std::size_t i = prompt.size() - 1; i < m.size(); ++i) m[i] = 1;
  return m;
}

nlohmann::ordered_json to_json(const Example& e) {
  nlohmann::ordered_json meta;
  meta["task"] = to_string(e.meta.task);
  if (e.meta.task == TaskKind::ngram) {
    meta["variant"] = to_string(e.meta.variant);
    meta["n"] = e.meta.n;
    meta["k"] = e.meta.k;
  }
  meta["L"] = e.meta.L;
  meta["l"] = e.meta.l;
  if (e.meta.task == TaskKind::ngram) {
    meta["s"] = e.meta.s;
    meta["candidates"] = e.meta.candidates;
  }
  nlohmann::ordered_json j;
  j["input"] = e.input();
  j["target"] = e.target();
  j["mask"] = e.mask();
  j["prompt_length"] = e.prompt.size();
  j["meta"] = std::move(meta);
  return j;
}

Example example_from_json(const nlohmann::json& j) {
  Example e;
  const auto input = j.at("input").get<std::vector<std::int32_t>>();
  const auto target = j.at("target").get<std::vector<std::int32_t>>();
  const auto p = j.at("prompt_length").get<std::size_t>();
  if (input.empty() || target.size() != input.size() || p == 0 || p > input.size())
    throw std::runtime_error("example record: inconsistent input/target/prompt_length");
  e.prompt.assign(input.begin(), input.begin() + static_cast<std::ptrdiff_t>(p));
  e.response.assign(target.begin() + static_cast<std::ptrdiff_t>(p - 1), target.end());
  if (j.at("mask").get<std::vector<std::uint8_t>>() != e.mask())
    throw std::runtime_error("example record: mask does not cover exactly the response positions");
  const auto& m = j.at("meta");
  e.meta.task = parse_task_kind(m.at("task").get<std::string>());
  e.meta.L = m.at("L").get<std::size_t>();
  e.meta.l = m.at("l").get<std::size_t>();
  if (e.meta.task == TaskKind::ngram) {
    e.meta.variant = parse_layout(m.at("variant").get<std::string>());
    e.meta.n = m.at("n").get<std::size_t>();
    e.meta.k = m.at("k").get<std::size_t>();
    e.meta.s = m.at("s").get<std::size_t>();
    e.meta.candidates = m.at("candidates").get<std::vector<std::vector<std::int32_t>>>();
  }
  return e;
}

}  // namespace recall
