#include "recall/task/dataset.hpp"

#include <fstream>

namespace recall {

void write_jsonl(std::ostream& os, const std::vector<Example>& examples) {
  for (const auto& e : examples) os << to_json(e).dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_jsonl(os, examples);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace recall
