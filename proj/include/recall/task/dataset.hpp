#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "recall/task/example.hpp"

namespace recall {

// JSON Lines: one example object per line, see to_json(const Example&).
void write_jsonl(std::ostream& os, const std::vector<Example>& examples);
void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

}  // namespace recall
