#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "recall/core/tensor.hpp"

namespace recall {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::ordered_json read_json(const std::filesystem::path& path);

// Header-less numeric CSV matrix, as written by matrix_csv.
Tensor<double> read_matrix_csv(const std::filesystem::path& path);

// report.json in a run directory: format version, stage results, and a
// digest for every other file in the directory.
nlohmann::ordered_json load_report(const std::filesystem::path& dir);
void update_report(const std::filesystem::path& dir, const std::string& key, const nlohmann::ordered_json& value);

// Missing artifact: names the stage that produces it.
std::filesystem::path require_artifact(const std::filesystem::path& dir, const std::string& relative,
                                       const std::string& stage);

}  // namespace recall
