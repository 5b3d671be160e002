#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace recall {

// Figure tables and their schema versions. Each table's columns are fixed per version.
inline constexpr int kPlotSchemaVersion = 1;
const std::vector<std::string>& plot_kinds();

// One tidy CSV table (with header) of the given kind for a seed run directory.
// A missing upstream artifact raises an error naming the stage that produces it.
std::string emit_plot_data(const std::filesystem::path& run_dir, const std::string& kind);

// Writes every applicable table as <kind>.v<version>.csv into out_dir; returns the kinds written.
std::vector<std::string> emit_all_plots(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

// Aligns the accuracy curves of >= 2 runs that share a task configuration and
// reports examples-to-threshold per run plus their ordering.
nlohmann::ordered_json compare_runs(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace recall
