#pragma once

#include <filesystem>

#include "json.hpp"
#include "recall/blocks/params.hpp"

namespace recall {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: 8-byte magic "RCLCKPT\0", u32 format version, u64 header length,
// UTF-8 JSON header, then each tensor as little-endian float64 in header order.
// The header carries the model config echo, caller-supplied metadata and
// {name, shape, decay, offset} per tensor.
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelConfig model;
  nlohmann::ordered_json meta;
  ParameterSet<double> params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ParameterSet<double>& params,
                     const nlohmann::ordered_json& meta = nlohmann::ordered_json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace recall
