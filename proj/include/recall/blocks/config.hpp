#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace recall {

enum class Family { transformer, mamba, mamba2, hybrid_interleaved, hybrid_twostream, hybrid_twostream_reversed };
enum class PosMode { rope, nope };
enum class SsmVariant { mamba, mamba2 };
enum class BlockKind { attn, ssm, twostream };

std::string to_string(Family f);
std::string to_string(PosMode p);
std::string to_string(SsmVariant v);
std::string to_string(BlockKind k);
Family parse_family(const std::string& s);
PosMode parse_pos_mode(const std::string& s);
SsmVariant parse_ssm_variant(const std::string& s);

struct ModelConfig {
  Family family = Family::transformer;
  std::size_t n_layers = 2;
  std::size_t model_dim = 64;
  // Attention heads; for the mamba2 parameterization also the number of SSM heads.
  std::size_t n_heads = 4;
  PosMode pos_mode = PosMode::rope;
  std::size_t ssm_state_dim = 16;
  // SSM blocks per attention block. Set only for hybrid_interleaved, 0 otherwise.
  std::size_t interleave_ratio = 0;
  double gate_init = 0.0;
  double rope_base = 10000.0;
  std::size_t vocab_size = 0;
  // SSM parameterization used by hybrids; implied by family for mamba/mamba2.
  SsmVariant ssm_variant = SsmVariant::mamba;
  std::size_t ssm_expand = 2;
  std::size_t conv_width = 4;
  std::size_t mlp_ratio = 4;
  // 0 runs the sequential scan, otherwise the chunked scan with this chunk length.
  std::size_t scan_chunk = 0;

  bool has_attention() const;
  bool has_ssm() const;
  bool is_twostream() const;
  SsmVariant effective_ssm_variant() const;
  std::size_t head_dim() const { return model_dim / n_heads; }
  std::size_t inner_dim() const { return ssm_expand * model_dim; }
  // Rank of the low-rank step-size projection, ceil(model_dim / 16).
  std::size_t dt_rank() const { return (model_dim + 15) / 16; }
};

// Every violated invariant, not just the first.
std::vector<std::string> validate(const ModelConfig& cfg);
// Throws ConfigError listing every violation.
void check_config(const ModelConfig& cfg);

using LayerSchedule = std::vector<BlockKind>;

// transformer: ATTN x n; mamba/mamba2: SSM x n; hybrid_interleaved: (SSM x N, ATTN) repeated;
// two-stream families: TWOSTREAM x n.
LayerSchedule build_layer_schedule(const ModelConfig& cfg);

// Serialization emits family-specific fields only when relevant.
nlohmann::ordered_json to_json(const ModelConfig& cfg);
// Collects every problem into `errors` (unknown keys, irrelevant fields, bad values).
ModelConfig model_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors);

}  // namespace recall
