#include "recall/blocks/config.hpp"

#include <cmath>
#include <sstream>

#include "recall/core/errors.hpp"
#include "recall/core/json_fields.hpp"

namespace recall {

std::string to_string(Family f) {
  switch (f) {
    case Family::transformer: return "transformer";
    case Family::mamba: return "mamba";
    case Family::mamba2: return "mamba2";
    case Family::hybrid_interleaved: return "hybrid_interleaved";
    case Family::hybrid_twostream: return "hybrid_twostream";
    case Family::hybrid_twostream_reversed: return "hybrid_twostream_reversed";
  }
  return "?";
}

std::string to_string(PosMode p) { return p == PosMode::rope ? "rope" : "nope"; }
std::string to_string(SsmVariant v) { return v == SsmVariant::mamba ? "mamba" : "mamba2"; }

std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::attn: return "ATTN";
    case BlockKind::ssm: return "SSM";
    case BlockKind::twostream: return "TWOSTREAM";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::transformer, Family::mamba, Family::mamba2, Family::hybrid_interleaved,
                   Family::hybrid_twostream, Family::hybrid_twostream_reversed}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown model family '" + s + "'");
}

PosMode parse_pos_mode(const std::string& s) {
  if (s == "rope") return PosMode::rope;
  if (s == "nope") return PosMode::nope;
  throw ConfigError("unknown positional mode '" + s + "' (expected rope or nope)");
}

SsmVariant parse_ssm_variant(const std::string& s) {
  if (s == "mamba") return SsmVariant::mamba;
  if (s == "mamba2") return SsmVariant::mamba2;
  throw ConfigError("unknown ssm variant '" + s + "' (expected mamba or mamba2)");
}

bool ModelConfig::has_attention() const { return family != Family::mamba && family != Family::mamba2; }

bool ModelConfig::has_ssm() const { return family != Family::transformer; }

bool ModelConfig::is_twostream() const {
  return family == Family::hybrid_twostream || family == Family::hybrid_twostream_reversed;
}

SsmVariant ModelConfig::effective_ssm_variant() const {
  if (family == Family::mamba) return SsmVariant::mamba;
  if (family == Family::mamba2) return SsmVariant::mamba2;
  return ssm_variant;
}

std::vector<std::string> validate(const ModelConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.n_layers == 0) errs.push_back("n_layers must be >= 1");
  if (cfg.model_dim == 0) errs.push_back("model_dim must be >= 1");
  if (cfg.vocab_size < 2) errs.push_back("vocab_size must be >= 2");
  const bool needs_heads = cfg.has_attention() || (cfg.has_ssm() && cfg.effective_ssm_variant() == SsmVariant::mamba2);
  if (needs_heads && cfg.n_heads == 0) errs.push_back("n_heads must be >= 1");
  if (cfg.has_attention() && cfg.n_heads > 0) {
    if (cfg.model_dim % cfg.n_heads != 0) {
      errs.push_back("model_dim " + std::to_string(cfg.model_dim) + " is not divisible by n_heads " +
                     std::to_string(cfg.n_heads));
    } else if (cfg.pos_mode == PosMode::rope && cfg.head_dim() % 2 != 0) {
      errs.push_back("rope requires an even head dimension, got " + std::to_string(cfg.head_dim()));
    }
    if (!(cfg.rope_base > 1.0)) errs.push_back("rope_base must be > 1");
    if (cfg.mlp_ratio == 0) errs.push_back("mlp_ratio must be >= 1");
  }
  if (cfg.has_ssm()) {
    if (cfg.ssm_state_dim == 0) errs.push_back("ssm_state_dim must be >= 1");
    if (cfg.ssm_expand == 0) errs.push_back("ssm_expand must be >= 1");
    if (cfg.conv_width == 0) errs.push_back("conv_width must be >= 1");
    if (cfg.effective_ssm_variant() == SsmVariant::mamba2 && cfg.n_heads > 0 &&
        cfg.inner_dim() % cfg.n_heads != 0) {
      errs.push_back("mamba2 inner dimension " + std::to_string(cfg.inner_dim()) +
                     " is not divisible by the number of SSM heads " + std::to_string(cfg.n_heads));
    }
  }
  if (cfg.family == Family::hybrid_interleaved) {
    if (cfg.interleave_ratio == 0) {
      errs.push_back("hybrid_interleaved requires interleave_ratio >= 1");
    } else if (cfg.n_layers % (cfg.interleave_ratio + 1) != 0) {
      errs.push_back("n_layers " + std::to_string(cfg.n_layers) + " is not divisible by interleave_ratio+1 = " +
                     std::to_string(cfg.interleave_ratio + 1));
    }
  } else if (cfg.interleave_ratio != 0) {
    errs.push_back("interleave_ratio is only meaningful for hybrid_interleaved");
  }
  if (!cfg.is_twostream() && cfg.gate_init != 0.0) errs.push_back("gate_init is only meaningful for two-stream models");
  if (!std::isfinite(cfg.gate_init)) errs.push_back("gate_init must be finite");
  return errs;
}

void check_config(const ModelConfig& cfg) {
  const auto errs = validate(cfg);
  if (errs.empty()) return;
  std::ostringstream os;
  os << "invalid model config:";
  for (const auto& e : errs) os << "\n  - " << e;
  throw ConfigError(os.str());
}

LayerSchedule build_layer_schedule(const ModelConfig& cfg) {
  check_config(cfg);
  LayerSchedule s;
  s.reserve(cfg.n_layers);
  switch (cfg.family) {
    case Family::transformer: s.assign(cfg.n_layers, BlockKind::attn); break;
    case Family::mamba:
    case Family::mamba2: s.assign(cfg.n_layers, BlockKind::ssm); break;
    case Family::hybrid_interleaved:
      for (std::size_t g = 0; g < cfg.n_layers / (cfg.interleave_ratio + 1); ++g) {
        for (std::size_t i = 0; i < cfg.interleave_ratio; ++i) s.push_back(BlockKind::ssm);
        s.push_back(BlockKind::attn);
      }
      break;
    case Family::hybrid_twostream:
    case Family::hybrid_twostream_reversed: s.assign(cfg.n_layers, BlockKind::twostream); break;
  }
  return s;
}

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["family"] = to_string(cfg.family);
  j["n_layers"] = cfg.n_layers;
  j["model_dim"] = cfg.model_dim;
  j["vocab_size"] = cfg.vocab_size;
  const bool needs_heads = cfg.has_attention() || cfg.effective_ssm_variant() == SsmVariant::mamba2;
  if (needs_heads) j["n_heads"] = cfg.n_heads;
  if (cfg.has_attention()) {
    j["pos_mode"] = to_string(cfg.pos_mode);
    j["rope_base"] = cfg.rope_base;
    j["mlp_ratio"] = cfg.mlp_ratio;
  }
  if (cfg.has_ssm()) {
    if (cfg.has_attention()) j["ssm_variant"] = to_string(cfg.ssm_variant);
    j["ssm_state_dim"] = cfg.ssm_state_dim;
    j["ssm_expand"] = cfg.ssm_expand;
    j["conv_width"] = cfg.conv_width;
    j["scan_chunk"] = cfg.scan_chunk;
  }
  if (cfg.family == Family::hybrid_interleaved) j["interleave_ratio"] = cfg.interleave_ratio;
  if (cfg.is_twostream()) j["gate_init"] = cfg.gate_init;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
  ModelConfig cfg;
  FieldReader r(j, "model", errors);
  r.read_enum("family", cfg.family, parse_family);
  r.read_enum("pos_mode", cfg.pos_mode, parse_pos_mode);
  r.read_enum("ssm_variant", cfg.ssm_variant, parse_ssm_variant);
  r.read("n_layers", cfg.n_layers);
  r.read("model_dim", cfg.model_dim);
  r.read("vocab_size", cfg.vocab_size);
  r.read("n_heads", cfg.n_heads);
  r.read("rope_base", cfg.rope_base);
  r.read("mlp_ratio", cfg.mlp_ratio);
  r.read("ssm_state_dim", cfg.ssm_state_dim);
  r.read("ssm_expand", cfg.ssm_expand);
  r.read("conv_width", cfg.conv_width);
  r.read("scan_chunk", cfg.scan_chunk);
  r.read("interleave_ratio", cfg.interleave_ratio);
  r.read("gate_init", cfg.gate_init);
  r.finish();
  if (!j.is_object()) return cfg;

  const std::string fam = "family " + to_string(cfg.family);
  r.require_relevant("interleave_ratio", cfg.family == Family::hybrid_interleaved, fam);
  r.require_relevant("gate_init", cfg.is_twostream(), fam);
  r.require_relevant("pos_mode", cfg.has_attention(), fam);
  r.require_relevant("rope_base", cfg.has_attention(), fam);
  r.require_relevant("mlp_ratio", cfg.has_attention(), fam);
  r.require_relevant("ssm_variant", cfg.has_ssm() && cfg.has_attention(), fam);
  r.require_relevant("ssm_state_dim", cfg.has_ssm(), fam);
  r.require_relevant("ssm_expand", cfg.has_ssm(), fam);
  r.require_relevant("conv_width", cfg.has_ssm(), fam);
  r.require_relevant("scan_chunk", cfg.has_ssm(), fam);
  r.require_relevant("n_heads", cfg.has_attention() || cfg.effective_ssm_variant() == SsmVariant::mamba2, fam);

  for (auto& e : validate(cfg)) errors.push_back("model: " + e);
  return cfg;
}

}  // namespace recall
