#include "recall/blocks/params.hpp"

#include <cmath>

#include "recall/core/rng.hpp"

namespace recall {
namespace {

constexpr double kInitStd = 0.02;

Tensor<double> normal(Shape shape, Rng& rng, double stddev = kInitStd) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

void add_attention(ParameterSet<double>& ps, const ModelConfig& cfg, const std::string& p, Rng& rng) {
  const std::size_t D = cfg.model_dim, F = cfg.mlp_ratio * D;
  ps.add(p + "attn.norm", Tensor<double>(Shape{D}, 1.0), false);
  ps.add(p + "attn.qkv", normal({D, 3 * D}, rng), true);
  ps.add(p + "attn.qkv_bias", Tensor<double>(Shape{3 * D}), false);
  ps.add(p + "attn.out", normal({D, D}, rng), true);
  ps.add(p + "attn.out_bias", Tensor<double>(Shape{D}), false);
  ps.add(p + "attn.mlp_norm", Tensor<double>(Shape{D}, 1.0), false);
  ps.add(p + "attn.mlp_up", normal({D, F}, rng), true);
  ps.add(p + "attn.mlp_up_bias", Tensor<double>(Shape{F}), false);
  ps.add(p + "attn.mlp_down", normal({F, D}, rng), true);
  ps.add(p + "attn.mlp_down_bias", Tensor<double>(Shape{D}), false);
}

void add_ssm(ParameterSet<double>& ps, const ModelConfig& cfg, const std::string& p, Rng& rng) {
  const std::size_t D = cfg.model_dim, E = cfg.inner_dim(), S = cfg.ssm_state_dim, R = cfg.dt_rank();
  const std::size_t W = cfg.conv_width;
  const bool v2 = cfg.effective_ssm_variant() == SsmVariant::mamba2;
  const std::size_t dt_width = v2 ? cfg.n_heads : E;

  ps.add(p + "ssm.norm", Tensor<double>(Shape{D}, 1.0), false);
  ps.add(p + "ssm.in_proj", normal({D, 2 * E}, rng), true);
  Tensor<double> kernel(Shape{E, W});
  const double bound = 1.0 / std::sqrt(static_cast<double>(W));
  for (auto& v : kernel.data) v = rng.uniform(-bound, bound);
  ps.add(p + "ssm.conv_kernel", std::move(kernel), false);
  ps.add(p + "ssm.conv_bias", Tensor<double>(Shape{E}), false);
  ps.add(p + "ssm.x_proj", normal({E, R + 2 * S}, rng), true);
  ps.add(p + "ssm.dt_proj", normal({R, dt_width}, rng), true);
  Tensor<double> dt_bias(Shape{dt_width});
  for (auto& v : dt_bias.data) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));  // inverse softplus
  }
  ps.add(p + "ssm.dt_bias", std::move(dt_bias), false);
  if (v2) {
    ps.add(p + "ssm.A_log", Tensor<double>(Shape{cfg.n_heads}, 0.0), false);
  } else {
    Tensor<double> a_log(Shape{E, S});
    for (std::size_t c = 0; c < E; ++c)
      for (std::size_t s = 0; s < S; ++s) a_log.at(c, s) = std::log(static_cast<double>(s + 1));
    ps.add(p + "ssm.A_log", std::move(a_log), false);
  }
  ps.add(p + "ssm.D", Tensor<double>(Shape{E}, 1.0), false);
  ps.add(p + "ssm.out_proj", normal({E, D}, rng), true);
}

}  // namespace

std::string layer_prefix(std::size_t i) { return "layers." + std::to_string(i) + "."; }

ParameterSet<double> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  const LayerSchedule schedule = build_layer_schedule(cfg);
  Rng rng(seed);
  ParameterSet<double> ps;
  ps.add(kEmbedName, normal({cfg.vocab_size, cfg.model_dim}, rng), true);
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const std::string p = layer_prefix(i);
    switch (schedule[i]) {
      case BlockKind::attn: add_attention(ps, cfg, p, rng); break;
      case BlockKind::ssm: add_ssm(ps, cfg, p, rng); break;
      case BlockKind::twostream:
        add_ssm(ps, cfg, p, rng);
        add_attention(ps, cfg, p, rng);
        ps.add(p + "gate", Tensor<double>(Shape{1}, cfg.gate_init), false);
        break;
    }
  }
  ps.add("final_norm", Tensor<double>(Shape{cfg.model_dim}, 1.0), false);
  ps.add(kHeadName, normal({cfg.model_dim, cfg.vocab_size}, rng), true);
  return ps;
}

std::size_t count_non_embedding(const ParameterSet<double>& params) {
  std::size_t n = 0;
  for (const auto& p : params.items()) {
    if (p.name == kEmbedName || p.name == kHeadName) continue;
    n += p.tensor.size();
  }
  return n;
}

}  // namespace recall
