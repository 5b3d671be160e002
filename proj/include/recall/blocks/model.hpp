#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recall/blocks/attention.hpp"
#include "recall/blocks/ssm.hpp"

namespace recall {

// Row-major [batch, length] token ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
};

// Two-stream layer with one learnable scalar gate alpha (`<prefix>gate`):
//   normal:   y = x + (ssm(x) + tanh(alpha) * attn(x))
//   reversed: y = x + (attn(x) + tanh(alpha) * ssm(x))
// Each stream has its own parameters; the residual is applied once.
template <class Real>
Var<Real> twostream_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x,
                            bool reversed);

// embedding -> scheduled blocks -> final norm -> output projection. Returns logits [B, T, V].
template <class Real>
Var<Real> model_forward(Tape<Real>& tape, const ModelConfig& cfg, ParameterSet<Real>& params,
                        const TokenBatch& tokens);

template <class Real>
Var<Real> model_forward(BoundParams<Real>& params, const ModelConfig& cfg, const TokenBatch& tokens);

// Inference-only logits [B, T, V].
template <class Real>
Tensor<Real> model_logits(const ModelConfig& cfg, ParameterSet<Real>& params, const TokenBatch& tokens);

}  // namespace recall
