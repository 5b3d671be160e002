#pragma once

#include <span>
#include <string>

#include "recall/blocks/bound.hpp"
#include "recall/blocks/config.hpp"

namespace recall {

// Rotary embedding of x [T, h, d]: channel pairs (2i, 2i+1) of every head at
// time t are rotated by positions[t] * base^(-2i/d). Position 0 is the identity.
template <class Real>
Tensor<Real> rope_rotate(const Tensor<Real>& x, std::span<const std::size_t> positions, double base);

// Tape primitive: rotary embedding of x [B, T, D] (D = n_heads * d) at positions 0..T-1.
template <class Real>
Var<Real> rope(Var<Real> x, std::size_t n_heads, double base);

// Causal multi-head attention over q, k, v [B, T, D] with scale 1/sqrt(d).
template <class Real>
Var<Real> causal_attention(Var<Real> q, Var<Real> k, Var<Real> v, std::size_t n_heads);

// Attention sublayer without residual: norm -> qkv -> (rope) -> causal attention -> out.
template <class Real>
Var<Real> attention_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

// Feed-forward sublayer without residual: norm -> up -> GELU -> down.
template <class Real>
Var<Real> mlp_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

// x + attention_delta(x).
template <class Real>
Var<Real> attention_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

// Transformer block update with GPT-NeoX parallel residual: attention_delta(x) + mlp_delta(x).
template <class Real>
Var<Real> attn_block_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

}  // namespace recall
