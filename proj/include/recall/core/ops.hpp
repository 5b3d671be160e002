#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recall/core/tape.hpp"

// Differentiable primitives. Shapes are explicit: the only implicit expansion
// is over leading (batch) extents, e.g. matmul([..., k], [k, n]) and
// add_bias([..., n], [n]).
namespace recall::ops {

template <class Real> Var<Real> add(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> sub(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> mul(Var<Real> a, Var<Real> b);
template <class Real> Var<Real> scale(Var<Real> a, Real c);
// [..., n] + [n]
template <class Real> Var<Real> add_bias(Var<Real> a, Var<Real> bias);
// [...] * s where s has exactly one element.
template <class Real> Var<Real> mul_scalar(Var<Real> a, Var<Real> s);

template <class Real> Var<Real> exp(Var<Real> a);
template <class Real> Var<Real> log(Var<Real> a);
template <class Real> Var<Real> silu(Var<Real> a);
template <class Real> Var<Real> sigmoid(Var<Real> a);
template <class Real> Var<Real> tanh(Var<Real> a);
template <class Real> Var<Real> softplus(Var<Real> a);
// tanh approximation, as in GPT-NeoX.
template <class Real> Var<Real> gelu(Var<Real> a);

// [..., k] x [k, n] -> [..., n]
template <class Real> Var<Real> matmul(Var<Real> a, Var<Real> b);

// Root-mean-square normalization over the last axis with learnable gain [n].
template <class Real> Var<Real> rms_norm(Var<Real> x, Var<Real> weight, double eps = 1e-6);

// Gathers rows of table [V, D]. Output shape is lead_shape + [D].
template <class Real>
Var<Real> embedding(Var<Real> table, std::span<const std::int32_t> ids, const Shape& lead_shape);

// Depthwise causal convolution over time. x [B, T, C], kernel [C, W], bias [C].
// y[b,t,c] = bias[c] + sum_j kernel[c,j] * x[b, t-(W-1)+j, c], zero-padded on the left.
template <class Real> Var<Real> causal_conv1d(Var<Real> x, Var<Real> kernel, Var<Real> bias);

// 2-D transpose.
template <class Real> Var<Real> transpose(Var<Real> a);
template <class Real> Var<Real> reshape(Var<Real> a, Shape shape);
// Columns [begin, end) of the last axis.
template <class Real> Var<Real> slice_last(Var<Real> a, std::size_t begin, std::size_t end);
template <class Real> Var<Real> concat_last(const std::vector<Var<Real>>& parts);
// Each element of the last axis repeated `factor` times consecutively.
template <class Real> Var<Real> repeat_last(Var<Real> a, std::size_t factor);

template <class Real> Var<Real> softmax(Var<Real> x, std::size_t axis);
template <class Real> Var<Real> sum(Var<Real> a);
template <class Real> Var<Real> mean(Var<Real> a);

template <class Real>
struct MaskedLoss {
  Var<Real> loss;
  // Set when no position is masked in; the loss is then 0.
  bool empty_mask = false;
  std::size_t counted = 0;
};

// Mean negative log-likelihood over masked-in rows of logits [..., V].
template <class Real>
MaskedLoss<Real> cross_entropy_masked(Var<Real> logits, std::span<const std::int32_t> targets,
                                      std::span<const std::uint8_t> mask);

}  // namespace recall::ops
