#pragma once

#include <span>
#include <string>
#include <vector>

#include "recall/blocks/bound.hpp"
#include "recall/blocks/config.hpp"

namespace recall {

// One sequence of a selective scan with E channels and state size S:
//   h_t = exp(delta_t * A) (.) h_{t-1} + (delta_t * B_t) x_t,   h_0 = 0
//   y_t = C_t . h_t + D x_t
// delta, x: [T, E]; A: [E, S]; B, C: [T, S]; D: [E].
template <class Real>
struct ScanInputs {
  std::size_t T = 0, E = 0, S = 0;
  std::span<const Real> delta, A, B, C, D, x;
};

// Returns y [T, E]. If `states` is given it receives every h_t, [T, E, S].
// A non-finite decay raises NumericError.
template <class Real>
std::vector<Real> ssm_scan_sequential(const ScanInputs<Real>& in, std::vector<Real>* states = nullptr);

// Same result via independent within-chunk scans from a zero state plus a
// carried cross-chunk state: h_t = P_t (.) h_carry + h_t^local, where P_t is
// the running decay product inside the chunk. chunk >= T takes the
// sequential path.
template <class Real>
std::vector<Real> ssm_scan_chunked(const ScanInputs<Real>& in, std::size_t chunk,
                                   std::vector<Real>* states = nullptr);

// Tape primitive over a batch: x, delta [B, T, E]; A [E, S]; Bm, Cm [B, T, S]; D [E].
// chunk == 0 selects the sequential scan.
template <class Real>
Var<Real> selective_scan(Var<Real> x, Var<Real> delta, Var<Real> A, Var<Real> Bm, Var<Real> Cm, Var<Real> D,
                         std::size_t chunk = 0);

// SSM block update without residual:
//   norm -> in_proj (u, z) -> causal conv -> SiLU -> selective scan -> * SiLU(z) -> out_proj.
// The mamba2 variant ties delta and A to one scalar per head.
template <class Real>
Var<Real> ssm_block_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

// x + ssm_block_delta(x).
template <class Real>
Var<Real> ssm_block_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x);

}  // namespace recall
