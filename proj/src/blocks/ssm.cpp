#include "recall/blocks/ssm.hpp"

#include <cmath>
#include <string>

#include "recall/core/ops.hpp"

namespace recall {
namespace {

template <class Real>
Real decay(Real dt, Real a, std::size_t t, std::size_t c) {
  const Real v = std::exp(dt * a);
  if (!std::isfinite(v)) {
    throw NumericError("ssm scan: non-finite decay exp(delta*A) at t=" + std::to_string(t) + ", channel " +
                       std::to_string(c));
  }
  return v;
}

template <class Real>
void check_inputs(const ScanInputs<Real>& in) {
  const std::size_t TE = in.T * in.E, TS = in.T * in.S;
  require(in.delta.size() == TE && in.x.size() == TE, "ssm scan: delta and x must be [T, E]");
  require(in.A.size() == in.E * in.S, "ssm scan: A must be [E, S]");
  require(in.B.size() == TS && in.C.size() == TS, "ssm scan: B and C must be [T, S]");
  require(in.D.size() == in.E, "ssm scan: D must be [E]");
}

}  // namespace

template <class Real>
std::vector<Real> ssm_scan_sequential(const ScanInputs<Real>& in, std::vector<Real>* states) {
  check_inputs(in);
  const std::size_t T = in.T, E = in.E, S = in.S;
  std::vector<Real> h(E * S, Real(0));
  std::vector<Real> y(T * E);
  if (states) states->assign(T * E * S, Real(0));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < E; ++c) {
      const Real dt = in.delta[t * E + c];
      const Real xv = in.x[t * E + c];
      Real acc = 0;
      for (std::size_t s = 0; s < S; ++s) {
        const Real a = decay(dt, in.A[c * S + s], t, c);
        Real& hs = h[c * S + s];
        hs = a * hs + (dt * in.B[t * S + s]) * xv;
        acc += in.C[t * S + s] * hs;
      }
      y[t * E + c] = acc + in.D[c] * xv;
    }
    if (states) std::copy(h.begin(), h.end(), states->begin() + t * E * S);
  }
  return y;
}

template <class Real>
std::vector<Real> ssm_scan_chunked(const ScanInputs<Real>& in, std::size_t chunk, std::vector<Real>* states) {
  require(chunk >= 1, "ssm scan: chunk must be >= 1");
  if (chunk >= in.T) return ssm_scan_sequential(in, states);
  check_inputs(in);
  const std::size_t T = in.T, E = in.E, S = in.S;
  std::vector<Real> carry(E * S, Real(0));
  std::vector<Real> local(E * S), prod(E * S), full(E * S);
  std::vector<Real> y(T * E);
  if (states) states->assign(T * E * S, Real(0));
  for (std::size_t start = 0; start < T; start += chunk) {
    const std::size_t end = std::min(T, start + chunk);
    std::fill(local.begin(), local.end(), Real(0));
    std::fill(prod.begin(), prod.end(), Real(1));
    for (std::size_t t = start; t < end; ++t) {
      for (std::size_t c = 0; c < E; ++c) {
        const Real dt = in.delta[t * E + c];
        const Real xv = in.x[t * E + c];
        Real acc = 0;
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t k = c * S + s;
          const Real a = decay(dt, in.A[k], t, c);
          prod[k] *= a;
          local[k] = a * local[k] + (dt * in.B[t * S + s]) * xv;
          full[k] = prod[k] * carry[k] + local[k];
          acc += in.C[t * S + s] * full[k];
        }
        y[t * E + c] = acc + in.D[c] * xv;
      }
      if (states) std::copy(full.begin(), full.end(), states->begin() + t * E * S);
    }
    carry = full;
  }
  return y;
}

template <class Real>
Var<Real> selective_scan(Var<Real> x, Var<Real> delta, Var<Real> A, Var<Real> Bm, Var<Real> Cm, Var<Real> D,
                         std::size_t chunk) {
  const Shape& sx = x.shape();
  require(sx.size() == 3, "selective_scan: x must be [B, T, E], got " + to_string(sx));
  const std::size_t Bn = sx[0], T = sx[1], E = sx[2];
  require(delta.shape() == sx, "selective_scan: delta must match x");
  require(A.shape().size() == 2 && A.shape()[0] == E, "selective_scan: A must be [E, S]");
  const std::size_t S = A.shape()[1];
  require(Bm.shape() == Shape{Bn, T, S} && Cm.shape() == Shape{Bn, T, S}, "selective_scan: B and C must be [B, T, S]");
  require(D.shape() == Shape{E}, "selective_scan: D must be [E]");
  Tape<Real>& tape = *x.tape;
  const auto& xv = tape.value_vec(x.id);
  const auto& dv = tape.value_vec(delta.id);
  const auto& av = tape.value_vec(A.id);
  const auto& bv = tape.value_vec(Bm.id);
  const auto& cv = tape.value_vec(Cm.id);
  const auto& Dv = tape.value_vec(D.id);
  const bool keep = tape.grad_enabled();
  std::vector<Real> y(Bn * T * E);
  std::vector<Real> states;
  if (keep) states.resize(Bn * T * E * S);
  std::vector<Real> one;
  for (std::size_t b = 0; b < Bn; ++b) {
    ScanInputs<Real> in;
    in.T = T;
    in.E = E;
    in.S = S;
    in.delta = std::span<const Real>(dv.data() + b * T * E, T * E);
    in.x = std::span<const Real>(xv.data() + b * T * E, T * E);
    in.A = av;
    in.B = std::span<const Real>(bv.data() + b * T * S, T * S);
    in.C = std::span<const Real>(cv.data() + b * T * S, T * S);
    in.D = Dv;
    auto yb = chunk == 0 ? ssm_scan_sequential(in, keep ? &one : nullptr)
                         : ssm_scan_chunked(in, chunk, keep ? &one : nullptr);
    std::copy(yb.begin(), yb.end(), y.begin() + b * T * E);
    if (keep) std::copy(one.begin(), one.end(), states.begin() + b * T * E * S);
  }
  const int ix = x.id, id = delta.id, ia = A.id, ib = Bm.id, ic = Cm.id, iD = D.id;
  return tape.record(
      "selective_scan", sx, std::move(y), {ix, id, ia, ib, ic, iD},
      [=, states = std::move(states)](Tape<Real>& tp, int self) {
        const auto& gy = tp.grad(self);
        const auto& xv = tp.value_vec(ix);
        const auto& dv = tp.value_vec(id);
        const auto& av = tp.value_vec(ia);
        const auto& bv = tp.value_vec(ib);
        const auto& cv = tp.value_vec(ic);
        const auto& Dv = tp.value_vec(iD);
        std::vector<Real>* gx = tp.requires_grad(ix) ? &tp.grad(ix) : nullptr;
        std::vector<Real>* gd = tp.requires_grad(id) ? &tp.grad(id) : nullptr;
        std::vector<Real>* ga = tp.requires_grad(ia) ? &tp.grad(ia) : nullptr;
        std::vector<Real>* gb = tp.requires_grad(ib) ? &tp.grad(ib) : nullptr;
        std::vector<Real>* gc = tp.requires_grad(ic) ? &tp.grad(ic) : nullptr;
        std::vector<Real>* gD = tp.requires_grad(iD) ? &tp.grad(iD) : nullptr;
        std::vector<Real> carry(E * S);
        for (std::size_t b = 0; b < Bn; ++b) {
          std::fill(carry.begin(), carry.end(), Real(0));
          for (std::size_t tt = T; tt-- > 0;) {
            const std::size_t row = b * T + tt;
            const Real* h = states.data() + row * E * S;
            const Real* hprev = tt > 0 ? states.data() + (row - 1) * E * S : nullptr;
            for (std::size_t c = 0; c < E; ++c) {
              const Real g = gy[row * E + c];
              const Real dt = dv[row * E + c];
              const Real x0 = xv[row * E + c];
              if (gD) (*gD)[c] += g * x0;
              Real gx_acc = g * Dv[c];
              Real gdt_acc = 0;
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t k = c * S + s;
                const Real dh = g * cv[row * S + s] + carry[k];
                if (gc) (*gc)[row * S + s] += g * h[k];
                const Real a = std::exp(dt * av[k]);
                const Real hp = hprev ? hprev[k] : Real(0);
                const Real da = dh * hp;
                gdt_acc += da * a * av[k] + dh * bv[row * S + s] * x0;
                if (ga) (*ga)[k] += da * a * dt;
                if (gb) (*gb)[row * S + s] += dh * dt * x0;
                gx_acc += dh * dt * bv[row * S + s];
                carry[k] = dh * a;
              }
              if (gx) (*gx)[row * E + c] += gx_acc;
              if (gd) (*gd)[row * E + c] += gdt_acc;
            }
          }
        }
      });
}

template <class Real>
Var<Real> ssm_block_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x) {
  const std::size_t E = cfg.inner_dim(), S = cfg.ssm_state_dim, R = cfg.dt_rank();
  const bool v2 = cfg.effective_ssm_variant() == SsmVariant::mamba2;
  Var<Real> h = ops::rms_norm(x, p(prefix + "ssm.norm"));
  Var<Real> uz = ops::matmul(h, p(prefix + "ssm.in_proj"));
  Var<Real> u = ops::slice_last(uz, 0, E);
  Var<Real> z = ops::slice_last(uz, E, 2 * E);
  u = ops::silu(ops::causal_conv1d(u, p(prefix + "ssm.conv_kernel"), p(prefix + "ssm.conv_bias")));
  Var<Real> dbc = ops::matmul(u, p(prefix + "ssm.x_proj"));
  Var<Real> dt_low = ops::slice_last(dbc, 0, R);
  Var<Real> Bm = ops::slice_last(dbc, R, R + S);
  Var<Real> Cm = ops::slice_last(dbc, R + S, R + 2 * S);
  Var<Real> dt = ops::softplus(ops::add_bias(ops::matmul(dt_low, p(prefix + "ssm.dt_proj")), p(prefix + "ssm.dt_bias")));
  Var<Real> A = ops::scale(ops::exp(p(prefix + "ssm.A_log")), Real(-1));
  if (v2) {
    const std::size_t heads = cfg.n_heads, per_head = E / heads;
    dt = ops::repeat_last(dt, per_head);
    A = ops::reshape(ops::repeat_last(ops::reshape(A, Shape{1, heads}), per_head * S), Shape{E, S});
  }
  Var<Real> y = selective_scan(u, dt, A, Bm, Cm, p(prefix + "ssm.D"), cfg.scan_chunk);
  y = ops::mul(y, ops::silu(z));
  return ops::matmul(y, p(prefix + "ssm.out_proj"));
}

template <class Real>
Var<Real> ssm_block_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x) {
  return ops::add(x, ssm_block_delta(p, cfg, prefix, x));
}

#define RECALL_INSTANTIATE_SSM(R)                                                                        \
  template std::vector<R> ssm_scan_sequential(const ScanInputs<R>&, std::vector<R>*);                    \
  template std::vector<R> ssm_scan_chunked(const ScanInputs<R>&, std::size_t, std::vector<R>*);          \
  template Var<R> selective_scan(Var<R>, Var<R>, Var<R>, Var<R>, Var<R>, Var<R>, std::size_t);           \
  template Var<R> ssm_block_delta(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);      \
  template Var<R> ssm_block_forward(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);

RECALL_INSTANTIATE_SSM(float)
RECALL_INSTANTIATE_SSM(double)

}  // namespace recall
