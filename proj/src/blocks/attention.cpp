#include "recall/blocks/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recall/core/ops.hpp"

namespace recall {
namespace {

// cos/sin table [T, d/2] for angles t * base^(-2i/d).
std::vector<double> rope_table(std::span<const std::size_t> positions, std::size_t d, double base) {
  const std::size_t half = d / 2;
  std::vector<double> table(positions.size() * half * 2);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double inv_freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(positions[t]) * inv_freq;
      table[(t * half + i) * 2] = std::cos(angle);
      table[(t * half + i) * 2 + 1] = std::sin(angle);
    }
  }
  return table;
}

// Rotates `heads` consecutive head vectors of length d in place; sign = -1 rotates backwards.
template <class Real>
void rotate_row(Real* row, std::size_t heads, std::size_t d, const double* cs, double sign) {
  for (std::size_t h = 0; h < heads; ++h) {
    Real* v = row + h * d;
    for (std::size_t i = 0; i < d / 2; ++i) {
      const Real c = static_cast<Real>(cs[2 * i]);
      const Real s = static_cast<Real>(sign * cs[2 * i + 1]);
      const Real a = v[2 * i], b = v[2 * i + 1];
      v[2 * i] = a * c - b * s;
      v[2 * i + 1] = a * s + b * c;
    }
  }
}

}  // namespace

template <class Real>
Tensor<Real> rope_rotate(const Tensor<Real>& x, std::span<const std::size_t> positions, double base) {
  require(x.rank() == 3, "rope_rotate: expected [T, h, d], got " + to_string(x.shape));
  const std::size_t T = x.shape[0], H = x.shape[1], d = x.shape[2];
  if (d % 2 != 0) throw ConfigError("rope_rotate: head dimension " + std::to_string(d) + " is odd");
  require(positions.size() == T, "rope_rotate: need one position per timestep");
  const auto table = rope_table(positions, d, base);
  Tensor<Real> y = x;
  for (std::size_t t = 0; t < T; ++t) rotate_row(y.data.data() + t * H * d, H, d, table.data() + t * d, 1.0);
  return y;
}

template <class Real>
Var<Real> rope(Var<Real> x, std::size_t n_heads, double base) {
  const Shape& s = x.shape();
  require(s.size() == 3, "rope: expected [B, T, D], got " + to_string(s));
  const std::size_t B = s[0], T = s[1], D = s[2];
  require(n_heads > 0 && D % n_heads == 0, "rope: model dim not divisible by heads");
  const std::size_t d = D / n_heads;
  if (d % 2 != 0) throw ConfigError("rope: head dimension " + std::to_string(d) + " is odd");
  std::vector<std::size_t> positions(T);
  for (std::size_t t = 0; t < T; ++t) positions[t] = t;
  auto table = rope_table(positions, d, base);
  Tape<Real>& tape = *x.tape;
  std::vector<Real> y = tape.value_vec(x.id);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) rotate_row(y.data() + (b * T + t) * D, n_heads, d, table.data() + t * d, 1.0);
  const int ix = x.id;
  return tape.record("rope", s, std::move(y), {ix},
                     [ix, B, T, D, n_heads, d, table = std::move(table)](Tape<Real>& tp, int self) {
                       std::vector<Real> g = tp.grad(self);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t t = 0; t < T; ++t)
                           rotate_row(g.data() + (b * T + t) * D, n_heads, d, table.data() + t * d, -1.0);
                       auto& gx = tp.grad(ix);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

template <class Real>
Var<Real> causal_attention(Var<Real> q, Var<Real> k, Var<Real> v, std::size_t n_heads) {
  const Shape& s = q.shape();
  require(s.size() == 3 && k.shape() == s && v.shape() == s, "causal_attention: q, k, v must share shape [B, T, D]");
  const std::size_t B = s[0], T = s[1], D = s[2];
  require(n_heads > 0 && D % n_heads == 0, "causal_attention: model dim not divisible by heads");
  const std::size_t H = n_heads, d = D / H;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d));
  Tape<Real>& tape = *q.tape;
  const auto& qv = tape.value_vec(q.id);
  const auto& kv = tape.value_vec(k.id);
  const auto& vv = tape.value_vec(v.id);
  std::vector<Real> probs(B * H * T * T, Real(0));
  std::vector<Real> out(B * T * D, Real(0));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        Real* p = probs.data() + ((b * H + h) * T + i) * T;
        const Real* qi = qv.data() + (b * T + i) * D + h * d;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const Real* kj = kv.data() + (b * T + j) * D + h * d;
          Real dot = 0;
          for (std::size_t c = 0; c < d; ++c) dot += qi[c] * kj[c];
          p[j] = dot * scale;
          mx = std::max(mx, p[j]);
        }
        Real total = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] = std::exp(p[j] - mx);
          total += p[j];
        }
        Real* oi = out.data() + (b * T + i) * D + h * d;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] /= total;
          const Real* vj = vv.data() + (b * T + j) * D + h * d;
          for (std::size_t c = 0; c < d; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return tape.record(
      "causal_attention", s, std::move(out), {iq, ik, iv},
      [iq, ik, iv, B, T, D, H, d, scale, probs = std::move(probs)](Tape<Real>& tp, int self) {
        const auto& go = tp.grad(self);
        const auto& qv = tp.value_vec(iq);
        const auto& kv = tp.value_vec(ik);
        const auto& vv = tp.value_vec(iv);
        std::vector<Real>* gq = tp.requires_grad(iq) ? &tp.grad(iq) : nullptr;
        std::vector<Real>* gk = tp.requires_grad(ik) ? &tp.grad(ik) : nullptr;
        std::vector<Real>* gv = tp.requires_grad(iv) ? &tp.grad(iv) : nullptr;
        std::vector<Real> dp(T);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < T; ++i) {
              const Real* p = probs.data() + ((b * H + h) * T + i) * T;
              const Real* goi = go.data() + (b * T + i) * D + h * d;
              Real weighted = 0;
              for (std::size_t j = 0; j <= i; ++j) {
                const std::size_t off = (b * T + j) * D + h * d;
                Real dot = 0;
                for (std::size_t c = 0; c < d; ++c) dot += goi[c] * vv[off + c];
                dp[j] = dot;
                weighted += p[j] * dot;
                if (gv)
                  for (std::size_t c = 0; c < d; ++c) (*gv)[off + c] += p[j] * goi[c];
              }
              const std::size_t qoff = (b * T + i) * D + h * d;
              for (std::size_t j = 0; j <= i; ++j) {
                const Real ds = p[j] * (dp[j] - weighted) * scale;
                const std::size_t koff = (b * T + j) * D + h * d;
                if (gq)
                  for (std::size_t c = 0; c < d; ++c) (*gq)[qoff + c] += ds * kv[koff + c];
                if (gk)
                  for (std::size_t c = 0; c < d; ++c) (*gk)[koff + c] += ds * qv[qoff + c];
              }
            }
          }
        }
      });
}

template <class Real>
Var<Real> attention_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x) {
  const std::size_t D = cfg.model_dim;
  Var<Real> h = ops::rms_norm(x, p(prefix + "attn.norm"));
  Var<Real> qkv = ops::add_bias(ops::matmul(h, p(prefix + "attn.qkv")), p(prefix + "attn.qkv_bias"));
  Var<Real> q = ops::slice_last(qkv, 0, D);
  Var<Real> k = ops::slice_last(qkv, D, 2 * D);
  Var<Real> v = ops::slice_last(qkv, 2 * D, 3 * D);
  if (cfg.pos_mode == PosMode::rope) {
    q = rope(q, cfg.n_heads, cfg.rope_base);
    k = rope(k, cfg.n_heads, cfg.rope_base);
  }
  Var<Real> a = causal_attention(q, k, v, cfg.n_heads);
  return ops::add_bias(ops::matmul(a, p(prefix + "attn.out")), p(prefix + "attn.out_bias"));
}

template <class Real>
Var<Real> mlp_delta(BoundParams<Real>& p, const ModelConfig&, const std::string& prefix, Var<Real> x) {
  Var<Real> h = ops::rms_norm(x, p(prefix + "attn.mlp_norm"));
  Var<Real> up = ops::gelu(ops::add_bias(ops::matmul(h, p(prefix + "attn.mlp_up")), p(prefix + "attn.mlp_up_bias")));
  return ops::add_bias(ops::matmul(up, p(prefix + "attn.mlp_down")), p(prefix + "attn.mlp_down_bias"));
}

template <class Real>
Var<Real> attention_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x) {
  return ops::add(x, attention_delta(p, cfg, prefix, x));
}

template <class Real>
Var<Real> attn_block_delta(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x) {
  return ops::add(attention_delta(p, cfg, prefix, x), mlp_delta(p, cfg, prefix, x));
}

#define RECALL_INSTANTIATE_ATTN(R)                                                                      \
  template Tensor<R> rope_rotate(const Tensor<R>&, std::span<const std::size_t>, double);               \
  template Var<R> rope(Var<R>, std::size_t, double);                                                    \
  template Var<R> causal_attention(Var<R>, Var<R>, Var<R>, std::size_t);                                \
  template Var<R> attention_delta(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);     \
  template Var<R> mlp_delta(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);           \
  template Var<R> attention_forward(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);   \
  template Var<R> attn_block_delta(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>);

RECALL_INSTANTIATE_ATTN(float)
RECALL_INSTANTIATE_ATTN(double)

}  // namespace recall
