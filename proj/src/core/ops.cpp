#include "recall/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace recall::ops {
namespace {

// Row-major products. Each output element accumulates its terms in ascending
// order of the reduction index, starting from its current value; tiling only
// changes which elements are in flight, never the per-element order. Results
// are therefore independent of buffer alignment and bitwise reproducible.
constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 32;

// C[m, n] += A[m, k] * B[k, n]
template <class Real>
void gemm_nn(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + kTileRows <= m; i += kTileRows) {
    std::size_t j = 0;
    for (; j + kTileCols <= n; j += kTileCols) {
      Real acc[kTileRows][kTileCols];
      for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] = C[(i + r) * n + j + c];
      for (std::size_t p = 0; p < k; ++p) {
        const Real* b = B + p * n + j;
        for (std::size_t r = 0; r < kTileRows; ++r) {
          const Real av = A[(i + r) * k + p];
          for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] += av * b[c];
        }
      }
      for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t c = 0; c < kTileCols; ++c) C[(i + r) * n + j + c] = acc[r][c];
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
      Real* c = C + (i + r) * n;
      const Real* a = A + (i + r) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = a[p];
        const Real* b = B + p * n;
        for (std::size_t jj = j; jj < n; ++jj) c[jj] += av * b[jj];
      }
    }
  }
  for (; i < m; ++i) {
    Real* c = C + i * n;
    const Real* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[p];
      const Real* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[k, n] += A[m, k]^T * G[m, n]
template <class Real>
void gemm_tn(const Real* A, const Real* G, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t p = 0;
  for (; p + kTileRows <= k; p += kTileRows) {
    std::size_t j = 0;
    for (; j + kTileCols <= n; j += kTileCols) {
      Real acc[kTileRows][kTileCols];
      for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] = C[(p + r) * n + j + c];
      for (std::size_t i = 0; i < m; ++i) {
        const Real* g = G + i * n + j;
        for (std::size_t r = 0; r < kTileRows; ++r) {
          const Real av = A[i * k + p + r];
          for (std::size_t c = 0; c < kTileCols; ++c) acc[r][c] += av * g[c];
        }
      }
      for (std::size_t r = 0; r < kTileRows; ++r)
        for (std::size_t c = 0; c < kTileCols; ++c) C[(p + r) * n + j + c] = acc[r][c];
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = 0; r < kTileRows; ++r) {
        const Real av = A[i * k + p + r];
        Real* c = C + (p + r) * n;
        const Real* g = G + i * n;
        for (std::size_t jj = j; jj < n; ++jj) c[jj] += av * g[jj];
      }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const Real* g = G + i * n;
    for (std::size_t pp = p; pp < k; ++pp) {
      const Real av = A[i * k + pp];
      Real* c = C + pp * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * g[j];
    }
  }
}

template <class Real>
void same_shape(Var<Real> a, Var<Real> b, const char* op) {
  require(a.tape == b.tape, std::string(op) + ": operands on different tapes");
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Elementwise unary op; df(x, y) is the local derivative given input and output.
template <class Real, class F, class DF>
Var<Real> unary(const char* name, Var<Real> a, F f, DF df) {
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id;
  return t.record(name, a.shape(), std::move(y), {ia}, [ia, df](Tape<Real>& tp, int self) {
    const auto& x = tp.value_vec(ia);
    const auto& y = tp.value_vec(self);
    const auto& gy = tp.grad(self);
    auto& gx = tp.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

template <class Real>
Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  same_shape(a, b, "add");
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  const auto& z = t.value_vec(b.id);
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  const int ia = a.id, ib = b.id;
  return t.record("add", a.shape(), std::move(y), {ia, ib}, [ia, ib](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    if (tp.requires_grad(ia)) {
      auto& g = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (tp.requires_grad(ib)) {
      auto& g = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  same_shape(a, b, "sub");
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  const auto& z = t.value_vec(b.id);
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  const int ia = a.id, ib = b.id;
  return t.record("sub", a.shape(), std::move(y), {ia, ib}, [ia, ib](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    if (tp.requires_grad(ia)) {
      auto& g = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (tp.requires_grad(ib)) {
      auto& g = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
    }
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  same_shape(a, b, "mul");
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  const auto& z = t.value_vec(b.id);
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const int ia = a.id, ib = b.id;
  return t.record("mul", a.shape(), std::move(y), {ia, ib}, [ia, ib](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    const auto& x = tp.value_vec(ia);
    const auto& z = tp.value_vec(ib);
    if (tp.requires_grad(ia)) {
      auto& g = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * z[i];
    }
    if (tp.requires_grad(ib)) {
      auto& g = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * x[i];
    }
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  return unary<Real>("scale", a, [c](Real x) { return c * x; }, [c](Real, Real) { return c; });
}

template <class Real>
Var<Real> add_bias(Var<Real> a, Var<Real> bias) {
  require(bias.shape().size() == 1 && bias.shape()[0] == a.cols(),
          "add_bias: bias " + to_string(bias.shape()) + " does not match last axis of " + to_string(a.shape()));
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  const auto& b = t.value_vec(bias.id);
  const std::size_t n = a.cols();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + b[i % n];
  const int ia = a.id, ib = bias.id;
  return t.record("add_bias", a.shape(), std::move(y), {ia, ib}, [ia, ib, n](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    if (tp.requires_grad(ia)) {
      auto& g = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (tp.requires_grad(ib)) {
      auto& g = tp.grad(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % n] += gy[i];
    }
  });
}

template <class Real>
Var<Real> mul_scalar(Var<Real> a, Var<Real> s) {
  require(s.size() == 1, "mul_scalar: scalar operand must have one element");
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  const Real c = t.value_vec(s.id)[0];
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * c;
  const int ia = a.id, is = s.id;
  return t.record("mul_scalar", a.shape(), std::move(y), {ia, is}, [ia, is](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    const auto& x = tp.value_vec(ia);
    const Real c = tp.value_vec(is)[0];
    if (tp.requires_grad(ia)) {
      auto& g = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * c;
    }
    if (tp.requires_grad(is)) {
      Real acc = 0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * x[i];
      tp.grad(is)[0] += acc;
    }
  });
}

template <class Real>
Var<Real> exp(Var<Real> a) {
  return unary<Real>("exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <class Real>
Var<Real> log(Var<Real> a) {
  return unary<Real>("log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

template <class Real>
Var<Real> silu(Var<Real> a) {
  return unary<Real>(
      "silu", a, [](Real x) { return x * sigmoid_scalar(x); },
      [](Real x, Real) {
        const Real s = sigmoid_scalar(x);
        return s * (Real(1) + x * (Real(1) - s));
      });
}

template <class Real>
Var<Real> sigmoid(Var<Real> a) {
  return unary<Real>("sigmoid", a, [](Real x) { return sigmoid_scalar(x); },
                     [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Var<Real> tanh(Var<Real> a) {
  return unary<Real>("tanh", a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Var<Real> softplus(Var<Real> a) {
  return unary<Real>(
      "softplus", a, [](Real x) { return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](Real x, Real) { return sigmoid_scalar(x); });
}

template <class Real>
Var<Real> gelu(Var<Real> a) {
  constexpr Real k = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real c = Real(0.044715);
  return unary<Real>(
      "gelu", a, [](Real x) { return Real(0.5) * x * (Real(1) + std::tanh(k * (x + c * x * x * x))); },
      [](Real x, Real) {
        const Real th = std::tanh(k * (x + c * x * x * x));
        return Real(0.5) * (Real(1) + th) + Real(0.5) * x * (Real(1) - th * th) * k * (Real(1) + Real(3) * c * x * x);
      });
}

template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  require(a.tape == b.tape, "matmul: operands on different tapes");
  const Shape& sb = b.shape();
  require(sb.size() == 2, "matmul: right operand must be 2-D, got " + to_string(sb));
  require(!a.shape().empty() && a.cols() == sb[0],
          "matmul: inner extents differ, " + to_string(a.shape()) + " x " + to_string(sb));
  const std::size_t m = a.rows(), k = sb[0], n = sb[1];
  Tape<Real>& t = *a.tape;
  std::vector<Real> y(m * n, Real(0));
  gemm_nn(t.value_vec(a.id).data(), t.value_vec(b.id).data(), y.data(), m, k, n);
  Shape out = a.shape();
  out.back() = n;
  const int ia = a.id, ib = b.id;
  return t.record("matmul", std::move(out), std::move(y), {ia, ib}, [ia, ib, m, k, n](Tape<Real>& tp, int self) {
    const Real* g = tp.grad(self).data();
    if (tp.requires_grad(ia)) {
      // dA = G * B^T, computed against an explicit transpose of B.
      const auto& bv = tp.value_vec(ib);
      std::vector<Real> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
      gemm_nn(g, bt.data(), tp.grad(ia).data(), m, n, k);
    }
    if (tp.requires_grad(ib)) gemm_tn(tp.value_vec(ia).data(), g, tp.grad(ib).data(), m, k, n);
  });
}

template <class Real>
Var<Real> rms_norm(Var<Real> x, Var<Real> weight, double eps) {
  const std::size_t n = x.cols();
  require(weight.shape().size() == 1 && weight.shape()[0] == n,
          "rms_norm: weight " + to_string(weight.shape()) + " does not match last axis of " + to_string(x.shape()));
  Tape<Real>& t = *x.tape;
  const auto& xv = t.value_vec(x.id);
  const auto& w = t.value_vec(weight.id);
  const std::size_t rows = x.rows();
  std::vector<Real> y(xv.size());
  std::vector<Real> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * n;
    Real ms = 0;
    for (std::size_t j = 0; j < n; ++j) ms += row[j] * row[j];
    ms /= Real(n);
    inv[r] = Real(1) / std::sqrt(ms + Real(eps));
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = row[j] * inv[r] * w[j];
  }
  const int ix = x.id, iw = weight.id;
  return t.record("rms_norm", x.shape(), std::move(y), {ix, iw},
                  [ix, iw, n, rows, inv = std::move(inv)](Tape<Real>& tp, int self) {
                    const auto& xv = tp.value_vec(ix);
                    const auto& w = tp.value_vec(iw);
                    const auto& gy = tp.grad(self);
                    const bool gx_on = tp.requires_grad(ix), gw_on = tp.requires_grad(iw);
                    std::vector<Real>* gx = gx_on ? &tp.grad(ix) : nullptr;
                    std::vector<Real>* gw = gw_on ? &tp.grad(iw) : nullptr;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const Real* row = xv.data() + r * n;
                      const Real* g = gy.data() + r * n;
                      Real dot = 0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const Real xhat = row[j] * inv[r];
                        if (gw) (*gw)[j] += g[j] * xhat;
                        dot += g[j] * w[j] * xhat;
                      }
                      if (gx) {
                        dot /= Real(n);
                        for (std::size_t j = 0; j < n; ++j) {
                          const Real xhat = row[j] * inv[r];
                          (*gx)[r * n + j] += inv[r] * (g[j] * w[j] - xhat * dot);
                        }
                      }
                    }
                  });
}

template <class Real>
Var<Real> embedding(Var<Real> table, std::span<const std::int32_t> ids, const Shape& lead_shape) {
  const Shape& st = table.shape();
  require(st.size() == 2, "embedding: table must be 2-D");
  require(numel(lead_shape) == ids.size(), "embedding: lead shape does not match id count");
  const std::size_t vocab = st[0], dim = st[1];
  Tape<Real>& t = *table.tape;
  const auto& tv = t.value_vec(table.id);
  std::vector<Real> y(ids.size() * dim);
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab,
            "embedding: token id " + std::to_string(ids[i]) + " out of range for vocabulary " +
                std::to_string(vocab));
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * dim, dim, y.data() + i * dim);
  }
  Shape out = lead_shape;
  out.push_back(dim);
  const int it = table.id;
  return t.record("embedding", std::move(out), std::move(y), {it},
                  [it, dim, kept = std::move(kept)](Tape<Real>& tp, int self) {
                    const auto& gy = tp.grad(self);
                    auto& g = tp.grad(it);
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                      Real* dst = g.data() + static_cast<std::size_t>(kept[i]) * dim;
                      const Real* src = gy.data() + i * dim;
                      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
                    }
                  });
}

template <class Real>
Var<Real> causal_conv1d(Var<Real> x, Var<Real> kernel, Var<Real> bias) {
  const Shape& sx = x.shape();
  require(sx.size() == 3, "causal_conv1d: input must be [B, T, C], got " + to_string(sx));
  const std::size_t B = sx[0], T = sx[1], C = sx[2];
  require(kernel.shape().size() == 2 && kernel.shape()[0] == C, "causal_conv1d: kernel must be [C, W]");
  require(bias.shape() == Shape{C}, "causal_conv1d: bias must be [C]");
  const std::size_t W = kernel.shape()[1];
  Tape<Real>& t = *x.tape;
  const auto& xv = t.value_vec(x.id);
  const auto& kv = t.value_vec(kernel.id);
  const auto& bv = t.value_vec(bias.id);
  std::vector<Real> y(xv.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ti = 0; ti < T; ++ti) {
      Real* out = y.data() + (b * T + ti) * C;
      for (std::size_t c = 0; c < C; ++c) out[c] = bv[c];
      for (std::size_t j = 0; j < W; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti) - static_cast<std::ptrdiff_t>(W - 1 - j);
        if (src < 0) continue;
        const Real* in = xv.data() + (b * T + static_cast<std::size_t>(src)) * C;
        for (std::size_t c = 0; c < C; ++c) out[c] += kv[c * W + j] * in[c];
      }
    }
  }
  const int ix = x.id, ik = kernel.id, ib = bias.id;
  return t.record("causal_conv1d", sx, std::move(y), {ix, ik, ib},
                  [ix, ik, ib, B, T, C, W](Tape<Real>& tp, int self) {
                    const auto& gy = tp.grad(self);
                    const auto& xv = tp.value_vec(ix);
                    const auto& kv = tp.value_vec(ik);
                    std::vector<Real>* gx = tp.requires_grad(ix) ? &tp.grad(ix) : nullptr;
                    std::vector<Real>* gk = tp.requires_grad(ik) ? &tp.grad(ik) : nullptr;
                    std::vector<Real>* gb = tp.requires_grad(ib) ? &tp.grad(ib) : nullptr;
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t ti = 0; ti < T; ++ti) {
                        const Real* g = gy.data() + (b * T + ti) * C;
                        if (gb)
                          for (std::size_t c = 0; c < C; ++c) (*gb)[c] += g[c];
                        for (std::size_t j = 0; j < W; ++j) {
                          const std::ptrdiff_t src =
                              static_cast<std::ptrdiff_t>(ti) - static_cast<std::ptrdiff_t>(W - 1 - j);
                          if (src < 0) continue;
                          const std::size_t off = (b * T + static_cast<std::size_t>(src)) * C;
                          for (std::size_t c = 0; c < C; ++c) {
                            if (gk) (*gk)[c * W + j] += g[c] * xv[off + c];
                            if (gx) (*gx)[off + c] += g[c] * kv[c * W + j];
                          }
                        }
                      }
                    }
                  });
}

template <class Real>
Var<Real> transpose(Var<Real> a) {
  const Shape& s = a.shape();
  require(s.size() == 2, "transpose: expected 2-D tensor, got " + to_string(s));
  const std::size_t m = s[0], n = s[1];
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  const int ia = a.id;
  return t.record("transpose", Shape{n, m}, std::move(y), {ia}, [ia, m, n](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    auto& g = tp.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[j * m + i];
  });
}

template <class Real>
Var<Real> reshape(Var<Real> a, Shape shape) {
  require(numel(shape) == a.size(), "reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  Tape<Real>& t = *a.tape;
  const int ia = a.id;
  return t.record("reshape", std::move(shape), t.value_vec(ia), {ia}, [ia](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    auto& g = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
  });
}

template <class Real>
Var<Real> slice_last(Var<Real> a, std::size_t begin, std::size_t end) {
  const std::size_t n = a.cols();
  require(begin < end && end <= n, "slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                       ") invalid for last extent " + std::to_string(n));
  const std::size_t w = end - begin, rows = a.rows();
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  std::vector<Real> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data() + r * n + begin, w, y.data() + r * w);
  Shape out = a.shape();
  out.back() = w;
  const int ia = a.id;
  return t.record("slice_last", std::move(out), std::move(y), {ia}, [ia, rows, n, w, begin](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    auto& g = tp.grad(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * n + begin + j] += gy[r * w + j];
  });
}

template <class Real>
Var<Real> concat_last(const std::vector<Var<Real>>& parts) {
  require(!parts.empty(), "concat_last: no operands");
  Tape<Real>& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::vector<std::size_t> widths;
  std::vector<int> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.tape == &t && p.rows() == rows, "concat_last: leading extents differ");
    Shape lead = p.shape();
    lead.pop_back();
    Shape lead0 = parts.front().shape();
    lead0.pop_back();
    require(lead == lead0, "concat_last: leading shapes differ");
    widths.push_back(p.cols());
    ids.push_back(p.id);
    total += p.cols();
  }
  std::vector<Real> y(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& x = t.value_vec(ids[k]);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data() + r * widths[k], widths[k], y.data() + r * total + off);
    off += widths[k];
  }
  Shape out = parts.front().shape();
  out.back() = total;
  return t.record("concat_last", std::move(out), std::move(y), ids,
                  [ids, widths, rows, total](Tape<Real>& tp, int self) {
                    const auto& gy = tp.grad(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) {
                        auto& g = tp.grad(ids[k]);
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += gy[r * total + off + j];
                      }
                      off += widths[k];
                    }
                  });
}

template <class Real>
Var<Real> repeat_last(Var<Real> a, std::size_t factor) {
  require(factor >= 1, "repeat_last: factor must be >= 1");
  const std::size_t n = a.cols(), rows = a.rows();
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  std::vector<Real> y(x.size() * factor);
  for (std::size_t i = 0; i < x.size(); ++i) std::fill_n(y.data() + i * factor, factor, x[i]);
  Shape out = a.shape();
  if (out.empty()) out.push_back(1);
  out.back() = n * factor;
  (void)rows;
  const int ia = a.id;
  return t.record("repeat_last", std::move(out), std::move(y), {ia}, [ia, factor](Tape<Real>& tp, int self) {
    const auto& gy = tp.grad(self);
    auto& g = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      Real acc = 0;
      for (std::size_t j = 0; j < factor; ++j) acc += gy[i * factor + j];
      g[i] += acc;
    }
  });
}

template <class Real>
Var<Real> softmax(Var<Real> x, std::size_t axis) {
  const Shape& s = x.shape();
  require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " invalid for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tape<Real>& t = *x.tape;
  const auto& xv = t.value_vec(x.id);
  std::vector<Real> y(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      Real total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const Real e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= total;
    }
  }
  const int ix = x.id;
  return t.record("softmax", s, std::move(y), {ix}, [ix, outer, inner, len](Tape<Real>& tp, int self) {
    const auto& y = tp.value_vec(self);
    const auto& gy = tp.grad(self);
    auto& g = tp.grad(ix);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += gy[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += y[idx] * (gy[idx] - dot);
        }
      }
    }
  });
}

template <class Real>
Var<Real> sum(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const auto& x = t.value_vec(a.id);
  Real acc = 0;
  for (Real v : x) acc += v;
  const int ia = a.id;
  return t.record("sum", Shape{1}, std::vector<Real>{acc}, {ia}, [ia](Tape<Real>& tp, int self) {
    const Real gy = tp.grad(self)[0];
    auto& g = tp.grad(ia);
    for (auto& v : g) v += gy;
  });
}

template <class Real>
Var<Real> mean(Var<Real> a) {
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), Real(1) / Real(a.size()));
}

template <class Real>
MaskedLoss<Real> cross_entropy_masked(Var<Real> logits, std::span<const std::int32_t> targets,
                                      std::span<const std::uint8_t> mask) {
  const std::size_t V = logits.cols(), N = logits.rows();
  require(targets.size() == N && mask.size() == N, "cross_entropy_masked: targets/mask length must equal row count " +
                                                       std::to_string(N));
  Tape<Real>& t = *logits.tape;
  const auto& z = t.value_vec(logits.id);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < N; ++i) {
    if (!mask[i]) continue;
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < V,
            "cross_entropy_masked: target id " + std::to_string(targets[i]) + " out of range for V=" +
                std::to_string(V));
    rows.push_back(i);
  }
  MaskedLoss<Real> result;
  result.counted = rows.size();
  result.empty_mask = rows.empty();
  // Accumulate in double so the 32-bit loss is not dominated by summation error.
  double total = 0;
  for (std::size_t r : rows) {
    const Real* row = z.data() + r * V;
    Real mx = *std::max_element(row, row + V);
    double s = 0;
    for (std::size_t j = 0; j < V; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    total += static_cast<double>(mx) + std::log(s) - static_cast<double>(row[targets[r]]);
  }
  const double denom = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  const int il = logits.id;
  result.loss = t.record("cross_entropy_masked", Shape{1}, std::vector<Real>{static_cast<Real>(total / denom)}, {il},
                         [il, V, denom, rows = std::move(rows), tgt = std::move(tgt)](Tape<Real>& tp, int self) {
                           const Real gy = tp.grad(self)[0];
                           const auto& z = tp.value_vec(il);
                           auto& g = tp.grad(il);
                           const Real w = gy / static_cast<Real>(denom);
                           for (std::size_t r : rows) {
                             const Real* row = z.data() + r * V;
                             Real* gr = g.data() + r * V;
                             const Real mx = *std::max_element(row, row + V);
                             Real s = 0;
                             for (std::size_t j = 0; j < V; ++j) s += std::exp(row[j] - mx);
                             for (std::size_t j = 0; j < V; ++j) gr[j] += w * std::exp(row[j] - mx) / s;
                             gr[tgt[r]] -= w;
                           }
                         });
  return result;
}

#define RECALL_INSTANTIATE_OPS(R)                                                                   \
  template Var<R> add(Var<R>, Var<R>);                                                              \
  template Var<R> sub(Var<R>, Var<R>);                                                              \
  template Var<R> mul(Var<R>, Var<R>);                                                              \
  template Var<R> scale(Var<R>, R);                                                                 \
  template Var<R> add_bias(Var<R>, Var<R>);                                                         \
  template Var<R> mul_scalar(Var<R>, Var<R>);                                                       \
  template Var<R> exp(Var<R>);                                                                      \
  template Var<R> log(Var<R>);                                                                      \
  template Var<R> silu(Var<R>);                                                                     \
  template Var<R> sigmoid(Var<R>);                                                                  \
  template Var<R> tanh(Var<R>);                                                                     \
  template Var<R> softplus(Var<R>);                                                                 \
  template Var<R> gelu(Var<R>);                                                                     \
  template Var<R> matmul(Var<R>, Var<R>);                                                           \
  template Var<R> rms_norm(Var<R>, Var<R>, double);                                                 \
  template Var<R> embedding(Var<R>, std::span<const std::int32_t>, const Shape&);                   \
  template Var<R> causal_conv1d(Var<R>, Var<R>, Var<R>);                                            \
  template Var<R> transpose(Var<R>);                                                                \
  template Var<R> reshape(Var<R>, Shape);                                                           \
  template Var<R> slice_last(Var<R>, std::size_t, std::size_t);                                     \
  template Var<R> concat_last(const std::vector<Var<R>>&);                                          \
  template Var<R> repeat_last(Var<R>, std::size_t);                                                 \
  template Var<R> softmax(Var<R>, std::size_t);                                                     \
  template Var<R> sum(Var<R>);                                                                      \
  template Var<R> mean(Var<R>);                                                                     \
  template MaskedLoss<R> cross_entropy_masked(Var<R>, std::span<const std::int32_t>,                \
                                              std::span<const std::uint8_t>);

RECALL_INSTANTIATE_OPS(float)
RECALL_INSTANTIATE_OPS(double)

}  // namespace recall::ops
