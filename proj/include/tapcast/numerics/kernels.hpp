#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/rng.hpp"
#include "tapcast/numerics/tensor.hpp"

// Forward and backward kernels. Backward kernels accumulate (+=) into their
// gradient outputs so that fan-out in the tape sums naturally.
namespace tapcast::kernels {

// C[m×n] (+)= A[m×k] · B[k×n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  std::size_t i = 0;
  // Four rows of C per pass, so each row of B is loaded once per four updates.
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×k] += G[m×n] · B[k×n]ᵀ, via an explicit transpose of B so the inner
// loop is the same contiguous axpy as gemm_nn.
template <typename T>
void gemm_nt_acc(std::size_t m, std::size_t k, std::size_t n, const T* g, const T* b, T* c) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(m, n, k, g, bt.data(), c, true);
}

// C[k×n] += A[m×k]ᵀ · G[m×n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* g, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data().data(), b.data().data(), c.data().data(), false);
  return c;
}

// dA += dC·Bᵀ, dB += Aᵀ·dC. Either output span may be empty to skip it.
template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, std::span<const T> dc,
                     std::span<T> da, std::span<T> db) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (!da.empty()) gemm_nt_acc(m, k, n, dc.data(), b.data().data(), da.data());
  if (!db.empty()) gemm_tn_acc(m, k, n, a.data().data(), dc.data(), db.data());
}

// ---------------------------------------------------------------------------
// Layer normalization over the trailing axis.

template <typename T>
struct LayerNormCache {
  std::vector<T> xhat;
  std::vector<T> rstd;  // one per row
};

template <typename T>
void layer_norm_rows(std::size_t rows, std::size_t d, const T* x, const T* gamma, const T* beta,
                     T eps, T* y, LayerNormCache<T>* cache) {
  if (cache) {
    cache->xhat.resize(rows * d);
    cache->rstd.resize(rows);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    const T rstd = T{1} / std::sqrt(var + eps);
    T* yr = y + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (xr[j] - mean) * rstd;
      if (cache) cache->xhat[r * d + j] = xh;
      yr[j] = xh * gamma[j] + beta[j];
    }
    if (cache) cache->rstd[r] = rstd;
  }
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache = nullptr) {
  const std::size_t d = x.cols();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: feature width " + std::to_string(d) + " vs gamma " +
                         shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
  }
  if (!(eps > T{0})) throw ConfigError("layer_norm: eps must be positive");
  Tensor<T> y(x.shape());
  layer_norm_rows(x.rows(), d, x.data().data(), gamma.data().data(), beta.data().data(), eps,
                  y.data().data(), cache);
  return y;
}

template <typename T>
void layer_norm_backward(std::size_t rows, std::size_t d, const LayerNormCache<T>& cache,
                         const T* gamma, const T* dy, T* dx, T* dgamma, T* dbeta) {
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xh = cache.xhat.data() + r * d;
    const T* dyr = dy + r * d;
    if (dgamma)
      for (std::size_t j = 0; j < d; ++j) dgamma[j] += dyr[j] * xh[j];
    if (dbeta)
      for (std::size_t j = 0; j < d; ++j) dbeta[j] += dyr[j];
    if (!dx) continue;
    T mean_d{0}, mean_dx{0};
    for (std::size_t j = 0; j < d; ++j) {
      dxhat[j] = dyr[j] * gamma[j];
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xh[j];
    }
    mean_d /= static_cast<T>(d);
    mean_dx /= static_cast<T>(d);
    const T rstd = cache.rstd[r];
    T* dxr = dx + r * d;
    for (std::size_t j = 0; j < d; ++j) dxr[j] += rstd * (dxhat[j] - mean_d - xh[j] * mean_dx);
  }
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention for one head. Rows of q/k/v/out are `ld` apart,
// so a head can be addressed inside a wider [p × d_model] buffer.

template <typename T>
void attention_head_forward(std::size_t p, std::size_t pk, std::size_t dh, std::size_t ld,
                            const T* q, const T* k, const T* v, T* out, T* probs, bool causal) {
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  for (std::size_t i = 0; i < p; ++i) {
    T* prow = probs + i * pk;
    const std::size_t visible = causal ? i + 1 : pk;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < visible; ++j) {
      T s{0};
      for (std::size_t c = 0; c < dh; ++c) s += q[i * ld + c] * k[j * ld + c];
      prow[j] = s * scale;
      mx = std::max(mx, prow[j]);
    }
    T z{0};
    for (std::size_t j = 0; j < visible; ++j) {
      prow[j] = std::exp(prow[j] - mx);
      z += prow[j];
    }
    for (std::size_t j = 0; j < visible; ++j) prow[j] /= z;
    for (std::size_t j = visible; j < pk; ++j) prow[j] = T{0};
    T* orow = out + i * ld;
    for (std::size_t c = 0; c < dh; ++c) orow[c] = T{0};
    for (std::size_t j = 0; j < visible; ++j) {
      const T w = prow[j];
      for (std::size_t c = 0; c < dh; ++c) orow[c] += w * v[j * ld + c];
    }
  }
}

template <typename T>
void attention_head_backward(std::size_t p, std::size_t pk, std::size_t dh, std::size_t ld,
                             const T* q, const T* k, const T* v, const T* probs, const T* dout,
                             T* dq, T* dk, T* dv) {
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  std::vector<T> dp(pk);
  for (std::size_t i = 0; i < p; ++i) {
    const T* prow = probs + i * pk;
    const T* drow = dout + i * ld;
    T dot{0};
    for (std::size_t j = 0; j < pk; ++j) {
      T s{0};
      for (std::size_t c = 0; c < dh; ++c) s += drow[c] * v[j * ld + c];
      dp[j] = s;
      dot += s * prow[j];
      if (dv && prow[j] != T{0})
        for (std::size_t c = 0; c < dh; ++c) dv[j * ld + c] += prow[j] * drow[c];
    }
    for (std::size_t j = 0; j < pk; ++j) {
      const T ds = prow[j] * (dp[j] - dot) * scale;
      if (ds == T{0}) continue;
      if (dq)
        for (std::size_t c = 0; c < dh; ++c) dq[i * ld + c] += ds * k[j * ld + c];
      if (dk)
        for (std::size_t c = 0; c < dh; ++c) dk[j * ld + c] += ds * q[i * ld + c];
    }
  }
}

// q, k, v: [h × p × dh]. Returns [h × p × dh].
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            bool causal, std::vector<T>* probs_out = nullptr) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("softmax_attention: expected matching [h x p x dh] shapes, got " +
                         shape_string(q.shape()) + ", " + shape_string(k.shape()) + ", " +
                         shape_string(v.shape()));
  }
  const std::size_t h = q.dim(0), p = q.dim(1), dh = q.dim(2);
  Tensor<T> out(q.shape());
  std::vector<T> probs(h * p * p);
  for (std::size_t head = 0; head < h; ++head) {
    const std::size_t off = head * p * dh;
    attention_head_forward(p, p, dh, dh, q.data().data() + off, k.data().data() + off,
                           v.data().data() + off, out.data().data() + off,
                           probs.data() + head * p * p, causal);
  }
  if (probs_out) *probs_out = std::move(probs);
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise.

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

// tanh approximation used by the GPT2 family.
template <typename T>
inline T gelu(T x) {
  const T c = std::sqrt(T{2} / std::numbers::pi_v<T>);
  return T{0.5} * x * (T{1} + std::tanh(c * (x + T{0.044715} * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T c = std::sqrt(T{2} / std::numbers::pi_v<T>);
  const T u = c * (x + T{0.044715} * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (T{1} + T{3} * T{0.044715} * x * x);
  return T{0.5} * (T{1} + t) + T{0.5} * x * (T{1} - t * t) * du;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  Shape sa = a.shape(), sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw DimensionError("concat_last: shapes " + shape_string(sa) + " and " + shape_string(sb) +
                         " differ outside the last axis");
  }
  const std::size_t ca = a.cols(), cb = b.cols(), rows = a.rows();
  Shape so = sa;
  so.back() = ca + cb;
  Tensor<T> y(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, y.data().data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, y.data().data() + r * (ca + cb) + ca);
  }
  return y;
}

// Inverted dropout mask: 0 or 1/(1-rate) per element.
template <typename T>
std::vector<T> dropout_mask(std::size_t n, T rate, Rng& rng) {
  if (!(rate >= T{0}) || rate >= T{1}) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  std::vector<T> mask(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep = T{1} / (T{1} - rate);
  for (auto& m : mask) m = u(rng) < static_cast<double>(rate) ? T{0} : keep;
  return mask;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool training, Rng& rng) {
  if (!(rate >= T{0}) || rate >= T{1}) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == T{0}) return x;
  auto mask = dropout_mask<T>(x.size(), rate, rng);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  T s{0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T e = pred[i] - target[i];
    s += e * e;
  }
  return s / static_cast<T>(pred.size());
}

template <typename T>
void mse_loss_backward(const Tensor<T>& pred, const Tensor<T>& target, T upstream,
                       std::span<T> dpred) {
  const T scale = T{2} * upstream / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) dpred[i] += scale * (pred[i] - target[i]);
}

}  // namespace tapcast::kernels
