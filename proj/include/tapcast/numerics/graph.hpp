#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/kernels.hpp"
#include "tapcast/numerics/param_set.hpp"
#include "tapcast/numerics/rng.hpp"
#include "tapcast/numerics/tensor.hpp"

namespace tapcast {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// A single-use reverse-mode tape. Every op computes its value eagerly and, when
// any input needs a gradient, records a closure that pushes the output
// gradient back to its inputs. Parameters enter through `parameter()`; after
// `backward()` each trainable parameter that was read holds its gradient in
// its own gradient slot. Frozen parameters are constants here and never
// receive a slot.
template <typename T = double>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true, Rng* dropout_rng = nullptr)
      : grad_enabled_(grad_enabled), dropout_rng_(dropout_rng) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  const Tensor<T>& value(Var v) const {
    const Node& n = node(v);
    return n.ref ? *n.ref : n.value;
  }

  // Gradient accumulated at v during backward(); empty if none reached it.
  std::span<const T> grad(Var v) const { return node(v).grad; }
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  Var constant(Tensor<T> t) { return push(std::move(t), false); }

  // A constant that the caller keeps alive for the lifetime of the graph.
  Var constant_ref(const Tensor<T>& t) {
    Node n;
    n.ref = &t;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  // A leaf with a gradient, not bound to any parameter (for tests and probes).
  Var variable(Tensor<T> t) { return push(std::move(t), grad_enabled_); }

  Var parameter(ParamSet<T>& params, const std::string& name) {
    auto& e = params.entry(name);
    Node n;
    n.ref = &e.tensor;
    n.needs_grad = grad_enabled_ && e.trainable;
    if (n.needs_grad) n.bound = &e.tensor;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  // Bound trainable parameters then receive their accumulated gradient; those
  // the loss does not depend on receive zeros.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw DimensionError("backward: loss must be a scalar");
    if (!node(loss).needs_grad) return;
    grad_slot(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward();
    }
    for (auto& n : nodes_) {
      if (!n.bound) continue;
      auto g = n.bound->ensure_grad();
      for (std::size_t j = 0; j < n.grad.size(); ++j) g[j] += n.grad[j];
    }
  }

  // ---------------------------------------------------------------- ops

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    Tensor<T> c = kernels::matmul(A, B);
    return record(std::move(c), {a, b}, [this, a, b](std::span<const T> dc) {
      const auto& A = value(a);
      const auto& B = value(b);
      kernels::matmul_backward(A, B, dc, maybe_grad(a), maybe_grad(b));
    });
  }

  // y[..., n] = x[..., k] · W[k × n] (+ b[n]); leading axes are flattened to rows.
  Var linear(Var x, Var w, std::optional<Var> b = std::nullopt) {
    const auto& X = value(x);
    const auto& W = value(w);
    if (W.rank() != 2 || X.cols() != W.dim(0)) {
      throw DimensionError("linear: input " + shape_string(X.shape()) + " vs weight " +
                           shape_string(W.shape()));
    }
    const std::size_t rows = X.rows(), k = W.dim(0), n = W.dim(1);
    Shape ys = X.shape();
    ys.back() = n;
    Tensor<T> y(ys);
    kernels::gemm_nn(rows, k, n, X.data().data(), W.data().data(), y.data().data(), false);
    std::vector<Var> inputs{x, w};
    if (b) {
      const auto& B = value(*b);
      if (B.size() != n) throw DimensionError("linear: bias " + shape_string(B.shape()));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) y[r * n + j] += B[j];
      inputs.push_back(*b);
    }
    return record(std::move(y), inputs, [this, x, w, b, rows, k, n](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty())
        kernels::gemm_nt_acc(rows, k, n, dy.data(), value(w).data().data(), dx.data());
      if (auto dw = maybe_grad(w); !dw.empty())
        kernels::gemm_tn_acc(rows, k, n, value(x).data().data(), dy.data(), dw.data());
      if (b) {
        if (auto db = maybe_grad(*b); !db.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
      }
    });
  }

  Var add(Var a, Var b) {
    Tensor<T> y = kernels::add(value(a), value(b));
    return record(std::move(y), {a, b}, [this, a, b](std::span<const T> dy) {
      accumulate(a, dy);
      accumulate(b, dy);
    });
  }

  Var scale(Var x, T s) {
    Tensor<T> y(value(x).shape());
    const auto& X = value(x);
    for (std::size_t i = 0; i < X.size(); ++i) y[i] = X[i] * s;
    return record(std::move(y), {x}, [this, x, s](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty())
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += s * dy[i];
    });
  }

  // x[B × p × d] + table[0..p) broadcast over B. `table` may have more rows than p.
  Var add_leading_rows(Var x, Var table) {
    const auto& X = value(x);
    const auto& P = value(table);
    if (X.rank() != 3 || P.rank() != 2 || P.dim(1) != X.dim(2) || P.dim(0) < X.dim(1)) {
      throw DimensionError("add_leading_rows: input " + shape_string(X.shape()) + " vs table " +
                           shape_string(P.shape()));
    }
    const std::size_t batch = X.dim(0), span_len = X.dim(1) * X.dim(2);
    Tensor<T> y(X.shape());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < span_len; ++i) y[b * span_len + i] = X[b * span_len + i] + P[i];
    return record(std::move(y), {x, table}, [this, x, table, batch, span_len](std::span<const T> dy) {
      accumulate(x, dy);
      if (auto dp = maybe_grad(table); !dp.empty())
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < span_len; ++i) dp[i] += dy[b * span_len + i];
    });
  }

  Var layer_norm(Var x, Var gamma, Var beta, T eps) {
    auto cache = std::make_shared<kernels::LayerNormCache<T>>();
    Tensor<T> y = kernels::layer_norm(value(x), value(gamma), value(beta), eps, cache.get());
    const std::size_t rows = value(x).rows(), d = value(x).cols();
    return record(std::move(y), {x, gamma, beta},
                  [this, x, gamma, beta, cache, rows, d](std::span<const T> dy) {
                    auto dx = maybe_grad(x);
                    auto dg = maybe_grad(gamma);
                    auto db = maybe_grad(beta);
                    kernels::layer_norm_backward(rows, d, *cache, value(gamma).data().data(),
                                                 dy.data(), dx.empty() ? nullptr : dx.data(),
                                                 dg.empty() ? nullptr : dg.data(),
                                                 db.empty() ? nullptr : db.data());
                  });
  }

  Var relu(Var x) {
    Tensor<T> y = kernels::relu(value(x));
    return record(std::move(y), {x}, [this, x](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty()) {
        const auto& X = value(x);
        for (std::size_t i = 0; i < dy.size(); ++i)
          if (X[i] > T{0}) dx[i] += dy[i];
      }
    });
  }

  Var gelu(Var x) {
    const auto& X = value(x);
    Tensor<T> y(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) y[i] = kernels::gelu(X[i]);
    return record(std::move(y), {x}, [this, x](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty()) {
        const auto& X = value(x);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * kernels::gelu_grad(X[i]);
      }
    });
  }

  // Inverted dropout; identity (same Var) at eval time or rate 0.
  Var dropout(Var x, T rate, bool training) {
    if (!(rate >= T{0}) || rate >= T{1}) {
      throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == T{0}) return x;
    if (!dropout_rng_) throw StateError("dropout in training mode needs an rng");
    auto mask = std::make_shared<std::vector<T>>(
        kernels::dropout_mask<T>(value(x).size(), rate, *dropout_rng_));
    const auto& X = value(x);
    Tensor<T> y(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) y[i] = X[i] * (*mask)[i];
    return record(std::move(y), {x}, [this, x, mask](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty())
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*mask)[i];
    });
  }

  Var concat_last(Var a, Var b) {
    Tensor<T> y = kernels::concat_last(value(a), value(b));
    const std::size_t ca = value(a).cols(), cb = value(b).cols(), rows = value(a).rows();
    return record(std::move(y), {a, b}, [this, a, b, ca, cb, rows](std::span<const T> dy) {
      auto da = maybe_grad(a);
      auto db = maybe_grad(b);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = dy.data() + r * (ca + cb);
        if (!da.empty())
          for (std::size_t j = 0; j < ca; ++j) da[r * ca + j] += src[j];
        if (!db.empty())
          for (std::size_t j = 0; j < cb; ++j) db[r * cb + j] += src[ca + j];
      }
    });
  }

  Var reshape(Var x, Shape shape) {
    Tensor<T> y = value(x).reshaped(std::move(shape));
    return record(std::move(y), {x}, [this, x](std::span<const T> dy) {
      accumulate(x, dy);
    });
  }

  // Multi-head scaled dot-product attention on [B × p × d] inputs. Heads split
  // the trailing axis into `heads` contiguous groups of width d/heads.
  Var attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
    const auto& Q = value(q);
    const auto& K = value(k);
    const auto& V = value(v);
    if (Q.rank() != 3 || K.rank() != 3 || K.shape() != V.shape() || Q.dim(0) != K.dim(0) ||
        Q.dim(2) != K.dim(2)) {
      throw DimensionError("attention: shapes " + shape_string(Q.shape()) + ", " +
                           shape_string(K.shape()) + ", " + shape_string(V.shape()));
    }
    const std::size_t batch = Q.dim(0), p = Q.dim(1), pk = K.dim(1), d = Q.dim(2);
    if (heads == 0 || d % heads != 0) {
      throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                           std::to_string(heads) + " heads");
    }
    if (causal && p != pk) throw DimensionError("attention: causal mask needs equal lengths");
    const std::size_t dh = d / heads;
    auto probs = std::make_shared<std::vector<T>>(batch * heads * p * pk);
    Tensor<T> y(Q.shape());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        kernels::attention_head_forward(p, pk, dh, d, Q.data().data() + b * p * d + h * dh,
                                        K.data().data() + b * pk * d + h * dh,
                                        V.data().data() + b * pk * d + h * dh,
                                        y.data().data() + b * p * d + h * dh,
                                        probs->data() + (b * heads + h) * p * pk, causal);
    return record(std::move(y), {q, k, v},
                  [this, q, k, v, probs, batch, heads, p, pk, d, dh](std::span<const T> dy) {
                    auto dq = maybe_grad(q);
                    auto dk = maybe_grad(k);
                    auto dv = maybe_grad(v);
                    const auto& Q = value(q);
                    const auto& K = value(k);
                    const auto& V = value(v);
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t h = 0; h < heads; ++h) {
                        const std::size_t qo = b * p * d + h * dh, ko = b * pk * d + h * dh;
                        kernels::attention_head_backward(
                            p, pk, dh, d, Q.data().data() + qo, K.data().data() + ko,
                            V.data().data() + ko, probs->data() + (b * heads + h) * p * pk,
                            dy.data() + qo, dq.empty() ? nullptr : dq.data() + qo,
                            dk.empty() ? nullptr : dk.data() + ko,
                            dv.empty() ? nullptr : dv.data() + ko);
                      }
                  });
  }

  // y[b, :] = x[b, :] · scale[b] + shift[b]; scale/shift are not differentiated.
  Var affine_rows(Var x, std::vector<T> scale, std::vector<T> shift) {
    const auto& X = value(x);
    const std::size_t rows = X.rows(), n = X.cols();
    if (scale.size() != rows || shift.size() != rows) {
      throw DimensionError("affine_rows: " + std::to_string(rows) + " rows vs " +
                           std::to_string(scale.size()) + " scales");
    }
    Tensor<T> y(X.shape());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) y[r * n + j] = X[r * n + j] * scale[r] + shift[r];
    auto sc = std::make_shared<std::vector<T>>(std::move(scale));
    return record(std::move(y), {x}, [this, x, sc, n](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty())
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*sc)[i / n];
    });
  }

  Var mse_loss(Var pred, const Tensor<T>& target) {
    const T loss = kernels::mse_loss(value(pred), target);
    auto tgt = std::make_shared<Tensor<T>>(target);
    return record(Tensor<T>({1}, std::vector<T>{loss}), {pred},
                  [this, pred, tgt](std::span<const T> dy) {
                    if (auto dp = maybe_grad(pred); !dp.empty())
                      kernels::mse_loss_backward(value(pred), *tgt, dy[0], dp);
                  });
  }

  // Sum of all elements into a scalar.
  Var sum(Var x) {
    T s{0};
    for (T v : value(x).data()) s += v;
    return record(Tensor<T>({1}, std::vector<T>{s}), {x}, [this, x](std::span<const T> dy) {
      if (auto dx = maybe_grad(x); !dx.empty())
        for (auto& g : dx) g += dy[0];
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    Tensor<T>* bound = nullptr;
    std::function<void()> backward;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw StateError("invalid graph variable");
    return nodes_[v.id];
  }

  Var push(Tensor<T> t, bool needs_grad) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  std::span<T> grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(value(v).size(), T{0});
    return n.grad;
  }

  // Gradient buffer of an input, or an empty span if it needs none.
  std::span<T> maybe_grad(Var v) {
    if (!nodes_[v.id].needs_grad) return {};
    return grad_slot(v);
  }

  void accumulate(Var v, std::span<const T> dy) {
    if (auto g = maybe_grad(v); !g.empty())
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
  }

  template <typename Fn>
  Var record(Tensor<T> y, std::initializer_list<Var> inputs, Fn&& fn) {
    return record(std::move(y), std::vector<Var>(inputs), std::forward<Fn>(fn));
  }

  template <typename Fn>
  Var record(Tensor<T> y, const std::vector<Var>& inputs, Fn&& fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_[in.id].needs_grad;
    Var out = push(std::move(y), needs);
    if (needs) {
      const std::size_t self = out.id;
      nodes_[self].backward = [this, self, f = std::forward<Fn>(fn)]() {
        f(std::span<const T>(nodes_[self].grad));
      };
    }
    return out;
  }

  bool grad_enabled_;
  Rng* dropout_rng_;
  std::vector<Node> nodes_;
};

}  // namespace tapcast
