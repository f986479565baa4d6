#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/param_set.hpp"

namespace tapcast {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T = double>
class AdamState {
 public:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };

  AdamState(const ParamSet<T>& params, AdamOptions options) : options_(options) { sync(params); }

  // Rebuilds the moment table so it covers exactly the trainable entries.
  // Moments of entries that stay trainable are kept.
  void sync(const ParamSet<T>& params) {
    std::map<std::string, Moments> next;
    for (const auto& e : params) {
      if (!e.trainable) continue;
      auto it = moments_.find(e.name);
      if (it != moments_.end() && it->second.m.size() == e.tensor.size()) {
        next.emplace(e.name, std::move(it->second));
      } else {
        next.emplace(e.name, Moments{std::vector<T>(e.tensor.size()), std::vector<T>(e.tensor.size())});
      }
    }
    moments_ = std::move(next);
  }

  std::uint64_t step() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  bool has_moments(const std::string& name) const { return moments_.contains(name); }

  // Number of scalars touched by the most recent update.
  std::size_t last_update_count() const noexcept { return last_update_count_; }

 private:
  template <typename U>
  friend std::size_t adam_step(ParamSet<U>& params, AdamState<U>& state);

  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::size_t last_update_count_ = 0;
  std::map<std::string, Moments> moments_;
};

// One bias-corrected Adam update over the trainable entries, then clears their
// gradients. Frozen entries are not read or written. Returns the number of
// scalars updated.
template <typename T>
std::size_t adam_step(ParamSet<T>& params, AdamState<T>& state) {
  for (const auto& e : params) {
    if (!e.trainable) continue;
    if (!e.tensor.has_grad()) throw StateError("adam_step: no gradient for trainable '" + e.name + "'");
    if (!state.moments_.contains(e.name)) {
      throw StateError("adam_step: no moment buffers for trainable '" + e.name + "'");
    }
  }
  const auto& o = state.options_;
  const std::uint64_t t = state.step_ + 1;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  std::size_t updated = 0;
  for (auto& e : params) {
    if (!e.trainable) continue;
    auto& mom = state.moments_.at(e.name);
    auto w = e.tensor.data();
    auto g = e.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m = o.beta1 * static_cast<double>(mom.m[i]) + (1.0 - o.beta1) * gi;
      const double v = o.beta2 * static_cast<double>(mom.v[i]) + (1.0 - o.beta2) * gi * gi;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      const double mhat = m / c1;
      const double vhat = v / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - o.lr * mhat / (std::sqrt(vhat) + o.eps));
    }
    updated += w.size();
    e.tensor.clear_grad();
  }
  state.step_ = t;
  state.last_update_count_ = updated;
  return updated;
}

}  // namespace tapcast
