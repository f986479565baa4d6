#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/param_set.hpp"

namespace tapcast {

struct GradCheckOptions {
  double h = 1e-4;
  double floor = 1e-6;  // denominator floor for near-zero gradients
  // Check at most this many scalars per tensor (0 = all), spread evenly.
  std::size_t max_per_tensor = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<std::string> skipped;  // frozen entries, never checked
};

// `loss(params, with_grad)` must return the scalar loss and, when with_grad is
// set, leave d(loss)/d(param) in each trainable entry's gradient slot.
template <typename T>
using LossFn = std::function<T(ParamSet<T>&, bool)>;

// Central differences against the analytic gradient for every trainable scalar.
template <typename T>
GradCheckResult grad_check(const LossFn<T>& loss, ParamSet<T>& params,
                           GradCheckOptions options = {}) {
  if (!(options.h > 0.0)) throw ConfigError("grad_check: h must be positive");
  params.clear_grads();
  const T base = loss(params, true);
  const T again = loss(params, false);
  if (base != again) {
    throw HarnessError("grad_check: loss is not deterministic (" + std::to_string(base) + " vs " +
                       std::to_string(again) + ")");
  }

  GradCheckResult result;
  for (auto& e : params) {
    if (!e.trainable) {
      result.skipped.push_back(e.name);
      continue;
    }
    if (!e.tensor.has_grad()) {
      throw StateError("grad_check: loss produced no gradient for '" + e.name + "'");
    }
    const std::vector<T> analytic(e.tensor.grad().begin(), e.tensor.grad().end());
    const std::size_t n = e.tensor.size();
    const std::size_t stride =
        options.max_per_tensor == 0 ? 1 : std::max<std::size_t>(1, n / options.max_per_tensor);
    for (std::size_t i = 0; i < n; i += stride) {
      const T saved = e.tensor[i];
      e.tensor[i] = saved + static_cast<T>(options.h);
      const double up = static_cast<double>(loss(params, false));
      e.tensor[i] = saved - static_cast<T>(options.h);
      const double down = static_cast<double>(loss(params, false));
      e.tensor[i] = saved;
      const double fd = (up - down) / (2.0 * options.h);
      const double an = static_cast<double>(analytic[i]);
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), options.floor});
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = e.name;
          result.worst_index = i;
          result.worst_analytic = an;
          result.worst_numeric = fd;
        }
      }
    }
  }
  params.clear_grads();
  return result;
}

}  // namespace tapcast
