#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tapcast/error.hpp"

namespace tapcast::preprocess {

// Per-window statistics kept so predictions can be mapped back to the input scale.
struct NormStats {
  double mu = 0.0;
  double sigma2 = 0.0;  // population variance (mean squared deviation)
  double eps = 1e-5;

  double scale() const { return std::sqrt(sigma2 + eps); }
};

template <typename T>
NormStats window_stats(std::span<const T> x, double eps) {
  if (x.empty()) throw DimensionError("instance_normalize: empty window");
  if (!(eps > 0.0)) throw ConfigError("instance_normalize: eps must be positive");
  double mu = 0.0;
  for (T v : x) mu += static_cast<double>(v);
  mu /= static_cast<double>(x.size());
  double var = 0.0;
  for (T v : x) {
    const double d = static_cast<double>(v) - mu;
    var += d * d;
  }
  var /= static_cast<double>(x.size());
  return NormStats{mu, var, eps};
}

// out[t] = (x[t] - mu) / sqrt(sigma2 + eps). `out` may alias `x`.
template <typename T>
NormStats instance_normalize(std::span<const T> x, std::span<T> out, double eps) {
  const NormStats s = window_stats(x, eps);
  const double inv = 1.0 / s.scale();
  for (std::size_t t = 0; t < x.size(); ++t)
    out[t] = static_cast<T>((static_cast<double>(x[t]) - s.mu) * inv);
  return s;
}

template <typename T>
std::pair<std::vector<T>, NormStats> instance_normalize(std::span<const T> x, double eps) {
  std::vector<T> out(x.size());
  const NormStats s = instance_normalize<T>(x, std::span<T>(out), eps);
  return {std::move(out), s};
}

template <typename T>
void instance_denormalize_inplace(std::span<T> y, const NormStats& s) {
  const double sc = s.scale();
  for (auto& v : y) v = static_cast<T>(static_cast<double>(v) * sc + s.mu);
}

template <typename T>
std::vector<T> instance_denormalize(std::span<const T> y, const NormStats& s) {
  std::vector<T> out(y.begin(), y.end());
  instance_denormalize_inplace<T>(std::span<T>(out), s);
  return out;
}

}  // namespace tapcast::preprocess
