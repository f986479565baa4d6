#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "tapcast/error.hpp"
#include "tapcast/numerics/tensor.hpp"

namespace tapcast::preprocess {

struct PatchConfig {
  std::size_t length = 16;  // P
  std::size_t stride = 8;   // S
  std::size_t pad = 8;      // replication pad at the tail

  void validate() const {
    if (stride < 1 || stride > length) {
      throw ConfigError("patch stride must satisfy 1 <= S <= P (P=" + std::to_string(length) +
                        ", S=" + std::to_string(stride) + ")");
    }
  }
};

inline std::size_t patch_count(std::size_t lookback, const PatchConfig& cfg) {
  cfg.validate();
  if (lookback + cfg.pad < cfg.length) {
    throw DimensionError("series of length " + std::to_string(lookback) + " + pad " +
                         std::to_string(cfg.pad) + " is shorter than patch length " +
                         std::to_string(cfg.length));
  }
  return (lookback + cfg.pad - cfg.length) / cfg.stride + 1;
}

// Writes the N_p × P patches of x (tail-padded with its last value) into out.
template <typename T>
void patch_into(std::span<const T> x, const PatchConfig& cfg, std::span<T> out) {
  const std::size_t n = patch_count(x.size(), cfg);
  if (x.empty()) throw DimensionError("patch: empty series");
  if (out.size() != n * cfg.length) throw DimensionError("patch: output buffer size mismatch");
  const std::size_t last = x.size() - 1;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t start = j * cfg.stride;
    for (std::size_t i = 0; i < cfg.length; ++i) {
      const std::size_t src = start + i;
      out[j * cfg.length + i] = x[src <= last ? src : last];
    }
  }
}

template <typename T>
Tensor<T> patch(std::span<const T> x, const PatchConfig& cfg) {
  Tensor<T> out({patch_count(x.size(), cfg), cfg.length});
  patch_into<T>(x, cfg, out.data());
  return out;
}

}  // namespace tapcast::preprocess
