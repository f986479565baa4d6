#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tapcast/data/series.hpp"
#include "tapcast/data/windows.hpp"
#include "tapcast/error.hpp"
#include "tapcast/numerics/tensor.hpp"
#include "tapcast/preprocess/patch.hpp"
#include "tapcast/preprocess/revin.hpp"

namespace tapcast::preprocess {

// Model-ready view of a list of univariate windows.
template <typename T = double>
struct PatchBatch {
  Tensor<T> patches;                // [B × N_p × P], normalized
  std::vector<NormStats> stats;     // one per window
  Tensor<T> targets;                // [B × T], raw scale
  Tensor<T> last_inputs;            // [B], raw last input value (persistence)

  std::size_t size() const { return stats.size(); }
};

template <typename T = double>
PatchBatch<T> make_batch(const data::SeriesDataset& ds, std::span<const data::WindowIndex> wins,
                         const PatchConfig& cfg, double eps) {
  if (wins.empty()) throw DimensionError("make_batch: no windows");
  const std::size_t lookback = wins.front().lookback, horizon = wins.front().horizon;
  const std::size_t np = patch_count(lookback, cfg);
  PatchBatch<T> b;
  b.patches = Tensor<T>({wins.size(), np, cfg.length});
  b.targets = Tensor<T>({wins.size(), horizon});
  b.last_inputs = Tensor<T>({wins.size()});
  b.stats.reserve(wins.size());
  std::vector<T> buf(lookback);
  for (std::size_t i = 0; i < wins.size(); ++i) {
    const auto& w = wins[i];
    if (w.lookback != lookback || w.horizon != horizon) {
      throw DimensionError("make_batch: windows disagree on L or T");
    }
    if (w.channel == data::kAllChannels || w.channel >= ds.channel_count()) {
      throw DimensionError("make_batch: window needs a concrete channel");
    }
    const auto& series = ds.channels[w.channel];
    if (w.start + lookback + horizon > series.size()) {
      throw DimensionError("make_batch: window exceeds series length");
    }
    for (std::size_t t = 0; t < lookback; ++t) buf[t] = static_cast<T>(series[w.start + t]);
    b.last_inputs[i] = buf[lookback - 1];
    b.stats.push_back(instance_normalize<T>(std::span<const T>(buf), std::span<T>(buf), eps));
    patch_into<T>(std::span<const T>(buf), cfg,
                  b.patches.data().subspan(i * np * cfg.length, np * cfg.length));
    for (std::size_t t = 0; t < horizon; ++t)
      b.targets[i * horizon + t] = static_cast<T>(series[w.start + lookback + t]);
  }
  return b;
}

}  // namespace tapcast::preprocess
