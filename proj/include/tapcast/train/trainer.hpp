#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tapcast/data/series.hpp"
#include "tapcast/data/windows.hpp"
#include "tapcast/error.hpp"
#include "tapcast/model.hpp"
#include "tapcast/numerics/adam.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/numerics/rng.hpp"
#include "tapcast/preprocess/batch.hpp"
#include "tapcast/train/metrics.hpp"

namespace tapcast::train {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0 = no step cap
  std::size_t batch_size = 32;
  std::size_t eval_batch_size = 256;
  std::size_t patience = 3;
  AdamOptions adam{};
  std::uint64_t seed = 2024;
  bool loss_on_normalized_scale = false;
  bool metrics_on_normalized_scale = false;
};

struct TrainResult {
  std::vector<double> epoch_train_loss;  // mean batch loss per (possibly partial) epoch
  std::vector<double> epoch_val_mse;
  double best_val_mse = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;  // 1-based; 0 = initial weights kept
  std::size_t steps = 0;
  std::size_t updated_scalars_per_step = 0;
  bool early_stopped = false;
};

// Targets mapped onto the normalized scale of their own input window.
template <typename T>
Tensor<T> normalized_targets(const preprocess::PatchBatch<T>& batch) {
  Tensor<T> t = batch.targets;
  const std::size_t horizon = t.cols();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double sc = batch.stats[b].scale(), mu = batch.stats[b].mu;
    for (std::size_t j = 0; j < horizon; ++j)
      t[b * horizon + j] = static_cast<T>((static_cast<double>(t[b * horizon + j]) - mu) / sc);
  }
  return t;
}

// MSE/MAE over every window, channel and horizon step, accumulated in window
// order so the result does not depend on `eval_batch`.
template <typename T>
ErrorStats evaluate(Model<T>& model, const data::SeriesDataset& ds,
                    std::span<const data::WindowIndex> wins, std::size_t eval_batch = 256,
                    bool normalized_scale = false) {
  ErrorAccumulator acc;
  if (eval_batch == 0) throw ConfigError("eval batch size must be positive");
  for (std::size_t i = 0; i < wins.size(); i += eval_batch) {
    const auto chunk = wins.subspan(i, std::min(eval_batch, wins.size() - i));
    auto batch = preprocess::make_batch<T>(ds, chunk, model.config.patch, model.config.revin_eps);
    Graph<T> g(false);
    auto r = forward(g, model, batch, false, !normalized_scale);
    const auto& pred = g.value(r.prediction);
    if (normalized_scale) {
      const auto tgt = normalized_targets(batch);
      acc.add(pred.data(), std::span<const T>(tgt.data()));
    } else {
      acc.add(pred.data(), std::span<const T>(batch.targets.data()));
    }
  }
  return acc.result();
}

// Repeats the last observed input value across the horizon.
inline ErrorStats persistence_baseline(const data::SeriesDataset& ds,
                                       std::span<const data::WindowIndex> wins) {
  ErrorAccumulator acc;
  std::vector<double> pred, target;
  for (const auto& w : wins) {
    const auto& series = ds.channels.at(w.channel);
    const double last = series.at(w.start + w.lookback - 1);
    pred.assign(w.horizon, last);
    target.assign(series.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback),
                  series.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback + w.horizon));
    acc.add(std::span<const double>(pred), std::span<const double>(target));
  }
  return acc.result();
}

// Adam on the MSE loss with early stopping on validation MSE. The weights
// with the lowest validation MSE are restored before returning.
template <typename T>
TrainResult train(Model<T>& model, const data::SeriesDataset& ds,
                  std::span<const data::WindowIndex> train_windows,
                  std::span<const data::WindowIndex> val_windows, const TrainConfig& cfg) {
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (train_windows.empty()) throw InsufficientDataError("no training windows");
  if (val_windows.empty()) throw InsufficientDataError("no validation windows");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");

  auto dropout_rng = make_stream(cfg.seed, Stream::dropout);
  auto shuffle_rng = make_stream(cfg.seed, Stream::shuffle);
  AdamState<T> adam(model.params, cfg.adam);
  ParamSet<T> best = model.params;
  std::size_t bad_epochs = 0;
  std::vector<std::size_t> order(train_windows.size());
  std::vector<data::WindowIndex> chunk;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool capped = false;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      chunk.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j)
        chunk.push_back(train_windows[order[j]]);
      auto batch = preprocess::make_batch<T>(ds, chunk, model.config.patch, model.config.revin_eps);
      Graph<T> g(true, &dropout_rng);
      auto fwd = forward(g, model, batch, true, !cfg.loss_on_normalized_scale);
      Var loss = cfg.loss_on_normalized_scale ? g.mse_loss(fwd.prediction, normalized_targets(batch))
                                              : g.mse_loss(fwd.prediction, batch.targets);
      const double lv = static_cast<double>(g.value(loss)[0]);
      if (!std::isfinite(lv)) {
        throw NumericalError("training diverged: non-finite loss at step " +
                             std::to_string(result.steps + 1));
      }
      g.backward(loss);
      result.updated_scalars_per_step = adam_step(model.params, adam);
      loss_sum += lv;
      ++batches;
      ++result.steps;
      if (cfg.max_steps && result.steps >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    result.epoch_train_loss.push_back(loss_sum / static_cast<double>(batches));
    const double val = evaluate(model, ds, val_windows, cfg.eval_batch_size,
                                cfg.metrics_on_normalized_scale).mse;
    result.epoch_val_mse.push_back(val);
    if (!(val >= result.best_val_mse)) {  // also true while best is NaN
      result.best_val_mse = val;
      result.best_epoch = epoch;
      best.assign_values(model.params);
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (capped) break;
  }
  model.params.assign_values(best);
  model.params.clear_grads();
  return result;
}

}  // namespace tapcast::train
