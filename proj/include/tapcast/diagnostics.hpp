#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "tapcast/data/synth.hpp"
#include "tapcast/data/windows.hpp"
#include "tapcast/model.hpp"
#include "tapcast/numerics/grad_check.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/preprocess/batch.hpp"
#include "tapcast/train/trainer.hpp"

namespace tapcast {

// N=2, d_model=16, L=48 so that P=16, S=8 gives 6 patches. Dropout is off and
// every parameter is trainable, so the whole model is checked.
inline ModelConfig tiny_gradcheck_config() {
  ModelConfig c;
  c.seq_len = 48;
  c.horizon = 8;
  c.backbone.n_layers = 2;
  c.backbone.d_model = 16;
  c.backbone.n_heads = 2;
  c.backbone.d_ff = 32;
  c.backbone.max_patches = 8;
  c.backbone.dropout = 0.0;
  c.backbone.init_std = 0.1;
  c.freeze = backbone::FreezePolicy::full;
  return c;
}

template <typename T>
struct GradCheckSetup {
  Model<T> model;
  data::SeriesDataset dataset;
  preprocess::PatchBatch<T> batch;
};

template <typename T = double>
GradCheckSetup<T> make_gradcheck_setup(const ModelConfig& cfg, std::uint64_t seed,
                                       std::size_t windows = 1) {
  data::SynthSpec spec;
  spec.length = cfg.seq_len + cfg.horizon + windows;
  spec.channels = 1;
  spec.seed = seed;
  GradCheckSetup<T> s{build_model<T>(cfg, seed), data::synth_generate(spec), {}};
  std::vector<data::WindowIndex> wins;
  for (std::size_t i = 0; i < windows; ++i)
    wins.push_back({data::Segment::train, i * 1, cfg.seq_len, cfg.horizon, 0});
  s.batch = preprocess::make_batch<T>(s.dataset, wins, cfg.patch, cfg.revin_eps);
  return s;
}

// Eval-mode MSE of `model` on `batch`, on the normalized scale unless
// `normalized` is false; writes gradients when asked.
template <typename T>
LossFn<T> model_loss(Model<T>& model, const preprocess::PatchBatch<T>& batch, bool normalized = true) {
  auto target = std::make_shared<Tensor<T>>(normalized ? train::normalized_targets(batch) : batch.targets);
  return [&model, &batch, normalized, target](ParamSet<T>&, bool with_grad) {
    Graph<T> g(with_grad);
    auto r = forward(g, model, batch, false, !normalized);
    Var loss = g.mse_loss(r.prediction, *target);
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };
}

}  // namespace tapcast
