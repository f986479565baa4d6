#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tapcast/backbone/backbone.hpp"
#include "tapcast/mixers/mixers.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/numerics/param_set.hpp"
#include "tapcast/numerics/rng.hpp"
#include "tapcast/preprocess/batch.hpp"
#include "tapcast/preprocess/patch.hpp"

namespace tapcast {

struct ModelConfig {
  std::size_t seq_len = 96;   // L
  std::size_t horizon = 96;   // T
  preprocess::PatchConfig patch{};
  backbone::BackboneConfig backbone{};
  std::size_t mixer_hidden = 0;  // 0 = d_model
  mixers::FusionVariant fusion = mixers::FusionVariant::mixer;
  mixers::LayerSelection selection = mixers::LayerSelection::boundary;
  std::size_t local_tap = 1;
  backbone::FreezePolicy freeze = backbone::FreezePolicy::ln_pe;
  backbone::LnScope ln_scope = backbone::LnScope::all;
  double revin_eps = 1e-5;

  std::size_t n_patches() const { return preprocess::patch_count(seq_len, patch); }

  mixers::FusionConfig fusion_config() const {
    mixers::FusionConfig f;
    f.d_model = backbone.d_model;
    f.d_hidden = mixer_hidden ? mixer_hidden : backbone.d_model;
    f.n_patches = n_patches();
    f.horizon = horizon;
    f.dropout = backbone.dropout;
    f.use_bias = backbone.use_bias;
    f.variant = fusion;
    f.selection = selection;
    f.local_tap = local_tap;
    f.init_std = backbone.init_std;
    return f;
  }

  void validate() const {
    backbone.validate();
    patch.validate();
    if (horizon == 0) throw ConfigError("horizon must be positive");
    if (backbone.patch_len != patch.length) throw ConfigError("backbone patch_len must equal patch length");
    if (n_patches() > backbone.max_patches) {
      throw ConfigError(std::to_string(n_patches()) + " patches exceed max_patches " +
                        std::to_string(backbone.max_patches));
    }
    if (mixers::uses_local(selection) && selection != mixers::LayerSelection::half_average &&
        local_tap > backbone.n_layers) {
      throw ConfigError("local_tap " + std::to_string(local_tap) + " exceeds n_layers " +
                        std::to_string(backbone.n_layers));
    }
    if (selection == mixers::LayerSelection::half_average && backbone.n_layers < 2) {
      throw ConfigError("half_average selection needs at least 2 layers");
    }
  }
};

template <typename T = double>
struct Model {
  ModelConfig config;
  ParamSet<T> params;
  backbone::FreezeReport freeze;

  std::size_t total_params() const { return params.scalar_count(); }
  std::size_t trainable_params() const { return params.trainable_scalar_count(); }
};

// Backbone weights come from their own stream, so every horizon's model
// starts from the same backbone for a given seed.
template <typename T = double>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  auto bb_rng = make_stream(seed, Stream::backbone_init);
  backbone::init_backbone(m.params, cfg.backbone, bb_rng);
  auto head_rng = make_stream(seed, Stream::head_init);
  mixers::init_fusion(m.params, cfg.fusion_config(), head_rng);
  m.freeze = backbone::apply_freeze(m.params, cfg.freeze, cfg.ln_scope);
  return m;
}

struct ForwardResult {
  Var prediction;  // [B × T]
  backbone::BackboneOutput backbone;
};

template <typename T>
ForwardResult forward(Graph<T>& g, Model<T>& model, const preprocess::PatchBatch<T>& batch,
                      bool training, bool denormalize = true) {
  ForwardResult r;
  Var patches = g.constant_ref(batch.patches);
  r.backbone = backbone::forward(g, model.params, patches, model.config.backbone, training);
  r.prediction = mixers::fuse_and_project(g, model.params, model.config.fusion_config(),
                                          r.backbone.x_tilde, r.backbone.taps,
                                          denormalize ? &batch.stats : nullptr, training);
  return r;
}

// Eval-mode predictions on the input scale, [B × T].
template <typename T>
Tensor<T> predict(Model<T>& model, const preprocess::PatchBatch<T>& batch) {
  Graph<T> g(false);
  auto r = forward(g, model, batch, false, true);
  return g.value(r.prediction);
}

// Eval-mode hidden states for every tap, each [B × N_p × d_model].
template <typename T>
std::vector<Tensor<T>> layer_taps(Model<T>& model, const preprocess::PatchBatch<T>& batch) {
  Graph<T> g(false);
  Var patches = g.constant_ref(batch.patches);
  auto out = backbone::forward(g, model.params, patches, model.config.backbone, false);
  std::vector<Tensor<T>> taps;
  for (Var v : out.taps) taps.push_back(g.value(v));
  return taps;
}

}  // namespace tapcast
