#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/backbone/backbone.hpp"
#include "tapcast/error.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/numerics/param_set.hpp"
#include "tapcast/numerics/rng.hpp"
#include "tapcast/preprocess/revin.hpp"

namespace tapcast::mixers {

enum class FusionVariant { mixer, add, cross, none };
enum class LayerSelection { boundary, half_average, local_only, global_only };

inline std::string_view to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::mixer: return "mixer";
    case FusionVariant::add: return "add";
    case FusionVariant::cross: return "cross";
    case FusionVariant::none: return "none";
  }
  return "?";
}

inline FusionVariant parse_fusion(std::string_view s) {
  if (s == "mixer" || s == "MIXER") return FusionVariant::mixer;
  if (s == "add" || s == "ADD") return FusionVariant::add;
  if (s == "cross" || s == "CROSS") return FusionVariant::cross;
  if (s == "none" || s == "NONE") return FusionVariant::none;
  throw ConfigError("unknown fusion variant '" + std::string(s) + "'");
}

inline std::string_view to_string(LayerSelection s) {
  switch (s) {
    case LayerSelection::boundary: return "boundary";
    case LayerSelection::half_average: return "half_average";
    case LayerSelection::local_only: return "local_only";
    case LayerSelection::global_only: return "global_only";
  }
  return "?";
}

inline LayerSelection parse_selection(std::string_view s) {
  if (s == "boundary" || s == "BOUNDARY") return LayerSelection::boundary;
  if (s == "half_average" || s == "HALF_AVERAGE") return LayerSelection::half_average;
  if (s == "local_only" || s == "LOCAL_ONLY") return LayerSelection::local_only;
  if (s == "global_only" || s == "GLOBAL_ONLY") return LayerSelection::global_only;
  throw ConfigError("unknown layer selection '" + std::string(s) + "'");
}

inline bool uses_local(LayerSelection s) { return s != LayerSelection::global_only; }
inline bool uses_global(LayerSelection s) { return s != LayerSelection::local_only; }

struct FusionConfig {
  std::size_t d_model = 64;
  std::size_t d_hidden = 64;
  std::size_t n_patches = 12;
  std::size_t horizon = 96;
  double dropout = 0.1;
  bool use_bias = true;
  FusionVariant variant = FusionVariant::mixer;
  LayerSelection selection = LayerSelection::boundary;
  std::size_t local_tap = 1;
  double init_std = 0.02;
};

inline constexpr std::string_view kLocalPrefix = "mixer.local";
inline constexpr std::string_view kGlobalPrefix = "mixer.global";
inline constexpr std::string_view kLocalCrossPrefix = "cross.local";
inline constexpr std::string_view kGlobalCrossPrefix = "cross.global";
inline const std::string kHeadWeight = "head.weight";
inline const std::string kHeadBias = "head.bias";

// Adds exactly the parameters the configured variant and selection read.
template <typename T>
void init_fusion(ParamSet<T>& params, const FusionConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  auto randn = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(normal(rng));
    return t;
  };
  const std::size_t d = cfg.d_model;
  auto add_mixer = [&](std::string_view prefix) {
    const std::string p(prefix);
    params.add(p + ".w1", randn({2 * d, cfg.d_hidden}));
    if (cfg.use_bias) params.add(p + ".b1", Tensor<T>({cfg.d_hidden}));
    params.add(p + ".w2", randn({cfg.d_hidden, d}));
    if (cfg.use_bias) params.add(p + ".b2", Tensor<T>({d}));
  };
  auto add_cross = [&](std::string_view prefix) {
    const std::string p(prefix);
    params.add(p + ".wq", randn({d, d}));
    params.add(p + ".wk", randn({d, d}));
    params.add(p + ".wv", randn({d, d}));
  };
  const bool local = uses_local(cfg.selection), global = uses_global(cfg.selection);
  if (cfg.variant == FusionVariant::mixer) {
    if (local) add_mixer(kLocalPrefix);
    if (global) add_mixer(kGlobalPrefix);
  } else if (cfg.variant == FusionVariant::cross) {
    if (local) add_cross(kLocalCrossPrefix);
    if (global) add_cross(kGlobalCrossPrefix);
  }
  params.add(kHeadWeight, randn({cfg.n_patches * d, cfg.horizon}));
  if (cfg.use_bias) params.add(kHeadBias, Tensor<T>({cfg.horizon}));
}

template <typename T>
std::optional<Var> optional_param(Graph<T>& g, ParamSet<T>& params, const std::string& name) {
  if (!params.contains(name)) return std::nullopt;
  return g.parameter(params, name);
}

// x_tilde + Dropout(W2 · ReLU(W1 · [x_tilde ‖ tap] + b1) + b2)
template <typename T>
Var mix(Graph<T>& g, ParamSet<T>& params, std::string_view prefix, Var x_tilde, Var tap,
        double dropout, bool training) {
  require_same_shape(g.value(x_tilde).shape(), g.value(tap).shape(), "mix");
  const std::string p(prefix);
  Var h = g.concat_last(x_tilde, tap);
  h = g.relu(g.linear(h, g.parameter(params, p + ".w1"), optional_param(g, params, p + ".b1")));
  h = g.linear(h, g.parameter(params, p + ".w2"), optional_param(g, params, p + ".b2"));
  return g.add(x_tilde, g.dropout(h, static_cast<T>(dropout), training));
}

// x_tilde + single-head attention (query from x_tilde, key/value from tap).
template <typename T>
Var cross_align(Graph<T>& g, ParamSet<T>& params, std::string_view prefix, Var x_tilde, Var tap) {
  require_same_shape(g.value(x_tilde).shape(), g.value(tap).shape(), "cross_align");
  const std::string p(prefix);
  Var q = g.linear(x_tilde, g.parameter(params, p + ".wq"));
  Var k = g.linear(tap, g.parameter(params, p + ".wk"));
  Var v = g.linear(tap, g.parameter(params, p + ".wv"));
  return g.add(x_tilde, g.attention(q, k, v, 1, false));
}

struct SelectedFeatures {
  std::optional<Var> local;
  std::optional<Var> global;
};

// Resolves which taps feed the local and global branches.
template <typename T>
SelectedFeatures select_features(Graph<T>& g, const std::vector<Var>& taps,
                                 LayerSelection selection, std::size_t local_tap) {
  if (taps.empty()) throw StateError("select_features: no taps");
  const std::size_t n_layers = taps.size() - 1;
  SelectedFeatures out;
  auto mean_of = [&](std::size_t first, std::size_t last) {
    Var acc = taps[first];
    for (std::size_t i = first + 1; i <= last; ++i) acc = g.add(acc, taps[i]);
    return g.scale(acc, T{1} / static_cast<T>(last - first + 1));
  };
  switch (selection) {
    case LayerSelection::half_average: {
      if (n_layers < 2) throw ConfigError("half_average selection needs at least 2 layers");
      const std::size_t half = (n_layers + 1) / 2;
      out.local = mean_of(1, half);
      out.global = mean_of(half + 1, n_layers);
      return out;
    }
    case LayerSelection::boundary:
    case LayerSelection::local_only:
    case LayerSelection::global_only:
      if (uses_local(selection)) {
        if (local_tap > n_layers) {
          throw ConfigError("local tap " + std::to_string(local_tap) + " out of range 0.." +
                            std::to_string(n_layers));
        }
        out.local = taps[local_tap];
      }
      if (uses_global(selection)) out.global = taps[n_layers];
      return out;
  }
  return out;
}

template <typename T>
Var align_branch(Graph<T>& g, ParamSet<T>& params, const FusionConfig& cfg, bool local,
                 Var x_tilde, Var tap, bool training) {
  switch (cfg.variant) {
    case FusionVariant::mixer:
      return mix(g, params, local ? kLocalPrefix : kGlobalPrefix, x_tilde, tap, cfg.dropout, training);
    case FusionVariant::add: return g.add(x_tilde, tap);
    case FusionVariant::cross:
      return cross_align(g, params, local ? kLocalCrossPrefix : kGlobalCrossPrefix, x_tilde, tap);
    case FusionVariant::none: return tap;
  }
  throw StateError("unknown fusion variant");
}

// Aligns the selected branches, sums them, flattens each window row-major over
// (patch, feature), projects to the horizon, and (when stats are given) maps
// the result back to each window's input scale.
template <typename T>
Var fuse_and_project(Graph<T>& g, ParamSet<T>& params, const FusionConfig& cfg, Var x_tilde,
                     const std::vector<Var>& taps,
                     const std::vector<preprocess::NormStats>* stats, bool training) {
  const auto feats = select_features(g, taps, cfg.selection, cfg.local_tap);
  std::optional<Var> fused;
  if (feats.local) fused = align_branch(g, params, cfg, true, x_tilde, *feats.local, training);
  if (feats.global) {
    Var gb = align_branch(g, params, cfg, false, x_tilde, *feats.global, training);
    fused = fused ? g.add(*fused, gb) : gb;
  }
  const auto& fv = g.value(*fused);
  const std::size_t batch = fv.dim(0);
  Var flat = g.reshape(*fused, {batch, fv.dim(1) * fv.dim(2)});
  Var y = g.linear(flat, g.parameter(params, kHeadWeight), optional_param(g, params, kHeadBias));
  if (!stats) return y;
  if (stats->size() != batch) throw DimensionError("fuse_and_project: stats/batch size mismatch");
  std::vector<T> scale(batch), shift(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    scale[b] = static_cast<T>((*stats)[b].scale());
    shift[b] = static_cast<T>((*stats)[b].mu);
  }
  return g.affine_rows(y, std::move(scale), std::move(shift));
}

}  // namespace tapcast::mixers
