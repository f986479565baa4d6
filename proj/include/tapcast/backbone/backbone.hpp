#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/numerics/param_set.hpp"
#include "tapcast/numerics/rng.hpp"

namespace tapcast::backbone {

struct BackboneConfig {
  std::size_t n_layers = 6;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_patches = 128;
  std::size_t patch_len = 16;
  bool causal = true;
  double dropout = 0.1;
  double ln_eps = 1e-5;
  bool use_bias = true;
  double init_std = 0.02;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
    if (d_ff == 0 || max_patches == 0 || patch_len == 0) throw ConfigError("backbone widths must be positive");
    if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  }
};

enum class FreezePolicy { ln_pe, ln, pe, full, none };
enum class LnScope { all, final_only };

inline std::string_view to_string(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::ln_pe: return "ln_pe";
    case FreezePolicy::ln: return "ln";
    case FreezePolicy::pe: return "pe";
    case FreezePolicy::full: return "full";
    case FreezePolicy::none: return "none";
  }
  return "?";
}

inline FreezePolicy parse_freeze_policy(std::string_view s) {
  if (s == "ln_pe" || s == "LN_PE" || s == "ln+pe") return FreezePolicy::ln_pe;
  if (s == "ln" || s == "LN") return FreezePolicy::ln;
  if (s == "pe" || s == "PE") return FreezePolicy::pe;
  if (s == "full" || s == "FULL" || s == "fp") return FreezePolicy::full;
  if (s == "none" || s == "NONE") return FreezePolicy::none;
  throw ConfigError("unknown freeze policy '" + std::string(s) + "'");
}

inline std::string_view to_string(LnScope s) { return s == LnScope::all ? "all" : "final_only"; }

inline LnScope parse_ln_scope(std::string_view s) {
  if (s == "all") return LnScope::all;
  if (s == "final_only") return LnScope::final_only;
  throw ConfigError("unknown ln_scope '" + std::string(s) + "'");
}

// Parameter names. Blocks are numbered 1..N so that block.n produces tap n.
namespace names {
inline const std::string token_weight = "embed.token.weight";
inline const std::string token_bias = "embed.token.bias";
inline const std::string pos = "embed.pos";
inline std::string block(std::size_t n, std::string_view leaf) {
  return "block." + std::to_string(n) + "." + std::string(leaf);
}
inline const std::string final_gamma = "final_ln.gamma";
inline const std::string final_beta = "final_ln.beta";
}  // namespace names

inline bool is_token_embedding(std::string_view name) { return name.starts_with("embed.token."); }

// Parameters that stand in for the pretrained model: positional table,
// transformer blocks and the final layer norm. The token embedding is an
// adapter and is not part of this group.
inline bool is_pretrained(std::string_view name) {
  return name == names::pos || name.starts_with("block.") || name.starts_with("final_ln.");
}

inline bool is_layer_norm(std::string_view name) {
  return name.starts_with("final_ln.") ||
         (name.starts_with("block.") &&
          (name.find(".ln1.") != std::string_view::npos || name.find(".ln2.") != std::string_view::npos));
}

template <typename T>
void init_backbone(ParamSet<T>& params, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, cfg.init_std);
  auto randn = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(normal(rng));
    return t;
  };
  const std::size_t d = cfg.d_model;
  params.add(names::token_weight, randn({cfg.patch_len, d}));
  if (cfg.use_bias) params.add(names::token_bias, Tensor<T>({d}));
  params.add(names::pos, randn({cfg.max_patches, d}));
  for (std::size_t n = 1; n <= cfg.n_layers; ++n) {
    params.add(names::block(n, "ln1.gamma"), Tensor<T>({d}, T{1}));
    params.add(names::block(n, "ln1.beta"), Tensor<T>({d}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params.add(names::block(n, w), randn({d, d}));
      if (cfg.use_bias) params.add(names::block(n, std::string(w) + ".bias"), Tensor<T>({d}));
    }
    params.add(names::block(n, "ln2.gamma"), Tensor<T>({d}, T{1}));
    params.add(names::block(n, "ln2.beta"), Tensor<T>({d}));
    params.add(names::block(n, "ffn.w1"), randn({d, cfg.d_ff}));
    if (cfg.use_bias) params.add(names::block(n, "ffn.w1.bias"), Tensor<T>({cfg.d_ff}));
    params.add(names::block(n, "ffn.w2"), randn({cfg.d_ff, d}));
    if (cfg.use_bias) params.add(names::block(n, "ffn.w2.bias"), Tensor<T>({d}));
  }
  params.add(names::final_gamma, Tensor<T>({d}, T{1}));
  params.add(names::final_beta, Tensor<T>({d}));
}

struct FreezeReport {
  std::size_t trainable = 0;  // scalars in the pretrained group left trainable
  std::size_t total = 0;      // scalars in the pretrained group
};

// Sets trainable flags on the pretrained group. The token embedding and every
// non-backbone parameter stay trainable.
template <typename T>
FreezeReport apply_freeze(ParamSet<T>& params, FreezePolicy policy, LnScope scope = LnScope::all) {
  FreezeReport report;
  for (auto& e : params) {
    if (!is_pretrained(e.name)) continue;
    const bool ln = is_layer_norm(e.name) &&
                    (scope == LnScope::all || e.name.starts_with("final_ln."));
    const bool pe = e.name == names::pos;
    bool on = false;
    switch (policy) {
      case FreezePolicy::ln_pe: on = ln || pe; break;
      case FreezePolicy::ln: on = ln; break;
      case FreezePolicy::pe: on = pe; break;
      case FreezePolicy::full: on = true; break;
      case FreezePolicy::none: on = false; break;
    }
    params.set_trainable(e.name, on);
    report.total += e.tensor.size();
    if (on) report.trainable += e.tensor.size();
  }
  return report;
}

template <typename T>
std::optional<Var> maybe_param(Graph<T>& g, ParamSet<T>& params, const std::string& name) {
  if (!params.contains(name)) return std::nullopt;
  return g.parameter(params, name);
}

// Token embedding: per-patch linear projection P -> d_model (no positions yet).
template <typename T>
Var embed(Graph<T>& g, ParamSet<T>& params, Var patches, const BackboneConfig& cfg) {
  const auto& x = g.value(patches);
  if (x.rank() != 3) throw DimensionError("embed: patches must be [B x N_p x P]");
  if (x.dim(1) > cfg.max_patches) {
    throw DimensionError("embed: " + std::to_string(x.dim(1)) + " patches exceed capacity " +
                         std::to_string(cfg.max_patches));
  }
  return g.linear(patches, g.parameter(params, names::token_weight),
                  maybe_param(g, params, names::token_bias));
}

// Pre-norm block n (1-based). Block N also applies the final layer norm, so
// its output is the last tap.
template <typename T>
Var block_forward(Graph<T>& g, ParamSet<T>& params, std::size_t n, Var x,
                  const BackboneConfig& cfg, bool training) {
  const T eps = static_cast<T>(cfg.ln_eps);
  const T rate = static_cast<T>(cfg.dropout);
  auto P = [&](std::string_view leaf) { return g.parameter(params, names::block(n, leaf)); };
  auto B = [&](std::string_view leaf) {
    return maybe_param(g, params, names::block(n, std::string(leaf) + ".bias"));
  };

  Var h = g.layer_norm(x, P("ln1.gamma"), P("ln1.beta"), eps);
  Var q = g.linear(h, P("attn.wq"), B("attn.wq"));
  Var k = g.linear(h, P("attn.wk"), B("attn.wk"));
  Var v = g.linear(h, P("attn.wv"), B("attn.wv"));
  Var a = g.attention(q, k, v, cfg.n_heads, cfg.causal);
  a = g.linear(a, P("attn.wo"), B("attn.wo"));
  x = g.add(x, g.dropout(a, rate, training));

  h = g.layer_norm(x, P("ln2.gamma"), P("ln2.beta"), eps);
  h = g.gelu(g.linear(h, P("ffn.w1"), B("ffn.w1")));
  h = g.linear(h, P("ffn.w2"), B("ffn.w2"));
  x = g.add(x, g.dropout(h, rate, training));

  if (n == cfg.n_layers) {
    x = g.layer_norm(x, g.parameter(params, names::final_gamma),
                     g.parameter(params, names::final_beta), eps);
  }
  return x;
}

struct BackboneOutput {
  Var x_tilde;             // token embedding, before positions
  std::vector<Var> taps;   // N+1 entries: taps[0] = embedding + positions, taps[n] = block n
};

template <typename T>
BackboneOutput forward(Graph<T>& g, ParamSet<T>& params, Var patches, const BackboneConfig& cfg,
                       bool training) {
  BackboneOutput out;
  out.x_tilde = embed(g, params, patches, cfg);
  Var h = g.add_leading_rows(out.x_tilde, g.parameter(params, names::pos));
  h = g.dropout(h, static_cast<T>(cfg.dropout), training);
  out.taps.push_back(h);
  for (std::size_t n = 1; n <= cfg.n_layers; ++n) {
    h = block_forward(g, params, n, h, cfg, training);
    if (!g.value(h).all_finite()) {
      throw NumericalError("non-finite hidden state at the output of block " + std::to_string(n));
    }
    out.taps.push_back(h);
  }
  return out;
}

}  // namespace tapcast::backbone
