#include <gtest/gtest.h>

#include <limits>

#include "tapcast/backbone/backbone.hpp"
#include "tapcast/backbone/weights_io.hpp"
#include "test_util.hpp"

using namespace tapcast;
using namespace tapcast::backbone;
using tapcast::testing::random_tensor;
using tapcast::testing::rel_err;

namespace {

BackboneConfig small(std::size_t layers = 2, std::size_t d = 16) {
  BackboneConfig c;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = 2;
  c.d_ff = 2 * d;
  c.max_patches = 8;
  c.patch_len = 4;
  c.dropout = 0.0;
  return c;
}

ParamSet<> init(const BackboneConfig& c, std::uint64_t seed = 1) {
  ParamSet<> ps;
  Rng rng(seed);
  init_backbone(ps, c, rng);
  return ps;
}

std::vector<Tensor<>> taps_of(ParamSet<>& ps, const BackboneConfig& c, const Tensor<>& patches) {
  Graph<> g(false);
  auto out = forward(g, ps, g.constant(patches), c, false);
  std::vector<Tensor<>> t;
  for (Var v : out.taps) t.push_back(g.value(v));
  return t;
}

}  // namespace

TEST(Embedding, ZeroPatchesGiveBiasRows) {
  auto c = small();
  auto ps = init(c);
  ps.at(names::token_bias) = random_tensor({c.d_model}, 3);
  Graph<> g(false);
  const auto& y = g.value(embed(g, ps, g.constant(Tensor<>({2, 3, c.patch_len})), c));
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_EQ(y[r * c.d_model + j], ps.at(names::token_bias)[j]);
  c.use_bias = false;
  auto nb = init(c);
  Graph<> g2(false);
  for (double v : g2.value(embed(g2, nb, g2.constant(Tensor<>({1, 3, c.patch_len})), c)).data()) EXPECT_EQ(v, 0.0);
}

TEST(Embedding, IdentityWeightPassesPatchesThrough) {
  auto c = small(1, 4);
  c.n_heads = 1;
  auto ps = init(c);
  auto& w = ps.at(names::token_weight);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) w.at(i, j) = i == j;
  auto x = random_tensor({2, 3, 4}, 5);
  Graph<> g(false);
  EXPECT_EQ(g.value(embed(g, ps, g.constant(x), c)), x);
}

TEST(Embedding, MatchesLoopOracle) {
  auto c = small();
  auto ps = init(c);
  ps.at(names::token_bias) = random_tensor({c.d_model}, 8);
  auto x = random_tensor({2, 3, c.patch_len}, 9);
  Graph<> g(false);
  const auto& y = g.value(embed(g, ps, g.constant(x), c));
  const auto& w = ps.at(names::token_weight);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < c.d_model; ++j) {
      double s = ps.at(names::token_bias)[j];
      for (std::size_t k = 0; k < c.patch_len; ++k) s += x[r * c.patch_len + k] * w.at(k, j);
      EXPECT_LE(rel_err(y[r * c.d_model + j], s), 1e-12);
    }
}

TEST(Backbone, ZeroLayersGivesOnlyTheEmbeddingTap) {
  auto c = small(0);
  auto ps = init(c);
  auto taps = taps_of(ps, c, random_tensor({1, 5, c.patch_len}, 2));
  ASSERT_EQ(taps.size(), 1u);
  EXPECT_EQ(taps[0].shape(), (Shape{1, 5, c.d_model}));
}

TEST(Backbone, ZeroWeightsAndInputGiveZeroTaps) {
  auto c = small();
  auto ps = init(c);
  for (auto& e : ps) std::fill(e.tensor.data().begin(), e.tensor.data().end(), 0.0);
  for (const auto& t : taps_of(ps, c, Tensor<>({2, 5, c.patch_len})))
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, TapsAreReproducible) {
  auto c = small(3);
  auto a = init(c, 42), b = init(c, 42);
  auto x = random_tensor({2, 6, c.patch_len}, 7);
  auto ta = taps_of(a, c, x), tb = taps_of(b, c, x);
  ASSERT_EQ(ta.size(), 4u);
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
}

TEST(Backbone, EachTapIsTheNextBlockApplied) {
  auto c = small(3);
  auto ps = init(c, 3);
  auto x = random_tensor({2, 6, c.patch_len}, 4);
  auto taps = taps_of(ps, c, x);
  for (std::size_t n = 1; n <= c.n_layers; ++n) {
    Graph<> g(false);
    Var y = block_forward(g, ps, n, g.constant(taps[n - 1]), c, false);
    EXPECT_EQ(g.value(y), taps[n]) << "block " << n;
  }
}

TEST(Backbone, CausalTapsIgnoreLaterPatches) {
  auto c = small();
  auto ps = init(c, 5);
  auto x = random_tensor({1, 6, c.patch_len}, 6);
  auto y = x;
  for (std::size_t i = 5 * c.patch_len; i < 6 * c.patch_len; ++i) y[i] += 1.0;
  auto tx = taps_of(ps, c, x), ty = taps_of(ps, c, y);
  for (std::size_t i = 0; i < 5 * c.d_model; ++i) EXPECT_EQ(tx.back()[i], ty.back()[i]);
  c.causal = false;
  auto ux = taps_of(ps, c, x), uy = taps_of(ps, c, y);
  EXPECT_NE(ux.back()[0], uy.back()[0]);
}

TEST(Backbone, NonFiniteStateNamesTheBlock) {
  auto c = small();
  auto ps = init(c);
  ps.at(names::block(2, "ffn.w2.bias"))[0] = std::numeric_limits<double>::infinity();
  try {
    taps_of(ps, c, random_tensor({1, 3, c.patch_len}, 1));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("block 2"), std::string::npos) << e.what();
  }
}

TEST(Backbone, TooManyPatchesForPositionTable) {
  auto c = small();
  auto ps = init(c);
  EXPECT_THROW(taps_of(ps, c, random_tensor({1, 9, c.patch_len}, 1)), DimensionError);
}

TEST(Freeze, NoneAndFull) {
  auto c = small();
  auto ps = init(c);
  auto none = apply_freeze(ps, FreezePolicy::none);
  EXPECT_EQ(none.trainable, 0u);
  for (const auto& e : ps)
    if (is_pretrained(e.name)) {
      EXPECT_FALSE(e.trainable) << e.name;
    }
  EXPECT_TRUE(ps.trainable(names::token_weight));
  auto full = apply_freeze(ps, FreezePolicy::full);
  EXPECT_EQ(full.trainable, full.total);
  EXPECT_EQ(ps.trainable_scalar_count(), ps.scalar_count());
}

TEST(Freeze, LayerNormAndPositionsHandCount) {
  auto c = small(2, 32);
  c.max_patches = 128;
  auto ps = init(c);
  const auto r = apply_freeze(ps, FreezePolicy::ln_pe);
  const std::size_t d = 32, n = 2;
  // positions + per block (two norms × gain and shift) + final norm
  EXPECT_EQ(r.trainable, 128 * d + n * (2 * 2 * d) + 2 * d);
  EXPECT_EQ(r.trainable, 4416u);
  EXPECT_EQ(apply_freeze(ps, FreezePolicy::ln).trainable, n * 4 * d + 2 * d);
  EXPECT_EQ(apply_freeze(ps, FreezePolicy::pe).trainable, 128 * d);
  EXPECT_EQ(apply_freeze(ps, FreezePolicy::ln_pe, LnScope::final_only).trainable, 128 * d + 2 * d);
}

TEST(Freeze, FrozenTensorsReceiveNoGradient) {
  auto c = small();
  auto ps = init(c);
  apply_freeze(ps, FreezePolicy::ln_pe);
  Graph<> g(true);
  auto out = forward(g, ps, g.constant(random_tensor({2, 4, c.patch_len}, 3)), c, false);
  g.backward(g.mse_loss(out.taps.back(), random_tensor({2, 4, c.d_model}, 4)));
  for (const auto& e : ps) EXPECT_EQ(e.tensor.has_grad(), e.trainable) << e.name;
}

TEST(Freeze, PolicyNamesRoundTrip) {
  for (auto p : {FreezePolicy::ln_pe, FreezePolicy::ln, FreezePolicy::pe, FreezePolicy::full, FreezePolicy::none})
    EXPECT_EQ(parse_freeze_policy(to_string(p)), p);
  EXPECT_THROW(parse_freeze_policy("most"), ConfigError);
}

TEST(WeightsIo, RoundTripIsBitwise) {
  auto c = small();
  auto ps = init(c, 9);
  apply_freeze(ps, FreezePolicy::ln_pe);
  const auto dir = tapcast::testing::temp_dir("weights_rt");
  save_weights(ps, (dir / "w.bin").string());
  auto back = load_weights<double>((dir / "w.bin").string(), ps);
  ASSERT_EQ(back.size(), ps.size());
  for (const auto& e : ps) {
    EXPECT_EQ(byte_hash(back.at(e.name)), byte_hash(e.tensor)) << e.name;
    EXPECT_EQ(back.trainable(e.name), e.trainable);
  }
  EXPECT_EQ(back.fingerprint(), ps.fingerprint());
}

TEST(WeightsIo, CorruptHeaderIsRejected) {
  auto ps = init(small());
  auto bytes = serialize_weights(ps);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  EXPECT_THROW(deserialize_weights<double>(bad_magic, "mem"), FormatError);
  auto bad_version = bytes;
  bad_version[5] = 9;
  EXPECT_THROW(deserialize_weights<double>(bad_version, "mem"), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_weights<double>(truncated, "mem"), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_weights<double>(trailing, "mem"), FormatError);
}

TEST(WeightsIo, LayoutMismatchesNameTheTensors) {
  auto c = small();
  auto ps = init(c);
  const auto dir = tapcast::testing::temp_dir("weights_layout");
  auto extra = ps;
  extra.add("surprise.tensor", Tensor<>({3}));
  save_weights(extra, (dir / "extra.bin").string());
  try {
    load_weights<double>((dir / "extra.bin").string(), ps);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("surprise.tensor"), std::string::npos) << e.what();
  }
  auto deeper = c;
  deeper.n_layers = 3;
  auto bigger = init(deeper);
  save_weights(ps, (dir / "small.bin").string());
  try {
    load_weights<double>((dir / "small.bin").string(), bigger);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("block.3."), std::string::npos) << e.what();
  }
  auto wider = c;
  wider.max_patches = 9;
  EXPECT_THROW(load_weights<double>((dir / "small.bin").string(), init(wider)), FormatError);
}
