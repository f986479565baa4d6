#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "tapcast/diagnostics.hpp"
#include "tapcast/numerics/adam.hpp"
#include "tapcast/numerics/grad_check.hpp"
#include "tapcast/numerics/graph.hpp"
#include "tapcast/numerics/kernels.hpp"
#include "test_util.hpp"

using namespace tapcast;
using tapcast::testing::random_tensor;
using tapcast::testing::rel_err;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  auto c = kernels::matmul(Tensor<>::matrix({{1, 0}, {0, 1}}), Tensor<>::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(c, Tensor<>::matrix({{3, 4}, {5, 6}}));
}

TEST(Matmul, RowTimesColumn) {
  auto c = kernels::matmul(Tensor<>::matrix({{1, 2}}), Tensor<>::matrix({{3}, {4}}));
  EXPECT_EQ(c, Tensor<>::matrix({{11}}));
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::size_t m : {4u, 5u, 9u}) {
    auto a = random_tensor({m, 5}, 1 + m);
    auto b = random_tensor({5, 3}, 2 + m);
    auto c = kernels::matmul(a, b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
        EXPECT_LE(rel_err(c.at(i, j), s), 1e-12);
      }
  }
}

TEST(Matmul, RejectsMismatchedShapes) {
  EXPECT_THROW(kernels::matmul(Tensor<>({2, 3}), Tensor<>({2, 3})), DimensionError);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  auto y = kernels::layer_norm(Tensor<>::matrix({{1, 1, 1, 1}}), Tensor<>({4}, 1.0), Tensor<>({4}), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, SymmetricPairMapsToPlusMinusOne) {
  auto y = kernels::layer_norm(Tensor<>::matrix({{0, 2}}), Tensor<>({2}, 1.0), Tensor<>({2}), 1e-14);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, RandomRowHasZeroMeanUnitVariance) {
  auto x = random_tensor({3, 64}, 7, -5, 5);
  auto y = kernels::layer_norm(x, Tensor<>({64}, 1.0), Tensor<>({64}), 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 64; ++j) mean += y.at(r, j);
    mean /= 64;
    for (std::size_t j = 0; j < 64; ++j) var += (y.at(r, j) - mean) * (y.at(r, j) - mean);
    var /= 64;
    double xm = 0, xv = 0;
    for (std::size_t j = 0; j < 64; ++j) xm += x.at(r, j);
    xm /= 64;
    for (std::size_t j = 0; j < 64; ++j) xv += (x.at(r, j) - xm) * (x.at(r, j) - xm);
    xv /= 64;
    EXPECT_LE(std::abs(mean), 1e-9);
    EXPECT_NEAR(var, xv / (xv + 1e-5), 1e-12);
  }
}

TEST(LayerNorm, RejectsNonPositiveEps) {
  EXPECT_THROW(kernels::layer_norm(Tensor<>({1, 2}), Tensor<>({2}, 1.0), Tensor<>({2}), 0.0), ConfigError);
}

TEST(Attention, SinglePositionReturnsValue) {
  auto q = random_tensor({2, 1, 4}, 1), k = random_tensor({2, 1, 4}, 2), v = random_tensor({2, 1, 4}, 3);
  EXPECT_EQ(kernels::softmax_attention(q, k, v, false), v);
  EXPECT_EQ(kernels::softmax_attention(q, k, v, true), v);
}

TEST(Attention, SaturatedOneHotSelectsMatchingValue) {
  const std::size_t p = 3;
  Tensor<> q({1, p, p}), v = random_tensor({1, p, p}, 5);
  for (std::size_t i = 0; i < p; ++i) q[i * p + i] = 60.0;
  auto out = kernels::softmax_attention(q, q, v, false);
  for (std::size_t i = 0; i < p * p; ++i) EXPECT_NEAR(out[i], v[i], 1e-9);
}

TEST(Attention, MatchesNaiveLoop) {
  const std::size_t h = 2, p = 3, dh = 4;
  auto q = random_tensor({h, p, dh}, 11), k = random_tensor({h, p, dh}, 12), v = random_tensor({h, p, dh}, 13);
  for (bool causal : {false, true}) {
    auto out = kernels::softmax_attention(q, k, v, causal);
    for (std::size_t a = 0; a < h; ++a)
      for (std::size_t i = 0; i < p; ++i) {
        const std::size_t vis = causal ? i + 1 : p;
        std::vector<double> w(vis);
        double z = 0;
        for (std::size_t j = 0; j < vis; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += q[(a * p + i) * dh + c] * k[(a * p + j) * dh + c];
          w[j] = std::exp(s / std::sqrt(double(dh)));
          z += w[j];
        }
        for (std::size_t c = 0; c < dh; ++c) {
          double o = 0;
          for (std::size_t j = 0; j < vis; ++j) o += w[j] / z * v[(a * p + j) * dh + c];
          EXPECT_LE(rel_err(out[(a * p + i) * dh + c], o), 1e-12);
        }
      }
  }
}

TEST(Pointwise, Relu) {
  EXPECT_EQ(kernels::relu(Tensor<>::vector({-1, 0, 2})), Tensor<>::vector({0, 0, 2}));
}

TEST(Pointwise, ZeroRateDropoutIsIdentity) {
  Rng rng(1);
  auto x = random_tensor({4, 5}, 3);
  EXPECT_EQ(kernels::dropout(x, 0.0, true, rng), x);
  EXPECT_EQ(kernels::dropout(x, 0.5, false, rng), x);
}

TEST(Pointwise, DropoutScalesSurvivors) {
  Rng rng(9);
  Tensor<> x({1000}, 1.0);
  auto y = kernels::dropout(x, 0.25, true, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  EXPECT_GT(zeros, 150u);
  EXPECT_LT(zeros, 350u);
  EXPECT_THROW(kernels::dropout(x, 1.0, true, rng), ConfigError);
}

TEST(Pointwise, ConcatLastShapeAndBlocks) {
  auto a = random_tensor({3, 2}, 1), b = random_tensor({3, 4}, 2);
  auto c = kernels::concat_last(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 6}));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(c.at(r, j), a.at(r, j));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(c.at(r, 2 + j), b.at(r, j));
  }
}

TEST(Loss, MseCases) {
  auto x = random_tensor({2, 3}, 4);
  EXPECT_EQ(kernels::mse_loss(x, x), 0.0);
  EXPECT_EQ(kernels::mse_loss(Tensor<>::vector({0, 0}), Tensor<>::vector({1, 1})), 1.0);
  auto y = random_tensor({2, 3}, 5);
  double s = 0;
  for (std::size_t i = 0; i < 6; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_LE(rel_err(kernels::mse_loss(x, y), s / 6), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
  ParamSet<> ps;
  ps.add("w", random_tensor({3}, 1));
  const auto before = ps.at("w");
  AdamState<> st(ps, {});
  ps.at("w").ensure_grad();
  EXPECT_EQ(adam_step(ps, st), 3u);
  EXPECT_EQ(ps.at("w"), before);
  EXPECT_EQ(st.step(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet<> ps;
  ps.add("w", Tensor<>::vector({2.0}));
  AdamState<> st(ps, {0.1, 0.9, 0.999, 1e-8});
  ps.at("w").ensure_grad()[0] = 1.0;
  adam_step(ps, st);
  // m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps).
  EXPECT_NEAR(ps.at("w")[0], 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_FALSE(ps.at("w").has_grad());
}

TEST(Adam, FrozenTensorIsNotTouched) {
  ParamSet<> ps;
  ps.add("a", Tensor<>::vector({1.0}));
  ps.add("b", Tensor<>::vector({1.0}), false);
  AdamState<> st(ps, {0.1});
  ps.at("a").ensure_grad()[0] = 1.0;
  ps.at("b").ensure_grad()[0] = 1.0;
  EXPECT_EQ(adam_step(ps, st), 1u);
  EXPECT_EQ(ps.at("b")[0], 1.0);
  EXPECT_FALSE(st.has_moments("b"));
}

TEST(Adam, MissingGradientIsAStateError) {
  ParamSet<> ps;
  ps.add("a", Tensor<>::vector({1.0}));
  AdamState<> st(ps, {});
  EXPECT_THROW(adam_step(ps, st), StateError);
}

TEST(GradCheck, LinearFunction) {
  ParamSet<> ps;
  ps.add("w", Tensor<>::vector({0.7}));
  LossFn<double> f = [](ParamSet<double>& p, bool grad) {
    if (grad) p.at("w").ensure_grad()[0] = 3.0;
    return 3.0 * p.at("w")[0];
  };
  auto r = grad_check(f, ps);
  EXPECT_LE(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.checked, 1u);
}

TEST(GradCheck, FrozenParametersAreSkipped) {
  ParamSet<> ps;
  ps.add("w", Tensor<>::vector({0.7}));
  ps.add("frozen", Tensor<>::vector({1.0}), false);
  int calls_touching_frozen = 0;
  LossFn<double> f = [&](ParamSet<double>& p, bool grad) {
    if (p.at("frozen")[0] != 1.0) ++calls_touching_frozen;
    if (grad) p.at("w").ensure_grad()[0] = 2.0 * p.at("w")[0];
    return p.at("w")[0] * p.at("w")[0] + p.at("frozen")[0];
  };
  auto r = grad_check(f, ps);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0], "frozen");
  EXPECT_EQ(calls_touching_frozen, 0);
}

TEST(GradCheck, NonDeterministicLossIsRejected) {
  ParamSet<> ps;
  ps.add("w", Tensor<>::vector({0.7}));
  double drift = 0;
  LossFn<double> f = [&](ParamSet<double>& p, bool grad) {
    if (grad) p.at("w").ensure_grad()[0] = 1.0;
    drift += 1e-3;
    return p.at("w")[0] + drift;
  };
  EXPECT_THROW(grad_check(f, ps), HarnessError);
}

// Every tape op checked in isolation through an MSE against a fixed target.
namespace {

double op_check(const std::function<Var(Graph<double>&, ParamSet<double>&)>& build, ParamSet<double>& ps,
                const Shape& out_shape) {
  const auto target = random_tensor(out_shape, 99);
  LossFn<double> f = [&](ParamSet<double>& p, bool grad) {
    Graph<double> g(grad);
    Var y = build(g, p);
    Var loss = g.mse_loss(y, target);
    if (grad) g.backward(loss);
    return g.value(loss)[0];
  };
  return grad_check(f, ps).max_rel_error;
}

ParamSet<double> params(std::initializer_list<std::pair<const char*, Tensor<>>> items) {
  ParamSet<double> ps;
  for (const auto& [n, t] : items) ps.add(n, t);
  return ps;
}

}  // namespace

TEST(TapeGradients, LinearAndMatmul) {
  auto ps = params({{"x", random_tensor({2, 3, 4}, 1)}, {"w", random_tensor({4, 5}, 2)}, {"b", random_tensor({5}, 3)}});
  EXPECT_LE(op_check([](auto& g, auto& p) {
              return g.linear(g.parameter(p, "x"), g.parameter(p, "w"), g.parameter(p, "b"));
            }, ps, {2, 3, 5}), 1e-6);
  auto pm = params({{"a", random_tensor({3, 4}, 4)}, {"b", random_tensor({4, 2}, 5)}});
  EXPECT_LE(op_check([](auto& g, auto& p) { return g.matmul(g.parameter(p, "a"), g.parameter(p, "b")); }, pm, {3, 2}),
            1e-6);
}

TEST(TapeGradients, LayerNormGeluReluScale) {
  auto ps = params({{"x", random_tensor({3, 6}, 6, -2, 2)}, {"g", random_tensor({6}, 7)}, {"b", random_tensor({6}, 8)}});
  EXPECT_LE(op_check([](auto& g, auto& p) {
              Var y = g.layer_norm(g.parameter(p, "x"), g.parameter(p, "g"), g.parameter(p, "b"), 1e-5);
              return g.scale(g.gelu(y), 1.5);
            }, ps, {3, 6}), 1e-6);
  // Inputs kept away from the kink at zero.
  auto x = random_tensor({10}, 9, 0.2, 1.0);
  for (std::size_t i = 0; i < 10; i += 2) x[i] = -x[i];
  auto pr = params({{"x", x}});
  EXPECT_LE(op_check([](auto& g, auto& p) { return g.relu(g.parameter(p, "x")); }, pr, {10}), 1e-6);
}

TEST(TapeGradients, AttentionCausalAndNot) {
  for (bool causal : {true, false}) {
    auto ps = params({{"q", random_tensor({2, 4, 6}, 10)}, {"k", random_tensor({2, 4, 6}, 11)},
                      {"v", random_tensor({2, 4, 6}, 12)}});
    EXPECT_LE(op_check([causal](auto& g, auto& p) {
                return g.attention(g.parameter(p, "q"), g.parameter(p, "k"), g.parameter(p, "v"), 3, causal);
              }, ps, {2, 4, 6}), 1e-6);
  }
}

TEST(TapeGradients, StructuralOps) {
  auto ps = params({{"a", random_tensor({2, 3, 2}, 13)}, {"b", random_tensor({2, 3, 4}, 14)},
                    {"pos", random_tensor({5, 6}, 15)}});
  EXPECT_LE(op_check([](auto& g, auto& p) {
              Var c = g.concat_last(g.parameter(p, "a"), g.parameter(p, "b"));
              c = g.add_leading_rows(c, g.parameter(p, "pos"));
              c = g.add(c, c);
              return g.reshape(c, {2, 18});
            }, ps, {2, 18}), 1e-6);
  auto pa = params({{"x", random_tensor({3, 4}, 16)}});
  EXPECT_LE(op_check([](auto& g, auto& p) {
              return g.affine_rows(g.parameter(p, "x"), {2.0, 0.5, 3.0}, {1.0, -1.0, 0.0});
            }, pa, {3, 4}), 1e-6);
}

TEST(TapeGradients, FrozenParametersGetNoGradient) {
  ParamSet<> ps;
  ps.add("w", random_tensor({3, 3}, 1), false);
  ps.add("x", random_tensor({2, 3}, 2));
  Graph<> g(true);
  Var y = g.linear(g.parameter(ps, "x"), g.parameter(ps, "w"));
  g.backward(g.mse_loss(y, random_tensor({2, 3}, 3)));
  EXPECT_FALSE(ps.at("w").has_grad());
  EXPECT_TRUE(ps.at("x").has_grad());
}

TEST(TapeGradients, UnreachedTrainableParameterGetsZeroGradient) {
  ParamSet<> ps;
  ps.add("x", random_tensor({2}, 1));
  ps.add("unused", random_tensor({2}, 2));
  Graph<> g(true);
  Var used = g.parameter(ps, "x");
  g.parameter(ps, "unused");
  g.backward(g.mse_loss(used, Tensor<>({2})));
  ASSERT_TRUE(ps.at("unused").has_grad());
  for (double v : ps.at("unused").grad()) EXPECT_EQ(v, 0.0);
}

TEST(TapeGradients, FullTinyModel) {
  auto setup = make_gradcheck_setup<double>(tiny_gradcheck_config(), 2024);
  auto r = grad_check<double>(model_loss(setup.model, setup.batch), setup.model.params);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
  EXPECT_EQ(r.checked, setup.model.params.scalar_count());
}

TEST(TapeGradients, FullTinyModelOnInputScale) {
  // Checks the denormalizing output path; the loss is larger, so the finite
  // differences carry more roundoff and the tolerance is correspondingly wider.
  auto setup = make_gradcheck_setup<double>(tiny_gradcheck_config(), 2024);
  auto r = grad_check<double>(model_loss(setup.model, setup.batch, false), setup.model.params);
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Tensor, ZeroDimensionIsRejected) {
  EXPECT_THROW(Tensor<>({2, 0}), DimensionError);
  EXPECT_THROW(Tensor<>({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST(Tensor, ByteHashTracksContent) {
  auto a = random_tensor({4, 4}, 1);
  auto b = a;
  EXPECT_EQ(byte_hash(a), byte_hash(b));
  b[5] = std::nextafter(b[5], 2.0);
  EXPECT_NE(byte_hash(a), byte_hash(b));
}
