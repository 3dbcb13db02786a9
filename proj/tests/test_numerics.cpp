#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fedrel/optim.hpp"
#include "fedrel/rng.hpp"
#include "fedrel/tape.hpp"
#include "fedrel/tensor.hpp"

namespace fedrel {
namespace {

TEST(Tensor, ShapeAndStorageAgree) {
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.size(), 24);
  Tensor m = Tensor::zeros({5, 2});
  EXPECT_EQ(m.size(), 10);
  EXPECT_EQ(m.rows(), 5);
}

TEST(Tensor, IdentityConstructor) {
  Tensor eye = Tensor::identity(3);
  EXPECT_DOUBLE_EQ(eye.mat()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(eye.mat()(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(eye.mat().sum(), 3.0);
}

TEST(Tensor, RejectsNonFinite) {
  Matrix m(1, 2);
  m << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Tensor{std::move(m)}, NumericError);
  Matrix inf(1, 1);
  inf << std::numeric_limits<double>::infinity();
  EXPECT_THROW(Tensor{std::move(inf)}, NumericError);
}

TEST(Tensor, ZeroSizedDimensionRejected) {
  EXPECT_THROW(Tensor::zeros({0, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({}), ShapeError);
}

TEST(Tensor, SlabViewsRank3) {
  Matrix flat(4, 2);
  flat << 1, 2, 3, 4, 5, 6, 7, 8;
  Tensor t(2, 2, 2, std::move(flat));
  EXPECT_DOUBLE_EQ(t.slab(1)(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(t.slab(1)(1, 1), 8.0);
}

// --- softmax -----------------------------------------------------------

TEST(Softmax, SymmetricPair) {
  Tensor out = softmax_row(Tensor::row({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(out.mat()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out.mat()(0, 1), 0.5);
}

TEST(Softmax, ClosedFormLogTwo) {
  // softmax(0, ln 2): exp(0) = 1, exp(ln 2) = 2, so (1/3, 2/3).
  Tensor out = softmax_row(Tensor::row({0.0, std::log(2.0)}));
  EXPECT_NEAR(out.mat()(0, 0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(out.mat()(0, 1), 2.0 / 3.0, 1e-12);
}

TEST(Softmax, RowsAreStochastic) {
  Rng rng(7);
  Matrix m(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) m(i, j) = rng.uniform(-50.0, 50.0);
  Tensor out = softmax_row(Tensor(std::move(m)));
  for (Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(out.mat().row(i).sum(), 1.0, 1e-12);
    for (Index j = 0; j < 5; ++j) {
      EXPECT_GT(out.mat()(i, j), 0.0);
      EXPECT_LT(out.mat()(i, j), 1.0);
    }
  }
}

TEST(Softmax, OverflowSafe) {
  Tensor out = softmax_row(Tensor::row({1000.0, 1000.0}));
  EXPECT_DOUBLE_EQ(out.mat()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out.mat()(0, 1), 0.5);
}

TEST(Softmax, DegenerateShapeRejected) {
  EXPECT_THROW(softmax_row(Tensor::column({1.0, 2.0})), ShapeError);
}

// --- layer norm --------------------------------------------------------

TEST(LayerNorm, ConstantInputMapsToZero) {
  Tensor out = layer_norm(Tensor::column({3.5, 3.5, 3.5}), 1e-5);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(out.mat()(i, 0), 0.0, 1e-12);
}

TEST(LayerNorm, UnitPair) {
  // [1, -1] already has mean 0 and population variance 1.
  Tensor out = layer_norm(Tensor::column({1.0, -1.0}), 1e-5);
  EXPECT_NEAR(out.mat()(0, 0), 1.0, 1e-4);
  EXPECT_NEAR(out.mat()(1, 0), -1.0, 1e-4);
}

TEST(LayerNorm, OutputMeanIsZero) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Vector v(6);
    for (Index i = 0; i < 6; ++i) v(i) = rng.uniform(-10.0, 10.0);
    Tensor out = layer_norm(Tensor(std::move(v)), 1e-5);
    EXPECT_NEAR(out.mat().col(0).mean(), 0.0, 1e-10);
  }
}

TEST(LayerNorm, ShortInputRejected) {
  EXPECT_THROW(layer_norm(Tensor::column({1.0}), 1e-5), ShapeError);
}

// --- tape / backward ---------------------------------------------------

TEST(Tape, SumOfMatVecGradientIsOuterPattern) {
  // loss = sum(W x). d loss / d W(i,j) = x(j) for every row i.
  Tape t;
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  ValueId wid = t.parameter(Tensor(std::move(w)), "w");
  ValueId x = t.constant(Tensor::column({0.5, -1.0, 2.0}));
  ValueId loss = sum_all(t, matmul(t, wid, x));
  Gradients g = backward(t, loss);
  const Tensor& gw = g.named("w");
  for (Index i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(gw.mat()(i, 0), 0.5);
    EXPECT_DOUBLE_EQ(gw.mat()(i, 1), -1.0);
    EXPECT_DOUBLE_EQ(gw.mat()(i, 2), 2.0);
  }
}

TEST(Tape, CompositeChainMatchesFiniteDifferences) {
  Rng rng(3);
  Tape t;
  ValueId w1 = t.parameter(xavier_init({4, 3}, rng), "w1");
  ValueId w2 = t.parameter(xavier_init({2, 8}, rng), "w2");
  ValueId x = t.constant(xavier_init({3, 3}, rng));

  ValueId h = sigmoid(t, matmul(t, x, transpose(t, w1)));   // 3x4
  ValueId c = concat_cols(t, h, h);                         // 3x8
  ValueId z = softmax_rows(t, matmul(t, c, transpose(t, w2)));
  ValueId ln = layer_norm_rows(t, c, 1e-5);
  ValueId loss = add(t, mean_all(t, z), mean_all(t, mul(t, ln, ln)));

  Gradients g = backward(t, loss);
  for (const char* name : {"w1", "w2"}) {
    ValueId leaf = g.named_leaves().at(name);
    Tensor fd = fd_gradient(t, loss, leaf, 1e-5);
    EXPECT_LT(max_rel_error(g.named(name), fd), 1e-4) << name;
  }
}

TEST(Tape, UnusedLeafGetsExactZeros) {
  Tape t;
  ValueId used = t.parameter(Tensor::scalar(2.0), "used");
  ValueId unused = t.parameter(Tensor::column({1.0, 2.0}), "unused");
  (void)unused;
  ValueId loss = mul(t, used, used);
  Gradients g = backward(t, loss);
  EXPECT_DOUBLE_EQ(g.named("used").scalar_value(), 4.0);
  const Tensor& gu = g.named("unused");
  EXPECT_DOUBLE_EQ(gu.mat()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(gu.mat()(1, 0), 0.0);
}

TEST(Tape, NonScalarLossRejected) {
  Tape t;
  ValueId v = t.parameter(Tensor::column({1.0, 2.0}), "v");
  EXPECT_THROW(backward(t, v), ShapeError);
}

TEST(Tape, ReplayIsBitwise) {
  Rng rng(5);
  Tape t;
  ValueId w = t.parameter(xavier_init({3, 3}, rng), "w");
  ValueId x = t.constant(xavier_init({3, 2}, rng));
  ValueId out = softmax_rows(t, sigmoid(t, matmul(t, w, x)));
  ValueId loss = mean_all(t, out);
  std::vector<Tensor> before;
  for (ValueId id = 0; id < t.size(); ++id) before.push_back(t.value(id));
  t.replay();
  for (ValueId id = 0; id < t.size(); ++id) {
    EXPECT_TRUE(before[static_cast<std::size_t>(id)].bitwise_equal(t.value(id)))
        << "node " << id;
  }
  EXPECT_TRUE(t.value(loss).is_scalar());
}

TEST(Tape, MulSharedInputAccumulatesBothSides) {
  Tape t;
  ValueId x = t.parameter(Tensor::scalar(3.0), "x");
  ValueId loss = mul(t, x, x);
  Gradients g = backward(t, loss);
  EXPECT_DOUBLE_EQ(g.named("x").scalar_value(), 6.0);
}

TEST(Tape, NonFiniteResultAborts) {
  Tape t;
  ValueId x = t.constant(Tensor::scalar(1e308));
  EXPECT_THROW(exp_elem(t, x), NumericError);
}

// --- Adam --------------------------------------------------------------

TEST(Adam, ZeroGradientIsIdentity) {
  Params params;
  params.emplace("w", Tensor::row({1.0, -2.0, 3.0}));
  Params before = params;
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::zeros({1, 3}));
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_TRUE(params.at("w").bitwise_equal(before.at("w")));
  EXPECT_EQ(state.steps(), 5);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // With g = 1: m_hat = 1, v_hat = 1, so the update is lr / (1 + eps).
  AdamConfig cfg;
  Params params;
  params.emplace("p", Tensor::scalar(0.0));
  std::map<std::string, Tensor> grads;
  grads.emplace("p", Tensor::scalar(1.0));
  AdamState state(cfg);
  adam_step(params, grads, state);
  const double expected = -cfg.lr / (1.0 + cfg.eps);
  EXPECT_NEAR(params.at("p").scalar_value(), expected, 1e-15);
  EXPECT_NEAR(std::abs(params.at("p").scalar_value()), cfg.lr, 1e-9);
}

TEST(Adam, DefaultLearningRate) {
  EXPECT_DOUBLE_EQ(AdamConfig{}.lr, 1.5e-3);
  EXPECT_DOUBLE_EQ(AdamConfig{}.beta1, 0.9);
  EXPECT_DOUBLE_EQ(AdamConfig{}.beta2, 0.999);
  EXPECT_DOUBLE_EQ(AdamConfig{}.eps, 1e-8);
}

TEST(Adam, ShapeMismatchRejected) {
  Params params;
  params.emplace("p", Tensor::row({1.0, 2.0}));
  std::map<std::string, Tensor> grads;
  grads.emplace("p", Tensor::row({1.0, 2.0, 3.0}));
  AdamState state;
  EXPECT_THROW(adam_step(params, grads, state), ShapeError);
}

// --- Xavier ------------------------------------------------------------

TEST(Xavier, SamplesRespectBound) {
  Rng rng(123);
  const Index fan_out = 20, fan_in = 30;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  double sum = 0.0;
  Index count = 0;
  for (int draw = 0; draw < 17; ++draw) {
    Tensor t = xavier_init({fan_out, fan_in}, rng);
    for (Index i = 0; i < t.size(); ++i) {
      EXPECT_LE(std::abs(t.data()[i]), bound);
      sum += t.data()[i];
    }
    count += t.size();
  }
  ASSERT_GE(count, 10000);
  // Mean of n uniform(-a, a) draws has standard error a / sqrt(3 n).
  const double se = bound / std::sqrt(3.0 * static_cast<double>(count));
  EXPECT_LT(std::abs(sum / static_cast<double>(count)), 3.0 * se);
}

TEST(Xavier, DeterministicPerSeed) {
  Rng a(42), b(42);
  Tensor ta = xavier_init({7, 5}, a);
  Tensor tb = xavier_init({7, 5}, b);
  EXPECT_TRUE(ta.bitwise_equal(tb));
}

TEST(Xavier, ZeroDimensionRejected) {
  Rng rng(1);
  EXPECT_THROW(xavier_init({0, 4}, rng), ShapeError);
}

// --- rng ---------------------------------------------------------------

TEST(RngTest, DirichletSumsToOne) {
  Rng rng(9);
  for (double alpha : {0.1, 0.5, 1.0, 100.0}) {
    auto p = rng.dirichlet(alpha, 6);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(RngTest, DerivedStreamsDiffer) {
  Rng a(derive_seed(7, 1, 0));
  Rng b(derive_seed(7, 2, 0));
  EXPECT_NE(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace fedrel
