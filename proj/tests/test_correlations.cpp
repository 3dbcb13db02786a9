#include <gtest/gtest.h>

#include <cmath>

#include "fedrel/correlations.hpp"
#include "fedrel/rng.hpp"

namespace fedrel {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// --- k-NN ----------------------------------------------------------------

TEST(Knn, CollinearPointsByHand) {
  // Points at 0, 1, 10 on a line: 0 and 1 are mutually nearest, 10 -> 1.
  Matrix x(3, 1);
  x << 0.0, 1.0, 10.0;
  Adjacency a = knn_adjacency(Tensor(std::move(x)), 1);
  const Matrix& m = a.matrix.mat();
  EXPECT_DOUBLE_EQ(m(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.sum(), 3.0);  // exactly k per row
  EXPECT_EQ(a.kind, AdjacencyKind::kKnn);
}

TEST(Knn, FullNeighbourhoodIsAllOnesOffDiagonal) {
  Rng rng(3);
  Matrix x(4, 2);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 2; ++j) x(i, j) = rng.uniform(-1, 1);
  Adjacency a = knn_adjacency(Tensor(std::move(x)), 3);
  const Matrix& m = a.matrix.mat();
  for (Index i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(m(i, i), 0.0);
    for (Index j = 0; j < 4; ++j) {
      if (i != j) EXPECT_DOUBLE_EQ(m(i, j), 1.0);
    }
  }
}

TEST(Knn, DuplicateRowsTieBreakToLowerIndex) {
  Matrix x(4, 1);
  x << 5.0, 5.0, 5.0, 5.0;  // all ties
  Adjacency a = knn_adjacency(Tensor(std::move(x)), 2);
  const Matrix& m = a.matrix.mat();
  // Row 3 must pick nodes 0 and 1 (lowest indices), not 2.
  EXPECT_DOUBLE_EQ(m(3, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(3, 1), 1.0);
  EXPECT_DOUBLE_EQ(m(3, 2), 0.0);
  // Deterministic across calls.
  Matrix y(4, 1);
  y << 5.0, 5.0, 5.0, 5.0;
  EXPECT_TRUE(a.matrix.bitwise_equal(knn_adjacency(Tensor(std::move(y)), 2).matrix));
}

TEST(Knn, InvalidKRejected) {
  Matrix x(3, 1);
  x << 0, 1, 2;
  Tensor t(std::move(x));
  EXPECT_THROW(knn_adjacency(t, 3), ShapeError);
  EXPECT_THROW(knn_adjacency(t, 0), ShapeError);
}

// --- PCC -----------------------------------------------------------------

TEST(Pcc, SelfCorrelationIsOne) {
  Matrix x(2, 3);
  x << 1, 2, 3, 1, 2, 3;
  Adjacency a = pcc_adjacency(Tensor(std::move(x)));
  EXPECT_DOUBLE_EQ(a.matrix.mat()(0, 0), 1.0);
  EXPECT_NEAR(a.matrix.mat()(0, 1), 1.0, 1e-12);
}

TEST(Pcc, NegationHasAbsoluteCorrelationOne) {
  Matrix x(2, 4);
  x << 1, -2, 3, 0.5, -1, 2, -3, -0.5;
  Adjacency a = pcc_adjacency(Tensor(std::move(x)));
  EXPECT_NEAR(a.matrix.mat()(0, 1), 1.0, 1e-12);
}

TEST(Pcc, HandComputedPair) {
  Matrix x(2, 3);
  x << 1, 2, 3, 1, 2, 4;
  Adjacency a = pcc_adjacency(Tensor(std::move(x)));
  // Brute-force Pearson formula, written out independently.
  const double xs[3] = {1, 2, 3}, ys[3] = {1, 2, 4};
  double mx = 0, my = 0;
  for (int i = 0; i < 3; ++i) {
    mx += xs[i] / 3.0;
    my += ys[i] / 3.0;
  }
  double cov = 0, vx = 0, vy = 0;
  for (int i = 0; i < 3; ++i) {
    cov += (xs[i] - mx) * (ys[i] - my);
    vx += (xs[i] - mx) * (xs[i] - mx);
    vy += (ys[i] - my) * (ys[i] - my);
  }
  const double expected = std::abs(cov / std::sqrt(vx * vy));
  EXPECT_NEAR(a.matrix.mat()(0, 1), expected, 1e-12);
  EXPECT_NEAR(a.matrix.mat()(0, 1), 0.9819805060619659, 1e-12);
}

TEST(Pcc, SymmetricAndBounded) {
  Rng rng(17);
  Matrix x(5, 8);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  Adjacency a = pcc_adjacency(Tensor(std::move(x)));
  const Matrix& m = a.matrix.mat();
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      EXPECT_DOUBLE_EQ(m(i, j), m(j, i));
      EXPECT_GE(m(i, j), 0.0);
      EXPECT_LE(m(i, j), 1.0 + 1e-12);
    }
  }
}

TEST(Pcc, ZeroVarianceRowNamed) {
  Matrix x(3, 3);
  x << 1, 2, 3, 4, 4, 4, 5, 6, 7;
  try {
    pcc_adjacency(Tensor(std::move(x)));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

// --- PLV -----------------------------------------------------------------

Matrix sinusoid_rows(int n, int d, const std::vector<double>& freqs,
                     const std::vector<double>& phases) {
  Matrix x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < d; ++t) {
      x(i, t) = std::sin(freqs[static_cast<std::size_t>(i)] * t +
                         phases[static_cast<std::size_t>(i)]);
    }
  }
  return x;
}

TEST(Plv, IdenticalSignalsLockPerfectly) {
  Matrix x = sinusoid_rows(2, 32, {0.5, 0.5}, {0.3, 0.3});
  Adjacency a = plv_adjacency(Tensor(std::move(x)));
  EXPECT_NEAR(a.matrix.mat()(0, 1), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(a.matrix.mat()(0, 0), 1.0);
}

TEST(Plv, ConstantPhaseOffsetLocksPerfectly) {
  Matrix x = sinusoid_rows(2, 64, {kTwoPi * 4 / 64, kTwoPi * 4 / 64}, {0.0, 1.1});
  Adjacency a = plv_adjacency(Tensor(std::move(x)));
  EXPECT_NEAR(a.matrix.mat()(0, 1), 1.0, 1e-6);
}

TEST(Plv, IndependentRandomPhasePairsStayLow) {
  // Different incommensurate frequencies and random phases: the mean PLV over
  // 100 trials must stay well below lock.
  Rng rng(29);
  double total = 0.0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const double f1 = kTwoPi * (3.0 + 5.0 * rng.uniform01()) / 64.0;
    const double f2 = kTwoPi * (9.0 + 10.0 * rng.uniform01()) / 64.0;
    Matrix x = sinusoid_rows(2, 64, {f1, f2},
                             {rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi)});
    Adjacency a = plv_adjacency(Tensor(std::move(x)));
    total += a.matrix.mat()(0, 1);
  }
  EXPECT_LT(total / trials, 0.3);
}

TEST(Plv, ValuesBoundedAndSymmetric) {
  Rng rng(31);
  Matrix x(4, 16);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  Adjacency a = plv_adjacency(Tensor(std::move(x)));
  const Matrix& m = a.matrix.mat();
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      EXPECT_GE(m(i, j), 0.0);
      EXPECT_LE(m(i, j), 1.0);
      EXPECT_DOUBLE_EQ(m(i, j), m(j, i));
    }
  }
}

TEST(Plv, ConstantSignalRejected) {
  Matrix x(2, 8);
  x.setZero();
  x.row(0).setLinSpaced(8, 0.0, 1.0);
  EXPECT_THROW(plv_adjacency(Tensor(std::move(x))), NumericError);
}

TEST(Plv, TooFewSamplesRejected) {
  Matrix x(2, 3);
  x << 1, 2, 3, 3, 2, 1;
  EXPECT_THROW(plv_adjacency(Tensor(std::move(x))), ShapeError);
}

}  // namespace
}  // namespace fedrel
