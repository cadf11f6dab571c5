#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sevit/numkernel.hpp"
#include "sevit/rng.hpp"
#include "test_support.hpp"

using namespace sevit;
using sevit::testing::random_matrix;
using sevit::testing::random_tensor;
using sevit::testing::to_grid;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const RowMatrixd m = random_matrix(3, 3, rng);
  EXPECT_EQ(matmul(RowMatrixd::Identity(3, 3), m), m);
}

TEST(Matmul, HandArithmetic) {
  RowMatrixd a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 5, 6;
  const RowMatrixd c = matmul(a, b);
  EXPECT_EQ(c(0, 0), 17.0);
  EXPECT_EQ(c(1, 0), 39.0);
}

TEST(Matmul, MatchesTripleLoopOnRandomShapes) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(16));
    const Index k = 1 + static_cast<Index>(rng.below(16));
    const Index m = 1 + static_cast<Index>(rng.below(16));
    const RowMatrixd a = random_matrix(n, k, rng);
    const RowMatrixd b = random_matrix(k, m, rng);
    const RowMatrixd c = matmul(a, b);
    const auto ref = oracle::triple_loop_matmul(to_grid(a), to_grid(b));
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < m; ++j) EXPECT_NEAR(c(i, j), ref[i][j], 1e-12);
    }
  }
}

TEST(Matmul, SevenByFiveTimesFiveByThree) {
  Rng rng(11);
  const RowMatrixd a = random_matrix(7, 5, rng);
  const RowMatrixd b = random_matrix(5, 3, rng);
  const auto ref = oracle::triple_loop_matmul(to_grid(a), to_grid(b));
  const RowMatrixd c = matmul(a, b);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(c(i, j), ref[i][j], 1e-12);
  }
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(RowMatrixd::Zero(2, 3), RowMatrixd::Zero(4, 5));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2 x 3)"), std::string::npos);
    EXPECT_NE(msg.find("(4 x 5)"), std::string::npos);
  }
}

TEST(Activate, ReluSignCases) {
  RowMatrixd x(1, 3);
  x << -1, 0, 2;
  const RowMatrixd y = activate(x, Activation::relu);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(0, 2), 2.0);
}

TEST(Activate, SigmoidAtZeroIsHalf) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(activate(RowMatrixd::Zero(2, 2), Activation::sigmoid), RowMatrixd::Constant(2, 2, 0.5));
}

TEST(Activate, SigmoidStaysFiniteAtExtremes) {
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
}

TEST(Activate, TanhMatchesSeriesReference) {
  RowMatrixd x(1, 1);
  x << 0.5;
  EXPECT_NEAR(activate(x, Activation::tanh)(0, 0), oracle::series_tanh(0.5), 1e-12);
}

TEST(Activate, NoneIsIdentity) {
  Rng rng(3);
  const RowMatrixd x = random_matrix(3, 4, rng);
  EXPECT_EQ(activate(x, Activation::none), x);
}

TEST(Softmax, ZeroRowIsUniform) {
  const RowMatrixd p = softmax_rows(RowMatrixd::Zero(1, 6));
  for (Index j = 0; j < 6; ++j) EXPECT_NEAR(p(0, j), 1.0 / 6.0, 1e-15);
}

TEST(Softmax, ClosedFormTwoEntries) {
  RowMatrixd x(1, 2);
  x << 0.0, std::log(3.0);
  const RowMatrixd p = softmax_rows(x);
  EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
}

TEST(Softmax, LargeEntriesAreShifted) {
  RowMatrixd big(1, 2), small(1, 2);
  big << 1000.0, 1001.0;
  small << 0.0, 1.0;
  const RowMatrixd a = softmax_rows(big);
  const RowMatrixd b = softmax_rows(small);
  ASSERT_TRUE(all_finite(a));
  EXPECT_NEAR(a(0, 0), b(0, 0), 1e-12);
  EXPECT_NEAR(a(0, 1), b(0, 1), 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const RowMatrixd x = random_matrix(4, 7, rng, 1e3);
    const RowMatrixd p = softmax_rows(x);
    for (Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
    const double c = rng.normal(0.0, 50.0);
    const RowMatrixd q = softmax_rows((x.array() + c).matrix());
    EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  const RowMatrixd y = layer_norm(RowMatrixd::Constant(2, 5, 3.0), RowVectord::Ones(5),
                                  RowVectord::Zero(5), 1e-5);
  EXPECT_EQ(y, RowMatrixd::Zero(2, 5));
}

TEST(LayerNorm, TwoPointStandardization) {
  RowMatrixd x(1, 2);
  x << 1.0, 3.0;
  const RowMatrixd y = layer_norm(x, RowVectord::Ones(2), RowVectord::Zero(2), 1e-15);
  EXPECT_NEAR(y(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(y(0, 1), 1.0, 1e-12);
}

TEST(LayerNorm, RandomRowsHaveZeroMeanUnitVariance) {
  // With eps in the denominator the output variance is var / (var + eps), so
  // the unit-variance check uses a negligible eps.
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const double scale = trial < 5 ? 4.0 : 1e-2;
    const RowMatrixd x = random_matrix(3, 8, rng, scale);
    const RowMatrixd y = layer_norm(x, RowVectord::Ones(8), RowVectord::Zero(8), 1e-14);
    for (Index r = 0; r < 3; ++r) {
      const double mean = y.row(r).mean();
      const double var = (y.row(r).array() - mean).square().mean();
      EXPECT_LT(std::abs(mean), 1e-9);
      EXPECT_LT(std::abs(var - 1.0), 1e-6);
    }
  }
}

TEST(LayerNorm, DefaultEpsShrinksVarianceByKnownFactor) {
  Rng rng(10);
  const double eps = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const RowMatrixd x = random_matrix(2, 6, rng);
    const RowMatrixd y = layer_norm(x, RowVectord::Ones(6), RowVectord::Zero(6), eps);
    for (Index r = 0; r < 2; ++r) {
      const double in_var = (x.row(r).array() - x.row(r).mean()).square().mean();
      const double out_var = (y.row(r).array() - y.row(r).mean()).square().mean();
      EXPECT_LT(std::abs(y.row(r).mean()), 1e-9);
      EXPECT_NEAR(out_var, in_var / (in_var + eps), 1e-9);
    }
  }
}

TEST(LayerNorm, GainAndBiasApplyAfterStandardizing) {
  RowMatrixd x(1, 2);
  x << 1.0, 3.0;
  RowVectord gain(2), bias(2);
  gain << 2.0, 3.0;
  bias << 0.5, -0.5;
  const RowMatrixd y = layer_norm(x, gain, bias, 1e-15);
  EXPECT_NEAR(y(0, 0), -1.5, 1e-12);
  EXPECT_NEAR(y(0, 1), 2.5, 1e-12);
}

TEST(LayerNorm, RejectsBadWidthOrEps) {
  EXPECT_THROW(layer_norm(RowMatrixd::Zero(1, 3), RowVectord::Ones(2), RowVectord::Zero(3), 1e-5), ShapeError);
  EXPECT_THROW(layer_norm(RowMatrixd::Zero(1, 3), RowVectord::Ones(3), RowVectord::Zero(3), 0.0), ShapeError);
}

TEST(Pool, AllOnes) {
  const Tensor3d x = Tensor3d::from_tokens(RowMatrixd::Ones(8, 3), 2, 4);
  EXPECT_EQ(global_avg_pool_tokens(x), RowMatrixd::Ones(2, 3));
}

TEST(Pool, SingleStepIsUnchanged) {
  Rng rng(2);
  const Tensor3d x = random_tensor(3, 1, 4, rng);
  EXPECT_EQ(global_avg_pool_tokens(x), x.tokens());
}

TEST(Pool, MatchesExplicitLoop) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor3d x = random_tensor(3, 6, 5, rng);
    const RowMatrixd p = global_avg_pool_tokens(x);
    for (Index b = 0; b < 3; ++b) {
      for (Index c = 0; c < 5; ++c) {
        double s = 0.0;
        for (Index t = 0; t < 6; ++t) s += x(b, t, c);
        EXPECT_NEAR(p(b, c), s / 6.0, 1e-12);
      }
    }
  }
}

TEST(Pool, ZeroStepsIsShapeError) {
  EXPECT_THROW(global_avg_pool_tokens(Tensor3d(2, 0, 3)), ShapeError);
}

TEST(Concat, PutsFirstOperandFirst) {
  Rng rng(6);
  const RowMatrixd a = random_matrix(2, 3, rng);
  const RowMatrixd b = random_matrix(2, 5, rng);
  const RowMatrixd c = concat_features(a, b);
  ASSERT_EQ(c.cols(), 8);
  EXPECT_EQ(c.leftCols(3), a);
  EXPECT_EQ(c.rightCols(5), b);
}

TEST(Concat, ZeroWidthIsIdentity) {
  Rng rng(6);
  const RowMatrixd a = random_matrix(2, 3, rng);
  EXPECT_EQ(concat_features(a, RowMatrixd(2, 0)), a);
}

TEST(Concat, FusedWidthOfParallelModel) {
  EXPECT_EQ(concat_features(RowMatrixd::Zero(1, 1920), RowMatrixd::Zero(1, 3840)).cols(), 5760);
}

TEST(Concat, RowMismatch) {
  EXPECT_THROW(concat_features(RowMatrixd::Zero(2, 1), RowMatrixd::Zero(3, 1)), ShapeError);
}

TEST(Tensor3, FlatAndStepViewsShareStorage) {
  Tensor3d x(2, 3, 4);
  x(1, 2, 3) = 7.0;
  EXPECT_EQ(x.flat()(1, 2 * 4 + 3), 7.0);
  EXPECT_EQ(x.step(2)(1, 3), 7.0);
  EXPECT_EQ(x.instance(1)(2, 3), 7.0);
  const Tensor3d y = Tensor3d::from_flat(x.flat(), 3, 4);
  EXPECT_EQ(y.tokens(), x.tokens());
  EXPECT_THROW(Tensor3d::from_flat(x.flat(), 5, 4), ShapeError);
  EXPECT_THROW(Tensor3d::from_tokens(RowMatrixd::Zero(5, 2), 2, 3), ShapeError);
}

TEST(GradCheck, Quadratic) {
  Vectord x0(2), g(2);
  x0 << 1, 2;
  g << 2, 4;
  const double err = grad_check([](const Vectord& x) { return x.squaredNorm(); }, x0, g, 1e-5);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, Linear) {
  Vectord x0 = Vectord::LinSpaced(5, -1.0, 3.0);
  const double err = grad_check([](const Vectord& x) { return x.sum(); }, x0, Vectord::Ones(5), 1e-5);
  EXPECT_LT(err, 1e-10);
}

TEST(GradCheck, WrongGradientIsDetected) {
  Vectord x0(2), g(2);
  x0 << 1, 2;
  g << 2, 5;
  EXPECT_GT(grad_check([](const Vectord& x) { return x.squaredNorm(); }, x0, g, 1e-5), 0.05);
}

TEST(GradCheck, NonFiniteObjectiveIsNumericError) {
  Vectord x0 = Vectord::Zero(1);
  auto f = [](const Vectord& x) { return x(0) > 0 ? std::numeric_limits<double>::infinity() : 0.0; };
  EXPECT_THROW(grad_check(f, x0, Vectord::Zero(1), 1e-5), NumericError);
}

TEST(GradCheck, LengthMismatch) {
  EXPECT_THROW(grad_check([](const Vectord&) { return 0.0; }, Vectord::Zero(2), Vectord::Zero(3), 1e-5),
               ShapeError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= (x != c.next_u64());
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, PinsEngineFamily) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the C++
  // standard; this pins the engine family across platforms.
  Rng r(5489u);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = r.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, DistributionsStayInRange) {
  Rng r(8);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
    EXPECT_TRUE(std::isfinite(r.normal()));
  }
}
