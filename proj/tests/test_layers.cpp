#include <gtest/gtest.h>

#include <cmath>

#include "sevit/layers.hpp"
#include "layer_checks.hpp"
#include "test_support.hpp"

using namespace sevit;
using namespace sevit::testing;

namespace {

constexpr double kGradTol = 1e-4;

}  // namespace

// ---- Dense ----------------------------------------------------------------

TEST(DenseForward, IdentityWeights) {
  Rng rng(1);
  const RowMatrixd x = random_matrix(3, 4, rng);
  DenseParams<double> p{RowMatrixd::Identity(4, 4), RowVectord::Zero(4)};
  EXPECT_EQ(dense_forward(p, x, Activation::none), x);
}

TEST(DenseForward, HandArithmetic) {
  DenseParams<double> p{RowMatrixd::Ones(2, 1), RowVectord::Constant(1, 0.5)};
  const RowMatrixd y = dense_forward(p, RowMatrixd::Ones(1, 2), Activation::none);
  EXPECT_EQ(y(0, 0), 2.5);
}

TEST(DenseForward, MatchesMatmulThenActivation) {
  Rng rng(2);
  for (Activation act : {Activation::none, Activation::relu, Activation::sigmoid, Activation::tanh}) {
    auto p = DenseParams<double>::glorot(5, 3, rng);
    p.bias = random_row(3, rng);
    const RowMatrixd x = random_matrix(4, 5, rng);
    const auto prod = oracle::triple_loop_matmul(to_grid(x), to_grid(p.weight));
    const RowMatrixd y = dense_forward(p, x, act);
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < 3; ++j) {
        const double z = prod[i][j] + p.bias(j);
        double expect = z;
        if (act == Activation::relu) expect = z > 0 ? z : 0;
        if (act == Activation::sigmoid) expect = oracle::logistic(z);
        if (act == Activation::tanh) expect = std::tanh(z);
        EXPECT_NEAR(y(i, j), expect, 1e-12);
      }
    }
  }
}

TEST(DenseForward, ShapeMismatch) {
  auto p = DenseParams<double>::zeros(3, 2);
  EXPECT_THROW(dense_forward(p, RowMatrixd::Zero(1, 4), Activation::none), ShapeError);
}

TEST(DenseBackward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(3);
  auto p = DenseParams<double>::glorot(3, 2, rng);
  auto back = dense_backward(p, random_matrix(4, 3, rng), Activation::tanh, RowMatrixd::Zero(4, 2));
  EXPECT_TRUE(back.grads.weight.isZero(0));
  EXPECT_TRUE(back.grads.bias.isZero(0));
  EXPECT_TRUE(back.input_grad.isZero(0));
}

TEST(DenseBackward, ScalarProductRule) {
  DenseParams<double> p{RowMatrixd::Constant(1, 1, 3.0), RowVectord::Zero(1)};
  auto back = dense_backward(p, RowMatrixd::Constant(1, 1, 2.0), Activation::none, RowMatrixd::Ones(1, 1));
  EXPECT_EQ(back.grads.weight(0, 0), 2.0);
  EXPECT_EQ(back.grads.bias(0), 1.0);
  EXPECT_EQ(back.input_grad(0, 0), 3.0);
}

TEST(DenseBackward, FiniteDifferencesOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (Activation act : {Activation::none, Activation::relu, Activation::sigmoid, Activation::tanh}) {
      EXPECT_LT(dense_grad_error(seed, act), kGradTol) << "seed " << seed << " act " << to_string(act);
    }
  }
}

TEST(DenseBackward, UpstreamShapeMismatch) {
  auto p = DenseParams<double>::zeros(3, 2);
  EXPECT_THROW(dense_backward(p, RowMatrixd::Zero(4, 3), Activation::none, RowMatrixd::Zero(4, 3)), ShapeError);
}

// ---- Squeeze-and-excitation ------------------------------------------------

TEST(SqueezeExcite, ReducedWidthFloorsAtOne) {
  EXPECT_EQ(se_reduced_width(32, 4), 8);
  EXPECT_EQ(se_reduced_width(4, 4), 1);
  EXPECT_EQ(se_reduced_width(3, 4), 1);
}

TEST(SqueezeExcite, ZeroExcitationGivesHalfGates) {
  Rng rng(4);
  auto p = SEParams<double>::glorot(8, 4, rng);
  p.expand.weight.setZero();
  p.expand.bias.setZero();
  const Tensor3d x = random_tensor(2, 3, 8, rng);
  auto f = se_forward(p, x);
  EXPECT_EQ(f.gates, RowMatrixd::Constant(2, 8, 0.5));
  EXPECT_EQ(f.y.tokens(), (0.5 * x.tokens()).eval());
}

TEST(SqueezeExcite, ZeroChannelStaysZero) {
  Rng rng(5);
  auto p = SEParams<double>::glorot(8, 4, rng);
  Tensor3d x = random_tensor(2, 3, 8, rng);
  x.tokens().col(5).setZero();
  auto f = se_forward(p, x);
  EXPECT_TRUE(f.y.tokens().col(5).isZero(0));
}

TEST(SqueezeExcite, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = SEParams<double>::glorot(8, 4, rng);
    p.reduce.bias = random_row(2, rng);
    p.expand.bias = random_row(8, rng);
    const Tensor3d x = random_tensor(3, 5, 8, rng);
    auto f = se_forward(p, x);
    const auto ref = oracle::squeeze_excite(to_grids(x), to_grid(p.reduce.weight), to_vec(p.reduce.bias),
                                            to_grid(p.expand.weight), to_vec(p.expand.bias));
    for (Index b = 0; b < 3; ++b) {
      for (Index c = 0; c < 8; ++c) {
        EXPECT_NEAR(f.gates(b, c), ref.gates[b][c], 1e-12);
        for (Index t = 0; t < 5; ++t) EXPECT_NEAR(f.y(b, t, c), ref.y[b][t][c], 1e-12);
      }
    }
  }
}

TEST(SqueezeExcite, GatesOpenIntervalAndShrinkMagnitude) {
  Rng rng(6);
  auto p = SEParams<double>::glorot(8, 4, rng);
  const Tensor3d x = random_tensor(4, 6, 8, rng);
  auto f = se_forward(p, x);
  EXPECT_GT(f.gates.minCoeff(), 0.0);
  EXPECT_LT(f.gates.maxCoeff(), 1.0);
  for (Index i = 0; i < x.size(); ++i) {
    if (x.tokens().data()[i] != 0.0) {
      EXPECT_LT(std::abs(f.y.tokens().data()[i]), std::abs(x.tokens().data()[i]));
    }
  }
}

TEST(SqueezeExcite, ChannelMismatch) {
  Rng rng(7);
  auto p = SEParams<double>::glorot(8, 4, rng);
  EXPECT_THROW(se_forward(p, Tensor3d(1, 2, 7)), ShapeError);
  EXPECT_THROW(se_backward(p, Tensor3d(1, 2, 8), Tensor3d(1, 3, 8)), ShapeError);
}

TEST(SqueezeExciteBackward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(8);
  auto p = SEParams<double>::glorot(8, 4, rng);
  const Tensor3d x = random_tensor(2, 3, 8, rng);
  auto back = se_backward(p, x, Tensor3d(2, 3, 8));
  EXPECT_TRUE(back.grads.reduce.weight.isZero(0));
  EXPECT_TRUE(back.grads.expand.weight.isZero(0));
  EXPECT_TRUE(back.grads.expand.bias.isZero(0));
  EXPECT_TRUE(back.input_grad.tokens().isZero(0));
}

TEST(SqueezeExciteBackward, SingleChannelSingleTokenHandDerivation) {
  // One channel, one token, bottleneck width 1. With x the input,
  //   h = relu(w1*x + b1), z = sigmoid(w2*h + b2), y = x*z.
  // For upstream u and s = z*(1-z):
  //   dy/db2 = u*x*s            dy/dw2 = u*x*s*h
  //   dy/db1 = u*x*s*w2*[h>0]   dy/dw1 = u*x*s*w2*[h>0]*x
  //   dy/dx  = u*(z + x*s*w2*[h>0]*w1)   (pooling over one token is x itself)
  const double x = 0.8, w1 = 1.3, b1 = 0.2, w2 = -0.7, b2 = 0.4, u = 1.5;
  SEParams<double> p{{RowMatrixd::Constant(1, 1, w1), RowVectord::Constant(1, b1)},
                     {RowMatrixd::Constant(1, 1, w2), RowVectord::Constant(1, b2)},
                     4};
  const Tensor3d in = Tensor3d::from_tokens(RowMatrixd::Constant(1, 1, x), 1, 1);
  const Tensor3d up = Tensor3d::from_tokens(RowMatrixd::Constant(1, 1, u), 1, 1);
  auto back = se_backward(p, in, up);

  const double h = std::max(0.0, w1 * x + b1);
  const double z = 1.0 / (1.0 + std::exp(-(w2 * h + b2)));
  const double s = z * (1.0 - z);
  EXPECT_NEAR(back.grads.expand.bias(0), u * x * s, 1e-14);
  EXPECT_NEAR(back.grads.expand.weight(0, 0), u * x * s * h, 1e-14);
  EXPECT_NEAR(back.grads.reduce.bias(0), u * x * s * w2, 1e-14);
  EXPECT_NEAR(back.grads.reduce.weight(0, 0), u * x * s * w2 * x, 1e-14);
  EXPECT_NEAR(back.input_grad(0, 0, 0), u * (z + x * s * w2 * w1), 1e-14);
}

TEST(SqueezeExciteBackward, FiniteDifferencesOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(se_grad_error(seed), kGradTol) << "seed " << seed;
}

// ---- Layer norm and the SE-ViT block ---------------------------------------

TEST(LayerNormBackward, FiniteDifferencesOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(layer_norm_grad_error(seed), kGradTol) << "seed " << seed;
  }
}

TEST(VitSeBlock, FlatWidthIsStepsTimesEmbed) {
  Rng rng(9);
  auto p = VitSeBlockParams<double>::glorot(1, 32, 4, rng);
  EXPECT_EQ(vit_se_block_forward(p, random_tensor(2, 60, 1, rng)).flat().cols(), 1920);
  auto f = vit_se_block_forward(p, random_tensor(3, 83, 1, rng));
  EXPECT_EQ(f.flat().rows(), 3);
  EXPECT_EQ(f.flat().cols(), 2656);
  for (Index steps : {1, 2, 7}) {
    for (Index e : {4, 5, 12}) {
      auto q = VitSeBlockParams<double>::glorot(3, e, 4, rng);
      EXPECT_EQ(vit_se_block_forward(q, random_tensor(1, steps, 3, rng)).flat().cols(), steps * e);
    }
  }
}

TEST(VitSeBlock, ZeroInputCascadesToZero) {
  Rng rng(10);
  auto p = VitSeBlockParams<double>::glorot(1, 32, 4, rng);
  p.se.expand.weight.setZero();
  p.se.expand.bias.setZero();
  auto f = vit_se_block_forward(p, Tensor3d(2, 60, 1));
  EXPECT_EQ(f.cache.gates, RowMatrixd::Constant(2, 32, 0.5));
  EXPECT_TRUE(f.cache.residual_sum.isZero(0));
  EXPECT_TRUE(f.out.tokens().isZero(0));
}

TEST(VitSeBlock, ResidualUsesEmbeddedTokens) {
  Rng rng(11);
  auto p = VitSeBlockParams<double>::glorot(2, 8, 4, rng);
  const Tensor3d x = random_tensor(2, 3, 2, rng);
  auto f = vit_se_block_forward(p, x);
  const Tensor3d se = se_forward(p.se, f.cache.embedded).y;
  EXPECT_EQ(f.cache.residual_sum, (f.cache.embedded.tokens() + se.tokens()).eval());
  EXPECT_EQ(f.out.tokens(), layer_norm(f.cache.residual_sum, p.norm.gain, p.norm.bias, p.norm.eps));
}

TEST(VitSeBlock, DeterministicForward) {
  Rng rng(12);
  auto p = VitSeBlockParams<double>::glorot(1, 8, 4, rng);
  const Tensor3d x = random_tensor(3, 5, 1, rng);
  EXPECT_EQ(vit_se_block_forward(p, x).out.tokens(), vit_se_block_forward(p, x).out.tokens());
}

TEST(VitSeBlock, ShapeErrors) {
  Rng rng(13);
  auto p = VitSeBlockParams<double>::glorot(2, 8, 4, rng);
  EXPECT_THROW(vit_se_block_forward(p, Tensor3d(1, 3, 3)), ShapeError);
  auto f = vit_se_block_forward(p, random_tensor(1, 3, 2, rng));
  EXPECT_THROW(vit_se_block_backward(p, f.cache, RowMatrixd::Zero(1, 23)), ShapeError);
}

TEST(VitSeBlockBackward, FiniteDifferencesOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(vit_block_grad_error(seed), kGradTol) << "seed " << seed;
  }
}

// ---- LSTM -------------------------------------------------------------------

TEST(LstmCell, ZeroParamsGiveZeroState) {
  auto p = LstmParams<double>::zeros(3, 2);
  Rng rng(14);
  const RowMatrixd c = random_matrix(2, 2, rng);
  auto s = lstm_cell_step(p, random_matrix(2, 3, rng), RowMatrixd(RowMatrixd::Zero(2, 2)), c);
  // f = 0.5, i = 0.5, g = tanh(0) = 0.
  EXPECT_EQ(s.c, (0.5 * c).eval());
  auto z = lstm_cell_step(p, random_matrix(2, 3, rng), RowMatrixd(RowMatrixd::Zero(2, 2)), RowMatrixd(RowMatrixd::Zero(2, 2)));
  EXPECT_TRUE(z.c.isZero(0));
  EXPECT_TRUE(z.h.isZero(0));
}

TEST(LstmCell, SaturatedForgetGateCarriesCell) {
  auto p = LstmParams<double>::zeros(3, 2);
  p.bias.segment(2, 2).setConstant(20.0);
  Rng rng(15);
  const RowMatrixd c = random_matrix(2, 2, rng);
  auto s = lstm_cell_step(p, random_matrix(2, 3, rng), RowMatrixd(RowMatrixd::Zero(2, 2)), c);
  EXPECT_LT((s.c - c).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LstmCell, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = LstmParams<double>::glorot(3, 4, rng);
    p.bias += random_row(16, rng);
    const RowMatrixd x = random_matrix(2, 3, rng);
    const RowMatrixd h = random_matrix(2, 4, rng);
    const RowMatrixd c = random_matrix(2, 4, rng);
    auto s = lstm_cell_step(p, x, h, c);
    for (Index b = 0; b < 2; ++b) {
      auto hb = to_vec(h.row(b));
      auto cb = to_vec(c.row(b));
      oracle::lstm_step(to_vec(x.row(b)), hb, cb, to_grid(p.input_weights), to_grid(p.recurrent_weights),
                        to_vec(p.bias));
      for (Index u = 0; u < 4; ++u) {
        EXPECT_NEAR(s.h(b, u), hb[u], 1e-12);
        EXPECT_NEAR(s.c(b, u), cb[u], 1e-12);
      }
    }
  }
}

TEST(LstmCell, ShapeMismatch) {
  auto p = LstmParams<double>::zeros(3, 2);
  const RowMatrixd h2 = RowMatrixd::Zero(1, 2), h3 = RowMatrixd::Zero(1, 3);
  EXPECT_THROW(lstm_cell_step(p, RowMatrixd::Zero(1, 2), h2, h2), ShapeError);
  EXPECT_THROW(lstm_cell_step(p, RowMatrixd::Zero(1, 3), h3, h2), ShapeError);
}

TEST(LstmInit, ForgetBiasIsOneAndRestZero) {
  Rng rng(16);
  auto p = LstmParams<double>::glorot(2, 3, rng);
  EXPECT_TRUE(p.bias.segment(0, 3).isZero(0));
  EXPECT_EQ(p.bias.segment(3, 3), RowVectord::Ones(3));
  EXPECT_TRUE(p.bias.segment(6, 6).isZero(0));
  EXPECT_LE(p.input_weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (2 + 12)));
  EXPECT_LE(p.recurrent_weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (3 + 12)));
}

TEST(LstmCellBackward, SingleStepMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(lstm_cell_grad_error(seed), kGradTol) << "seed " << seed;
}

TEST(BiLstm, OutputShape) {
  Rng rng(17);
  auto p = BiLstmParams<double>::glorot(1, 32, rng);
  auto f = bilstm_forward(p, random_tensor(2, 60, 1, rng));
  EXPECT_EQ(f.seq.steps(), 60);
  EXPECT_EQ(f.seq.channels(), 64);
  EXPECT_EQ(f.seq.flat().cols(), 3840);
}

TEST(BiLstm, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = BiLstmParams<double>::glorot(2, 2, rng);
    p.forward_dir.bias += random_row(8, rng);
    p.backward_dir.bias += random_row(8, rng);
    const Tensor3d x = random_tensor(3, 3, 2, rng);
    auto f = bilstm_forward(p, x);
    for (Index b = 0; b < 3; ++b) {
      const auto xb = to_grid(x.instance(b));
      const auto fw = oracle::lstm_sequence(xb, to_grid(p.forward_dir.input_weights),
                                            to_grid(p.forward_dir.recurrent_weights), to_vec(p.forward_dir.bias), 2,
                                            false);
      const auto bw = oracle::lstm_sequence(xb, to_grid(p.backward_dir.input_weights),
                                            to_grid(p.backward_dir.recurrent_weights), to_vec(p.backward_dir.bias),
                                            2, true);
      for (Index t = 0; t < 3; ++t) {
        for (Index u = 0; u < 2; ++u) {
          EXPECT_NEAR(f.seq(b, t, u), fw[t][u], 1e-12);
          EXPECT_NEAR(f.seq(b, t, 2 + u), bw[t][u], 1e-12);
        }
      }
    }
  }
}

TEST(BiLstm, ReversalIdentityIsExact) {
  Rng rng(18);
  auto p = BiLstmParams<double>::glorot(2, 3, rng);
  const Tensor3d x = random_tensor(4, 6, 2, rng);
  auto f = bilstm_forward(p, x);

  Tensor3d reversed(4, 6, 2);
  for (Index t = 0; t < 6; ++t) reversed.step(t) = x.step(5 - t);
  const LstmTrace<double> scan = lstm_scan(p.backward_dir, reversed, false);
  for (Index t = 0; t < 6; ++t) {
    EXPECT_EQ(RowMatrixd(f.seq.step(t).rightCols(3)), scan.hidden[5 - t]) << "step " << t;
  }
}

TEST(BiLstm, ShapeMismatch) {
  Rng rng(19);
  auto p = BiLstmParams<double>::glorot(2, 3, rng);
  EXPECT_THROW(bilstm_forward(p, Tensor3d(1, 4, 3)), ShapeError);
  auto f = bilstm_forward(p, random_tensor(1, 4, 2, rng));
  EXPECT_THROW(bilstm_backward(p, f.cache, RowMatrixd::Zero(1, 23)), ShapeError);
}

TEST(BiLstmBackward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(20);
  auto p = BiLstmParams<double>::glorot(2, 3, rng);
  auto f = bilstm_forward(p, random_tensor(2, 4, 2, rng));
  auto back = bilstm_backward(p, f.cache, RowMatrixd::Zero(2, 24));
  EXPECT_TRUE(back.grads.forward_dir.input_weights.isZero(0));
  EXPECT_TRUE(back.grads.backward_dir.recurrent_weights.isZero(0));
  EXPECT_TRUE(back.grads.backward_dir.bias.isZero(0));
  EXPECT_TRUE(back.input_grad.tokens().isZero(0));
}

TEST(BiLstmBackward, FourStepsFiniteDifferencesOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EXPECT_LT(bilstm_grad_error(seed, 4, 3), kGradTol) << "seed " << seed;
  }
}

TEST(BiLstmBackward, SingleStep) {
  EXPECT_LT(bilstm_grad_error(99, 1, 3), kGradTol);
}
