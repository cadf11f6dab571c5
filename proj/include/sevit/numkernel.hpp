#pragma once

// Dense numerical kernel: row-major Eigen matrices, a batched 3-D sequence
// tensor, the primitive forward maps used by every layer, and a central
// finite-difference gradient checker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include "sevit/errors.hpp"

namespace sevit {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixd = RowMatrix<double>;
using RowVectord = RowVector<double>;
using Vectord = Vector<double>;

template <typename Derived>
std::string shape_of(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << '(' << m.rows() << " x " << m.cols() << ')';
  return os.str();
}

/// Batched sequence tensor laid out as batch x steps x channels, row-major.
///
/// Storage is a (batch*steps) x channels row-major matrix, so each token is
/// one row and the whole batch flattens to batch x (steps*channels) without
/// copying.
template <typename Scalar>
class Tensor3 {
 public:
  using Matrix = RowMatrix<Scalar>;
  using StepMap = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;
  using ConstStepMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;

  Tensor3() = default;
  Tensor3(Index batch, Index steps, Index channels)
      : batch_(batch), steps_(steps), tokens_(Matrix::Zero(batch * steps, channels)) {}

  /// Wraps a (batch*steps) x channels token matrix.
  static Tensor3 from_tokens(Matrix tokens, Index batch, Index steps) {
    if (tokens.rows() != batch * steps) {
      throw ShapeError("token matrix " + shape_of(tokens) + " does not hold " +
                       std::to_string(batch) + " x " + std::to_string(steps) + " tokens");
    }
    Tensor3 t;
    t.batch_ = batch;
    t.steps_ = steps;
    t.tokens_ = std::move(tokens);
    return t;
  }

  /// Unflattens a batch x (steps*channels) matrix.
  template <typename Derived>
  static Tensor3 from_flat(const Eigen::MatrixBase<Derived>& flat, Index steps, Index channels) {
    if (steps <= 0 || channels <= 0 || flat.cols() != steps * channels) {
      throw ShapeError("cannot view " + shape_of(flat) + " as steps=" + std::to_string(steps) +
                       ", channels=" + std::to_string(channels));
    }
    Tensor3 t(flat.rows(), steps, channels);
    t.flat() = flat;
    return t;
  }

  Index batch() const { return batch_; }
  Index steps() const { return steps_; }
  Index channels() const { return tokens_.cols(); }
  Index size() const { return tokens_.size(); }

  Scalar& operator()(Index b, Index t, Index c) { return tokens_(b * steps_ + t, c); }
  Scalar operator()(Index b, Index t, Index c) const { return tokens_(b * steps_ + t, c); }

  Matrix& tokens() { return tokens_; }
  const Matrix& tokens() const { return tokens_; }

  Eigen::Map<Matrix> flat() { return {tokens_.data(), batch_, steps_ * channels()}; }
  Eigen::Map<const Matrix> flat() const { return {tokens_.data(), batch_, steps_ * channels()}; }

  /// All batch rows at time step t, as a batch x channels strided view.
  StepMap step(Index t) {
    return {tokens_.data() + t * channels(), batch_, channels(),
            Eigen::OuterStride<>(steps_ * channels())};
  }
  ConstStepMap step(Index t) const {
    return {tokens_.data() + t * channels(), batch_, channels(),
            Eigen::OuterStride<>(steps_ * channels())};
  }

  /// The steps x channels slab of instance b.
  auto instance(Index b) { return tokens_.middleRows(b * steps_, steps_); }
  auto instance(Index b) const { return tokens_.middleRows(b * steps_, steps_); }

  std::string shape_string() const {
    std::ostringstream os;
    os << '(' << batch_ << " x " << steps_ << " x " << channels() << ')';
    return os.str();
  }

  bool same_shape(const Tensor3& other) const {
    return batch_ == other.batch_ && steps_ == other.steps_ && channels() == other.channels();
  }

 private:
  Index batch_ = 0;
  Index steps_ = 0;
  Matrix tokens_;
};

using Tensor3d = Tensor3<double>;

enum class Activation { none, relu, sigmoid, tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

template <typename DA, typename DB>
RowMatrix<typename DA::Scalar> matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a) + " x " + shape_of(b));
  }
  return a * b;
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  // Split on sign so exp never overflows.
  if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> activate(const Eigen::MatrixBase<Derived>& x, Activation kind) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::relu: return x.cwiseMax(Scalar(0));
    case Activation::sigmoid: return x.unaryExpr([](Scalar v) { return sigmoid(v); });
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::none: break;
  }
  return x;
}

/// Derivative of the activation expressed through its output y = act(z).
template <typename Derived>
RowMatrix<typename Derived::Scalar> activation_slope(const Eigen::MatrixBase<Derived>& y,
                                                     Activation kind) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::relu:
      return y.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
    case Activation::sigmoid: return y.array() * (Scalar(1) - y.array());
    case Activation::tanh: return (Scalar(1) - y.array().square()).matrix();
    case Activation::none: break;
  }
  return RowMatrix<typename Derived::Scalar>::Ones(y.rows(), y.cols());
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar shift = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - shift).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Per-row standardization with population variance, then affine gain/bias.
template <typename Derived>
RowMatrix<typename Derived::Scalar> layer_norm(const Eigen::MatrixBase<Derived>& x,
                                               const RowVector<typename Derived::Scalar>& gain,
                                               const RowVector<typename Derived::Scalar>& bias,
                                               typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw ShapeError("layer_norm: input " + shape_of(x) + " with gain/bias of length " +
                     std::to_string(gain.size()) + "/" + std::to_string(bias.size()));
  }
  if (!(eps > Scalar(0))) throw ShapeError("layer_norm: eps must be positive");
  RowMatrix<Scalar> out(x.rows(), x.cols());
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
    out.row(r) = (centered * inv_std * gain.array() + bias.array()).matrix();
  }
  return out;
}

/// Mean over the steps axis: batch x channels.
template <typename Scalar>
RowMatrix<Scalar> global_avg_pool_tokens(const Tensor3<Scalar>& x) {
  if (x.steps() < 1) throw ShapeError("global_avg_pool_tokens: zero steps in " + x.shape_string());
  RowMatrix<Scalar> out(x.batch(), x.channels());
  for (Index b = 0; b < x.batch(); ++b) {
    out.row(b) = x.instance(b).colwise().sum() / static_cast<Scalar>(x.steps());
  }
  return out;
}

/// Row-wise concatenation [a | b].
template <typename DA, typename DB>
RowMatrix<typename DA::Scalar> concat_features(const Eigen::MatrixBase<DA>& a,
                                               const Eigen::MatrixBase<DB>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_features: " + shape_of(a) + " ++ " + shape_of(b));
  }
  RowMatrix<typename DA::Scalar> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

/// Largest relative discrepancy between an analytic gradient and central
/// finite differences of f around x0:
///   max_i |num_i - ana_i| / max(1e-8, |num_i| + |ana_i|).
template <typename F>
double grad_check(F&& f, const Vectord& x0, const Vectord& analytic, double step) {
  if (analytic.size() != x0.size()) {
    throw ShapeError("grad_check: gradient length " + std::to_string(analytic.size()) +
                     " vs parameter length " + std::to_string(x0.size()));
  }
  if (!(step > 0.0)) throw NumericError("grad_check: step must be positive");
  double worst = 0.0;
  Vectord x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + step;
    const double up = f(static_cast<const Vectord&>(x));
    x(i) = x0(i) - step;
    const double down = f(static_cast<const Vectord&>(x));
    x(i) = x0(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite objective at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(1e-8, std::abs(numeric) + std::abs(analytic(i)));
    worst = std::max(worst, std::abs(numeric - analytic(i)) / denom);
  }
  return worst;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace sevit
