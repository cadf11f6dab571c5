#pragma once

#include "sevit/numkernel.hpp"
#include "sevit/rng.hpp"

namespace sevit {

/// Affine map x*W + b, W stored in x out.
template <typename Scalar>
struct DenseParams {
  RowMatrix<Scalar> weight;
  RowVector<Scalar> bias;

  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }

  static DenseParams zeros(Index in, Index out) {
    return {RowMatrix<Scalar>::Zero(in, out), RowVector<Scalar>::Zero(out)};
  }

  /// Glorot-uniform weights, zero bias.
  static DenseParams glorot(Index in, Index out, Rng& rng) {
    DenseParams p = zeros(in, out);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Index i = 0; i < p.weight.size(); ++i) {
      p.weight.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
    return p;
  }

  DenseParams zeros_like() const { return zeros(in(), out()); }
};

template <typename Scalar>
struct DenseBackward {
  DenseParams<Scalar> grads;
  RowMatrix<Scalar> input_grad;
};

template <typename Scalar, typename Derived>
RowMatrix<Scalar> dense_forward(const DenseParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x,
                                Activation act) {
  if (x.cols() != p.in()) {
    throw ShapeError("dense_forward: input " + shape_of(x) + " vs weight " + shape_of(p.weight));
  }
  RowMatrix<Scalar> z = x * p.weight;
  z.rowwise() += p.bias;
  if (act == Activation::none) return z;
  return activate(z, act);
}

/// Gradients of sum(upstream .* dense_forward(p, x, act)).
template <typename Scalar, typename DX, typename DU>
DenseBackward<Scalar> dense_backward(const DenseParams<Scalar>& p, const Eigen::MatrixBase<DX>& x,
                                     Activation act, const Eigen::MatrixBase<DU>& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != p.out()) {
    throw ShapeError("dense_backward: upstream " + shape_of(upstream) + " vs output (" +
                     std::to_string(x.rows()) + " x " + std::to_string(p.out()) + ")");
  }
  RowMatrix<Scalar> dz;
  if (act == Activation::none) {
    dz = upstream;
  } else {
    const RowMatrix<Scalar> y = dense_forward(p, x, act);
    dz = upstream.cwiseProduct(activation_slope(y, act));
  }
  DenseBackward<Scalar> out;
  out.grads.weight = x.transpose() * dz;
  out.grads.bias = dz.colwise().sum();
  out.input_grad = dz * p.weight.transpose();
  return out;
}

}  // namespace sevit
