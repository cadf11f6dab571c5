#pragma once

#include <algorithm>

#include "sevit/layers/dense.hpp"

namespace sevit {

/// Width of the excitation bottleneck for `channels` inputs at `ratio`.
inline Index se_reduced_width(Index channels, Index ratio) {
  return std::max<Index>(1, channels / std::max<Index>(1, ratio));
}

/// Squeeze-and-excitation unit: token-mean pooling, a ReLU bottleneck and a
/// sigmoid expansion producing one gate per channel.
template <typename Scalar>
struct SEParams {
  DenseParams<Scalar> reduce;  // C -> C/r, relu
  DenseParams<Scalar> expand;  // C/r -> C, sigmoid
  Index ratio = 4;

  Index channels() const { return reduce.in(); }

  static SEParams glorot(Index channels, Index ratio, Rng& rng) {
    const Index mid = se_reduced_width(channels, ratio);
    SEParams p;
    p.reduce = DenseParams<Scalar>::glorot(channels, mid, rng);
    p.expand = DenseParams<Scalar>::glorot(mid, channels, rng);
    p.ratio = ratio;
    return p;
  }

  SEParams zeros_like() const { return {reduce.zeros_like(), expand.zeros_like(), ratio}; }
};

template <typename Scalar>
struct SEForward {
  Tensor3<Scalar> y;
  RowMatrix<Scalar> gates;  // batch x channels, in (0, 1)
};

template <typename Scalar>
struct SEBackward {
  SEParams<Scalar> grads;
  Tensor3<Scalar> input_grad;
};

template <typename Scalar>
SEForward<Scalar> se_forward(const SEParams<Scalar>& p, const Tensor3<Scalar>& x) {
  if (x.channels() != p.channels()) {
    throw ShapeError("se_forward: input " + x.shape_string() + " vs SE channels " +
                     std::to_string(p.channels()));
  }
  const RowMatrix<Scalar> squeezed = global_avg_pool_tokens(x);
  const RowMatrix<Scalar> hidden = dense_forward(p.reduce, squeezed, Activation::relu);
  SEForward<Scalar> out{x, dense_forward(p.expand, hidden, Activation::sigmoid)};
  for (Index b = 0; b < x.batch(); ++b) {
    out.y.instance(b).array().rowwise() *= out.gates.row(b).array();
  }
  return out;
}

template <typename Scalar>
SEBackward<Scalar> se_backward(const SEParams<Scalar>& p, const Tensor3<Scalar>& x,
                               const Tensor3<Scalar>& upstream) {
  if (!upstream.same_shape(x)) {
    throw ShapeError("se_backward: upstream " + upstream.shape_string() + " vs input " +
                     x.shape_string());
  }
  const RowMatrix<Scalar> squeezed = global_avg_pool_tokens(x);
  const RowMatrix<Scalar> hidden = dense_forward(p.reduce, squeezed, Activation::relu);
  const RowMatrix<Scalar> gates = dense_forward(p.expand, hidden, Activation::sigmoid);

  // y = x * z: dz[b,c] = sum_t dy[b,t,c] x[b,t,c]; direct path dx = dy * z.
  RowMatrix<Scalar> dgates(x.batch(), x.channels());
  SEBackward<Scalar> out{{}, upstream};
  for (Index b = 0; b < x.batch(); ++b) {
    dgates.row(b) = upstream.instance(b).cwiseProduct(x.instance(b)).colwise().sum();
    out.input_grad.instance(b).array().rowwise() *= gates.row(b).array();
  }

  auto expand = dense_backward(p.expand, hidden, Activation::sigmoid, dgates);
  auto reduce = dense_backward(p.reduce, squeezed, Activation::relu, expand.input_grad);

  // Pooling path: every token receives 1/T of the squeezed gradient.
  const Scalar inv_steps = Scalar(1) / static_cast<Scalar>(x.steps());
  for (Index b = 0; b < x.batch(); ++b) {
    out.input_grad.instance(b).rowwise() += reduce.input_grad.row(b) * inv_steps;
  }
  out.grads.reduce = std::move(reduce.grads);
  out.grads.expand = std::move(expand.grads);
  out.grads.ratio = p.ratio;
  return out;
}

}  // namespace sevit
