#pragma once

#include "sevit/layers/dense.hpp"
#include "sevit/layers/squeeze_excite.hpp"

namespace sevit {

template <typename Scalar>
struct LayerNormParams {
  RowVector<Scalar> gain;
  RowVector<Scalar> bias;
  Scalar eps = Scalar(1e-5);

  Index width() const { return gain.size(); }

  static LayerNormParams identity(Index width, Scalar eps = Scalar(1e-5)) {
    return {RowVector<Scalar>::Ones(width), RowVector<Scalar>::Zero(width), eps};
  }

  LayerNormParams zeros_like() const {
    return {RowVector<Scalar>::Zero(width()), RowVector<Scalar>::Zero(width()), eps};
  }
};

template <typename Scalar>
struct LayerNormBackward {
  LayerNormParams<Scalar> grads;
  RowMatrix<Scalar> input_grad;
};

template <typename Scalar, typename DX, typename DU>
LayerNormBackward<Scalar> layer_norm_backward(const LayerNormParams<Scalar>& p,
                                              const Eigen::MatrixBase<DX>& x,
                                              const Eigen::MatrixBase<DU>& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != x.cols() || x.cols() != p.width()) {
    throw ShapeError("layer_norm_backward: input " + shape_of(x) + ", upstream " +
                     shape_of(upstream) + ", width " + std::to_string(p.width()));
  }
  LayerNormBackward<Scalar> out{p.zeros_like(), RowMatrix<Scalar>(x.rows(), x.cols())};
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar inv_std = Scalar(1) / std::sqrt(centered.square().sum() / n + p.eps);
    const auto xhat = (centered * inv_std).eval();
    const auto dxhat = (upstream.row(r).array() * p.gain.array()).eval();
    out.grads.gain.array() += upstream.row(r).array() * xhat;
    out.grads.bias += upstream.row(r);
    out.input_grad.row(r) =
        (inv_std * (dxhat - dxhat.mean() - xhat * (dxhat * xhat).mean())).matrix();
  }
  return out;
}

/// Transformer-style block whose attention is a squeeze-and-excitation unit:
///   e = relu(x W_embed + b)       per token
///   a = SE(e)
///   out = LayerNorm(e + a)        per token, over channels
template <typename Scalar>
struct VitSeBlockParams {
  DenseParams<Scalar> embed;
  SEParams<Scalar> se;
  LayerNormParams<Scalar> norm;

  Index in() const { return embed.in(); }
  Index width() const { return embed.out(); }

  static VitSeBlockParams glorot(Index in, Index embed_width, Index se_ratio, Rng& rng) {
    VitSeBlockParams p;
    p.embed = DenseParams<Scalar>::glorot(in, embed_width, rng);
    p.se = SEParams<Scalar>::glorot(embed_width, se_ratio, rng);
    p.norm = LayerNormParams<Scalar>::identity(embed_width);
    return p;
  }

  VitSeBlockParams zeros_like() const {
    return {embed.zeros_like(), se.zeros_like(), norm.zeros_like()};
  }
};

template <typename Scalar>
struct VitSeBlockCache {
  Tensor3<Scalar> input;
  Tensor3<Scalar> embedded;
  RowMatrix<Scalar> residual_sum;
  RowMatrix<Scalar> gates;
};

template <typename Scalar>
struct VitSeBlockForward {
  Tensor3<Scalar> out;  // batch x T x E
  VitSeBlockCache<Scalar> cache;

  /// batch x (T*E)
  auto flat() const { return out.flat(); }
};

template <typename Scalar>
struct VitSeBlockBackward {
  VitSeBlockParams<Scalar> grads;
  Tensor3<Scalar> input_grad;
};

template <typename Scalar>
VitSeBlockForward<Scalar> vit_se_block_forward(const VitSeBlockParams<Scalar>& p,
                                               const Tensor3<Scalar>& x) {
  if (x.channels() != p.in()) {
    throw ShapeError("vit_se_block_forward: input " + x.shape_string() + " vs embed input " +
                     std::to_string(p.in()));
  }
  VitSeBlockForward<Scalar> f;
  f.cache.input = x;
  f.cache.embedded = Tensor3<Scalar>::from_tokens(
      dense_forward(p.embed, x.tokens(), Activation::relu), x.batch(), x.steps());
  auto se = se_forward(p.se, f.cache.embedded);
  f.cache.residual_sum = f.cache.embedded.tokens() + se.y.tokens();
  f.cache.gates = std::move(se.gates);
  f.out = Tensor3<Scalar>::from_tokens(
      layer_norm(f.cache.residual_sum, p.norm.gain, p.norm.bias, p.norm.eps), x.batch(),
      x.steps());
  return f;
}

/// `upstream` is the gradient with respect to the block output, either as a
/// batch x T x E tensor or its flattened batch x (T*E) form.
template <typename Scalar, typename Derived>
VitSeBlockBackward<Scalar> vit_se_block_backward(const VitSeBlockParams<Scalar>& p,
                                                 const VitSeBlockCache<Scalar>& cache,
                                                 const Eigen::MatrixBase<Derived>& upstream_flat) {
  const Tensor3<Scalar>& e = cache.embedded;
  if (upstream_flat.rows() != e.batch() || upstream_flat.cols() != e.steps() * e.channels()) {
    throw ShapeError("vit_se_block_backward: upstream " + shape_of(upstream_flat) +
                     " vs output " + e.shape_string());
  }
  const Tensor3<Scalar> upstream = Tensor3<Scalar>::from_flat(upstream_flat, e.steps(), e.channels());
  auto norm = layer_norm_backward(p.norm, cache.residual_sum, upstream.tokens());
  const Tensor3<Scalar> dsum =
      Tensor3<Scalar>::from_tokens(std::move(norm.input_grad), e.batch(), e.steps());
  auto se = se_backward(p.se, e, dsum);
  const RowMatrix<Scalar> dembedded = dsum.tokens() + se.input_grad.tokens();
  auto embed = dense_backward(p.embed, cache.input.tokens(), Activation::relu, dembedded);

  VitSeBlockBackward<Scalar> out;
  out.grads.embed = std::move(embed.grads);
  out.grads.se = std::move(se.grads);
  out.grads.norm = std::move(norm.grads);
  out.input_grad =
      Tensor3<Scalar>::from_tokens(std::move(embed.input_grad), e.batch(), e.steps());
  return out;
}

template <typename Scalar>
VitSeBlockBackward<Scalar> vit_se_block_backward(const VitSeBlockParams<Scalar>& p,
                                                 const VitSeBlockCache<Scalar>& cache,
                                                 const Tensor3<Scalar>& upstream) {
  return vit_se_block_backward(p, cache, upstream.flat());
}

}  // namespace sevit
