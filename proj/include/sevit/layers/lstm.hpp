#pragma once

#include <vector>

#include "sevit/numkernel.hpp"
#include "sevit/rng.hpp"

namespace sevit {

/// Single-direction LSTM parameters. Gate blocks along the 4H axis are
/// ordered [input, forget, cell candidate, output].
template <typename Scalar>
struct LstmParams {
  RowMatrix<Scalar> input_weights;      // in x 4H
  RowMatrix<Scalar> recurrent_weights;  // H x 4H
  RowVector<Scalar> bias;               // 4H

  Index in() const { return input_weights.rows(); }
  Index hidden() const { return recurrent_weights.rows(); }

  static LstmParams zeros(Index in, Index hidden) {
    return {RowMatrix<Scalar>::Zero(in, 4 * hidden), RowMatrix<Scalar>::Zero(hidden, 4 * hidden),
            RowVector<Scalar>::Zero(4 * hidden)};
  }

  /// Glorot-uniform input and recurrent weights, zero bias except the
  /// forget block which starts at 1.
  static LstmParams glorot(Index in, Index hidden, Rng& rng) {
    LstmParams p = zeros(in, hidden);
    const double in_limit = std::sqrt(6.0 / static_cast<double>(in + 4 * hidden));
    for (Index i = 0; i < p.input_weights.size(); ++i) {
      p.input_weights.data()[i] = static_cast<Scalar>(rng.uniform(-in_limit, in_limit));
    }
    const double rec_limit = std::sqrt(6.0 / static_cast<double>(hidden + 4 * hidden));
    for (Index i = 0; i < p.recurrent_weights.size(); ++i) {
      p.recurrent_weights.data()[i] = static_cast<Scalar>(rng.uniform(-rec_limit, rec_limit));
    }
    p.bias.segment(hidden, hidden).setConstant(Scalar(1));
    return p;
  }

  LstmParams zeros_like() const { return zeros(in(), hidden()); }
};

template <typename Scalar>
struct BiLstmParams {
  LstmParams<Scalar> forward_dir;
  LstmParams<Scalar> backward_dir;

  Index in() const { return forward_dir.in(); }
  Index hidden() const { return forward_dir.hidden(); }

  static BiLstmParams glorot(Index in, Index hidden, Rng& rng) {
    BiLstmParams p;
    p.forward_dir = LstmParams<Scalar>::glorot(in, hidden, rng);
    p.backward_dir = LstmParams<Scalar>::glorot(in, hidden, rng);
    return p;
  }

  BiLstmParams zeros_like() const { return {forward_dir.zeros_like(), backward_dir.zeros_like()}; }
};

template <typename Scalar>
struct LstmState {
  RowMatrix<Scalar> h;  // batch x H
  RowMatrix<Scalar> c;  // batch x H
};

namespace detail {

/// Activated gates of one step, batch x 4H in [i, f, g, o] order.
template <typename Scalar, typename DX, typename DH>
RowMatrix<Scalar> lstm_gates(const LstmParams<Scalar>& p, const Eigen::MatrixBase<DX>& x_t,
                             const Eigen::MatrixBase<DH>& h) {
  const Index H = p.hidden();
  RowMatrix<Scalar> z = x_t * p.input_weights;
  z.noalias() += h * p.recurrent_weights;
  z.rowwise() += p.bias;
  auto sig = [](Scalar v) { return sigmoid(v); };
  z.leftCols(2 * H) = z.leftCols(2 * H).unaryExpr(sig);
  z.middleCols(2 * H, H) = z.middleCols(2 * H, H).array().tanh().matrix();
  z.rightCols(H) = z.rightCols(H).unaryExpr(sig);
  return z;
}

}  // namespace detail

template <typename Scalar, typename DX>
LstmState<Scalar> lstm_cell_step(const LstmParams<Scalar>& p, const Eigen::MatrixBase<DX>& x_t,
                                 const RowMatrix<Scalar>& h, const RowMatrix<Scalar>& c) {
  const Index H = p.hidden();
  if (x_t.cols() != p.in() || h.cols() != H || c.cols() != H || h.rows() != x_t.rows() ||
      c.rows() != x_t.rows()) {
    throw ShapeError("lstm_cell_step: x " + shape_of(x_t) + ", h " + shape_of(h) + ", c " +
                     shape_of(c) + " with in=" + std::to_string(p.in()) +
                     ", H=" + std::to_string(H));
  }
  const RowMatrix<Scalar> gates = detail::lstm_gates(p, x_t, h);
  LstmState<Scalar> next;
  next.c = gates.middleCols(H, H).cwiseProduct(c) +
           gates.leftCols(H).cwiseProduct(gates.middleCols(2 * H, H));
  next.h = gates.rightCols(H).cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

/// Per-direction record of a full scan, indexed by time step (not scan order).
template <typename Scalar>
struct LstmTrace {
  std::vector<RowMatrix<Scalar>> gates;   // batch x 4H
  std::vector<RowMatrix<Scalar>> cells;   // batch x H, c_t
  std::vector<RowMatrix<Scalar>> hidden;  // batch x H, h_t
  bool reverse = false;
};

template <typename Scalar>
struct BiLstmCache {
  Tensor3<Scalar> input;
  LstmTrace<Scalar> fwd;
  LstmTrace<Scalar> bwd;
};

template <typename Scalar>
struct BiLstmForward {
  Tensor3<Scalar> seq;  // batch x T x 2H, [forward | backward] per step
  BiLstmCache<Scalar> cache;
};

template <typename Scalar>
struct BiLstmBackward {
  BiLstmParams<Scalar> grads;
  Tensor3<Scalar> input_grad;
};

/// Runs one direction over x from zero state. reverse=true scans t = T-1..0.
template <typename Scalar>
LstmTrace<Scalar> lstm_scan(const LstmParams<Scalar>& p, const Tensor3<Scalar>& x, bool reverse) {
  if (x.channels() != p.in()) {
    throw ShapeError("lstm_scan: input " + x.shape_string() + " vs LSTM input size " +
                     std::to_string(p.in()));
  }
  const Index T = x.steps();
  const Index H = p.hidden();
  LstmTrace<Scalar> trace;
  trace.reverse = reverse;
  trace.gates.resize(T);
  trace.cells.resize(T);
  trace.hidden.resize(T);
  RowMatrix<Scalar> h = RowMatrix<Scalar>::Zero(x.batch(), H);
  RowMatrix<Scalar> c = RowMatrix<Scalar>::Zero(x.batch(), H);
  for (Index k = 0; k < T; ++k) {
    const Index t = reverse ? T - 1 - k : k;
    RowMatrix<Scalar> g = detail::lstm_gates(p, x.step(t), h);
    c = g.middleCols(H, H).cwiseProduct(c) + g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H));
    h = g.rightCols(H).cwiseProduct(c.array().tanh().matrix());
    trace.gates[t] = std::move(g);
    trace.cells[t] = c;
    trace.hidden[t] = h;
  }
  return trace;
}

template <typename Scalar>
BiLstmForward<Scalar> bilstm_forward(const BiLstmParams<Scalar>& p, const Tensor3<Scalar>& x) {
  if (x.channels() != p.in() || p.backward_dir.in() != p.in() ||
      p.backward_dir.hidden() != p.hidden()) {
    throw ShapeError("bilstm_forward: input " + x.shape_string() + " vs BiLSTM input size " +
                     std::to_string(p.in()));
  }
  const Index H = p.hidden();
  BiLstmForward<Scalar> f;
  f.cache.input = x;
  f.cache.fwd = lstm_scan(p.forward_dir, x, false);
  f.cache.bwd = lstm_scan(p.backward_dir, x, true);
  f.seq = Tensor3<Scalar>(x.batch(), x.steps(), 2 * H);
  for (Index t = 0; t < x.steps(); ++t) {
    auto out = f.seq.step(t);
    out.leftCols(H) = f.cache.fwd.hidden[t];
    out.rightCols(H) = f.cache.bwd.hidden[t];
  }
  return f;
}

/// Backpropagation through time for one direction. `dh_out[t]` is the
/// gradient reaching h_t from outside the recurrence. Accumulates parameter
/// gradients into `grads` and input gradients into `dx`.
template <typename Scalar>
void lstm_scan_backward(const LstmParams<Scalar>& p, const Tensor3<Scalar>& x,
                        const LstmTrace<Scalar>& trace,
                        const std::vector<RowMatrix<Scalar>>& dh_out, LstmParams<Scalar>& grads,
                        Tensor3<Scalar>& dx) {
  const Index T = x.steps();
  const Index H = p.hidden();
  const Index B = x.batch();
  RowMatrix<Scalar> dh_next = RowMatrix<Scalar>::Zero(B, H);
  RowMatrix<Scalar> dc_next = RowMatrix<Scalar>::Zero(B, H);
  const RowMatrix<Scalar> zeros = RowMatrix<Scalar>::Zero(B, H);
  RowMatrix<Scalar> dpre(B, 4 * H);
  for (Index k = T - 1; k >= 0; --k) {
    const Index t = trace.reverse ? T - 1 - k : k;
    // Previous step in scan order, or the zero initial state.
    const bool first = (k == 0);
    const Index prev = trace.reverse ? t + 1 : t - 1;
    const RowMatrix<Scalar>& h_prev = first ? zeros : trace.hidden[prev];
    const RowMatrix<Scalar>& c_prev = first ? zeros : trace.cells[prev];

    const auto& g = trace.gates[t];
    const auto i = g.leftCols(H).array();
    const auto f = g.middleCols(H, H).array();
    const auto cand = g.middleCols(2 * H, H).array();
    const auto o = g.rightCols(H).array();
    const auto tanh_c = trace.cells[t].array().tanh().eval();

    const auto dh = (dh_out[t] + dh_next).array().eval();
    const auto dc = (dh * o * (Scalar(1) - tanh_c.square()) + dc_next.array()).eval();

    dpre.leftCols(H) = (dc * cand * i * (Scalar(1) - i)).matrix();
    dpre.middleCols(H, H) = (dc * c_prev.array() * f * (Scalar(1) - f)).matrix();
    dpre.middleCols(2 * H, H) = (dc * i * (Scalar(1) - cand.square())).matrix();
    dpre.rightCols(H) = (dh * tanh_c * o * (Scalar(1) - o)).matrix();

    grads.input_weights.noalias() += x.step(t).transpose() * dpre;
    grads.recurrent_weights.noalias() += h_prev.transpose() * dpre;
    grads.bias += dpre.colwise().sum();
    dx.step(t) += dpre * p.input_weights.transpose();

    dh_next.noalias() = dpre * p.recurrent_weights.transpose();
    dc_next = (dc * f).matrix();
  }
}

/// `upstream` is batch x T x 2H, or its flattened batch x (T*2H) form.
template <typename Scalar, typename Derived>
BiLstmBackward<Scalar> bilstm_backward(const BiLstmParams<Scalar>& p,
                                       const BiLstmCache<Scalar>& cache,
                                       const Eigen::MatrixBase<Derived>& upstream_flat) {
  const Tensor3<Scalar>& x = cache.input;
  const Index H = p.hidden();
  const Index T = x.steps();
  if (upstream_flat.rows() != x.batch() || upstream_flat.cols() != T * 2 * H) {
    throw ShapeError("bilstm_backward: upstream " + shape_of(upstream_flat) + " vs output (" +
                     std::to_string(x.batch()) + " x " + std::to_string(T) + " x " +
                     std::to_string(2 * H) + ")");
  }
  const Tensor3<Scalar> upstream = Tensor3<Scalar>::from_flat(upstream_flat, T, 2 * H);
  std::vector<RowMatrix<Scalar>> dh_fwd(T), dh_bwd(T);
  for (Index t = 0; t < T; ++t) {
    dh_fwd[t] = upstream.step(t).leftCols(H);
    dh_bwd[t] = upstream.step(t).rightCols(H);
  }
  BiLstmBackward<Scalar> out{p.zeros_like(), Tensor3<Scalar>(x.batch(), T, x.channels())};
  lstm_scan_backward(p.forward_dir, x, cache.fwd, dh_fwd, out.grads.forward_dir, out.input_grad);
  lstm_scan_backward(p.backward_dir, x, cache.bwd, dh_bwd, out.grads.backward_dir, out.input_grad);
  return out;
}

template <typename Scalar>
BiLstmBackward<Scalar> bilstm_backward(const BiLstmParams<Scalar>& p,
                                       const BiLstmCache<Scalar>& cache,
                                       const Tensor3<Scalar>& upstream) {
  return bilstm_backward(p, cache, upstream.flat());
}

}  // namespace sevit
