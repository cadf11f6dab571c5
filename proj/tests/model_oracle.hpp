#pragma once

// Straight-line recomputation of the full model forward pass for one
// instance, composed only from the scalar-loop oracles.

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sevit/model.hpp"
#include "test_support.hpp"

namespace sevit::testing {

inline oracle::Grid oracle_dense(const oracle::Grid& x, const DenseParams<double>& p, bool relu) {
  oracle::Grid z = oracle::triple_loop_matmul(x, to_grid(p.weight));
  for (auto& row : z) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] += p.bias(static_cast<Index>(j));
      if (relu && row[j] < 0.0) row[j] = 0.0;
    }
  }
  return z;
}

/// Tokens (T x in) through embed, SE, residual add and layer norm.
inline oracle::Grid oracle_vit_block(const oracle::Grid& x, const VitSeBlockParams<double>& p) {
  const oracle::Grid e = oracle_dense(x, p.embed, true);
  const auto se = oracle::squeeze_excite({e}, to_grid(p.se.reduce.weight), to_vec(p.se.reduce.bias),
                                         to_grid(p.se.expand.weight), to_vec(p.se.expand.bias));
  oracle::Grid out = e;
  for (std::size_t t = 0; t < e.size(); ++t) {
    const std::size_t n = e[t].size();
    std::vector<double> s(n);
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      s[c] = e[t][c] + se.y[0][t][c];
      mean += s[c];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (s[c] - mean) * (s[c] - mean);
    var /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) {
      const Index ci = static_cast<Index>(c);
      out[t][c] = (s[c] - mean) / std::sqrt(var + p.norm.eps) * p.norm.gain(ci) + p.norm.bias(ci);
    }
  }
  return out;
}

inline oracle::Grid oracle_bilstm(const oracle::Grid& x, const BiLstmParams<double>& p) {
  const std::size_t H = static_cast<std::size_t>(p.hidden());
  const auto& f = p.forward_dir;
  const auto& b = p.backward_dir;
  const auto fw = oracle::lstm_sequence(x, to_grid(f.input_weights), to_grid(f.recurrent_weights), to_vec(f.bias), H,
                                        false);
  const auto bw = oracle::lstm_sequence(x, to_grid(b.input_weights), to_grid(b.recurrent_weights), to_vec(b.bias), H,
                                        true);
  oracle::Grid out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    out[t] = fw[t];
    out[t].insert(out[t].end(), bw[t].begin(), bw[t].end());
  }
  return out;
}

inline std::vector<double> flatten_grid(const oracle::Grid& g) {
  std::vector<double> v;
  for (const auto& row : g) v.insert(v.end(), row.begin(), row.end());
  return v;
}

/// Class probabilities for a single instance given as T x C tokens.
inline std::vector<double> oracle_model_probs(const Model& m, const oracle::Grid& x) {
  const ModelParams& p = m.params();
  std::vector<double> features;
  switch (m.spec().variant) {
    case Variant::seq_vit_then_bilstm:
      features = flatten_grid(oracle_bilstm(oracle_vit_block(x, p.vit), p.lstm));
      break;
    case Variant::seq_bilstm_then_vit:
      features = flatten_grid(oracle_vit_block(oracle_bilstm(x, p.lstm), p.vit));
      break;
    case Variant::parallel_h32:
    case Variant::parallel_h64: {
      features = flatten_grid(oracle_vit_block(x, p.vit));
      const auto l = flatten_grid(oracle_bilstm(x, p.lstm));
      features.insert(features.end(), l.begin(), l.end());
      break;
    }
  }
  const auto logits = oracle_dense({features}, p.head, false)[0];
  double top = logits[0];
  for (double v : logits) top = v > top ? v : top;
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - top);
    total += probs[k];
  }
  for (double& v : probs) v /= total;
  return probs;
}

/// Largest gap between the model's probabilities and the oracle's over a batch.
inline double oracle_model_gap(const Model& m, const Tensor3d& x) {
  const RowMatrixd probs = forward(m, x).probs;
  double worst = 0.0;
  for (Index b = 0; b < x.batch(); ++b) {
    const auto ref = oracle_model_probs(m, to_grid(x.instance(b)));
    for (Index k = 0; k < probs.cols(); ++k) {
      worst = std::max(worst, std::abs(probs(b, k) - ref[static_cast<std::size_t>(k)]));
    }
  }
  return worst;
}

inline ModelSpec tiny_spec(Variant v) {
  ModelSpec s;
  s.variant = v;
  s.steps = 5;
  s.input_channels = 1;
  s.embed = 4;
  s.se_ratio = 4;
  s.hidden = 3;
  s.n_classes = 3;
  return s;
}

/// Finite-difference check of mean cross-entropy over every model parameter
/// on a random batch; returns the max relative error.
inline double model_grad_error(Variant v, std::uint64_t seed, Index batch = 4) {
  Rng rng(seed);
  Model m = build_model(tiny_spec(v), rng);
  // Nonzero biases so no parameter sits on an all-zero slice.
  for_each_param(m.params(), [&](const char*, auto& t) {
    for (Index i = 0; i < t.size(); ++i) t.data()[i] += rng.normal(0.0, 0.1);
  });
  const Tensor3d x = random_tensor(batch, m.spec().steps, 1, rng);
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (auto& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.spec().n_classes)));

  auto loss = [&] {
    const RowMatrixd probs = forward(m, x).probs;
    double l = 0.0;
    for (Index b = 0; b < batch; ++b) l -= std::log(probs(b, labels[static_cast<std::size_t>(b)]));
    return l / static_cast<double>(batch);
  };
  const auto f = forward(m, x);
  RowMatrixd dlogits = f.probs;
  for (Index b = 0; b < batch; ++b) dlogits(b, labels[static_cast<std::size_t>(b)]) -= 1.0;
  dlogits /= static_cast<double>(batch);
  ModelParams g = backward(m, f.cache, dlogits);

  const Vectord x0 = flatten_params(m.params());
  auto objective = [&](const Vectord& theta) {
    unflatten_params(theta, m.params());
    return loss();
  };
  const double err = grad_check(objective, x0, flatten_params(g), 1e-5);
  unflatten_params(x0, m.params());
  return err;
}

}  // namespace sevit::testing
