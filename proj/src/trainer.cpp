#include "sevit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

namespace sevit {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate: must be finite and >= 0");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1: must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2: must lie in (0, 1)");
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam: must be positive");
}

CrossEntropy cross_entropy(const RowMatrixd& probs, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != probs.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_of(probs) + " probabilities");
  }
  CrossEntropy out;
  out.dlogits = probs;
  const double inv_batch = probs.rows() > 0 ? 1.0 / static_cast<double>(probs.rows()) : 0.0;
  double total = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(probs.cols()) + ")");
    }
    total -= std::log(std::max(probs(i, y), kLogEps));
    out.dlogits(i, y) -= 1.0;
  }
  out.loss = total * inv_batch;
  out.dlogits *= inv_batch;
  return out;
}

AdamState AdamState::for_sizes(const std::vector<Index>& sizes) {
  AdamState s;
  for (const Index n : sizes) {
    s.first_moment.push_back(Vectord::Zero(n));
    s.second_moment.push_back(Vectord::Zero(n));
  }
  return s;
}

AdamState AdamState::for_params(const ModelParams& p) {
  std::vector<Index> sizes;
  for_each_param(p, [&](const char*, const auto& t) { sizes.push_back(t.size()); });
  return for_sizes(sizes);
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameter tensors, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto n = static_cast<Index>(params[k].size());
    if (static_cast<Index>(grads[k].size()) != n || state.first_moment[k].size() != n) {
      throw ShapeError("adam_step: tensor " + std::to_string(k) + " size mismatch");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto n = static_cast<Index>(params[k].size());
    Eigen::Map<Vectord> theta(params[k].data(), n);
    const Eigen::Map<const Vectord> g(grads[k].data(), n);
    Vectord& m = state.first_moment[k];
    Vectord& v = state.second_moment[k];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    theta.array() -= cfg.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + cfg.eps_adam);
  }
}

void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads, const TrainConfig& cfg) {
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  for_each_param(params, [&](const char*, auto& t) {
    p.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  for_each_param(grads, [&](const char*, const auto& t) {
    g.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  adam_step(state, p, g, cfg);
}

void write_history_csv(const TrainHistory& h, std::ostream& os) {
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[160];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                  e.train_accuracy, e.val_loss, e.val_accuracy);
    os << buf;
  }
}

void write_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write history file " + path);
  write_history_csv(h, os);
}

RowMatrixd predict_proba(const Model& m, const Dataset& ds, Index batch_size) {
  if (ds.n_features() != m.spec().steps) {
    throw ShapeError("dataset has " + std::to_string(ds.n_features()) + " features, model expects " +
                     std::to_string(m.spec().steps) + " steps");
  }
  RowMatrixd probs(ds.size(), m.spec().n_classes);
  for (Index first = 0; first < ds.size(); first += batch_size) {
    const Index count = std::min(batch_size, ds.size() - first);
    probs.middleRows(first, count) = forward(m, ds.to_sequences(first, count)).probs;
  }
  return probs;
}

LossAccuracy evaluate_loss_accuracy(const Model& m, const Dataset& ds, Index batch_size) {
  if (ds.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  const RowMatrixd probs = predict_proba(m, ds, batch_size);
  const auto ce = cross_entropy(probs, ds.labels);
  const auto pred = argmax_rows(probs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += (pred[i] == ds.labels[i]) ? 1 : 0;
  return {ce.loss, static_cast<double>(correct) / static_cast<double>(pred.size())};
}

TrainHistory train(Model& m, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  cfg.validate();
  train_ds.validate();
  val_ds.validate();
  if (train_ds.size() == 0) throw DataError("train: training set is empty");
  if (val_ds.size() == 0) throw DataError("train: validation set is empty");
  for (const Dataset* ds : {&train_ds, &val_ds}) {
    if (ds->n_features() != m.spec().steps) {
      throw ShapeError("train: dataset has " + std::to_string(ds->n_features()) +
                       " features, model expects steps=" + std::to_string(m.spec().steps));
    }
    if (ds->n_classes() > m.spec().n_classes) {
      throw ShapeError("train: dataset has " + std::to_string(ds->n_classes()) +
                       " classes, model head has " + std::to_string(m.spec().n_classes));
    }
  }

  Rng rng(cfg.seed);
  AdamState adam = AdamState::for_params(m.params());
  std::vector<std::size_t> order(static_cast<std::size_t>(train_ds.size()));
  TrainHistory history;
  RowMatrixd batch_features;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) rng.shuffle(order);
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - first);
      batch_features.resize(static_cast<Index>(count), train_ds.n_features());
      batch_labels.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        batch_features.row(static_cast<Index>(i)) = train_ds.features.row(static_cast<Index>(order[first + i]));
        batch_labels[i] = train_ds.labels[order[first + i]];
      }
      const auto x = Tensor3d::from_flat(batch_features, train_ds.n_features(), 1);
      const auto fwd = forward(m, x);
      const auto ce = cross_entropy(fwd.probs, batch_labels);
      const ModelParams grads = backward(m, fwd.cache, ce.dlogits);
      adam_step(adam, m.params(), grads, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    const auto tr = evaluate_loss_accuracy(m, train_ds);
    const auto va = evaluate_loss_accuracy(m, val_ds);
    rec.train_loss = tr.loss;
    rec.train_accuracy = tr.accuracy;
    rec.val_loss = va.loss;
    rec.val_accuracy = va.accuracy;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

}  // namespace sevit
