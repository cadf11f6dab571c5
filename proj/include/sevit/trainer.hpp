#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sevit/datapipe.hpp"
#include "sevit/model.hpp"

namespace sevit {

struct TrainConfig {
  int epochs = 50;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::uint64_t seed = 42;
  bool shuffle = true;

  void validate() const;
};

struct CrossEntropy {
  double loss = 0.0;
  RowMatrixd dlogits;  // gradient of the mean loss w.r.t. the pre-softmax logits
};

/// Floor applied to the true-class probability before the logarithm.
constexpr double kLogEps = 1e-12;

/// Mean categorical cross-entropy of softmax outputs, and the fused
/// softmax + CE gradient (probs - onehot) / batch.
CrossEntropy cross_entropy(const RowMatrixd& probs, std::span<const int> labels);

/// Bias-corrected Adam moments, one entry per parameter tensor.
struct AdamState {
  std::vector<Vectord> first_moment;
  std::vector<Vectord> second_moment;
  long step = 0;

  static AdamState for_sizes(const std::vector<Index>& sizes);
  static AdamState for_params(const ModelParams& p);
};

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, const TrainConfig& cfg);
void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads,
               const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

void write_history_csv(const TrainHistory& h, std::ostream& os);
void write_history_csv(const TrainHistory& h, const std::string& path);

/// Softmax outputs for every row of ds, evaluated in chunks of batch_size.
RowMatrixd predict_proba(const Model& m, const Dataset& ds, Index batch_size = 256);

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

LossAccuracy evaluate_loss_accuracy(const Model& m, const Dataset& ds, Index batch_size = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on cross-entropy. Deterministic in (model, data, cfg).
TrainHistory train(Model& m, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

}  // namespace sevit
