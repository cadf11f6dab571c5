#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sevit/datapipe.hpp"
#include "sevit/model.hpp"

namespace sevit {

/// k x k counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k) : k_(k), counts_(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {}

  int classes() const { return k_; }
  std::uint64_t& at(int truth, int pred) { return counts_[index(truth, pred)]; }
  std::uint64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int pred) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int t, int p) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(p);
  }
  int k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int k);

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  std::uint64_t support = 0;
};

/// Derived per-class and averaged metrics. Every 0/0 ratio is reported as 0.
/// macro_fpr is the unweighted mean of the one-vs-rest FP / (FP + TN).
struct ClassReport {
  std::vector<ClassMetrics> classes;
  std::uint64_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  double macro_fpr = 0.0;
};

ClassReport class_report(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predicted positive when score >= threshold
};

struct RocCurve {
  int positive_class = 0;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// One-vs-rest ROC for `positive_class`; thresholds are the distinct scores
/// in descending order, preceded by +inf. AUC by the trapezoidal rule.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> y_true, int positive_class);

struct LatencyReport {
  double mean_seconds = 0.0;  // per instance
  int instances = 0;          // timed single-instance forwards
  int warmup = 0;
};

/// Times `reps` single-instance forward passes after `warmup` untimed ones,
/// cycling through the instances of x.
LatencyReport latency_benchmark(const Model& m, const Tensor3d& x, int warmup = 10, int reps = 1000);

struct EvalReport {
  std::vector<std::string> class_names;
  ConfusionMatrix cm{1};
  ClassReport report;
  std::vector<RocCurve> roc;  // empty entry (no points) when a class has no positives or negatives
  double loss = 0.0;
};

EvalReport evaluate(const Model& m, const Dataset& ds, Index batch_size = 256);

nlohmann::ordered_json to_json(const EvalReport& r);
nlohmann::ordered_json to_json(const LatencyReport& r);
/// Plain-text classification report table.
std::string format_report(const EvalReport& r);
void write_confusion_csv(const EvalReport& r, std::ostream& os);
void write_roc_csv(const RocCurve& roc, std::ostream& os);

}  // namespace sevit
