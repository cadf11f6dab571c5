#include "sevit/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sevit/csv.hpp"
#include "sevit/trainer.hpp"

namespace sevit {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (int c = 0; c < k_; ++c) t += at(c, c);
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int pred) const {
  std::uint64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int k) {
  if (k < 1) throw ConfigError("confusion_matrix: k must be >= 1");
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("confusion_matrix: " + std::to_string(y_true.size()) + " true labels vs " +
                     std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw DataError("confusion_matrix: label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                      ") outside [0, " + std::to_string(k) + ")");
    }
    ++cm.at(t, p);
  }
  return cm;
}

ClassReport class_report(const ConfusionMatrix& cm) {
  ClassReport r;
  r.total = cm.total();
  if (r.total == 0) throw DataError("class_report: confusion matrix is empty");
  const int k = cm.classes();
  std::uint64_t sum_tp = 0, sum_fp = 0, sum_fn = 0;
  for (int c = 0; c < k; ++c) {
    ClassMetrics m;
    m.tp = cm.at(c, c);
    m.fp = cm.col_sum(c) - m.tp;
    m.fn = cm.row_sum(c) - m.tp;
    m.tn = r.total - m.tp - m.fp - m.fn;
    m.support = cm.row_sum(c);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = harmonic(m.precision, m.recall);
    m.fpr = ratio(m.fp, m.fp + m.tn);
    sum_tp += m.tp;
    sum_fp += m.fp;
    sum_fn += m.fn;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    r.macro_fpr += m.fpr;
    const double w = static_cast<double>(m.support);
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
    r.classes.push_back(m);
  }
  const double kd = static_cast<double>(k);
  const double n = static_cast<double>(r.total);
  r.macro_precision /= kd;
  r.macro_recall /= kd;
  r.macro_f1 /= kd;
  r.macro_fpr /= kd;
  r.weighted_precision /= n;
  r.weighted_recall /= n;
  r.weighted_f1 /= n;
  r.accuracy = ratio(cm.trace(), r.total);
  r.micro_precision = ratio(sum_tp, sum_tp + sum_fp);
  r.micro_recall = ratio(sum_tp, sum_tp + sum_fn);
  // Single-label: micro P == micro R, so the harmonic mean is that value.
  r.micro_f1 = r.micro_precision == r.micro_recall ? r.micro_precision
                                                   : harmonic(r.micro_precision, r.micro_recall);
  return r;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> y_true, int positive_class) {
  if (scores.size() != y_true.size()) {
    throw ShapeError("roc_curve: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(y_true.size()) + " labels");
  }
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("roc_curve: non-finite score");
    positives += (y_true[i] == positive_class) ? 1 : 0;
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("roc_curve: class " + std::to_string(positive_class) +
                    " needs both positive and negative instances");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.positive_class = positive_class;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (y_true[order[i]] == positive_class) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    roc.points.push_back({ratio(fp, negatives), ratio(tp, positives), threshold});
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return roc;
}

LatencyReport latency_benchmark(const Model& m, const Tensor3d& x, int warmup, int reps) {
  if (reps < 1) throw ConfigError("latency_benchmark: reps must be >= 1");
  if (warmup < 0) throw ConfigError("latency_benchmark: warmup must be >= 0");
  if (x.batch() < 1) throw DataError("latency_benchmark: no instances");
  std::vector<Tensor3d> singles;
  singles.reserve(static_cast<std::size_t>(x.batch()));
  for (Index b = 0; b < x.batch(); ++b) {
    singles.push_back(Tensor3d::from_tokens(x.instance(b), 1, x.steps()));
  }
  volatile double sink = 0.0;
  for (int i = 0; i < warmup; ++i) {
    sink = sink + forward(m, singles[static_cast<std::size_t>(i) % singles.size()]).probs(0, 0);
  }
  std::chrono::steady_clock::duration total{0};
  for (int i = 0; i < reps; ++i) {
    const auto& input = singles[static_cast<std::size_t>(i) % singles.size()];
    const auto start = std::chrono::steady_clock::now();
    const auto out = forward(m, input);
    total += std::chrono::steady_clock::now() - start;
    sink = sink + out.probs(0, 0);
  }
  LatencyReport r;
  r.instances = reps;
  r.warmup = warmup;
  const double seconds = std::chrono::duration<double>(total).count();
  // Clock granularity floor: one tick of steady_clock.
  const double tick = std::chrono::duration<double>(std::chrono::steady_clock::duration(1)).count();
  r.mean_seconds = std::max(seconds, tick) / static_cast<double>(reps);
  return r;
}

EvalReport evaluate(const Model& m, const Dataset& ds, Index batch_size) {
  ds.validate();
  if (ds.size() == 0) throw DataError("evaluate: dataset is empty");
  const int k = static_cast<int>(m.spec().n_classes);
  const RowMatrixd probs = predict_proba(m, ds, batch_size);
  const auto pred = argmax_rows(probs);

  EvalReport r;
  r.class_names = ds.class_names;
  while (static_cast<int>(r.class_names.size()) < k) {
    r.class_names.push_back("class" + std::to_string(r.class_names.size()));
  }
  r.cm = confusion_matrix(ds.labels, pred, k);
  r.report = class_report(r.cm);
  r.loss = cross_entropy(probs, ds.labels).loss;
  std::vector<double> column(static_cast<std::size_t>(probs.rows()));
  for (int c = 0; c < k; ++c) {
    for (Index i = 0; i < probs.rows(); ++i) column[static_cast<std::size_t>(i)] = probs(i, c);
    try {
      r.roc.push_back(roc_curve(column, ds.labels, c));
    } catch (const DataError&) {
      r.roc.push_back({c, {}, std::numeric_limits<double>::quiet_NaN()});
    }
  }
  // Summary accuracy must be recomputable from the emitted matrix.
  if (r.report.accuracy != static_cast<double>(r.cm.trace()) / static_cast<double>(r.cm.total())) {
    throw std::logic_error("evaluate: accuracy disagrees with confusion matrix");
  }
  return r;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["instances"] = r.report.total;
  j["accuracy"] = r.report.accuracy;
  j["loss"] = r.loss;
  j["macro_fpr"] = r.report.macro_fpr;
  j["fpr_definition"] = "macro one-vs-rest mean of FP/(FP+TN)";
  j["zero_division"] = 0;
  j["macro_avg"] = {{"precision", r.report.macro_precision},
                    {"recall", r.report.macro_recall},
                    {"f1", r.report.macro_f1}};
  j["weighted_avg"] = {{"precision", r.report.weighted_precision},
                       {"recall", r.report.weighted_recall},
                       {"f1", r.report.weighted_f1}};
  j["micro_avg"] = {{"precision", r.report.micro_precision},
                    {"recall", r.report.micro_recall},
                    {"f1", r.report.micro_f1}};
  ordered_json classes = ordered_json::array();
  for (std::size_t c = 0; c < r.report.classes.size(); ++c) {
    const auto& m = r.report.classes[c];
    ordered_json e;
    e["index"] = c;
    e["name"] = r.class_names[c];
    e["precision"] = m.precision;
    e["recall"] = m.recall;
    e["f1"] = m.f1;
    e["fpr"] = m.fpr;
    e["support"] = m.support;
    e["auc"] = c < r.roc.size() && std::isfinite(r.roc[c].auc) ? ordered_json(r.roc[c].auc)
                                                                : ordered_json(nullptr);
    classes.push_back(e);
  }
  j["classes"] = classes;
  ordered_json cm = ordered_json::array();
  for (int t = 0; t < r.cm.classes(); ++t) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < r.cm.classes(); ++p) row.push_back(r.cm.at(t, p));
    cm.push_back(row);
  }
  j["confusion_matrix"] = cm;
  return j;
}

nlohmann::ordered_json to_json(const LatencyReport& r) {
  return {{"mean_seconds_per_instance", r.mean_seconds},
          {"timed_instances", r.instances},
          {"warmup", r.warmup},
          {"batch_size", 1}};
}

std::string format_report(const EvalReport& r) {
  std::size_t name_width = 12;
  for (const auto& n : r.class_names) name_width = std::max(name_width, n.size() + 6);
  std::ostringstream os;
  char buf[256];
  auto line = [&](const std::string& name, double p, double rc, double f, std::uint64_t support) {
    std::snprintf(buf, sizeof buf, "%-*s %10.4f %10.4f %10.4f %10llu\n", static_cast<int>(name_width),
                  name.c_str(), p, rc, f, static_cast<unsigned long long>(support));
    os << buf;
  };
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s %10s\n", static_cast<int>(name_width), "",
                "precision", "recall", "f1-score", "support");
  os << buf;
  for (std::size_t c = 0; c < r.report.classes.size(); ++c) {
    const auto& m = r.report.classes[c];
    line(r.class_names[c] + " (" + std::to_string(c) + ")", m.precision, m.recall, m.f1, m.support);
  }
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10.4f %10llu\n", static_cast<int>(name_width),
                "accuracy", "", "", r.report.accuracy, static_cast<unsigned long long>(r.report.total));
  os << buf;
  line("macro avg", r.report.macro_precision, r.report.macro_recall, r.report.macro_f1, r.report.total);
  line("weighted avg", r.report.weighted_precision, r.report.weighted_recall, r.report.weighted_f1,
       r.report.total);
  os << '\n';
  std::snprintf(buf, sizeof buf, "loss %.6f\nmacro FPR %.6f\n", r.loss, r.report.macro_fpr);
  os << buf;
  return os.str();
}

void write_confusion_csv(const EvalReport& r, std::ostream& os) {
  std::vector<std::string> header{"true\\pred"};
  header.insert(header.end(), r.class_names.begin(), r.class_names.end());
  os << csv::join_record(header) << '\n';
  for (int t = 0; t < r.cm.classes(); ++t) {
    os << csv::escape(r.class_names[static_cast<std::size_t>(t)]);
    for (int p = 0; p < r.cm.classes(); ++p) os << ',' << r.cm.at(t, p);
    os << '\n';
  }
}

void write_roc_csv(const RocCurve& roc, std::ostream& os) {
  os << "fpr,tpr,threshold\n";
  for (const auto& pt : roc.points) {
    os << g17(pt.fpr) << ',' << g17(pt.tpr) << ',' << (std::isinf(pt.threshold) ? "inf" : g17(pt.threshold))
       << '\n';
  }
}

}  // namespace sevit
