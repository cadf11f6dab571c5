#pragma once

// Tabular preprocessing: CSV ingestion, label and categorical encoding,
// min-max scaling, class balancing and stratified splitting.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sevit/numkernel.hpp"
#include "sevit/rng.hpp"

namespace sevit {

struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // rows[i][j] is column j of row i
  std::size_t dropped_rows = 0;

  std::size_t size() const { return rows.size(); }
  /// Column position, or std::nullopt.
  std::optional<std::size_t> find_column(const std::string& name) const;
};

/// Which columns mean what. Features are every column that is neither the
/// label nor dropped, in file order.
struct SchemaConfig {
  std::string label_column;
  std::vector<std::string> drop_columns;
  std::vector<std::string> categorical_columns;
  /// Optional fixed label dictionary (raw value -> class index). Several raw
  /// values may share an index.
  std::map<std::string, int> class_map;
  /// Optional class display names, by index. Only meaningful with class_map.
  std::vector<std::string> class_names;

  void validate() const;
};

/// Schema file: JSON object with keys "label_column" (string, required),
/// "drop_columns", "categorical_columns" (string arrays), "class_map"
/// (object of string -> int) and "class_names" (string array).
SchemaConfig load_schema(const std::string& path);
SchemaConfig parse_schema(const std::string& json_text);

struct Dataset {
  RowMatrixd features;  // n x d
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  Index size() const { return features.rows(); }
  Index n_features() const { return features.cols(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<std::size_t> class_counts() const;

  /// Throws DataError if the invariants do not hold.
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& rows) const;
  /// n x d x 1 sequence view, one feature per step.
  Tensor3d to_sequences() const;
  Tensor3d to_sequences(Index first, Index count) const;

  bool operator==(const Dataset&) const;
};

/// Parses a CSV file with a header row. Rows where a numeric feature column
/// (not label, dropped or categorical) is empty, unparsable or non-finite
/// are dropped and counted in RawTable::dropped_rows.
RawTable load_csv(const std::string& path, const SchemaConfig& schema);
RawTable read_csv(std::istream& is, const SchemaConfig& schema);

struct LabelEncoding {
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

/// With a class_map: fixed dictionary, unseen values are an error.
/// Without: classes are the sorted unique values.
LabelEncoding encode_labels(const RawTable& raw, const SchemaConfig& schema);

struct CategoricalEncoding {
  RowMatrixd codes;  // n x (number of categorical columns)
  std::vector<std::vector<std::string>> vocabularies;
};

/// Sorted-unique integer codes, one independent vocabulary per column.
CategoricalEncoding encode_categoricals(const RawTable& raw, const SchemaConfig& schema);

/// Encodes labels and all feature columns (numeric parsed, categoricals coded).
Dataset to_dataset(const RawTable& raw, const SchemaConfig& schema);

struct ScalerState {
  RowVectord min;
  RowVectord max;
  bool fitted = false;
};

ScalerState scale_fit(const RowMatrixd& features);
/// (v - min) / (max - min); constant features map to 0. Not clipped.
RowMatrixd scale_apply(const ScalerState& state, const RowMatrixd& features);

/// Duplicates minority rows uniformly with replacement up to the majority
/// count. Original rows come first, unchanged.
Dataset random_oversample(const Dataset& ds, Rng& rng);

/// Classic SMOTE up to the majority count: base row uniform within the
/// class, partner uniform among its k nearest same-class neighbours
/// (Euclidean, k clamped to class size - 1), x + u (x_nn - x), u ~ U[0, 1).
Dataset smote(const Dataset& ds, Index k, Rng& rng);

/// One SMOTE interpolation, x + gap (x_nn - x).
template <typename DA, typename DB>
RowVectord smote_point(const Eigen::MatrixBase<DA>& x, const Eigen::MatrixBase<DB>& x_nn, double gap) {
  return x + gap * (x_nn - x);
}

struct SplitResult {
  Dataset train;
  Dataset val;
};

/// Per class: shuffle, then the first round(fraction * count) rows go to
/// train. Both outputs keep input row order.
SplitResult stratified_split(const Dataset& ds, double train_fraction, Rng& rng);

enum class Balance { none, smote, random };
enum class BalanceOrder { before_split, train_only };

Balance parse_balance(const std::string& text);
std::string to_string(Balance b);
BalanceOrder parse_balance_order(const std::string& text);
std::string to_string(BalanceOrder o);

struct PreprocessOptions {
  Balance balance = Balance::none;
  BalanceOrder order = BalanceOrder::before_split;
  double train_fraction = 0.8;
  bool scale = true;
  Index smote_k = 5;
  std::uint64_t seed = 42;
};

struct PreprocessSummary {
  std::size_t rows_kept = 0;
  std::size_t dropped_rows = 0;
  std::vector<std::size_t> counts_before;
  std::vector<std::size_t> counts_after;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

struct PreparedData {
  Dataset train;
  Dataset val;
  ScalerState scaler;
  PreprocessSummary summary;
};

/// Full pipeline. before_split: scale on all rows, balance all, split.
/// train_only: split, scale fitted on train, balance train only.
PreparedData preprocess(const RawTable& raw, const SchemaConfig& schema,
                        const PreprocessOptions& opts);
PreparedData preprocess(const Dataset& ds, const PreprocessOptions& opts,
                        std::size_t dropped_rows = 0);

/// Dataset file: CSV whose first line is "#sevit-dataset 1", second line
/// "#classes,<name0>,<name1>,...", then a header of feature names followed
/// by "label", then one row per instance with %.17g values and the integer
/// class index.
void save_dataset(const Dataset& ds, std::ostream& os);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(std::istream& is);
Dataset load_dataset(const std::string& path);

struct BlobOptions {
  Index instances = 3000;
  Index features = 20;
  int classes = 6;
  /// Standard deviation of the class centres; within-class noise is N(0, 1).
  double separation = 1.0;
};

/// Balanced isotropic Gaussian blobs, class i % classes for row i.
Dataset make_gaussian_blobs(const BlobOptions& opts, Rng& rng);

}  // namespace sevit
