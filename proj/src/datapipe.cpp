#include "sevit/datapipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sevit/csv.hpp"

namespace sevit {
namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::optional<double> parse_finite(const std::string& text) {
  std::string_view s = text;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

enum class ColumnRole { label, dropped, categorical, numeric };

std::vector<ColumnRole> column_roles(const RawTable& raw, const SchemaConfig& schema) {
  std::vector<ColumnRole> roles;
  roles.reserve(raw.columns.size());
  for (const auto& name : raw.columns) {
    if (name == schema.label_column) {
      roles.push_back(ColumnRole::label);
    } else if (contains(schema.drop_columns, name)) {
      roles.push_back(ColumnRole::dropped);
    } else if (contains(schema.categorical_columns, name)) {
      roles.push_back(ColumnRole::categorical);
    } else {
      roles.push_back(ColumnRole::numeric);
    }
  }
  return roles;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::optional<std::size_t> RawTable::find_column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

void SchemaConfig::validate() const {
  if (label_column.empty()) throw ConfigError("schema: label_column is required");
  if (contains(drop_columns, label_column)) {
    throw ConfigError("schema: label_column '" + label_column + "' is also in drop_columns");
  }
  if (contains(categorical_columns, label_column)) {
    throw ConfigError("schema: label_column '" + label_column + "' is also categorical");
  }
  if (!class_map.empty()) {
    int max_index = -1;
    for (const auto& [name, index] : class_map) {
      if (index < 0) throw ConfigError("schema: class_map index for '" + name + "' is negative");
      max_index = std::max(max_index, index);
    }
    std::vector<bool> used(static_cast<std::size_t>(max_index + 1), false);
    for (const auto& [name, index] : class_map) used[static_cast<std::size_t>(index)] = true;
    if (std::find(used.begin(), used.end(), false) != used.end()) {
      throw ConfigError("schema: class_map indices must cover 0.." + std::to_string(max_index));
    }
    if (!class_names.empty() && class_names.size() != used.size()) {
      throw ConfigError("schema: class_names has " + std::to_string(class_names.size()) +
                        " entries, class_map defines " + std::to_string(used.size()));
    }
  } else if (!class_names.empty()) {
    throw ConfigError("schema: class_names requires class_map");
  }
}

SchemaConfig parse_schema(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("schema: top level must be an object");
  SchemaConfig s;
  try {
    s.label_column = j.at("label_column").get<std::string>();
    if (j.contains("drop_columns")) s.drop_columns = j["drop_columns"].get<std::vector<std::string>>();
    if (j.contains("categorical_columns")) {
      s.categorical_columns = j["categorical_columns"].get<std::vector<std::string>>();
    }
    if (j.contains("class_map")) s.class_map = j["class_map"].get<std::map<std::string, int>>();
    if (j.contains("class_names")) s.class_names = j["class_names"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

SchemaConfig load_schema(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open schema file " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_schema(buf.str());
}

RawTable read_csv(std::istream& is, const SchemaConfig& schema) {
  RawTable raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      raw.columns = csv::split_record(line);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    break;
  }
  if (raw.columns.empty()) throw DataError("CSV has no header row");
  if (!raw.find_column(schema.label_column)) {
    throw DataError("CSV is missing label column '" + schema.label_column + "'");
  }
  for (const auto& name : schema.categorical_columns) {
    if (!raw.find_column(name)) throw ConfigError("CSV is missing categorical column '" + name + "'");
  }
  const auto roles = column_roles(raw, schema);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    try {
      fields = csv::split_record(line);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() != raw.columns.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(raw.columns.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    bool keep = true;
    for (std::size_t c = 0; c < fields.size() && keep; ++c) {
      if (roles[c] == ColumnRole::numeric && !parse_finite(fields[c])) keep = false;
    }
    if (keep) {
      raw.rows.push_back(std::move(fields));
    } else {
      ++raw.dropped_rows;
    }
  }
  return raw;
}

RawTable load_csv(const std::string& path, const SchemaConfig& schema) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open CSV file " + path);
  try {
    return read_csv(is, schema);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

LabelEncoding encode_labels(const RawTable& raw, const SchemaConfig& schema) {
  const auto col = raw.find_column(schema.label_column);
  if (!col) throw DataError("missing label column '" + schema.label_column + "'");
  LabelEncoding enc;
  enc.labels.reserve(raw.size());
  if (!schema.class_map.empty()) {
    int k = 0;
    for (const auto& [name, index] : schema.class_map) k = std::max(k, index + 1);
    if (!schema.class_names.empty()) {
      enc.class_names = schema.class_names;
    } else {
      // std::map iterates in sorted order: each index takes its first raw name.
      enc.class_names.assign(static_cast<std::size_t>(k), "");
      for (const auto& [name, index] : schema.class_map) {
        auto& slot = enc.class_names[static_cast<std::size_t>(index)];
        if (slot.empty()) slot = name;
      }
    }
    for (const auto& row : raw.rows) {
      const auto it = schema.class_map.find(row[*col]);
      if (it == schema.class_map.end()) {
        throw DataError("label '" + row[*col] + "' is not in the class map");
      }
      enc.labels.push_back(it->second);
    }
    return enc;
  }
  std::set<std::string> unique;
  for (const auto& row : raw.rows) unique.insert(row[*col]);
  enc.class_names.assign(unique.begin(), unique.end());
  for (const auto& row : raw.rows) {
    const auto it = std::lower_bound(enc.class_names.begin(), enc.class_names.end(), row[*col]);
    enc.labels.push_back(static_cast<int>(it - enc.class_names.begin()));
  }
  return enc;
}

CategoricalEncoding encode_categoricals(const RawTable& raw, const SchemaConfig& schema) {
  CategoricalEncoding enc;
  const auto n_cols = static_cast<Index>(schema.categorical_columns.size());
  enc.codes.resize(static_cast<Index>(raw.size()), n_cols);
  for (Index j = 0; j < n_cols; ++j) {
    const auto& name = schema.categorical_columns[static_cast<std::size_t>(j)];
    const auto col = raw.find_column(name);
    if (!col) throw ConfigError("categorical column '" + name + "' not found");
    std::set<std::string> unique;
    for (const auto& row : raw.rows) unique.insert(row[*col]);
    std::vector<std::string> vocab(unique.begin(), unique.end());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto it = std::lower_bound(vocab.begin(), vocab.end(), raw.rows[i][*col]);
      enc.codes(static_cast<Index>(i), j) = static_cast<double>(it - vocab.begin());
    }
    enc.vocabularies.push_back(std::move(vocab));
  }
  return enc;
}

Dataset to_dataset(const RawTable& raw, const SchemaConfig& schema) {
  schema.validate();
  auto labels = encode_labels(raw, schema);
  const auto categorical = encode_categoricals(raw, schema);
  const auto roles = column_roles(raw, schema);

  Dataset ds;
  ds.labels = std::move(labels.labels);
  ds.class_names = std::move(labels.class_names);
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    if (roles[c] == ColumnRole::numeric || roles[c] == ColumnRole::categorical) {
      feature_cols.push_back(c);
      ds.feature_names.push_back(raw.columns[c]);
    }
  }
  const auto n = static_cast<Index>(raw.size());
  ds.features.resize(n, static_cast<Index>(feature_cols.size()));
  for (std::size_t f = 0; f < feature_cols.size(); ++f) {
    const std::size_t c = feature_cols[f];
    const auto fi = static_cast<Index>(f);
    if (roles[c] == ColumnRole::categorical) {
      const auto pos = std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(),
                                 raw.columns[c]) -
                       schema.categorical_columns.begin();
      ds.features.col(fi) = categorical.codes.col(static_cast<Index>(pos));
    } else {
      for (Index i = 0; i < n; ++i) {
        // Rows with unparsable numerics were dropped at load time.
        ds.features(i, fi) = *parse_finite(raw.rows[static_cast<std::size_t>(i)][c]);
      }
    }
  }
  return ds;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const int y : labels) {
    if (y >= 0 && static_cast<std::size_t>(y) < counts.size()) ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

void Dataset::validate() const {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (static_cast<Index>(feature_names.size()) != features.cols()) {
    throw DataError("dataset has " + std::to_string(features.cols()) + " feature columns but " +
                    std::to_string(feature_names.size()) + " feature names");
  }
  for (const int y : labels) {
    if (y < 0 || y >= n_classes()) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes()) + ")");
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.class_names = class_names;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = features.row(static_cast<Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

Tensor3d Dataset::to_sequences() const { return to_sequences(0, size()); }

Tensor3d Dataset::to_sequences(Index first, Index count) const {
  return Tensor3d::from_flat(features.middleRows(first, count), features.cols(), 1);
}

bool Dataset::operator==(const Dataset& o) const {
  return features.rows() == o.features.rows() && features.cols() == o.features.cols() &&
         features == o.features && labels == o.labels && class_names == o.class_names &&
         feature_names == o.feature_names;
}

ScalerState scale_fit(const RowMatrixd& features) {
  if (features.rows() == 0) throw DataError("scale_fit: no rows");
  return {features.colwise().minCoeff(), features.colwise().maxCoeff(), true};
}

RowMatrixd scale_apply(const ScalerState& state, const RowMatrixd& features) {
  if (!state.fitted) throw std::logic_error("scale_apply: scaler has not been fitted");
  if (features.cols() != state.min.size()) {
    throw ShapeError("scale_apply: " + std::to_string(features.cols()) + " features, scaler has " +
                     std::to_string(state.min.size()));
  }
  RowMatrixd out(features.rows(), features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    const double range = state.max(j) - state.min(j);
    if (range > 0.0) {
      out.col(j) = (features.col(j).array() - state.min(j)) / range;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

SplitResult stratified_split(const Dataset& ds, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction: must lie strictly between 0 and 1");
  }
  ds.validate();
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.n_classes()));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  std::vector<std::size_t> train_rows, val_rows;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) throw DataError("stratified_split: class '" + ds.class_names[c] + "' has no rows");
    rng.shuffle(rows);
    const auto n_train = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(rows.size())));
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<long>(n_train));
    val_rows.insert(val_rows.end(), rows.begin() + static_cast<long>(n_train), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  return {ds.subset(train_rows), ds.subset(val_rows)};
}

Balance parse_balance(const std::string& text) {
  if (text == "none") return Balance::none;
  if (text == "smote") return Balance::smote;
  if (text == "random") return Balance::random;
  throw ConfigError("balance: unknown value '" + text + "' (expected none|smote|random)");
}

std::string to_string(Balance b) {
  switch (b) {
    case Balance::none: return "none";
    case Balance::smote: return "smote";
    case Balance::random: return "random";
  }
  return "?";
}

BalanceOrder parse_balance_order(const std::string& text) {
  if (text == "before_split") return BalanceOrder::before_split;
  if (text == "train_only") return BalanceOrder::train_only;
  throw ConfigError("balance_order: unknown value '" + text + "' (expected before_split|train_only)");
}

std::string to_string(BalanceOrder o) {
  return o == BalanceOrder::before_split ? "before_split" : "train_only";
}

namespace {

Dataset balance(const Dataset& ds, const PreprocessOptions& opts, Rng& rng) {
  switch (opts.balance) {
    case Balance::smote: return smote(ds, opts.smote_k, rng);
    case Balance::random: return random_oversample(ds, rng);
    case Balance::none: break;
  }
  return ds;
}

}  // namespace

PreparedData preprocess(const Dataset& input, const PreprocessOptions& opts, std::size_t dropped_rows) {
  input.validate();
  if (input.size() == 0) throw DataError("preprocess: dataset is empty");
  Rng rng(opts.seed);
  PreparedData out;
  out.summary.rows_kept = static_cast<std::size_t>(input.size());
  out.summary.dropped_rows = dropped_rows;
  out.summary.counts_before = input.class_counts();

  if (opts.order == BalanceOrder::before_split) {
    Dataset ds = input;
    if (opts.scale) {
      out.scaler = scale_fit(ds.features);
      ds.features = scale_apply(out.scaler, ds.features);
    }
    ds = balance(ds, opts, rng);
    out.summary.counts_after = ds.class_counts();
    auto split = stratified_split(ds, opts.train_fraction, rng);
    out.train = std::move(split.train);
    out.val = std::move(split.val);
  } else {
    auto split = stratified_split(input, opts.train_fraction, rng);
    if (opts.scale) {
      out.scaler = scale_fit(split.train.features);
      split.train.features = scale_apply(out.scaler, split.train.features);
      split.val.features = scale_apply(out.scaler, split.val.features);
    }
    out.train = balance(split.train, opts, rng);
    out.val = std::move(split.val);
    out.summary.counts_after = out.train.class_counts();
  }
  out.summary.train_size = static_cast<std::size_t>(out.train.size());
  out.summary.val_size = static_cast<std::size_t>(out.val.size());
  return out;
}

PreparedData preprocess(const RawTable& raw, const SchemaConfig& schema, const PreprocessOptions& opts) {
  if (raw.size() == 0) throw DataError("preprocess: CSV has no usable rows");
  return preprocess(to_dataset(raw, schema), opts, raw.dropped_rows);
}

void save_dataset(const Dataset& ds, std::ostream& os) {
  ds.validate();
  os << "#sevit-dataset 1\n";
  std::vector<std::string> classes{"#classes"};
  classes.insert(classes.end(), ds.class_names.begin(), ds.class_names.end());
  os << csv::join_record(classes) << '\n';
  std::vector<std::string> header = ds.feature_names;
  header.emplace_back("label");
  os << csv::join_record(header) << '\n';
  std::string line;
  for (Index i = 0; i < ds.size(); ++i) {
    line.clear();
    for (Index j = 0; j < ds.n_features(); ++j) {
      line += format_double(ds.features(i, j));
      line.push_back(',');
    }
    line += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
    os << line << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset file " + path);
  save_dataset(ds, os);
  if (!os) throw DataError("failed writing dataset file " + path);
}

Dataset load_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("#sevit-dataset 1", 0) != 0) {
    throw DataError("dataset file: missing '#sevit-dataset 1' header");
  }
  if (!std::getline(is, line)) throw DataError("dataset file: missing #classes line");
  auto classes = csv::split_record(line);
  if (classes.empty() || classes.front() != "#classes") {
    throw DataError("dataset file: second line must start with #classes");
  }
  Dataset ds;
  ds.class_names.assign(classes.begin() + 1, classes.end());
  if (!std::getline(is, line)) throw DataError("dataset file: missing column header");
  auto header = csv::split_record(line);
  if (header.empty() || header.back() != "label") {
    throw DataError("dataset file: last column must be 'label'");
  }
  header.pop_back();
  ds.feature_names = std::move(header);
  const auto d = static_cast<Index>(ds.feature_names.size());

  std::vector<double> values;
  std::size_t line_no = 3;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = csv::split_record(line);
    if (static_cast<Index>(fields.size()) != d + 1) {
      throw DataError("dataset file: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(d + 1));
    }
    for (Index j = 0; j < d; ++j) {
      const auto v = parse_finite(fields[static_cast<std::size_t>(j)]);
      if (!v) throw DataError("dataset file: bad value on line " + std::to_string(line_no));
      values.push_back(*v);
    }
    int label = -1;
    const auto& lf = fields.back();
    const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size()) {
      throw DataError("dataset file: bad label on line " + std::to_string(line_no));
    }
    ds.labels.push_back(label);
  }
  const auto n = static_cast<Index>(ds.labels.size());
  ds.features = Eigen::Map<const RowMatrixd>(values.data(), n, d);
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset file " + path);
  return load_dataset(is);
}

Dataset make_gaussian_blobs(const BlobOptions& opts, Rng& rng) {
  if (opts.instances < 1 || opts.features < 1 || opts.classes < 2) {
    throw ConfigError("make_gaussian_blobs: need instances >= 1, features >= 1, classes >= 2");
  }
  RowMatrixd centres(opts.classes, opts.features);
  for (Index i = 0; i < centres.size(); ++i) centres.data()[i] = rng.normal(0.0, opts.separation);
  Dataset ds;
  ds.features.resize(opts.instances, opts.features);
  ds.labels.resize(static_cast<std::size_t>(opts.instances));
  for (Index i = 0; i < opts.instances; ++i) {
    const int y = static_cast<int>(i % opts.classes);
    ds.labels[static_cast<std::size_t>(i)] = y;
    for (Index j = 0; j < opts.features; ++j) ds.features(i, j) = centres(y, j) + rng.normal();
  }
  for (int c = 0; c < opts.classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  for (Index j = 0; j < opts.features; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  return ds;
}

}  // namespace sevit
