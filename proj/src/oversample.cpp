#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "sevit/datapipe.hpp"

namespace sevit {
namespace {

std::vector<std::vector<std::size_t>> rows_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.n_classes()));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw DataError("cannot oversample: class '" + ds.class_names[c] + "' has no rows");
    }
  }
  return by_class;
}

std::size_t majority(const std::vector<std::vector<std::size_t>>& by_class) {
  std::size_t m = 0;
  for (const auto& rows : by_class) m = std::max(m, rows.size());
  return m;
}

/// Originals followed by `extra` rows appended in order.
Dataset append_rows(const Dataset& ds, const RowMatrixd& extra, const std::vector<int>& labels) {
  Dataset out;
  out.class_names = ds.class_names;
  out.feature_names = ds.feature_names;
  out.features.resize(ds.size() + extra.rows(), ds.n_features());
  out.features.topRows(ds.size()) = ds.features;
  out.features.bottomRows(extra.rows()) = extra;
  out.labels = ds.labels;
  out.labels.insert(out.labels.end(), labels.begin(), labels.end());
  return out;
}

/// Indices (into `members`) of the k nearest members to members[self],
/// excluding self; ties broken by position.
std::vector<std::size_t> nearest_in_class(const Dataset& ds, const std::vector<std::size_t>& members,
                                          std::size_t self, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(members.size() - 1);
  const auto base = ds.features.row(static_cast<Index>(members[self]));
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (j == self) continue;
    dist.emplace_back((ds.features.row(static_cast<Index>(members[j])) - base).squaredNorm(), j);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

}  // namespace

Dataset random_oversample(const Dataset& ds, Rng& rng) {
  ds.validate();
  const auto by_class = rows_by_class(ds);
  const std::size_t target = majority(by_class);
  std::size_t total = 0;
  for (const auto& rows : by_class) total += target - rows.size();

  RowMatrixd extra(static_cast<Index>(total), ds.n_features());
  std::vector<int> labels;
  labels.reserve(total);
  Index at = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& rows = by_class[c];
    for (std::size_t n = rows.size(); n < target; ++n) {
      const std::size_t pick = rows[rng.below(rows.size())];
      extra.row(at++) = ds.features.row(static_cast<Index>(pick));
      labels.push_back(static_cast<int>(c));
    }
  }
  return append_rows(ds, extra, labels);
}

Dataset smote(const Dataset& ds, Index k, Rng& rng) {
  if (k < 1) throw ConfigError("smote: k must be >= 1");
  ds.validate();
  const auto by_class = rows_by_class(ds);
  const std::size_t target = majority(by_class);
  std::size_t total = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& rows = by_class[c];
    if (rows.size() < target && rows.size() < 2) {
      throw DataError("smote: class '" + ds.class_names[c] +
                      "' has a single instance; use random oversampling for it instead");
    }
    total += target - rows.size();
  }

  RowMatrixd extra(static_cast<Index>(total), ds.n_features());
  std::vector<int> labels;
  labels.reserve(total);
  Index at = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& members = by_class[c];
    if (members.size() >= target) continue;
    const std::size_t k_eff = std::min<std::size_t>(static_cast<std::size_t>(k), members.size() - 1);
    // Neighbour lists are computed on first use of each base row.
    std::unordered_map<std::size_t, std::vector<std::size_t>> neighbours;
    for (std::size_t n = members.size(); n < target; ++n) {
      const std::size_t base = rng.below(members.size());
      auto it = neighbours.find(base);
      if (it == neighbours.end()) {
        it = neighbours.emplace(base, nearest_in_class(ds, members, base, k_eff)).first;
      }
      const std::size_t partner = it->second[rng.below(k_eff)];
      const double gap = rng.uniform();
      extra.row(at++) = smote_point(ds.features.row(static_cast<Index>(members[base])),
                                    ds.features.row(static_cast<Index>(members[partner])), gap);
      labels.push_back(static_cast<int>(c));
    }
  }
  return append_rows(ds, extra, labels);
}

}  // namespace sevit
