#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capmml/matrix.hpp"

namespace capmml {

/// Predicts every row of a matrix. Must be safe to call concurrently.
using BatchPredictFn = std::function<std::vector<double>(const DenseMatrix&)>;

struct Attribution {
  std::vector<std::string> feature_names;  // the explained subset
  std::vector<std::size_t> feature_indices;
  double base_value = 0.0;
  std::vector<double> phi;
  double prediction = 0.0;

  nlohmann::json to_json() const;
};

constexpr std::size_t kMaxShapleyFeatures = 15;

/// Exact Shapley values of the features in `subset` for one row. The value of
/// a coalition S is the mean prediction over background rows whose subset
/// features outside S are taken from the background row; every other column
/// keeps the explained row's value. base_value is the empty-coalition value,
/// so base_value + sum(phi) equals the prediction at `row`.
/// Throws ConfigError for an empty background or a subset larger than 15.
Attribution shapley_exact(const BatchPredictFn& predict, std::span<const double> row, const DenseMatrix& background,
                          std::span<const std::size_t> subset, std::span<const std::string> names = {},
                          std::size_t jobs = 1);

struct ImportanceEntry {
  std::string feature;
  std::size_t feature_index = 0;
  double importance = 0.0;  // max(raw, 0)
  double raw = 0.0;
};

/// Entries sorted by importance descending, ties by feature index.
struct ImportanceRanking {
  std::vector<ImportanceEntry> entries;

  nlohmann::json to_json() const;
  /// `rank,feature,importance`
  std::string to_csv() const;
};

/// Mean increase in MSE when one column is shuffled, over n_repeats seeded shuffles.
ImportanceRanking permutation_importance(const BatchPredictFn& predict, const DenseMatrix& x, std::span<const double> y,
                                         std::span<const std::string> names, std::size_t n_repeats, std::uint64_t seed,
                                         std::size_t jobs = 1);

struct ImportanceReport {
  std::string table;
  std::string svg;
  std::size_t shown = 0;
};

/// The first min(top_k, size) entries as a text table and a horizontal bar chart.
ImportanceReport importance_report(const ImportanceRanking& ranking, std::size_t top_k);

/// n rows drawn without replacement (all rows when n >= rows).
DenseMatrix sample_background(const DenseMatrix& x, std::size_t n, std::uint64_t seed);

}  // namespace capmml
