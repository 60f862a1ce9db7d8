#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capmml/dataset.hpp"
#include "capmml/matrix.hpp"

namespace capmml {

struct FeatureRow {
  std::string asset_id;
  int target_year = 0;
  std::vector<double> features;
  /// Realized return of target_year, compounded from its 12 monthly returns.
  double target = 0.0;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

/// Supervised dataset of (asset, target_year) rows.
///
/// Rows are sorted by (asset_id, target_year). Every feature of a row with
/// target year Y is computed only from data stamped strictly before month 12Y.
/// Fundamentals for fiscal year f are stamped at month 12f + 11.
struct FeatureMatrix {
  std::vector<std::string> feature_names;
  std::vector<FeatureRow> rows;
  int window_years = 3;
  /// Rows with full price history that were dropped for a missing input.
  std::size_t dropped_missing = 0;
  /// Assets without a single eligible target year.
  std::size_t insufficient_history = 0;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  std::size_t n_features() const noexcept { return feature_names.size(); }

  DenseMatrix design() const;
  std::vector<double> targets() const;
  std::vector<int> distinct_years() const;
  std::optional<std::size_t> feature_index(std::string_view name) const;
};

/// Feature names produced for a panel set. Ratio features are included only
/// when both of their line items exist in the fundamentals panel.
std::vector<std::string> feature_names_for(const Panels& panels, int window_years);

/// One row per (asset, target_year) with window_years complete years of prior
/// prices and a complete target year. Per lag k = 1..window_years (year Y-k):
///   ret_annual, volume_mean, price_end, every line item, the derived ratios,
///   and for every macro series its December level and Dec - Jan change.
FeatureMatrix build_feature_matrix(const Panels& panels, int window_years = 3);

struct AuditReport {
  std::size_t rows = 0;
  std::size_t dropped_missing = 0;
  std::size_t leakage_violations = 0;
  std::vector<std::string> violations;

  nlohmann::json to_json() const;
};

/// Recomputes every row's features from panels truncated at the start of its
/// target year and from provenance timestamps; any mismatch or any datum
/// stamped at or after the target year start is a leakage violation.
AuditReport audit_feature_matrix(const FeatureMatrix& matrix, const Panels& panels);

/// Per-column affine transform fitted on a training set.
struct Standardizer {
  std::vector<double> means;
  std::vector<double> scales;  // population s.d.; 0 for constant columns

  static Standardizer fit(const FeatureMatrix& train);
  /// Zero-variance columns map to 0.
  void apply(FeatureMatrix& matrix) const;
  void apply(std::span<double> row) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

struct SplitDataset {
  FeatureMatrix train;
  FeatureMatrix test;
  double test_fraction = 0.0;
  bool standardized = false;
  std::optional<Standardizer> transform;
};

/// Holds out the latest target years whose cumulative row share first reaches
/// test_fraction. No year straddles the boundary.
SplitDataset sequential_split(const FeatureMatrix& matrix, double test_fraction);

/// Rescales both sides with statistics of the training side only. Throws if
/// the split has already been standardized.
SplitDataset standardize_features(SplitDataset split);

std::string features_to_csv(const FeatureMatrix& matrix);
FeatureMatrix read_features_csv(const std::filesystem::path& path, int window_years = 3);

}  // namespace capmml
