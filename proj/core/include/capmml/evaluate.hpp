#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "capmml/boosting.hpp"
#include "capmml/dataset.hpp"
#include "capmml/features.hpp"
#include "capmml/hpo.hpp"
#include "capmml/neuralnet.hpp"

namespace capmml {

/// (1/n) sum (y_hat - y)^2. Throws ValidationError on empty or unequal inputs
/// and NumericError on non-finite values.
double mse(std::span<const double> predictions, std::span<const double> actuals);

enum class ModelKind { capm, gbt, ngboost, shallow_fnn, deep_fnn };

std::string to_string(ModelKind kind);
/// Human-readable row label used in rendered reports.
std::string display_name(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);
/// Parses a comma-separated roster such as "capm,gbt,deep_fnn".
std::vector<ModelKind> parse_roster(const std::string& text);

struct HpoBudget {
  SearchMethod method = SearchMethod::tpe;
  std::size_t gbt_trials = 50;
  std::size_t fnn_trials = 100;
  /// Grid over n_estimators; capped at the grid size.
  std::size_t ngboost_trials = 6;
  int fnn_epochs = 20;
  FnnSpaceOptions fnn_space;
  TpeOptions tpe;
  std::size_t parallel_width = 1;
};

struct BenchmarkConfig {
  std::vector<ModelKind> roster = {ModelKind::capm, ModelKind::gbt, ModelKind::ngboost, ModelKind::shallow_fnn,
                                   ModelKind::deep_fnn};
  double test_fraction = 0.30;
  int window_years = 3;
  /// Share of training years used as the HPO validation block.
  double inner_validation_fraction = 0.20;
  HpoBudget hpo;
  std::uint64_t seed = 7;
  std::size_t jobs = 1;
  std::string data_source = "synthetic";
  /// When set, trials/<model>.jsonl files are written (and resumed) here.
  std::optional<std::filesystem::path> trials_dir;
};

/// A fitted ML model together with the transform and feature layout it expects.
struct TrainedModel {
  ModelKind kind = ModelKind::gbt;
  std::vector<std::string> feature_names;
  Standardizer standardizer;
  std::variant<TreeEnsemble, NgbEnsemble, MlpModel> model;
  nlohmann::json best_params = nlohmann::json::object();
  double best_validation_mse = 0.0;

  /// Predictions for already standardized rows.
  std::vector<double> predict_standardized(const DenseMatrix& x) const;
  /// Standardizes a raw feature matrix with the stored transform, then predicts.
  std::vector<double> predict(const FeatureMatrix& raw) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
};

/// Hyperparameter search on an inner sequential split of `train` (raw
/// features), then a refit of the best configuration on all of `train`.
TrainedModel train_model(ModelKind kind, const FeatureMatrix& train, const BenchmarkConfig& config);

struct TestKey {
  std::string asset_id;
  int target_year = 0;
  friend bool operator==(const TestKey&, const TestKey&) = default;
};

std::vector<TestKey> test_keys(const FeatureMatrix& m);
std::string keys_digest(std::span<const TestKey> keys);

/// Predictions of one model over the shared test keys, or the reason it failed.
struct ModelOutcome {
  std::string name;
  std::vector<double> predictions;
  std::optional<std::string> error;
  double train_duration_s = 0.0;
  nlohmann::json config = nlohmann::json::object();
};

struct ReportRow {
  std::string model_name;
  bool ok = true;
  double test_mse = 0.0;
  std::size_t n_test_rows = 0;
  double train_duration_s = 0.0;
  std::string config_digest;
  nlohmann::json config = nlohmann::json::object();
  std::string error;
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  bool all_ok() const noexcept;
  /// Timing fields are omitted when include_timing is false.
  nlohmann::json to_json(bool include_timing = true) const;
  static BenchmarkReport from_json(const nlohmann::json& j);
  /// Flat `model,test_mse,n_test_rows`.
  std::string to_csv() const;
  /// Two-column table with MSE rounded to four decimals.
  std::string render_table() const;
};

/// Scores each outcome against the actuals of the shared key list.
BenchmarkReport assemble_report(std::span<const TestKey> keys, std::span<const double> actuals,
                                const std::vector<ModelOutcome>& outcomes, nlohmann::json metadata = nlohmann::json::object());

struct BenchmarkRun {
  BenchmarkReport report;
  FeatureMatrix matrix;
  SplitDataset split;  // raw (unstandardized) features
  std::vector<std::optional<TrainedModel>> models;  // aligned with roster; empty for capm and failures
};

/// Features, sequential split, per-model HPO and refit, and scoring of every
/// model on the identical test rows.
BenchmarkRun run_benchmark(const Panels& panels, const BenchmarkConfig& config);

nlohmann::json benchmark_config_to_json(const BenchmarkConfig& config);

}  // namespace capmml
