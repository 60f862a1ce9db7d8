#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capmml/boosting.hpp"
#include "capmml/neuralnet.hpp"
#include "capmml/random.hpp"

namespace capmml {

enum class DimensionKind { uniform, log_uniform, integer, categorical };

struct Dimension {
  std::string name;
  DimensionKind kind = DimensionKind::uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<nlohmann::json> choices;  // categorical only

  bool finite() const noexcept { return kind == DimensionKind::integer || kind == DimensionKind::categorical; }
  /// True when value is a legal point of this dimension.
  bool contains(const nlohmann::json& value) const;
};

/// Ordered set of named dimensions. Builders throw ConfigError on invalid bounds
/// or duplicate names.
class SearchSpace {
 public:
  SearchSpace& uniform(std::string name, double lo, double hi);
  SearchSpace& log_uniform(std::string name, double lo, double hi);
  SearchSpace& integer(std::string name, long long lo, long long hi);
  SearchSpace& categorical(std::string name, std::vector<nlohmann::json> choices);

  const std::vector<Dimension>& dimensions() const noexcept { return dims_; }
  std::size_t size() const noexcept { return dims_.size(); }
  bool contains(const nlohmann::json& params) const;

  /// Number of grid points; throws ConfigError if any dimension is continuous.
  std::size_t grid_size() const;
  /// Grid point with the given lexicographic rank (first dimension most significant).
  nlohmann::json grid_point(std::size_t rank) const;

  nlohmann::json sample_prior(Rng& rng) const;

 private:
  SearchSpace& add(Dimension d);
  std::vector<Dimension> dims_;
};

enum class TrialStatus { ok, failed };

struct TrialRecord {
  std::size_t index = 0;
  nlohmann::json params = nlohmann::json::object();
  double objective = 0.0;
  TrialStatus status = TrialStatus::ok;
  double duration_s = 0.0;
  std::string error;

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

/// Returns the value to minimize. Exceptions and non-finite values mark the trial failed.
using ObjectiveFn = std::function<double(const nlohmann::json& params, std::size_t trial_index)>;

struct HpoResult {
  TrialRecord best;
  std::vector<TrialRecord> history;
};

struct TpeOptions {
  double gamma = 0.25;
  std::size_t n_startup = 10;
  std::size_t n_candidates = 24;
};

/// One TPE suggestion from the ok trials in history. Fewer than n_startup ok
/// trials, or a history whose objectives are all equal, falls back to the prior.
/// Numeric dimensions use truncated Gaussian Parzen windows (Scott's rule on
/// the log scale for log_uniform) mixed with a wide prior component;
/// categorical dimensions use add-one smoothed frequencies.
nlohmann::json tpe_suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, const TpeOptions& options,
                           Rng& rng);

enum class SearchMethod { grid, tpe, random };

std::string to_string(SearchMethod m);
SearchMethod search_method_from_string(const std::string& name);

struct OptimizeOptions {
  std::size_t n_trials = 50;
  SearchMethod method = SearchMethod::tpe;
  std::uint64_t seed = 0;
  TpeOptions tpe;
  /// Trials dispatched per TPE round, each seeing only the history before the
  /// round. Part of the result's identity; jobs is not.
  std::size_t parallel_width = 1;
  std::size_t jobs = 1;
  /// trials.jsonl location. Existing records are resumed.
  std::optional<std::filesystem::path> trials_path;
};

/// Exhaustive lexicographic search; ties keep the first evaluated point.
HpoResult grid_search(const SearchSpace& space, const ObjectiveFn& objective, std::size_t jobs = 1);

/// Runs n_trials trials (grid: the first min(n_trials, grid size) points),
/// appending each to trials_path. Throws Error if every trial failed.
HpoResult optimize(const SearchSpace& space, const ObjectiveFn& objective, const OptimizeOptions& options);

std::vector<TrialRecord> read_trials(const std::filesystem::path& path);

// --- Default spaces -----------------------------------------------------------

SearchSpace gbt_search_space();
/// Grid over n_estimators used for the distributional booster.
SearchSpace ngboost_grid_space();

struct FnnSpaceOptions {
  int min_width = 256;
  int max_width = 1024;
};

SearchSpace fnn_search_space(MlpPreset preset, const FnnSpaceOptions& options = {});

GbtParams gbt_params_from(const nlohmann::json& params, GbtParams base = {});
MlpConfig mlp_config_from(const nlohmann::json& params, MlpConfig base = {});

}  // namespace capmml
