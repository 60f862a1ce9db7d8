#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "capmml/matrix.hpp"
#include "capmml/random.hpp"

namespace capmml {

struct GbtParams {
  int n_estimators = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double l2_leaf_penalty = 0.0;
  int min_samples_leaf = 1;
  double subsample_rows = 1.0;
  double subsample_features = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;

  friend bool operator==(const GbtParams&, const GbtParams&) = default;
};

void to_json(nlohmann::json& j, const GbtParams& p);
void from_json(const nlohmann::json& j, GbtParams& p);

/// Flat tree node. Internal nodes route x[feature] <= threshold to left.
/// Leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary regression tree; nodes[0] is the root.
class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  int depth() const;
  std::size_t leaf_count() const;

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

/// Per-feature row orderings, computed once and shared by every tree of a fit.
class SortedColumns {
 public:
  explicit SortedColumns(const DenseMatrix& x);

  const DenseMatrix& data() const noexcept { return *x_; }
  std::span<const std::uint32_t> order(std::size_t feature) const {
    return std::span<const std::uint32_t>(order_).subspan(feature * x_->rows(), x_->rows());
  }
  /// Feature values in the order of order(feature).
  std::span<const double> values(std::size_t feature) const {
    return std::span<const double>(values_).subspan(feature * x_->rows(), x_->rows());
  }

 private:
  const DenseMatrix* x_;
  std::vector<std::uint32_t> order_;
  std::vector<double> values_;
};

/// Greedy variance-reduction CART on residuals.
///
/// Each split maximizes
///   G_L^2/(n_L+l) + G_R^2/(n_R+l) - G^2/(n+l)
/// (G = residual sum, l = l2_leaf_penalty) over thresholds at midpoints of
/// consecutive distinct values. Leaf value = G/(n+l). Growth stops at
/// max_depth, when no split leaves min_samples_leaf rows per side, or when no
/// split has positive gain. Ties go to the lowest feature index, then the
/// smallest threshold. Residual sums are order-independent, so the tree does
/// not depend on row order.
RegressionTree fit_tree(const SortedColumns& columns, std::span<const double> residuals,
                        std::span<const std::uint32_t> rows, std::span<const std::size_t> features,
                        const GbtParams& params);

/// Convenience overload: all rows, features subsampled per params with rng.
RegressionTree fit_tree(const DenseMatrix& x, std::span<const double> residuals, const GbtParams& params, Rng& rng);

/// prediction = base_score + learning_rate * sum of tree outputs.
struct TreeEnsemble {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  GbtParams params;
  std::size_t n_features = 0;
  /// Training MSE after each round.
  std::vector<double> train_mse;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const DenseMatrix& x) const;
};

/// Squared-error gradient boosting. Throws on NaN/inf in inputs.
TreeEnsemble gbt_fit(const DenseMatrix& x, std::span<const double> y, const GbtParams& params);
std::vector<double> gbt_predict(const TreeEnsemble& model, const DenseMatrix& x);

nlohmann::json ensemble_to_json(const TreeEnsemble& model);
TreeEnsemble ensemble_from_json(const nlohmann::json& j);

/// Gaussian probabilistic boosting in (mu, log sigma) with natural gradients.
struct NgbEnsemble {
  double base_mu = 0.0;
  double base_log_sigma = 0.0;
  std::vector<RegressionTree> mu_trees;
  std::vector<RegressionTree> log_sigma_trees;
  /// Applied step for each round (learning rate times line-search scale).
  std::vector<double> steps;
  GbtParams params;
  std::size_t n_features = 0;
  /// Mean training negative log-likelihood after each round.
  std::vector<double> train_nll;

  struct Gaussian {
    double mu;
    double sigma;
  };
  Gaussian predict_dist(std::span<const double> x) const;
  std::vector<Gaussian> predict_dist(const DenseMatrix& x) const;
  /// Point forecasts (mu).
  std::vector<double> predict(const DenseMatrix& x) const;
};

constexpr double kMinSigma = 1e-6;

/// Fits trees to the natural gradient of the Gaussian NLL under the Fisher
/// metric: mu direction (y - mu), log-sigma direction ((y-mu)^2/sigma^2 - 1)/2.
/// Each round's step is learning_rate times a halving line search, then
/// halved further until training NLL does not increase.
NgbEnsemble ngboost_fit(const DenseMatrix& x, std::span<const double> y, const GbtParams& params);

double gaussian_nll(double y, double mu, double sigma) noexcept;

nlohmann::json ngboost_to_json(const NgbEnsemble& model);
NgbEnsemble ngboost_from_json(const nlohmann::json& j);

}  // namespace capmml
