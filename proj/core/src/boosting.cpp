#include "capmml/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "capmml/error.hpp"
#include "capmml/numeric.hpp"

namespace capmml {

void GbtParams::validate() const {
  if (n_estimators < 0) throw ConfigError("n_estimators must be >= 0");
  if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(l2_leaf_penalty >= 0.0) || !std::isfinite(l2_leaf_penalty)) throw ConfigError("l2_leaf_penalty must be >= 0");
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  if (!(subsample_rows > 0.0 && subsample_rows <= 1.0)) throw ConfigError("subsample_rows must lie in (0, 1]");
  if (!(subsample_features > 0.0 && subsample_features <= 1.0)) {
    throw ConfigError("subsample_features must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const GbtParams& p) {
  j = {{"n_estimators", p.n_estimators},       {"max_depth", p.max_depth},
       {"learning_rate", p.learning_rate},     {"l2_leaf_penalty", p.l2_leaf_penalty},
       {"min_samples_leaf", p.min_samples_leaf}, {"subsample_rows", p.subsample_rows},
       {"subsample_features", p.subsample_features}, {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, GbtParams& p) {
  p = GbtParams{};
  p.n_estimators = j.value("n_estimators", p.n_estimators);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.l2_leaf_penalty = j.value("l2_leaf_penalty", p.l2_leaf_penalty);
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  p.subsample_rows = j.value("subsample_rows", p.subsample_rows);
  p.subsample_features = j.value("subsample_features", p.subsample_features);
  p.seed = j.value("seed", p.seed);
}

// --- RegressionTree ---------------------------------------------------------

RegressionTree::RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ConfigError("a tree needs at least one node");
  const int n = static_cast<int>(nodes_.size());
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    if (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n) {
      throw ConfigError("tree node has an out-of-range child");
    }
  }
}

double RegressionTree::predict(std::span<const double> x) const {
  const TreeNode* node = &nodes_.front();
  while (!node->is_leaf()) {
    node = &nodes_[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                                                         : node->right)];
  }
  return node->value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

SortedColumns::SortedColumns(const DenseMatrix& x)
    : x_(&x), order_(x.rows() * x.cols()), values_(x.rows() * x.cols()) {
  for (std::size_t f = 0; f < x.cols(); ++f) {
    const std::size_t offset = f * x.rows();
    auto begin = order_.begin() + static_cast<std::ptrdiff_t>(offset);
    auto end = begin + static_cast<std::ptrdiff_t>(x.rows());
    std::iota(begin, end, 0u);
    std::stable_sort(begin, end, [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    for (std::size_t k = 0; k < x.rows(); ++k) values_[offset + k] = x(order_[offset + k], f);
  }
}

// --- Tree growth ------------------------------------------------------------

namespace {

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  std::size_t list = 0;  // position of the feature in the builder's lists
  double threshold = 0.0;
  std::size_t left_count = 0;
};

double midpoint(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return (mid >= a && mid < b) ? mid : a;
}

// Depth-first growth over per-feature row lists. Every node owns the same
// [begin, end) range in each list, kept sorted by feature value; a split
// partitions each range stably so the children stay sorted.
class TreeBuilder {
 public:
  TreeBuilder(const SortedColumns& columns, std::span<const double> residuals, std::span<const std::uint32_t> rows,
              std::span<const std::size_t> features, const GbtParams& params)
      : params_(params), residuals_(residuals), features_(features.begin(), features.end()), m_(rows.size()) {
    const DenseMatrix& x = columns.data();
    std::sort(features_.begin(), features_.end());
    // Residuals become integers on a per-tree grid 2^-shift chosen so that no
    // partial sum can overflow; integer sums make every split statistic
    // independent of row order.
    ExactSum abs_total;
    for (auto r : rows) abs_total.add(std::abs(residuals[r]));
    const double bound = abs_total.value();
    int shift = 0;
    if (bound > 0.0) {
      int e = 0;
      std::frexp(bound, &e);  // bound < 2^e
      shift = std::min(1000, 61 - e);
    }
    scale_ = std::ldexp(1.0, -shift);
    fixed_.assign(x.rows(), 0);
    in_sample_.assign(x.rows(), 0);
    for (auto r : rows) {
      fixed_[r] = std::llround(std::ldexp(residuals[r], shift));
      in_sample_[r] = 1;
    }
    squares_.assign(x.rows(), 0.0);
    for (auto r : rows) squares_[r] = residuals[r] * residuals[r];

    idx_.resize(features_.size() * m_);
    val_.resize(features_.size() * m_);
    for (std::size_t j = 0; j < features_.size(); ++j) {
      const auto order = columns.order(features_[j]);
      const auto values = columns.values(features_[j]);
      std::size_t out = j * m_;
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (!in_sample_[order[k]]) continue;
        idx_[out] = order[k];
        val_[out] = values[k];
        ++out;
      }
    }
    // Row list used for node statistics when no feature is sampled.
    if (features_.empty()) all_rows_.assign(rows.begin(), rows.end());
    inverse_.resize(m_ + 1);
    for (std::size_t c = 0; c <= m_; ++c) {
      const double denom = static_cast<double>(c) + params.l2_leaf_penalty;
      inverse_[c] = denom > 0.0 ? 1.0 / denom : 0.0;
    }
    scratch_idx_.resize(m_);
    scratch_val_.resize(m_);
    goes_left_.assign(x.rows(), 0);
  }

  RegressionTree build() {
    if (m_ == 0) return RegressionTree({TreeNode{}});
    grow(0, m_, 0);
    return RegressionTree(std::move(nodes_));
  }

 private:
  std::span<const std::uint32_t> rows_of(std::size_t begin, std::size_t end) const {
    if (features_.empty()) return std::span<const std::uint32_t>(all_rows_).subspan(begin, end - begin);
    return std::span<const std::uint32_t>(idx_).subspan(begin, end - begin);
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t count = end - begin;

    std::int64_t total = 0;
    ExactSum total_sq;
    for (auto r : rows_of(begin, end)) {
      total += fixed_[r];
      total_sq.add(squares_[r]);
    }
    const double g = static_cast<double>(total) * scale_;

    SplitCandidate best;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    if (depth < params_.max_depth && count >= 2 * min_leaf) {
      // Gains below this are rounding noise.
      best.gain = 1e-12 * total_sq.value();
      const double parent = g * g * inverse_[count];
      for (std::size_t j = 0; j < features_.size(); ++j) {
        const std::uint32_t* idx = idx_.data() + j * m_;
        const double* val = val_.data() + j * m_;
        std::int64_t left = 0;
        for (std::size_t k = begin; k + 1 < end; ++k) {
          left += fixed_[idx[k]];
          const std::size_t n_left = k + 1 - begin;
          if (val[k + 1] == val[k] || n_left < min_leaf || count - n_left < min_leaf) continue;
          const double gl = static_cast<double>(left) * scale_;
          const double gr = static_cast<double>(total - left) * scale_;
          const double gain = gl * gl * inverse_[n_left] + gr * gr * inverse_[count - n_left] - parent;
          if (gain > best.gain) {
            best = {gain, static_cast<int>(features_[j]), j, midpoint(val[k], val[k + 1]), n_left};
          }
        }
      }
    }

    if (best.feature < 0) {
      ExactSum exact;
      for (auto r : rows_of(begin, end)) exact.add(residuals_[r]);
      const double denom = static_cast<double>(count) + params_.l2_leaf_penalty;
      nodes_[static_cast<std::size_t>(id)].value = denom > 0.0 ? exact.value() / denom : 0.0;
      return id;
    }

    const std::uint32_t* split_idx = idx_.data() + best.list * m_;
    for (std::size_t k = begin; k < end; ++k) goes_left_[split_idx[k]] = k < begin + best.left_count;
    for (std::size_t j = 0; j < features_.size(); ++j) {
      if (j == best.list) continue;
      std::uint32_t* idx = idx_.data() + j * m_;
      double* val = val_.data() + j * m_;
      std::size_t l = begin;
      std::size_t r = 0;
      for (std::size_t k = begin; k < end; ++k) {
        if (goes_left_[idx[k]]) {
          idx[l] = idx[k];
          val[l] = val[k];
          ++l;
        } else {
          scratch_idx_[r] = idx[k];
          scratch_val_[r] = val[k];
          ++r;
        }
      }
      std::copy_n(scratch_idx_.begin(), r, idx + l);
      std::copy_n(scratch_val_.begin(), r, val + l);
    }

    const std::size_t mid = begin + best.left_count;
    const int left = grow(begin, mid, depth + 1);
    const int right = grow(mid, end, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  const GbtParams& params_;
  std::span<const double> residuals_;
  std::vector<std::size_t> features_;
  std::size_t m_;
  double scale_ = 1.0;
  std::vector<std::int64_t> fixed_;
  std::vector<double> squares_;
  std::vector<char> in_sample_;
  std::vector<char> goes_left_;
  std::vector<std::uint32_t> idx_;
  std::vector<double> val_;
  std::vector<std::uint32_t> all_rows_;
  std::vector<double> inverse_;
  std::vector<std::uint32_t> scratch_idx_;
  std::vector<double> scratch_val_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

RegressionTree fit_tree(const SortedColumns& columns, std::span<const double> residuals,
                        std::span<const std::uint32_t> rows, std::span<const std::size_t> features,
                        const GbtParams& params) {
  return TreeBuilder(columns, residuals, rows, features, params).build();
}

namespace {

std::vector<std::size_t> sample_features(std::size_t n_features, double fraction, Rng& rng) {
  std::vector<std::size_t> all(n_features);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (fraction >= 1.0) return all;
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_features) - 1e-9)));
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n_features - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::uint32_t> sample_rows(std::size_t n_rows, double fraction, Rng& rng) {
  std::vector<std::uint32_t> all(n_rows);
  std::iota(all.begin(), all.end(), 0u);
  if (fraction >= 1.0) return all;
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_rows))));
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n_rows - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

void check_training_inputs(const DenseMatrix& x, std::span<const double> y, const char* who) {
  if (x.rows() == 0) throw Error(std::string(who) + ": training set is empty");
  if (x.rows() != y.size()) throw ConfigError(std::string(who) + ": row count differs from target count");
  if (x.rows() > std::numeric_limits<std::uint32_t>::max()) throw ConfigError(std::string(who) + ": too many rows");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite target value");
  }
}

double mse_of(std::span<const double> y, std::span<const double> pred) {
  ExactSum s;
  for (std::size_t i = 0; i < y.size(); ++i) s.add((pred[i] - y[i]) * (pred[i] - y[i]));
  return s.value() / static_cast<double>(y.size());
}

}  // namespace

RegressionTree fit_tree(const DenseMatrix& x, std::span<const double> residuals, const GbtParams& params, Rng& rng) {
  params.validate();
  if (residuals.size() != x.rows()) throw ConfigError("fit_tree: residual count differs from row count");
  const SortedColumns columns(x);
  const auto features = sample_features(x.cols(), params.subsample_features, rng);
  std::vector<std::uint32_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0u);
  return fit_tree(columns, residuals, rows, features, params);
}

// --- Gradient boosting ----------------------------------------------------

double TreeEnsemble::predict(std::span<const double> x) const {
  if (x.size() != n_features) {
    throw ConfigError("gbt_predict: expected " + std::to_string(n_features) + " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return base_score + learning_rate * sum;
}

std::vector<double> TreeEnsemble::predict(const DenseMatrix& x) const {
  if (x.cols() != n_features && x.rows() > 0) {
    throw ConfigError("gbt_predict: expected " + std::to_string(n_features) + " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

std::vector<double> gbt_predict(const TreeEnsemble& model, const DenseMatrix& x) { return model.predict(x); }

TreeEnsemble gbt_fit(const DenseMatrix& x, std::span<const double> y, const GbtParams& params) {
  params.validate();
  check_training_inputs(x, y, "gbt_fit");
  TreeEnsemble model;
  model.params = params;
  model.learning_rate = params.learning_rate;
  model.n_features = x.cols();
  model.base_score = exact_mean(y);

  const std::size_t n = x.rows();
  std::vector<double> tree_sum(n, 0.0);
  std::vector<double> pred(n, model.base_score);
  std::vector<double> residuals(n);
  if (params.n_estimators == 0) return model;

  const SortedColumns columns(x);
  Rng rng(params.seed);
  for (int round = 0; round < params.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) residuals[i] = y[i] - pred[i];
    const auto rows = sample_rows(n, params.subsample_rows, rng);
    const auto features = sample_features(x.cols(), params.subsample_features, rng);
    RegressionTree tree = fit_tree(columns, residuals, rows, features, params);
    for (std::size_t i = 0; i < n; ++i) {
      tree_sum[i] += tree.predict(x.row(i));
      pred[i] = model.base_score + model.learning_rate * tree_sum[i];
    }
    model.trees.push_back(std::move(tree));
    model.train_mse.push_back(mse_of(y, pred));
  }
  return model;
}

namespace {

nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes()) {
    nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                     {"value", n.value}});
  }
  return nodes;
}

RegressionTree tree_from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j) {
    nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                     n.at("right").get<int>(), n.at("value").get<double>()});
  }
  return RegressionTree(std::move(nodes));
}

constexpr int kModelFormatVersion = 1;

void check_format(const nlohmann::json& j, const char* kind) {
  if (j.value("format_version", 0) != kModelFormatVersion) throw ConfigError("unsupported model format version");
  if (j.value("kind", std::string{}) != kind) throw ConfigError(std::string("expected a '") + kind + "' model");
}

}  // namespace

nlohmann::json ensemble_to_json(const TreeEnsemble& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
  return {{"format_version", kModelFormatVersion}, {"kind", "gbt"},           {"base_score", model.base_score},
          {"learning_rate", model.learning_rate},   {"n_features", model.n_features}, {"params", model.params},
          {"train_mse", model.train_mse},           {"trees", trees}};
}

TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  check_format(j, "gbt");
  TreeEnsemble m;
  m.base_score = j.at("base_score").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.params = j.at("params").get<GbtParams>();
  m.train_mse = j.value("train_mse", std::vector<double>{});
  for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
  return m;
}

// --- NGBoost ----------------------------------------------------------------

double gaussian_nll(double y, double mu, double sigma) noexcept {
  const double z = (y - mu) / sigma;
  return std::log(sigma) + 0.5 * z * z + 0.5 * std::log(2.0 * std::numbers::pi);
}

namespace {

double clamp_log_sigma(double s) { return std::max(s, std::log(kMinSigma)); }

double mean_nll(std::span<const double> y, std::span<const double> mu, std::span<const double> log_sigma) {
  ExactSum s;
  for (std::size_t i = 0; i < y.size(); ++i) s.add(gaussian_nll(y[i], mu[i], std::exp(log_sigma[i])));
  return s.value() / static_cast<double>(y.size());
}

}  // namespace

NgbEnsemble::Gaussian NgbEnsemble::predict_dist(std::span<const double> x) const {
  if (x.size() != n_features) throw ConfigError("ngboost_predict: feature dimension mismatch");
  double mu = base_mu;
  double log_sigma = base_log_sigma;
  for (std::size_t m = 0; m < mu_trees.size(); ++m) {
    mu += steps[m] * mu_trees[m].predict(x);
    log_sigma = clamp_log_sigma(log_sigma + steps[m] * log_sigma_trees[m].predict(x));
  }
  return {mu, std::exp(log_sigma)};
}

std::vector<NgbEnsemble::Gaussian> NgbEnsemble::predict_dist(const DenseMatrix& x) const {
  std::vector<Gaussian> out;
  out.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(predict_dist(x.row(i)));
  return out;
}

std::vector<double> NgbEnsemble::predict(const DenseMatrix& x) const {
  std::vector<double> out;
  out.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(predict_dist(x.row(i)).mu);
  return out;
}

NgbEnsemble ngboost_fit(const DenseMatrix& x, std::span<const double> y, const GbtParams& params) {
  params.validate();
  check_training_inputs(x, y, "ngboost_fit");
  const std::size_t n = x.rows();

  NgbEnsemble model;
  model.params = params;
  model.n_features = x.cols();
  model.base_mu = exact_mean(y);
  {
    ExactSum sq;
    for (double v : y) sq.add((v - model.base_mu) * (v - model.base_mu));
    const double var = sq.value() / static_cast<double>(n);
    model.base_log_sigma = clamp_log_sigma(0.5 * std::log(std::max(var, 0.0)));
  }

  std::vector<double> mu(n, model.base_mu);
  std::vector<double> log_sigma(n, model.base_log_sigma);
  std::vector<double> grad_mu(n);
  std::vector<double> grad_ls(n);
  std::vector<double> f_mu(n);
  std::vector<double> f_ls(n);
  std::vector<double> trial_mu(n);
  std::vector<double> trial_ls(n);
  if (params.n_estimators == 0) return model;

  const SortedColumns columns(x);
  Rng rng(params.seed);
  double current = mean_nll(y, mu, log_sigma);

  auto nll_at = [&](double step) {
    for (std::size_t i = 0; i < n; ++i) {
      trial_mu[i] = mu[i] + step * f_mu[i];
      trial_ls[i] = clamp_log_sigma(log_sigma[i] + step * f_ls[i]);
    }
    return mean_nll(y, trial_mu, trial_ls);
  };

  for (int round = 0; round < params.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double var = std::exp(2.0 * log_sigma[i]);
      const double resid = y[i] - mu[i];
      grad_mu[i] = resid;
      grad_ls[i] = 0.5 * (resid * resid / var - 1.0);
    }
    const auto rows = sample_rows(n, params.subsample_rows, rng);
    const auto features = sample_features(x.cols(), params.subsample_features, rng);
    RegressionTree mu_tree = fit_tree(columns, grad_mu, rows, features, params);
    RegressionTree ls_tree = fit_tree(columns, grad_ls, rows, features, params);
    for (std::size_t i = 0; i < n; ++i) {
      f_mu[i] = mu_tree.predict(x.row(i));
      f_ls[i] = ls_tree.predict(x.row(i));
    }

    double scale = 1.0;
    while (scale > 1.0 / 1024.0 && !(nll_at(scale) < current)) scale /= 2.0;
    double step = params.learning_rate * scale;
    double next = nll_at(step);
    int halvings = 0;
    while (next > current && halvings < 40) {
      step /= 2.0;
      next = nll_at(step);
      ++halvings;
    }
    if (next > current) {
      step = 0.0;
      next = current;
    } else {
      mu.swap(trial_mu);
      log_sigma.swap(trial_ls);
    }
    current = next;
    model.mu_trees.push_back(std::move(mu_tree));
    model.log_sigma_trees.push_back(std::move(ls_tree));
    model.steps.push_back(step);
    model.train_nll.push_back(current);
  }
  return model;
}

nlohmann::json ngboost_to_json(const NgbEnsemble& model) {
  nlohmann::json mu_trees = nlohmann::json::array();
  nlohmann::json ls_trees = nlohmann::json::array();
  for (const auto& t : model.mu_trees) mu_trees.push_back(tree_to_json(t));
  for (const auto& t : model.log_sigma_trees) ls_trees.push_back(tree_to_json(t));
  return {{"format_version", kModelFormatVersion},
          {"kind", "ngboost"},
          {"base_mu", model.base_mu},
          {"base_log_sigma", model.base_log_sigma},
          {"n_features", model.n_features},
          {"params", model.params},
          {"steps", model.steps},
          {"train_nll", model.train_nll},
          {"mu_trees", mu_trees},
          {"log_sigma_trees", ls_trees}};
}

NgbEnsemble ngboost_from_json(const nlohmann::json& j) {
  check_format(j, "ngboost");
  NgbEnsemble m;
  m.base_mu = j.at("base_mu").get<double>();
  m.base_log_sigma = j.at("base_log_sigma").get<double>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.params = j.at("params").get<GbtParams>();
  m.steps = j.at("steps").get<std::vector<double>>();
  m.train_nll = j.value("train_nll", std::vector<double>{});
  for (const auto& t : j.at("mu_trees")) m.mu_trees.push_back(tree_from_json(t));
  for (const auto& t : j.at("log_sigma_trees")) m.log_sigma_trees.push_back(tree_from_json(t));
  if (m.mu_trees.size() != m.steps.size() || m.log_sigma_trees.size() != m.steps.size()) {
    throw ConfigError("ngboost model: tree and step counts differ");
  }
  return m;
}

}  // namespace capmml
