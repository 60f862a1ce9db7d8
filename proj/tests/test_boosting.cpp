#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "capmml/boosting.hpp"
#include "capmml/error.hpp"
#include "capmml/numeric.hpp"
#include "capmml/random.hpp"

using namespace capmml;

namespace {

DenseMatrix random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  DenseMatrix x(n, d);
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  return x;
}

struct BestSplit {
  int feature = -1;
  double threshold = 0.0;
  long double gain = 0.0L;
};

// Exhaustive search over every (feature, midpoint) pair, scored in long double.
BestSplit brute_force_split(const DenseMatrix& x, const std::vector<double>& r, double lambda) {
  const std::size_t n = x.rows();
  long double total = 0;
  for (double v : r) total += v;
  const long double parent = total * total / (n + lambda);
  BestSplit best;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < n; ++i) vals.push_back(x(i, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double thr = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
      long double gl = 0, gr = 0;
      std::size_t nl = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x(i, f) <= thr) {
          gl += r[i];
          ++nl;
        } else {
          gr += r[i];
        }
      }
      const long double gain = gl * gl / (nl + lambda) + gr * gr / (n - nl + lambda) - parent;
      if (gain > best.gain) best = {static_cast<int>(f), thr, gain};
    }
  }
  return best;
}

double train_mse(const TreeEnsemble& m, const DenseMatrix& x, const std::vector<double>& y) {
  const auto p = m.predict(x);
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return static_cast<double>(s / y.size());
}

// Fixed fixture: y = sin(3 x0) + x1^2 + noise on 300 rows.
void fixture(DenseMatrix& x, std::vector<double>& y, std::uint64_t seed = 5) {
  Rng rng(seed);
  x = random_matrix(300, 4, rng);
  y.clear();
  for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 1) + 0.1 * rng.normal());
}

}  // namespace

TEST(FitTree, SplitMatchesBruteForceOnRandomInstances) {
  Rng rng(101);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(49);
    const std::size_t d = 1 + rng.below(3);
    const DenseMatrix x = random_matrix(n, d, rng);
    std::vector<double> r(n);
    for (auto& v : r) v = rng.normal();
    GbtParams p;
    p.max_depth = 1;
    p.l2_leaf_penalty = inst % 2 == 0 ? 0.0 : rng.uniform(0.0, 5.0);
    const BestSplit oracle = brute_force_split(x, r, p.l2_leaf_penalty);
    Rng tree_rng(1);
    const RegressionTree tree = fit_tree(x, r, p, tree_rng);
    const auto& root = tree.nodes().front();
    if (oracle.feature < 0) {
      EXPECT_TRUE(root.is_leaf()) << "instance " << inst;
      continue;
    }
    ASSERT_FALSE(root.is_leaf()) << "instance " << inst;
    EXPECT_EQ(root.feature, oracle.feature) << "instance " << inst;
    EXPECT_EQ(root.threshold, oracle.threshold) << "instance " << inst;
  }
}

TEST(FitTree, TiesGoToLowestFeatureThenSmallestThreshold) {
  // Columns 0 and 1 are identical, so every split on 1 ties with one on 0.
  // Residuals are symmetric so thresholds 1.5 and 4.5 tie as well.
  DenseMatrix x(5, 2);
  const double v[] = {1, 2, 3, 4, 5};
  const std::vector<double> r = {1, -1, 0, -1, 1};
  for (std::size_t i = 0; i < 5; ++i) x(i, 0) = x(i, 1) = v[i];
  GbtParams p;
  p.max_depth = 1;
  Rng rng(1);
  const auto root = fit_tree(x, r, p, rng).nodes().front();
  ASSERT_FALSE(root.is_leaf());
  EXPECT_EQ(root.feature, 0);
  EXPECT_EQ(root.threshold, 1.5);
}

TEST(FitTree, MirroredSplitTiesGoToLowestFeature) {
  // Column 1 is column 0 negated, so each partition appears on both features
  // with its sides swapped and must score identically.
  Rng rng(127);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 5 + rng.below(20);
    DenseMatrix x(n, 2);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform(-1.0, 1.0);
      x(i, 1) = -x(i, 0);
      r[i] = rng.normal();
    }
    GbtParams p;
    p.max_depth = 1;
    p.l2_leaf_penalty = rng.uniform(0.0, 5.0);
    Rng tree_rng(1);
    const auto tree = fit_tree(x, r, p, tree_rng);
    const auto& root = tree.nodes().front();
    if (!root.is_leaf()) EXPECT_EQ(root.feature, 0) << "rep " << rep;
  }
}

TEST(FitTree, ConstantResidualsGiveSingleLeaf) {
  Rng rng(3);
  const DenseMatrix x = random_matrix(40, 3, rng);
  const std::vector<double> r(40, 0.7);
  GbtParams p;
  p.max_depth = 4;
  const auto tree = fit_tree(x, r, p, rng);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].value, 0.7);
}

TEST(FitTree, StepFunctionDepthOne) {
  const std::vector<double> xs = {0.05, 0.2, 0.31, 0.44, 0.48, 0.53, 0.6, 0.72, 0.9};
  DenseMatrix x(xs.size(), 1);
  std::vector<double> r;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x(i, 0) = xs[i];
    r.push_back(xs[i] > 0.5 ? 1.0 : -1.0);
  }
  GbtParams p;
  p.max_depth = 1;
  Rng rng(1);
  const auto tree = fit_tree(x, r, p, rng);
  const auto& root = tree.nodes().front();
  ASSERT_FALSE(root.is_leaf());
  EXPECT_GT(root.threshold, 0.48);
  EXPECT_LT(root.threshold, 0.53);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_DOUBLE_EQ(tree.predict(x.row(i)), r[i]);
}

TEST(FitTree, DepthZeroIsMeanLeaf) {
  Rng rng(7);
  const DenseMatrix x = random_matrix(30, 2, rng);
  std::vector<double> r(30);
  for (auto& v : r) v = rng.normal();
  GbtParams p;
  p.max_depth = 0;
  const auto tree = fit_tree(x, r, p, rng);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_NEAR(tree.nodes()[0].value, exact_mean(r), 1e-15);
}

TEST(FitTree, LeafValueUsesPenalty) {
  DenseMatrix x(4, 1);
  const std::vector<double> r = {1.0, 2.0, 3.0, 4.0};
  for (std::size_t i = 0; i < 4; ++i) x(i, 0) = 1.0;
  GbtParams p;
  p.l2_leaf_penalty = 1.0;
  Rng rng(1);
  const auto tree = fit_tree(x, r, p, rng);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].value, 10.0 / 5.0);
}

TEST(FitTree, MinSamplesLeafRespected) {
  Rng rng(9);
  const DenseMatrix x = random_matrix(60, 2, rng);
  std::vector<double> r(60);
  for (auto& v : r) v = rng.normal();
  GbtParams p;
  p.max_depth = 6;
  p.min_samples_leaf = 7;
  const auto tree = fit_tree(x, r, p, rng);
  // Route every row and count leaf occupancy.
  std::vector<int> counts(tree.nodes().size(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    int node = 0;
    while (!tree.nodes()[node].is_leaf()) {
      const auto& nd = tree.nodes()[node];
      node = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    ++counts[node];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (tree.nodes()[k].is_leaf()) EXPECT_GE(counts[k], 7);
  }
  EXPECT_LE(tree.depth(), 6);
}

TEST(FitTree, EveryInternalNodeHasTwoChildren) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  GbtParams p;
  p.max_depth = 5;
  Rng rng(1);
  const auto tree = fit_tree(x, y, p, rng);
  for (const auto& n : tree.nodes()) {
    if (!n.is_leaf()) {
      EXPECT_GT(n.left, 0);
      EXPECT_GT(n.right, 0);
      EXPECT_NE(n.left, n.right);
    }
  }
}

TEST(GbtFit, ZeroEstimatorsPredictTrainMean) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  GbtParams p;
  p.n_estimators = 0;
  const auto m = gbt_fit(x, y, p);
  long double s = 0;
  for (double v : y) s += v;
  EXPECT_NEAR(m.base_score, static_cast<double>(s / y.size()), 1e-15);
  EXPECT_EQ(m.base_score, exact_mean(y));
  for (double v : m.predict(x)) EXPECT_EQ(v, m.base_score);
}

TEST(GbtFit, OneFullDepthRoundInterpolates) {
  Rng rng(21);
  const DenseMatrix x = random_matrix(32, 2, rng);
  std::vector<double> y(32);
  for (auto& v : y) v = rng.normal();
  GbtParams p;
  p.n_estimators = 1;
  p.learning_rate = 1.0;
  p.max_depth = 40;  // unbounded in practice: the tree grows until every leaf is pure
  const auto m = gbt_fit(x, y, p);
  const auto pred = m.predict(x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(pred[i], y[i], 1e-12);
}

TEST(GbtFit, TrainingMseNonIncreasing) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  GbtParams p;
  p.n_estimators = 30;
  p.learning_rate = 0.1;
  p.max_depth = 3;
  const auto m = gbt_fit(x, y, p);
  ASSERT_EQ(m.train_mse.size(), 30u);
  for (std::size_t k = 1; k < m.train_mse.size(); ++k) EXPECT_LE(m.train_mse[k], m.train_mse[k - 1]);
  EXPECT_NEAR(m.train_mse.back(), train_mse(m, x, y), 1e-12);
}

TEST(GbtFit, DeterministicAndSubsamplingSeeded) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  GbtParams p;
  p.n_estimators = 15;
  p.subsample_rows = 0.7;
  p.subsample_features = 0.5;
  p.seed = 3;
  const auto a = gbt_fit(x, y, p);
  const auto b = gbt_fit(x, y, p);
  EXPECT_EQ(a.trees, b.trees);
  EXPECT_EQ(a.predict(x), b.predict(x));
  p.seed = 4;
  const auto c = gbt_fit(x, y, p);
  EXPECT_NE(a.trees, c.trees);
}

TEST(GbtFit, RowOrderDoesNotChangeTrees) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(77);
  rng.shuffle(std::span<std::size_t>(perm));
  DenseMatrix xp(x.rows(), x.cols());
  std::vector<double> yp(y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) xp(i, j) = x(perm[i], j);
    yp[i] = y[perm[i]];
  }
  GbtParams p;
  p.n_estimators = 20;
  p.max_depth = 4;
  const auto a = gbt_fit(x, y, p);
  const auto b = gbt_fit(xp, yp, p);
  EXPECT_EQ(a.base_score, b.base_score);
  EXPECT_EQ(a.trees, b.trees);
}

TEST(GbtFit, RejectsNonFiniteAndMismatch) {
  DenseMatrix x(3, 1, 1.0);
  std::vector<double> y = {1.0, 2.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(gbt_fit(x, y, GbtParams{}), NumericError);
  y[2] = 3.0;
  x(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(gbt_fit(x, y, GbtParams{}), NumericError);
  EXPECT_THROW(gbt_fit(DenseMatrix(2, 1), y, GbtParams{}), ConfigError);
  EXPECT_THROW(gbt_fit(DenseMatrix{}, std::vector<double>{}, GbtParams{}), Error);
}

TEST(GbtParams, ValidateBounds) {
  GbtParams p;
  EXPECT_NO_THROW(p.validate());
  auto bad = [](auto mutate) {
    GbtParams q;
    mutate(q);
    return q;
  };
  EXPECT_THROW(bad([](GbtParams& q) { q.learning_rate = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](GbtParams& q) { q.l2_leaf_penalty = -1.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](GbtParams& q) { q.min_samples_leaf = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](GbtParams& q) { q.subsample_rows = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](GbtParams& q) { q.subsample_features = 1.5; }).validate(), ConfigError);
  EXPECT_THROW(bad([](GbtParams& q) { q.n_estimators = -1; }).validate(), ConfigError);
}

TEST(GbtPredict, EmptyEnsembleAndSingleLeafComposition) {
  TreeEnsemble m;
  m.base_score = 0.3;
  m.learning_rate = 0.5;
  m.n_features = 2;
  const std::vector<double> row = {1.0, 2.0};
  EXPECT_EQ(m.predict(row), 0.3);
  m.trees.push_back(RegressionTree({TreeNode{-1, 0.0, -1, -1, 0.8}}));
  EXPECT_DOUBLE_EQ(m.predict(row), 0.3 + 0.5 * 0.8);
  EXPECT_THROW(m.predict(std::vector<double>{1.0}), ConfigError);
}

TEST(GbtPredict, HandRoutedFixture) {
  // Root: x0 <= 0.5 ? (x1 <= 2 ? 1 : 2) : 3
  TreeEnsemble m;
  m.base_score = 10.0;
  m.learning_rate = 1.0;
  m.n_features = 2;
  m.trees.push_back(RegressionTree({TreeNode{0, 0.5, 1, 2, 0.0}, TreeNode{1, 2.0, 3, 4, 0.0},
                                    TreeNode{-1, 0.0, -1, -1, 3.0}, TreeNode{-1, 0.0, -1, -1, 1.0},
                                    TreeNode{-1, 0.0, -1, -1, 2.0}}));
  DenseMatrix x(5, 2);
  const double rows[5][2] = {{0.5, 2.0}, {0.5, 2.1}, {0.51, 0.0}, {-1.0, -1.0}, {0.2, 3.0}};
  for (std::size_t i = 0; i < 5; ++i) {
    x(i, 0) = rows[i][0];
    x(i, 1) = rows[i][1];
  }
  EXPECT_EQ(gbt_predict(m, x), (std::vector<double>{11.0, 12.0, 13.0, 11.0, 12.0}));
  EXPECT_EQ(m.trees[0].depth(), 2);
  EXPECT_EQ(m.trees[0].leaf_count(), 3u);
}

TEST(GbtJson, RoundTripPreservesPredictions) {
  DenseMatrix x;
  std::vector<double> y;
  fixture(x, y);
  GbtParams p;
  p.n_estimators = 10;
  const auto m = gbt_fit(x, y, p);
  const auto j = ensemble_to_json(m);
  const auto back = ensemble_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.trees, m.trees);
  EXPECT_EQ(back.predict(x), m.predict(x));
  EXPECT_TRUE(j.contains("format_version"));
  EXPECT_THROW(ngboost_from_json(j), ConfigError);
}

TEST(RegressionTree, RejectsBadChildren) {
  EXPECT_THROW(RegressionTree(std::vector<TreeNode>{}), ConfigError);
  EXPECT_THROW(RegressionTree({TreeNode{0, 0.0, 1, 5, 0.0}, TreeNode{}}), ConfigError);
}

TEST(NgBoost, ConstantTargetMeanConverges) {
  Rng rng(31);
  const DenseMatrix x = random_matrix(100, 2, rng);
  const std::vector<double> y(100, 2.5);
  GbtParams p;
  p.n_estimators = 50;
  const auto m = ngboost_fit(x, y, p);
  for (const auto& d : m.predict_dist(x)) {
    EXPECT_NEAR(d.mu, 2.5, 1e-3);
    EXPECT_GE(d.sigma, kMinSigma);
  }
}

TEST(NgBoost, HomoskedasticSigmaCalibrated) {
  Rng rng(37);
  const DenseMatrix x = random_matrix(2000, 2, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(std::sin(2.0 * x(i, 0)) + 0.1 * rng.normal());
  GbtParams p;
  p.n_estimators = 100;
  p.max_depth = 2;
  const auto m = ngboost_fit(x, y, p);
  std::vector<double> sigmas;
  for (const auto& d : m.predict_dist(x)) sigmas.push_back(d.sigma);
  std::nth_element(sigmas.begin(), sigmas.begin() + sigmas.size() / 2, sigmas.end());
  const double median = sigmas[sigmas.size() / 2];
  EXPECT_NEAR(median, 0.1, 0.025);

  // Maximum-likelihood sigma of residuals from an independently fit mean model.
  GbtParams mp;
  mp.n_estimators = 100;
  mp.max_depth = 2;
  const auto mean_model = gbt_fit(x, y, mp);
  const auto mu = mean_model.predict(x);
  long double ss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - mu[i]) * (y[i] - mu[i]);
  const double ml_sigma = std::sqrt(static_cast<double>(ss / y.size()));
  EXPECT_NEAR(median, ml_sigma, 0.25 * ml_sigma);
}

TEST(NgBoost, TrainingNllNonIncreasing) {
  Rng rng(41);
  const DenseMatrix x = random_matrix(300, 3, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(x(i, 0) + (0.05 + 0.2 * std::abs(x(i, 1))) * rng.normal());
  GbtParams p;
  p.n_estimators = 40;
  const auto m = ngboost_fit(x, y, p);
  ASSERT_EQ(m.train_nll.size(), 40u);
  for (std::size_t k = 1; k < m.train_nll.size(); ++k) EXPECT_LE(m.train_nll[k], m.train_nll[k - 1]);
}

TEST(NgBoost, NllFormulaAndJsonRoundTrip) {
  const double pi = 3.14159265358979323846;
  EXPECT_NEAR(gaussian_nll(1.0, 1.0, 1.0), 0.5 * std::log(2 * pi), 1e-15);
  EXPECT_NEAR(gaussian_nll(2.0, 0.0, 2.0), std::log(2.0) + 0.5 * std::log(2 * pi) + 0.5, 1e-15);

  Rng rng(43);
  const DenseMatrix x = random_matrix(80, 2, rng);
  std::vector<double> y(80);
  for (auto& v : y) v = rng.normal();
  GbtParams p;
  p.n_estimators = 5;
  const auto m = ngboost_fit(x, y, p);
  const auto back = ngboost_from_json(nlohmann::json::parse(ngboost_to_json(m).dump()));
  EXPECT_EQ(back.predict(x), m.predict(x));
}
