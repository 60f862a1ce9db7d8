#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>

#include "capmml/boosting.hpp"
#include "capmml/capm.hpp"
#include "capmml/dataset.hpp"
#include "capmml/evaluate.hpp"
#include "capmml/explain.hpp"
#include "capmml/features.hpp"
#include "capmml/hpo.hpp"
#include "capmml/neuralnet.hpp"
#include "capmml/numeric.hpp"
#include "capmml/random.hpp"

using namespace capmml;

namespace {

DenseMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix x(n, d);
  for (auto& v : x.data()) v = rng.normal();
  return x;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

const SyntheticData& market() {
  static const SyntheticData data = [] {
    SynthConfig c;
    c.n_assets = 100;
    c.n_years = 20;
    return generate_synthetic(c);
  }();
  return data;
}

}  // namespace

static void BM_ExactSum(benchmark::State& state) {
  const auto v = random_vector(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(exact_sum(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExactSum)->Arg(1 << 10)->Arg(1 << 16);

static void BM_Mse(benchmark::State& state) {
  const auto p = random_vector(static_cast<std::size_t>(state.range(0)), 2);
  const auto y = random_vector(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(mse(p, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Mse)->Arg(1 << 12);

static void BM_GenerateSynthetic(benchmark::State& state) {
  SynthConfig c;
  c.n_assets = static_cast<int>(state.range(0));
  c.n_years = 30;
  for (auto _ : state) benchmark::DoNotOptimize(generate_synthetic(c));
}
BENCHMARK(BM_GenerateSynthetic)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_BuildFeatureMatrix(benchmark::State& state) {
  const auto& data = market();
  for (auto _ : state) benchmark::DoNotOptimize(build_feature_matrix(data.panels, 3));
}
BENCHMARK(BM_BuildFeatureMatrix)->Unit(benchmark::kMillisecond);

static void BM_CapmPredictAll(benchmark::State& state) {
  const auto& data = market();
  for (auto _ : state) {
    const CapmPredictor pred(data.panels.prices, data.panels.macro);
    double total = 0.0;
    for (const auto& [id, beta] : data.truth.betas) total += pred.predict(id, 10).expected_return;
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_CapmPredictAll)->Unit(benchmark::kMillisecond);

static void BM_FitTree(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_matrix(n, 50, 4);
  const auto r = random_vector(n, 5);
  GbtParams p;
  p.max_depth = 6;
  for (auto _ : state) {
    Rng rng(1);
    benchmark::DoNotOptimize(fit_tree(x, r, p, rng));
  }
}
BENCHMARK(BM_FitTree)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_GbtFit(benchmark::State& state) {
  const auto x = random_matrix(2000, 50, 6);
  auto y = random_vector(2000, 7);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += std::sin(x(i, 0)) + x(i, 1) * x(i, 2);
  GbtParams p;
  p.n_estimators = static_cast<int>(state.range(0));
  p.max_depth = 4;
  for (auto _ : state) benchmark::DoNotOptimize(gbt_fit(x, y, p));
}
BENCHMARK(BM_GbtFit)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_NgboostFit(benchmark::State& state) {
  const auto x = random_matrix(1000, 10, 8);
  const auto y = random_vector(1000, 9);
  GbtParams p;
  p.n_estimators = 50;
  p.max_depth = 3;
  for (auto _ : state) benchmark::DoNotOptimize(ngboost_fit(x, y, p));
}
BENCHMARK(BM_NgboostFit)->Unit(benchmark::kMillisecond);

static void BM_MlpLossAndGradient(benchmark::State& state) {
  MlpConfig c;
  const auto layers = static_cast<std::size_t>(state.range(0));
  c.hidden_layer_sizes.assign(layers, 256);
  c.activations.assign(layers, Activation::relu);
  c.batch_norm.assign(layers, true);
  const auto model = mlp_init(c, 183);
  const Eigen::MatrixXd x = to_eigen(random_matrix(128, 183, 10));
  const auto yv = random_vector(128, 11);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yv.data(), 128);
  MlpGradients g;
  for (auto _ : state) benchmark::DoNotOptimize(mlp_loss(model, x, y, &g));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_MlpLossAndGradient)->Arg(1)->Arg(3)->Arg(5)->Unit(benchmark::kMicrosecond);

static void BM_MlpTrainEpoch(benchmark::State& state) {
  MlpConfig c;
  c.hidden_layer_sizes = {256, 256, 256};
  c.activations.assign(3, Activation::relu);
  c.batch_norm.assign(3, false);
  c.epochs = 1;
  c.batch_size = 128;
  const auto model = mlp_init(c, 183);
  const auto x = random_matrix(4096, 183, 12);
  const auto y = random_vector(4096, 13);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_train(model, x, y, c));
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_MlpTrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_TpeSuggest(benchmark::State& state) {
  const auto space = gbt_search_space();
  Rng rng(14);
  std::vector<TrialRecord> history;
  for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) {
    TrialRecord t;
    t.index = i;
    t.params = space.sample_prior(rng);
    t.objective = rng.uniform();
    history.push_back(std::move(t));
  }
  for (auto _ : state) benchmark::DoNotOptimize(tpe_suggest(history, space, {}, rng));
}
BENCHMARK(BM_TpeSuggest)->Arg(50)->Arg(100)->Unit(benchmark::kMicrosecond);

static void BM_ShapleyExact(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto bg = random_matrix(100, 20, 15);
  const auto row = random_vector(20, 16);
  std::vector<std::size_t> subset(d);
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  const BatchPredictFn f = [](const DenseMatrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = std::tanh(x(i, 0) * x(i, 1)) + x(i, 2) - 0.5 * x(i, 3) * x(i, 4);
    return out;
  };
  for (auto _ : state) benchmark::DoNotOptimize(shapley_exact(f, row, bg, subset));
}
BENCHMARK(BM_ShapleyExact)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_PermutationImportance(benchmark::State& state) {
  const auto x = random_matrix(500, 40, 17);
  const auto y = random_vector(500, 18);
  GbtParams p;
  p.n_estimators = 30;
  const auto model = gbt_fit(x, y, p);
  const BatchPredictFn f = [&](const DenseMatrix& m) { return model.predict(m); };
  for (auto _ : state) benchmark::DoNotOptimize(permutation_importance(f, x, y, {}, 3, 1));
}
BENCHMARK(BM_PermutationImportance)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
