#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "capmml/error.hpp"
#include "capmml/hpo.hpp"
#include "capmml/random.hpp"
#include "test_util.hpp"

using namespace capmml;
using capmml::testing::TempDir;
using nlohmann::json;

namespace {

TrialRecord ok_trial(std::size_t index, json params, double objective) {
  TrialRecord t;
  t.index = index;
  t.params = std::move(params);
  t.objective = objective;
  return t;
}

std::vector<TrialRecord> quadratic_history(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrialRecord> h;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    h.push_back(ok_trial(i, {{"x", x}}, (x - 0.5) * (x - 0.5)));
  }
  return h;
}

// Two-sided Kolmogorov-Smirnov distance between a sample and U(0, 1).
double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - v[i]));
    d = std::max(d, std::abs(v[i] - static_cast<double>(i) / n));
  }
  return d;
}

SearchSpace random_space(Rng& rng) {
  SearchSpace s;
  const auto n = 1 + rng.below(5);
  for (std::size_t k = 0; k < n; ++k) {
    const std::string name = "d" + std::to_string(k);
    switch (rng.below(4)) {
      case 0: {
        const double lo = rng.uniform(-10.0, 10.0);
        s.uniform(name, lo, lo + rng.uniform(1e-3, 5.0));
        break;
      }
      case 1: {
        const double lo = std::exp(rng.uniform(-8.0, 2.0));
        s.log_uniform(name, lo, lo * std::exp(rng.uniform(0.1, 6.0)));
        break;
      }
      case 2: {
        const auto lo = static_cast<long long>(rng.below(20)) - 10;
        s.integer(name, lo, lo + static_cast<long long>(rng.below(6)));
        break;
      }
      default: {
        std::vector<json> choices;
        const auto c = 1 + rng.below(4);
        for (std::size_t i = 0; i < c; ++i) choices.emplace_back("c" + std::to_string(i));
        s.categorical(name, choices);
        break;
      }
    }
  }
  return s;
}

double synthetic_objective(const json& p) {
  double v = 0.0;
  for (const auto& [k, x] : p.items()) {
    if (x.is_number()) v += std::sin(x.get<double>() * 1.7);
    else v += static_cast<double>(x.get<std::string>().back() - '0');
  }
  return v;
}

}  // namespace

TEST(SearchSpace, BuilderRejectsInvalidBounds) {
  SearchSpace s;
  EXPECT_THROW(s.uniform("a", 1.0, 1.0), ConfigError);
  EXPECT_THROW(s.uniform("a", 2.0, 1.0), ConfigError);
  EXPECT_THROW(s.log_uniform("b", 0.0, 1.0), ConfigError);
  EXPECT_THROW(s.log_uniform("b", -1.0, 1.0), ConfigError);
  EXPECT_THROW(s.integer("c", 3, 2), ConfigError);
  EXPECT_THROW(s.categorical("d", {}), ConfigError);
  s.uniform("a", 0.0, 1.0);
  EXPECT_THROW(s.integer("a", 0, 3), ConfigError);
  EXPECT_NO_THROW(s.integer("e", 4, 4));
}

TEST(SearchSpace, GridEnumerationIsLexicographic) {
  SearchSpace s;
  s.integer("a", 1, 2).categorical("b", {"x", "y", "z"});
  ASSERT_EQ(s.grid_size(), 6u);
  EXPECT_EQ(s.grid_point(0), (json{{"a", 1}, {"b", "x"}}));
  EXPECT_EQ(s.grid_point(1), (json{{"a", 1}, {"b", "y"}}));
  EXPECT_EQ(s.grid_point(3), (json{{"a", 2}, {"b", "x"}}));
  EXPECT_EQ(s.grid_point(5), (json{{"a", 2}, {"b", "z"}}));
  EXPECT_THROW(s.grid_point(6), ConfigError);
}

TEST(GridSearch, SinglePoint) {
  SearchSpace s;
  s.categorical("k", {7});
  const auto r = grid_search(s, [](const json& p, std::size_t) { return p.at("k").get<double>(); });
  EXPECT_EQ(r.best.params, (json{{"k", 7}}));
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(GridSearch, QuadraticArgmin) {
  SearchSpace s;
  s.categorical("n", {1, 2, 3});
  const auto r = grid_search(s, [](const json& p, std::size_t) {
    const double n = p.at("n").get<double>();
    return (n - 2.0) * (n - 2.0);
  });
  EXPECT_EQ(r.best.params.at("n"), 2);
  EXPECT_EQ(r.best.objective, 0.0);
}

TEST(GridSearch, TiesKeepEarlierPoint) {
  SearchSpace s;
  s.integer("n", 0, 4);
  const auto r = grid_search(s, [](const json& p, std::size_t) {
    const auto n = p.at("n").get<int>();
    return n == 1 || n == 3 ? 0.0 : 1.0;
  });
  EXPECT_EQ(r.best.params.at("n"), 1);
  EXPECT_EQ(r.best.index, 1u);
}

TEST(GridSearch, MatchesBruteForceOnRandomSmallGrids) {
  Rng rng(41);
  for (int rep = 0; rep < 30; ++rep) {
    SearchSpace s;
    const auto dims = 1 + rng.below(3);
    for (std::size_t k = 0; k < dims; ++k) s.integer("v" + std::to_string(k), 0, static_cast<long long>(rng.below(4)));
    std::vector<double> weights(dims);
    for (auto& w : weights) w = rng.normal();
    auto f = [&](const json& p) {
      double v = 0.0;
      for (std::size_t k = 0; k < dims; ++k) v += std::cos(weights[k] * p.at("v" + std::to_string(k)).get<double>() + k);
      return v;
    };
    const auto r = grid_search(s, [&](const json& p, std::size_t) { return f(p); });
    // Independent enumeration through nested counters.
    std::vector<long long> hi;
    for (const auto& d : s.dimensions()) hi.push_back(static_cast<long long>(d.hi));
    std::vector<long long> cur(dims, 0);
    double best = std::numeric_limits<double>::infinity();
    json best_p;
    while (true) {
      json p;
      for (std::size_t k = 0; k < dims; ++k) p["v" + std::to_string(k)] = cur[k];
      if (f(p) < best) {
        best = f(p);
        best_p = p;
      }
      std::size_t k = dims;
      while (k-- > 0) {
        if (++cur[k] <= hi[k]) break;
        cur[k] = 0;
      }
      if (k == static_cast<std::size_t>(-1)) break;
    }
    EXPECT_EQ(r.best.objective, best);
    EXPECT_EQ(r.best.params, best_p);
  }
}

TEST(GridSearch, ContinuousDimensionIsConfigError) {
  SearchSpace s;
  s.integer("a", 0, 2).uniform("b", 0.0, 1.0);
  EXPECT_THROW(grid_search(s, [](const json&, std::size_t) { return 0.0; }), ConfigError);
  OptimizeOptions o;
  o.method = SearchMethod::grid;
  EXPECT_THROW(optimize(s, [](const json&, std::size_t) { return 0.0; }, o), ConfigError);
}

TEST(GridSearch, FailedTrialsAreSkippedAndAllFailedIsError) {
  SearchSpace s;
  s.integer("n", 0, 3);
  const auto r = grid_search(s, [](const json& p, std::size_t) {
    const auto n = p.at("n").get<int>();
    if (n == 0) throw std::runtime_error("boom");
    if (n == 1) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(n);
  });
  EXPECT_EQ(r.best.params.at("n"), 2);
  EXPECT_EQ(r.history[0].status, TrialStatus::failed);
  EXPECT_EQ(r.history[0].error, "boom");
  EXPECT_EQ(r.history[1].status, TrialStatus::failed);
  EXPECT_THROW(grid_search(s, [](const json&, std::size_t) -> double { throw std::runtime_error("x"); }), Error);
}

TEST(Tpe, EmptyHistorySamplesPriorInBounds) {
  SearchSpace s;
  s.uniform("x", -2.0, 3.0).log_uniform("lr", 1e-4, 1e-1).integer("k", 2, 8).categorical("c", {"a", "b"});
  Rng rng(1);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(s.contains(tpe_suggest({}, s, {}, rng)));
}

TEST(Tpe, ConcentratesNearQuadraticMinimum) {
  SearchSpace s;
  s.uniform("x", 0.0, 1.0);
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto history = quadratic_history(30, 100 + rep);
    Rng rng(200 + rep);
    double sum = 0.0;
    for (int i = 0; i < 100; ++i) sum += tpe_suggest(history, s, {}, rng).at("x").get<double>();
    EXPECT_NEAR(sum / 100.0, 0.5, 0.15) << "repeat " << rep;
  }
}

TEST(Tpe, EqualObjectivesFallBackToPrior) {
  SearchSpace s;
  s.uniform("x", 0.0, 1.0);
  std::vector<TrialRecord> h;
  Rng hrng(3);
  // A clustered history: a density fit would pull suggestions toward 0.1.
  for (std::size_t i = 0; i < 30; ++i) h.push_back(ok_trial(i, {{"x", 0.1 + 0.01 * hrng.normal()}}, 1.0));
  Rng rng(4);
  std::vector<double> draws;
  for (int i = 0; i < 1000; ++i) draws.push_back(tpe_suggest(h, s, {}, rng).at("x").get<double>());
  // 1.63 / sqrt(n) is the 1% critical value of the KS distance.
  EXPECT_LT(ks_uniform(draws), 1.63 / std::sqrt(1000.0));
}

TEST(Tpe, GammaOutsideUnitIntervalIsError) {
  SearchSpace s;
  s.uniform("x", 0.0, 1.0);
  Rng rng(0);
  TpeOptions o;
  o.gamma = 1.0;
  EXPECT_THROW(tpe_suggest({}, s, o, rng), ConfigError);
  o.gamma = 0.0;
  EXPECT_THROW(tpe_suggest({}, s, o, rng), ConfigError);
}

TEST(Tpe, SuggestionsStayInBoundsOverRandomSpaces) {
  Rng rng(77);
  for (int rep = 0; rep < 40; ++rep) {
    const auto space = random_space(rng);
    std::vector<TrialRecord> history;
    for (std::size_t i = 0; i < 25; ++i) {
      const auto p = i < 10 ? space.sample_prior(rng) : tpe_suggest(history, space, {}, rng);
      ASSERT_TRUE(space.contains(p)) << p.dump();
      history.push_back(ok_trial(i, p, synthetic_objective(p)));
    }
  }
}

TEST(Optimize, TpeIsDeterministicPerSeed) {
  SearchSpace s;
  s.uniform("x", -1.0, 1.0).integer("k", 0, 5);
  auto f = [](const json& p, std::size_t) { return std::pow(p.at("x").get<double>() - 0.3, 2) + p.at("k").get<int>(); };
  OptimizeOptions o;
  o.n_trials = 25;
  o.seed = 9;
  const auto a = optimize(s, f, o);
  const auto b = optimize(s, f, o);
  ASSERT_EQ(a.history.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(a.history[i].params, b.history[i].params);
    EXPECT_EQ(a.history[i].index, i);
  }
  o.seed = 10;
  EXPECT_NE(optimize(s, f, o).history[0].params, a.history[0].params);
}

TEST(Optimize, ParallelJobsDoNotChangeResult) {
  SearchSpace s;
  s.uniform("x", -1.0, 1.0);
  auto f = [](const json& p, std::size_t) { return std::abs(p.at("x").get<double>()); };
  OptimizeOptions o;
  o.n_trials = 20;
  o.parallel_width = 4;
  const auto serial = optimize(s, f, o);
  o.jobs = 3;
  const auto parallel = optimize(s, f, o);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(serial.history[i].params, parallel.history[i].params);
}

TEST(Optimize, TrialsFileFormatAndResume) {
  TempDir dir("hpo_resume");
  SearchSpace s;
  s.uniform("x", 0.0, 1.0).categorical("c", {"a", "b", "c"});
  auto f = [](const json& p, std::size_t) {
    return std::pow(p.at("x").get<double>() - 0.7, 2) + (p.at("c") == "b" ? 0.0 : 0.1);
  };
  OptimizeOptions o;
  o.n_trials = 18;
  o.seed = 5;
  o.trials_path = dir.path() / "full.jsonl";
  const auto full = optimize(s, f, o);

  const auto lines = capmml::testing::read_file(*o.trials_path);
  std::size_t count = 0;
  std::istringstream in(lines);
  std::string line;
  std::string prefix;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("index").get<std::size_t>(), count);
    EXPECT_TRUE(j.contains("params"));
    EXPECT_TRUE(j.contains("objective"));
    EXPECT_EQ(j.at("status"), "ok");
    EXPECT_TRUE(j.contains("duration_s"));
    if (count < 12) prefix += line + "\n";
    ++count;
  }
  EXPECT_EQ(count, 18u);

  // Resume from the first 12 records plus a torn trailing line.
  o.trials_path = dir.path() / "resumed.jsonl";
  capmml::testing::write_file(*o.trials_path, prefix + "{\"index\": 12, \"par");
  std::size_t calls = 0;
  const auto resumed = optimize(s, [&](const json& p, std::size_t i) {
    ++calls;
    return f(p, i);
  }, o);
  EXPECT_EQ(calls, 6u);
  ASSERT_EQ(resumed.history.size(), full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) {
    EXPECT_EQ(resumed.history[i].params, full.history[i].params);
    EXPECT_EQ(resumed.history[i].objective, full.history[i].objective);
  }
  EXPECT_EQ(resumed.best.index, full.best.index);
  EXPECT_EQ(read_trials(*o.trials_path).size(), 18u);
}

TEST(Optimize, ResumedTrialOutsideSpaceIsError) {
  TempDir dir("hpo_outside");
  SearchSpace s;
  s.uniform("x", 0.0, 1.0);
  OptimizeOptions o;
  o.trials_path = dir.path() / "t.jsonl";
  capmml::testing::write_file(*o.trials_path, ok_trial(0, {{"x", 5.0}}, 1.0).to_json().dump() + "\n");
  EXPECT_THROW(optimize(s, [](const json&, std::size_t) { return 0.0; }, o), ConfigError);
}

TEST(Optimize, AllFailedIsError) {
  SearchSpace s;
  s.uniform("x", 0.0, 1.0);
  OptimizeOptions o;
  o.n_trials = 4;
  try {
    optimize(s, [](const json&, std::size_t) -> double { throw std::runtime_error("bad fit"); }, o);
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad fit"), std::string::npos);
  }
  o.n_trials = 0;
  EXPECT_THROW(optimize(s, [](const json&, std::size_t) { return 0.0; }, o), ConfigError);
}

TEST(Optimize, GridTruncatesToBudget) {
  SearchSpace s;
  s.integer("n", 0, 9);
  OptimizeOptions o;
  o.method = SearchMethod::grid;
  o.n_trials = 4;
  const auto r = optimize(s, [](const json& p, std::size_t) { return -p.at("n").get<double>(); }, o);
  EXPECT_EQ(r.history.size(), 4u);
  EXPECT_EQ(r.best.params.at("n"), 3);
  EXPECT_EQ(search_method_from_string("random"), SearchMethod::random);
  EXPECT_THROW(search_method_from_string("anneal"), ConfigError);
}

TEST(TrialRecord, JsonRoundTrip) {
  TrialRecord t = ok_trial(3, {{"a", 1}}, 0.25);
  t.duration_s = 1.5;
  const auto back = TrialRecord::from_json(t.to_json());
  EXPECT_EQ(back.index, 3u);
  EXPECT_EQ(back.objective, 0.25);
  EXPECT_EQ(back.params, t.params);
  TrialRecord f;
  f.status = TrialStatus::failed;
  f.error = "nan";
  const auto j = f.to_json();
  EXPECT_TRUE(j.at("objective").is_null());
  EXPECT_EQ(TrialRecord::from_json(j).status, TrialStatus::failed);
}

TEST(DefaultSpaces, GbtRanges) {
  const auto s = gbt_search_space();
  ASSERT_EQ(s.size(), 6u);
  const auto& d = s.dimensions();
  EXPECT_EQ(d[0].name, "n_estimators");
  EXPECT_EQ(d[0].lo, 50);
  EXPECT_EQ(d[0].hi, 500);
  EXPECT_EQ(d[1].lo, 2);
  EXPECT_EQ(d[1].hi, 8);
  EXPECT_EQ(d[2].kind, DimensionKind::log_uniform);
  Rng rng(0);
  for (int i = 0; i < 50; ++i) EXPECT_NO_THROW(gbt_params_from(s.sample_prior(rng)));
  EXPECT_EQ(ngboost_grid_space().grid_size(), 6u);
}

TEST(DefaultSpaces, FnnPresetsProduceValidConfigs) {
  Rng rng(1);
  for (const auto preset : {MlpPreset::shallow, MlpPreset::deep}) {
    const auto s = fnn_search_space(preset);
    for (int i = 0; i < 50; ++i) {
      const auto c = mlp_config_from(s.sample_prior(rng));
      EXPECT_NO_THROW(c.validate(preset));
    }
  }
  EXPECT_THROW(fnn_search_space(MlpPreset::custom), ConfigError);
  FnnSpaceOptions narrow;
  narrow.max_width = 256;
  const auto s = fnn_search_space(MlpPreset::deep, narrow);
  for (int i = 0; i < 20; ++i) {
    for (int w : mlp_config_from(s.sample_prior(rng)).hidden_layer_sizes) EXPECT_EQ(w, 256);
  }
}
