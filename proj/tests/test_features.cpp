#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "capmml/dataset.hpp"
#include "capmml/error.hpp"
#include "capmml/features.hpp"
#include "test_util.hpp"

using namespace capmml;

namespace {

// One asset "A" with n_years of monthly prices. Price path and volume follow
// simple closed forms so each feature can be recomputed by hand.
double price_at(int m) { return 10.0 + 0.5 * m + (m % 3 == 0 ? 0.7 : 0.0); }
double volume_at(int m) { return 1000.0 + 10.0 * m; }
double macro_at(int m, int s) { return s == 0 ? 0.02 + 0.001 * m : 100.0 - 0.5 * m; }

Panels hand_panels(int n_years) {
  std::vector<PriceRow> prices;
  for (int m = 0; m < 12 * n_years; ++m) {
    const double p = price_at(m);
    const double r = m == 0 ? 0.0 : p / price_at(m - 1) - 1.0;
    prices.push_back({"A", m, p, r, volume_at(m), 50.0});
  }
  std::vector<FundamentalsRow> fund;
  for (int y = 0; y < n_years; ++y) {
    fund.push_back({"A", y, {100.0 + y, 8.0 + y, 400.0 + 10.0 * y}});
  }
  std::vector<std::vector<double>> macro;
  for (int m = 0; m < 12 * n_years; ++m) macro.push_back({macro_at(m, 0), macro_at(m, 1)});
  return Panels{PricePanel(std::move(prices)),
                FundamentalsPanel({"revenue", "net_income", "total_assets"}, std::move(fund)),
                MacroPanel({"cpi", "unemployment"}, 0, std::move(macro))};
}

FeatureMatrix equal_years(int first_year, int n_years, int rows_per_year) {
  FeatureMatrix m;
  m.feature_names = {"x"};
  for (int a = 0; a < rows_per_year; ++a) {
    for (int y = first_year; y < first_year + n_years; ++y) {
      m.rows.push_back({"asset" + std::to_string(a), y, {static_cast<double>(y)}, 0.0});
    }
  }
  return m;
}

}  // namespace

TEST(BuildFeatureMatrix, FourYearsWindowThreeGivesOneRow) {
  const auto fm = build_feature_matrix(hand_panels(4), 3);
  ASSERT_EQ(fm.size(), 1u);
  EXPECT_EQ(fm.rows[0].target_year, 3);
  EXPECT_EQ(fm.dropped_missing, 0u);
}

TEST(BuildFeatureMatrix, HandFixtureMatchesManualRecomputation) {
  const Panels panels = hand_panels(4);
  const auto fm = build_feature_matrix(panels, 3);
  ASSERT_EQ(fm.size(), 1u);
  const auto& row = fm.rows[0];

  std::vector<std::string> names;
  std::vector<double> expected;
  for (int lag = 1; lag <= 3; ++lag) {
    const std::string sfx = "_lag" + std::to_string(lag);
    const int y = 3 - lag;
    const int jan = 12 * y, dec = 12 * y + 11;
    // Previous December's price anchors January's return.
    const double ret = price_at(dec) / price_at(jan - 1 < 0 ? 0 : jan - 1) - 1.0;
    double vol = 0.0;
    for (int m = jan; m <= dec; ++m) vol += volume_at(m);
    const double revenue = 100.0 + y, ni = 8.0 + y, ta = 400.0 + 10.0 * y;
    names.insert(names.end(), {"ret_annual" + sfx, "volume_mean" + sfx, "price_end" + sfx, "revenue" + sfx,
                               "net_income" + sfx, "total_assets" + sfx, "roa" + sfx, "asset_turnover" + sfx,
                               "cpi_level" + sfx, "cpi_change" + sfx, "unemployment_level" + sfx,
                               "unemployment_change" + sfx});
    expected.insert(expected.end(), {ret, vol / 12.0, price_at(dec), revenue, ni, ta, ni / ta, revenue / ta,
                                     macro_at(dec, 0), macro_at(dec, 0) - macro_at(jan, 0), macro_at(dec, 1),
                                     macro_at(dec, 1) - macro_at(jan, 1)});
  }
  ASSERT_EQ(fm.feature_names, names);
  ASSERT_EQ(row.features.size(), expected.size());
  for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_NEAR(row.features[j], expected[j], 1e-12) << names[j];

  // Target compounds the 12 monthly returns of year 3.
  EXPECT_NEAR(row.target, price_at(47) / price_at(35) - 1.0, 1e-12);
}

TEST(BuildFeatureMatrix, WindowLongerThanHistoryGivesEmptyMatrixWithCount) {
  const auto fm = build_feature_matrix(hand_panels(4), 5);
  EXPECT_TRUE(fm.empty());
  EXPECT_EQ(fm.insufficient_history, 1u);
}

TEST(BuildFeatureMatrix, EmptyPanelsAndBadWindowRejected) {
  EXPECT_THROW(build_feature_matrix(Panels{}, 3), Error);
  EXPECT_THROW(build_feature_matrix(hand_panels(4), 0), ConfigError);
}

TEST(BuildFeatureMatrix, MissingItemDropsRowAndCounts) {
  Panels p = hand_panels(5);
  std::vector<FundamentalsRow> rows = p.fundamentals.rows();
  rows[2].values[0].reset();  // fiscal year 2 feeds target years 3 and 4
  p.fundamentals = FundamentalsPanel(p.fundamentals.items(), rows);
  const auto fm = build_feature_matrix(p, 2);
  // Eligible target years 2, 3, 4; years 3 and 4 read fiscal year 2.
  EXPECT_EQ(fm.size(), 1u);
  EXPECT_EQ(fm.dropped_missing, 2u);
}

TEST(BuildFeatureMatrix, SyntheticScaleAndOrdering) {
  SynthConfig cfg;
  cfg.n_assets = 30;
  cfg.n_years = 12;
  const auto data = generate_synthetic(cfg);
  const auto fm = build_feature_matrix(data.panels, 3);
  EXPECT_EQ(fm.size(), 30u * 9u);
  EXPECT_GE(fm.n_features(), 150u);
  EXPECT_LE(fm.n_features(), 250u);
  for (std::size_t i = 1; i < fm.rows.size(); ++i) {
    const auto& a = fm.rows[i - 1];
    const auto& b = fm.rows[i];
    EXPECT_TRUE(a.asset_id < b.asset_id || (a.asset_id == b.asset_id && a.target_year < b.target_year));
  }
  for (const auto& r : fm.rows) EXPECT_EQ(r.features.size(), fm.n_features());
}

TEST(BuildFeatureMatrix, FutureDataDoesNotChangeFeatures) {
  SynthConfig cfg;
  cfg.n_assets = 8;
  cfg.n_years = 8;
  const auto data = generate_synthetic(cfg);
  const auto base = build_feature_matrix(data.panels, 3);

  // Perturb every datum of years >= 6 and rebuild; rows with target year <= 6 must not move.
  Panels p = data.panels;
  std::vector<PriceRow> prices = p.prices.rows();
  for (auto& r : prices) {
    if (r.month >= 72) {
      r.volume *= 3.0;
      r.shares_outstanding *= 2.0;
    }
  }
  std::vector<FundamentalsRow> fund = p.fundamentals.rows();
  for (auto& r : fund) {
    if (12 * r.fiscal_year + 11 >= 72) {
      for (auto& v : r.values) {
        if (v) *v += 1.0;
      }
    }
  }
  std::vector<std::vector<double>> macro = p.macro.rows();
  for (std::size_t m = 72; m < macro.size(); ++m) {
    for (auto& v : macro[m]) v += 5.0;
  }
  p.prices = PricePanel(prices);
  p.fundamentals = FundamentalsPanel(p.fundamentals.items(), fund);
  p.macro = MacroPanel(p.macro.series(), p.macro.first_month(), macro);
  const auto moved = build_feature_matrix(p, 3);
  ASSERT_EQ(base.size(), moved.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base.rows[i].target_year <= 6) EXPECT_EQ(base.rows[i].features, moved.rows[i].features);
  }
}

TEST(Audit, GeneratedMatricesHaveNoViolations) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig cfg;
    cfg.n_assets = 10;
    cfg.n_years = 8;
    cfg.seed = seed;
    cfg.missing_rate = 0.02;
    const auto data = generate_synthetic(cfg);
    const auto fm = build_feature_matrix(data.panels, 3);
    const auto report = audit_feature_matrix(fm, data.panels);
    EXPECT_EQ(report.leakage_violations, 0u);
    EXPECT_EQ(report.rows, fm.size());
  }
}

TEST(Audit, InjectedFutureMacroValueIsCaught) {
  SynthConfig cfg;
  cfg.n_assets = 5;
  cfg.n_years = 8;
  const auto data = generate_synthetic(cfg);
  auto fm = build_feature_matrix(data.panels, 3);
  const std::size_t j = *fm.feature_index("cpi_level_lag1");
  auto& row = fm.rows[3];
  // December of the target year itself.
  row.features[j] = data.panels.macro.value(12 * row.target_year + 11, 0);
  const auto report = audit_feature_matrix(fm, data.panels);
  EXPECT_EQ(report.leakage_violations, 1u);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_NE(report.violations[0].find("cpi_level_lag1"), std::string::npos);
}

TEST(Audit, RenamedColumnsAreCaught) {
  const Panels p = hand_panels(4);
  auto fm = build_feature_matrix(p, 3);
  std::swap(fm.feature_names[0], fm.feature_names[1]);
  EXPECT_GT(audit_feature_matrix(fm, p).leakage_violations, 0u);
}

TEST(SequentialSplit, TenEqualYearsThirtyPercent) {
  const auto split = sequential_split(equal_years(0, 10, 4), 0.3);
  std::set<int> test_years;
  for (const auto& r : split.test.rows) test_years.insert(r.target_year);
  EXPECT_EQ(test_years, (std::set<int>{7, 8, 9}));
  EXPECT_EQ(split.train.size(), 28u);
}

TEST(SequentialSplit, ZeroFractionKeepsEverythingInTrain) {
  const auto split = sequential_split(equal_years(0, 10, 4), 0.0);
  EXPECT_TRUE(split.test.empty());
  EXPECT_EQ(split.train.size(), 40u);
}

TEST(SequentialSplit, FullFractionHoldsOutEverything) {
  const auto split = sequential_split(equal_years(0, 10, 4), 1.0);
  EXPECT_TRUE(split.train.empty());
  EXPECT_EQ(split.test.size(), 40u);
}

TEST(SequentialSplit, ThirtySixYearsEqualRows) {
  // 1983..2018 with equal rows per year: the last 11 years first reach 30%.
  const auto split = sequential_split(equal_years(1983, 36, 5), 0.3);
  int lo = 9999, hi = 0;
  for (const auto& r : split.test.rows) {
    lo = std::min(lo, r.target_year);
    hi = std::max(hi, r.target_year);
  }
  EXPECT_EQ(hi, 2018);
  EXPECT_EQ(lo, 2008);
}

TEST(SequentialSplit, MonotoneForAnyFraction) {
  const auto m = equal_years(0, 17, 3);
  for (double f = 0.0; f <= 1.0; f += 0.05) {
    const auto split = sequential_split(m, f);
    int train_max = -1, test_min = 1 << 30;
    for (const auto& r : split.train.rows) train_max = std::max(train_max, r.target_year);
    for (const auto& r : split.test.rows) test_min = std::min(test_min, r.target_year);
    EXPECT_LT(train_max, test_min);
    EXPECT_GE(static_cast<double>(split.test.size()) + 1e-9, f * static_cast<double>(m.size()));
  }
}

TEST(SequentialSplit, Errors) {
  EXPECT_THROW(sequential_split(FeatureMatrix{}, 0.3), Error);
  EXPECT_THROW(sequential_split(equal_years(0, 3, 1), 1.5), ConfigError);
  EXPECT_THROW(sequential_split(equal_years(0, 3, 1), -0.1), ConfigError);
}

TEST(Standardize, ConstantColumnBecomesZero) {
  FeatureMatrix m;
  m.feature_names = {"c"};
  for (int y = 0; y < 4; ++y) m.rows.push_back({"A", y, {5.0}, 0.0});
  m.rows.push_back({"A", 9, {7.0}, 0.0});
  const auto s = standardize_features(sequential_split(m, 0.2));
  for (const auto& r : s.train.rows) EXPECT_EQ(r.features[0], 0.0);
  for (const auto& r : s.test.rows) EXPECT_EQ(r.features[0], 0.0);
}

TEST(Standardize, TwoValueColumnMapsToPlusMinusOne) {
  FeatureMatrix m;
  m.feature_names = {"x"};
  m.rows.push_back({"A", 0, {0.0}, 0.0});
  m.rows.push_back({"B", 0, {2.0}, 0.0});
  m.rows.push_back({"A", 1, {4.0}, 0.0});
  const auto s = standardize_features(sequential_split(m, 0.3));
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_DOUBLE_EQ(s.train.rows[0].features[0], -1.0);
  EXPECT_DOUBLE_EQ(s.train.rows[1].features[0], 1.0);
  EXPECT_DOUBLE_EQ(s.test.rows[0].features[0], 3.0);
}

TEST(Standardize, UsesTrainStatisticsOnly) {
  SynthConfig cfg;
  cfg.n_assets = 15;
  cfg.n_years = 10;
  const auto data = generate_synthetic(cfg);
  const auto split = sequential_split(build_feature_matrix(data.panels, 3), 0.3);
  const auto s = standardize_features(split);
  ASSERT_TRUE(s.standardized);
  ASSERT_TRUE(s.transform.has_value());
  const std::size_t j = *split.train.feature_index("cpi_level_lag1");
  long double sum = 0, sq = 0;
  for (const auto& r : split.train.rows) sum += r.features[j];
  const long double mean = sum / split.train.size();
  for (const auto& r : split.train.rows) sq += (r.features[j] - mean) * (r.features[j] - mean);
  const double sd = std::sqrt(static_cast<double>(sq / split.train.size()));
  EXPECT_NEAR(s.transform->means[j], static_cast<double>(mean), 1e-12);
  EXPECT_NEAR(s.transform->scales[j], sd, 1e-12);
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    EXPECT_NEAR(s.test.rows[i].features[j], (split.test.rows[i].features[j] - static_cast<double>(mean)) / sd, 1e-9);
  }
  double test_mean = 0.0;
  for (const auto& r : s.test.rows) test_mean += r.features[j];
  EXPECT_GT(std::abs(test_mean / s.test.size()), 1e-6);
}

TEST(Standardize, AppliedOnlyOnce) {
  const auto split = sequential_split(equal_years(0, 5, 2), 0.2);
  const auto once = standardize_features(split);
  EXPECT_THROW(standardize_features(once), Error);
}

TEST(Standardize, JsonRoundTrip) {
  Standardizer s{{1.0, -2.5}, {0.5, 0.0}};
  const auto back = Standardizer::from_json(s.to_json());
  EXPECT_EQ(back.means, s.means);
  EXPECT_EQ(back.scales, s.scales);
}

TEST(FeaturesCsv, RoundTrip) {
  SynthConfig cfg;
  cfg.n_assets = 4;
  cfg.n_years = 6;
  const auto fm = build_feature_matrix(generate_synthetic(cfg).panels, 3);
  capmml::testing::TempDir dir("fcsv");
  capmml::testing::write_file(dir / "features.csv", features_to_csv(fm));
  const auto back = read_features_csv(dir / "features.csv", 3);
  EXPECT_EQ(back.feature_names, fm.feature_names);
  ASSERT_EQ(back.rows.size(), fm.rows.size());
  for (std::size_t i = 0; i < fm.rows.size(); ++i) EXPECT_EQ(back.rows[i], fm.rows[i]);
}
