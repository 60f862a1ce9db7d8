#include "capmml/features.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <map>
#include <set>

#include "capmml/error.hpp"
#include "capmml/numeric.hpp"
#include "csv.hpp"

namespace capmml {

namespace {

struct RatioSpec {
  const char* name;
  const char* numerator;
  const char* denominator;
};

constexpr RatioSpec kRatios[] = {
    {"roa", "net_income", "total_assets"},
    {"leverage", "total_debt", "total_assets"},
    {"ebit_margin", "ebit", "revenue"},
    {"asset_turnover", "revenue", "total_assets"},
    {"current_ratio", "current_assets", "current_liabilities"},
    {"cfo_to_assets", "operating_cash_flow", "total_assets"},
    {"capex_to_assets", "capex", "total_assets"},
    {"equity_ratio", "total_equity", "total_assets"},
};

struct ResolvedRatio {
  std::string name;
  std::size_t numerator;
  std::size_t denominator;
};

std::vector<ResolvedRatio> resolve_ratios(const FundamentalsPanel& f) {
  std::vector<ResolvedRatio> out;
  for (const auto& r : kRatios) {
    auto num = f.item_index(r.numerator);
    auto den = f.item_index(r.denominator);
    if (num && den) out.push_back({r.name, *num, *den});
  }
  return out;
}

constexpr int fundamentals_stamp(int fiscal_year) { return 12 * fiscal_year + 11; }

// Read access to the panels with an optional cutoff. Data stamped at or after
// the cutoff is reported as absent; the latest stamp actually read is tracked.
class PanelView {
 public:
  PanelView(const Panels& panels, int cutoff) : p_(panels), cutoff_(cutoff) {}

  const PriceRow* price(std::string_view asset, int month) {
    if (month >= cutoff_) return nullptr;
    const PriceRow* row = p_.prices.find(asset, month);
    if (row) touch(month);
    return row;
  }

  const FundamentalsRow* fundamentals(std::string_view asset, int fiscal_year) {
    if (fundamentals_stamp(fiscal_year) >= cutoff_) return nullptr;
    const FundamentalsRow* row = p_.fundamentals.find(asset, fiscal_year);
    if (row) touch(fundamentals_stamp(fiscal_year));
    return row;
  }

  std::optional<double> macro(int month, std::size_t series) {
    if (month >= cutoff_ || !p_.macro.has_month(month)) return std::nullopt;
    touch(month);
    return p_.macro.value(month, series);
  }

  int latest_read() const noexcept { return latest_; }
  void reset_provenance() noexcept { latest_ = INT_MIN; }

 private:
  void touch(int stamp) noexcept { latest_ = std::max(latest_, stamp); }

  const Panels& p_;
  int cutoff_;
  int latest_ = INT_MIN;
};

bool year_complete(PanelView& view, std::string_view asset, int year) {
  for (int m = first_month_of_year(year); m < first_month_of_year(year + 1); ++m) {
    if (!view.price(asset, m)) return false;
  }
  return true;
}

// Features for (asset, target_year); nullopt when any input is missing.
std::optional<std::vector<double>> compute_features(PanelView& view, const Panels& panels,
                                                    const std::vector<ResolvedRatio>& ratios,
                                                    std::string_view asset, int target_year, int window) {
  std::vector<double> out;
  const std::size_t n_items = panels.fundamentals.items().size();
  const std::size_t n_series = panels.macro.series().size();
  out.reserve(static_cast<std::size_t>(window) * (3 + n_items + ratios.size() + 2 * n_series));
  for (int lag = 1; lag <= window; ++lag) {
    const int year = target_year - lag;
    const int first = first_month_of_year(year);
    double growth = 1.0;
    ExactSum volume;
    double price_end = 0.0;
    for (int m = first; m < first + 12; ++m) {
      const PriceRow* row = view.price(asset, m);
      if (!row) return std::nullopt;
      growth *= 1.0 + row->monthly_return;
      volume.add(row->volume);
      price_end = row->price;
    }
    out.push_back(growth - 1.0);
    out.push_back(volume.value() / 12.0);
    out.push_back(price_end);

    const FundamentalsRow* f = view.fundamentals(asset, year);
    if (!f) return std::nullopt;
    for (const auto& v : f->values) {
      if (!v) return std::nullopt;
      out.push_back(*v);
    }
    for (const auto& r : ratios) {
      const double den = *f->values[r.denominator];
      if (den == 0.0) return std::nullopt;
      out.push_back(*f->values[r.numerator] / den);
    }
    for (std::size_t s = 0; s < n_series; ++s) {
      const auto dec = view.macro(first + 11, s);
      const auto jan = view.macro(first, s);
      if (!dec || !jan) return std::nullopt;
      out.push_back(*dec);
      out.push_back(*dec - *jan);
    }
  }
  return out;
}

std::optional<double> realized_annual_return(PanelView& view, std::string_view asset, int year) {
  double growth = 1.0;
  for (int m = first_month_of_year(year); m < first_month_of_year(year + 1); ++m) {
    const PriceRow* row = view.price(asset, m);
    if (!row) return std::nullopt;
    growth *= 1.0 + row->monthly_return;
  }
  return growth - 1.0;
}

}  // namespace

// --- FeatureMatrix --------------------------------------------------------

DenseMatrix FeatureMatrix::design() const {
  DenseMatrix m(rows.size(), feature_names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].features.begin(), rows[r].features.end(), m.row(r).begin());
  return m;
}

std::vector<double> FeatureMatrix::targets() const {
  std::vector<double> y;
  y.reserve(rows.size());
  for (const auto& r : rows) y.push_back(r.target);
  return y;
}

std::vector<int> FeatureMatrix::distinct_years() const {
  std::set<int> years;
  for (const auto& r : rows) years.insert(r.target_year);
  return {years.begin(), years.end()};
}

std::optional<std::size_t> FeatureMatrix::feature_index(std::string_view name) const {
  auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - feature_names.begin());
}

std::vector<std::string> feature_names_for(const Panels& panels, int window_years) {
  const auto ratios = resolve_ratios(panels.fundamentals);
  std::vector<std::string> names;
  for (int lag = 1; lag <= window_years; ++lag) {
    const std::string suffix = "_lag" + std::to_string(lag);
    for (const char* base : {"ret_annual", "volume_mean", "price_end"}) names.push_back(base + suffix);
    for (const auto& item : panels.fundamentals.items()) names.push_back(item + suffix);
    for (const auto& r : ratios) names.push_back(r.name + suffix);
    for (const auto& s : panels.macro.series()) {
      names.push_back(s + "_level" + suffix);
      names.push_back(s + "_change" + suffix);
    }
  }
  return names;
}

FeatureMatrix build_feature_matrix(const Panels& panels, int window_years) {
  if (window_years < 1) throw ConfigError("window_years must be >= 1");
  if (panels.prices.empty() || panels.fundamentals.empty() || panels.macro.empty()) {
    throw Error("build_feature_matrix: panels must be non-empty");
  }
  FeatureMatrix fm;
  fm.window_years = window_years;
  fm.feature_names = feature_names_for(panels, window_years);
  const auto ratios = resolve_ratios(panels.fundamentals);

  PanelView view(panels, INT_MAX);
  for (const auto& asset : panels.prices.assets()) {
    const auto rows = panels.prices.asset_rows(asset);
    const int first_year = year_of_month(rows.front().month);
    const int last_year = year_of_month(rows.back().month);
    bool any_eligible = false;
    for (int y = first_year + window_years; y <= last_year; ++y) {
      bool full = true;
      for (int yy = y - window_years; yy <= y && full; ++yy) full = year_complete(view, asset, yy);
      if (!full) continue;
      any_eligible = true;
      auto features = compute_features(view, panels, ratios, asset, y, window_years);
      if (!features) {
        ++fm.dropped_missing;
        continue;
      }
      const auto target = realized_annual_return(view, asset, y);
      fm.rows.push_back(FeatureRow{asset, y, std::move(*features), *target});
    }
    if (!any_eligible) ++fm.insufficient_history;
  }
  return fm;
}

// --- Audit ----------------------------------------------------------------

nlohmann::json AuditReport::to_json() const {
  return {{"rows", rows}, {"dropped_missing", dropped_missing}, {"leakage_violations", leakage_violations}};
}

AuditReport audit_feature_matrix(const FeatureMatrix& matrix, const Panels& panels) {
  AuditReport report;
  report.rows = matrix.rows.size();
  report.dropped_missing = matrix.dropped_missing;
  const auto ratios = resolve_ratios(panels.fundamentals);
  const auto expected_names = feature_names_for(panels, matrix.window_years);
  if (expected_names != matrix.feature_names) {
    ++report.leakage_violations;
    report.violations.push_back("feature names do not match the recipe for these panels");
    return report;
  }
  for (const auto& row : matrix.rows) {
    const int cutoff = first_month_of_year(row.target_year);
    const std::string key = row.asset_id + "/" + std::to_string(row.target_year);

    PanelView full(panels, INT_MAX);
    const auto unrestricted = compute_features(full, panels, ratios, row.asset_id, row.target_year, matrix.window_years);
    if (full.latest_read() >= cutoff) {
      ++report.leakage_violations;
      report.violations.push_back(key + ": recipe reads data stamped at month " + std::to_string(full.latest_read()));
      continue;
    }

    PanelView truncated(panels, cutoff);
    const auto recomputed = compute_features(truncated, panels, ratios, row.asset_id, row.target_year, matrix.window_years);
    if (!recomputed || !unrestricted || *recomputed != *unrestricted) {
      ++report.leakage_violations;
      report.violations.push_back(key + ": features not reproducible from pre-target data");
      continue;
    }
    if (recomputed->size() != row.features.size()) {
      ++report.leakage_violations;
      report.violations.push_back(key + ": feature vector length mismatch");
      continue;
    }
    for (std::size_t j = 0; j < row.features.size(); ++j) {
      if ((*recomputed)[j] != row.features[j]) {
        ++report.leakage_violations;
        report.violations.push_back(key + ": feature '" + matrix.feature_names[j] +
                                    "' differs from its value recomputed on pre-target data");
        break;
      }
    }
  }
  return report;
}

// --- Split / standardize ----------------------------------------------------

SplitDataset sequential_split(const FeatureMatrix& matrix, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ConfigError("test_fraction must lie in [0, 1]");
  if (matrix.empty()) throw Error("sequential_split: matrix is empty");

  std::map<int, std::size_t> per_year;
  for (const auto& r : matrix.rows) ++per_year[r.target_year];
  const double total = static_cast<double>(matrix.rows.size());

  // Smallest test year; everything at or after it is held out.
  int boundary = std::numeric_limits<int>::max();
  if (test_fraction > 0.0) {
    std::size_t cumulative = 0;
    for (auto it = per_year.rbegin(); it != per_year.rend(); ++it) {
      cumulative += it->second;
      boundary = it->first;
      if (static_cast<double>(cumulative) / total >= test_fraction - 1e-12) break;
    }
  }

  SplitDataset split;
  split.test_fraction = test_fraction;
  for (FeatureMatrix* side : {&split.train, &split.test}) {
    side->feature_names = matrix.feature_names;
    side->window_years = matrix.window_years;
  }
  split.train.dropped_missing = matrix.dropped_missing;
  split.train.insufficient_history = matrix.insufficient_history;
  for (const auto& r : matrix.rows) (r.target_year >= boundary ? split.test : split.train).rows.push_back(r);
  return split;
}

Standardizer Standardizer::fit(const FeatureMatrix& train) {
  if (train.empty()) throw Error("standardize: training set is empty");
  const std::size_t d = train.n_features();
  Standardizer s;
  s.means.resize(d);
  s.scales.resize(d);
  std::vector<double> column(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < train.size(); ++i) column[i] = train.rows[i].features[j];
    const double mean = exact_mean(column);
    ExactSum sq;
    for (double v : column) sq.add((v - mean) * (v - mean));
    const double var = sq.value() / static_cast<double>(column.size());
    s.means[j] = mean;
    s.scales[j] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  return s;
}

void Standardizer::apply(std::span<double> row) const {
  if (row.size() != means.size()) throw ConfigError("standardize: feature width mismatch");
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = scales[j] > 0.0 ? (row[j] - means[j]) / scales[j] : 0.0;
}

void Standardizer::apply(FeatureMatrix& matrix) const {
  for (auto& r : matrix.rows) apply(r.features);
}

nlohmann::json Standardizer::to_json() const { return {{"means", means}, {"scales", scales}}; }

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  s.means = j.at("means").get<std::vector<double>>();
  s.scales = j.at("scales").get<std::vector<double>>();
  if (s.means.size() != s.scales.size()) throw ConfigError("standardizer: means/scales length mismatch");
  return s;
}

SplitDataset standardize_features(SplitDataset split) {
  if (split.standardized) throw Error("standardize_features: split is already standardized");
  Standardizer s = Standardizer::fit(split.train);
  s.apply(split.train);
  s.apply(split.test);
  split.transform = std::move(s);
  split.standardized = true;
  return split;
}

// --- CSV --------------------------------------------------------------------

std::string features_to_csv(const FeatureMatrix& matrix) {
  std::string out = "asset_id,target_year,target";
  for (const auto& n : matrix.feature_names) out += ',' + n;
  out += '\n';
  for (const auto& r : matrix.rows) {
    out += r.asset_id + ',' + std::to_string(r.target_year) + ',' + format_double(r.target);
    for (double v : r.features) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

FeatureMatrix read_features_csv(const std::filesystem::path& path, int window_years) {
  const auto t = detail::read_csv(path);
  if (t.header.size() < 3 || t.header[0] != "asset_id" || t.header[1] != "target_year" || t.header[2] != "target") {
    throw ParseError(t.file, 1, t.header.front(), "expected header 'asset_id,target_year,target,...'");
  }
  FeatureMatrix fm;
  fm.window_years = window_years;
  fm.feature_names.assign(t.header.begin() + 3, t.header.end());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    FeatureRow row;
    row.asset_id = t.rows[r][0];
    std::size_t c = 1;
    try {
      row.target_year = static_cast<int>(parse_int(t.rows[r][1]));
      c = 2;
      row.target = parse_double(t.rows[r][2]);
      for (c = 3; c < t.header.size(); ++c) row.features.push_back(parse_double(t.rows[r][c]));
    } catch (const std::invalid_argument& e) {
      throw ParseError(t.file, t.line_numbers[r], t.header[c], e.what());
    }
    fm.rows.push_back(std::move(row));
  }
  std::sort(fm.rows.begin(), fm.rows.end(), [](const FeatureRow& a, const FeatureRow& b) {
    return a.asset_id != b.asset_id ? a.asset_id < b.asset_id : a.target_year < b.target_year;
  });
  return fm;
}

}  // namespace capmml
