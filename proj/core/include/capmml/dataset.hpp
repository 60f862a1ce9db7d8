#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace capmml {

/// Months are integer offsets from epoch month 0. Year y spans months 12y .. 12y+11.
constexpr int year_of_month(int month) noexcept { return month >= 0 ? month / 12 : -((-month + 11) / 12); }
constexpr int first_month_of_year(int year) noexcept { return 12 * year; }

struct PriceRow {
  std::string asset_id;
  int month = 0;
  double price = 0.0;
  double monthly_return = 0.0;
  double volume = 0.0;
  double shares_outstanding = 0.0;

  friend bool operator==(const PriceRow&, const PriceRow&) = default;
};

/// Monthly prices for a universe of assets.
///
/// Rows are held sorted by (asset_id, month). Construction validates:
/// unique (asset_id, month) keys, contiguous months per asset, positive
/// prices and shares, non-negative volume, and monthly_return equal to
/// price_t / price_{t-1} - 1 within 1e-9.
class PricePanel {
 public:
  PricePanel() = default;
  explicit PricePanel(std::vector<PriceRow> rows);

  const std::vector<PriceRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  /// Asset ids in sorted order.
  const std::vector<std::string>& assets() const noexcept { return assets_; }
  /// Contiguous month-ordered rows for one asset; empty if unknown.
  std::span<const PriceRow> asset_rows(std::string_view asset_id) const;
  /// Row for (asset, month) if present.
  const PriceRow* find(std::string_view asset_id, int month) const;

  int min_month() const noexcept { return min_month_; }
  int max_month() const noexcept { return max_month_; }

  friend bool operator==(const PricePanel& a, const PricePanel& b) { return a.rows_ == b.rows_; }

 private:
  std::vector<PriceRow> rows_;
  std::vector<std::string> assets_;
  std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> index_;
  int min_month_ = 0;
  int max_month_ = -1;
};

struct FundamentalsRow {
  std::string asset_id;
  int fiscal_year = 0;
  std::vector<std::optional<double>> values;  // aligned with FundamentalsPanel::items()

  friend bool operator==(const FundamentalsRow&, const FundamentalsRow&) = default;
};

/// Annual accounting line items. Any item may be null.
class FundamentalsPanel {
 public:
  FundamentalsPanel() = default;
  FundamentalsPanel(std::vector<std::string> items, std::vector<FundamentalsRow> rows);

  const std::vector<std::string>& items() const noexcept { return items_; }
  const std::vector<FundamentalsRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  std::optional<std::size_t> item_index(std::string_view item) const;
  const FundamentalsRow* find(std::string_view asset_id, int fiscal_year) const;

  friend bool operator==(const FundamentalsPanel& a, const FundamentalsPanel& b) {
    return a.items_ == b.items_ && a.rows_ == b.rows_;
  }

 private:
  std::vector<std::string> items_;
  std::vector<FundamentalsRow> rows_;  // sorted by (asset_id, fiscal_year)
  std::map<std::pair<std::string, int>, std::size_t, std::less<>> index_;
};

/// Monthly macroeconomic series; one row per month, months contiguous.
class MacroPanel {
 public:
  MacroPanel() = default;
  /// values[i] is the row for month first_month + i.
  MacroPanel(std::vector<std::string> series, int first_month, std::vector<std::vector<double>> values);

  const std::vector<std::string>& series() const noexcept { return series_; }
  int first_month() const noexcept { return first_month_; }
  int last_month() const noexcept { return first_month_ + static_cast<int>(values_.size()) - 1; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool has_month(int month) const noexcept { return month >= first_month_ && month <= last_month(); }

  std::optional<std::size_t> series_index(std::string_view name) const;
  double value(int month, std::size_t series_index) const;
  std::span<const double> row(int month) const;
  const std::vector<std::vector<double>>& rows() const noexcept { return values_; }

  friend bool operator==(const MacroPanel& a, const MacroPanel& b) {
    return a.series_ == b.series_ && a.first_month_ == b.first_month_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> series_;
  int first_month_ = 0;
  std::vector<std::vector<double>> values_;
};

struct Panels {
  PricePanel prices;
  FundamentalsPanel fundamentals;
  MacroPanel macro;
};

/// Configuration of the synthetic market.
///
/// Monthly return of asset i in month t of year Y:
///   r = rf_t/12 + beta_i (m_t - rf_t/12) + g_i(Y)/12 + noise_scale * idio_vol * z
/// with market factor
///   m_t = rf_t/12 + market_premium/12 + seasonal_t + noise_scale * market_vol * z_t
/// where seasonal_t = seasonal_amplitude * cos(2 pi (t mod 12) / 12) sums to zero
/// over every calendar year. The nonlinear term g is documented on
/// nonlinear_component(). Shares outstanding are set so that each asset
/// keeps a fixed capitalization weight w_i with sum_i w_i beta_i = 1, which
/// makes the value-weighted index of the universe coincide with m_t when
/// noise_scale and nonlinear_amplitude are both zero.
struct SynthConfig {
  int n_assets = 200;
  int n_years = 30;
  std::uint64_t seed = 7;
  double noise_scale = 1.0;
  double nonlinear_amplitude = 0.4;
  /// Supplied betas (one per asset); drawn uniformly from [0.5, 1.5] when empty.
  std::vector<double> true_betas;

  double rf_annual = 0.03;
  double market_premium = 0.06;
  double market_vol = 0.03;
  double idio_vol = 0.02;
  double seasonal_amplitude = 0.02;
  /// Probability that any individual fundamentals cell is null.
  double missing_rate = 0.0;
};

struct GroundTruth {
  std::map<std::string, double> betas;
  std::map<std::string, double> cap_weights;
  double rf_annual = 0.0;
  double market_premium = 0.0;
  std::string nonlinear_spec;
  /// Feature names (lag-1) that drive the nonlinear component.
  std::vector<std::string> nonlinear_features;
  /// g_i(Y) per asset, indexed by year.
  std::map<std::string, std::vector<double>> nonlinear_component;
};

struct SyntheticData {
  Panels panels;
  GroundTruth truth;
};

/// Fundamentals line items emitted by the generator, in column order.
const std::vector<std::string>& synthetic_line_items();
/// Macro series emitted by the generator, in column order.
const std::vector<std::string>& synthetic_macro_series();

/// Nonlinear component of the synthetic return process (annual units):
///   g = A * ( 1[roa > 0.05] - 0.5  +  0.5 * (leverage - 0.4) / 0.12 * sign(unemployment - 0.06) )
/// evaluated on fiscal-year Y-1 fundamentals and the December Y-1 unemployment
/// level, and spread evenly over the 12 months of year Y.
double nonlinear_component(double amplitude, double roa, double leverage, double unemployment) noexcept;

SyntheticData generate_synthetic(const SynthConfig& config);

// --- CSV / JSON IO ---------------------------------------------------------

struct LoadSummary {
  std::size_t price_rows = 0;
  std::size_t fundamentals_rows = 0;
  std::size_t macro_rows = 0;
};

PricePanel read_prices_csv(const std::filesystem::path& path);
FundamentalsPanel read_fundamentals_csv(const std::filesystem::path& path);
MacroPanel read_macro_csv(const std::filesystem::path& path);
Panels load_panels(const std::filesystem::path& price_path, const std::filesystem::path& fundamentals_path,
                   const std::filesystem::path& macro_path, LoadSummary* summary = nullptr);
/// Loads prices.csv, fundamentals.csv and macro.csv from a directory.
Panels load_panels(const std::filesystem::path& directory, LoadSummary* summary = nullptr);

std::string prices_to_csv(const PricePanel& prices);
std::string fundamentals_to_csv(const FundamentalsPanel& fundamentals);
std::string macro_to_csv(const MacroPanel& macro);
nlohmann::json ground_truth_to_json(const GroundTruth& truth);

/// Writes the three panel CSVs into directory (created if needed).
void write_panels(const Panels& panels, const std::filesystem::path& directory);

}  // namespace capmml
