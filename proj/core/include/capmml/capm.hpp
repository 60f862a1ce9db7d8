#pragma once

#include <span>
#include <string>
#include <vector>

#include "capmml/dataset.hpp"

namespace capmml {

/// One CAPM forecast. expected_return is always
/// rf_annual + beta * (market_return_annual - rf_annual).
struct CapmEstimate {
  std::string asset_id;
  int target_year = 0;
  double beta = 0.0;
  double rf_annual = 0.0;
  double market_return_annual = 0.0;
  double expected_return = 0.0;

  double market_premium() const noexcept { return market_return_annual - rf_annual; }
};

/// Monthly return series of the value-weighted index of a price panel.
/// returns[i] is the index return for month first_month + i.
struct MarketIndex {
  int first_month = 0;
  std::vector<double> returns;

  int last_month() const noexcept { return first_month + static_cast<int>(returns.size()) - 1; }
  bool covers(int from, int to) const noexcept { return !returns.empty() && from >= first_month && to <= last_month(); }
  std::span<const double> window(int from, int to) const;
};

/// r_M(t) = sum_i w_i r_i(t) with w_i = cap_i(t-1) / sum_j cap_j(t-1) and
/// cap = price * shares_outstanding. Only assets with a row at both t-1 and t
/// contribute. Throws if a month in [first_month, last_month] has no
/// contributing asset or zero total capitalization.
MarketIndex vw_market_index(const PricePanel& prices, int first_month, int last_month);
/// Index over every month of the panel that has a preceding month.
MarketIndex vw_market_index(const PricePanel& prices);

/// cov(asset, market) / var(market), both with the population denominator.
/// Requires equal lengths >= 2 and positive market variance.
double estimate_beta(std::span<const double> asset_returns, std::span<const double> market_returns);

/// 12 x the arithmetic mean of monthly returns.
double annualize_arithmetic(std::span<const double> monthly_returns);

constexpr int kBetaWindowMonths = 36;

/// CAPM forecasts for many (asset, year) pairs over one universe.
/// The value-weighted index is computed once at construction.
class CapmPredictor {
 public:
  CapmPredictor(const PricePanel& prices, const MacroPanel& macro, std::string rf_series = "treasury_10y_yield");

  /// Uses the 36 months strictly before the start of target_year:
  /// beta from estimate_beta, market return from annualize_arithmetic on the
  /// VW index, rf as the arithmetic mean of the yield series.
  CapmEstimate predict(std::string_view asset_id, int target_year) const;

  const MarketIndex& market() const noexcept { return market_; }

 private:
  const PricePanel& prices_;
  const MacroPanel& macro_;
  std::size_t rf_index_;
  MarketIndex market_;
};

CapmEstimate capm_predict(const PricePanel& prices, const MacroPanel& macro, std::string_view asset_id, int target_year);

/// Security market line: rf + beta * (market - rf).
constexpr double capm_expected_return(double rf, double beta, double market_return) noexcept {
  return rf + beta * (market_return - rf);
}

struct WaccInputs {
  double debt_value = 0.0;
  double equity_value = 0.0;
  double cost_of_debt = 0.0;
  double cost_of_equity = 0.0;
};

/// Pre-tax weighted average cost of capital (D/V) r_D + (E/V) r_E.
double wacc(const WaccInputs& in);

struct DcfInputs {
  std::vector<double> fcf;  // FCF_0 .. FCF_n
  double terminal_value = 0.0;
  double discount_rate = 0.0;
};

/// sum_t FCF_t / (1+r)^t + TV / (1+r)^(n+1).
double dcf_value(const DcfInputs& in);

std::string capm_predictions_to_csv(std::span<const CapmEstimate> estimates);

}  // namespace capmml
