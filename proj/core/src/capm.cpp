#include "capmml/capm.hpp"

#include <cmath>
#include <map>

#include "capmml/error.hpp"
#include "capmml/numeric.hpp"

namespace capmml {

std::span<const double> MarketIndex::window(int from, int to) const {
  if (!covers(from, to) || to < from) {
    throw Error("market index does not cover months " + std::to_string(from) + ".." + std::to_string(to));
  }
  return std::span<const double>(returns).subspan(static_cast<std::size_t>(from - first_month),
                                                  static_cast<std::size_t>(to - from + 1));
}

MarketIndex vw_market_index(const PricePanel& prices, int first_month, int last_month) {
  if (last_month < first_month) throw ConfigError("vw_market_index: empty month range");
  const auto n = static_cast<std::size_t>(last_month - first_month + 1);
  std::vector<double> weighted(n, 0.0);
  std::vector<double> total_cap(n, 0.0);
  std::vector<int> contributors(n, 0);
  for (const auto& asset : prices.assets()) {
    const auto rows = prices.asset_rows(asset);
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const int m = rows[k].month;
      if (m < first_month || m > last_month) continue;
      const double cap = rows[k - 1].price * rows[k - 1].shares_outstanding;
      const auto i = static_cast<std::size_t>(m - first_month);
      weighted[i] += cap * rows[k].monthly_return;
      total_cap[i] += cap;
      ++contributors[i];
    }
  }
  MarketIndex index{first_month, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int month = first_month + static_cast<int>(i);
    if (contributors[i] == 0) throw Error("vw_market_index: no asset has data in month " + std::to_string(month));
    if (!(total_cap[i] > 0.0)) throw Error("vw_market_index: zero total capitalization in month " + std::to_string(month));
    index.returns[i] = weighted[i] / total_cap[i];
  }
  return index;
}

MarketIndex vw_market_index(const PricePanel& prices) {
  if (prices.empty()) throw Error("vw_market_index: empty price panel");
  return vw_market_index(prices, prices.min_month() + 1, prices.max_month());
}

namespace {
double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double covariance(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size());
}
}  // namespace

double estimate_beta(std::span<const double> asset_returns, std::span<const double> market_returns) {
  if (asset_returns.size() != market_returns.size()) throw ConfigError("estimate_beta: series lengths differ");
  if (asset_returns.size() < 2) throw ConfigError("estimate_beta: need at least 2 observations");
  const double var = covariance(market_returns, market_returns);
  if (!(var > 0.0)) throw NumericError("estimate_beta: market variance is zero");
  return covariance(asset_returns, market_returns) / var;
}

double annualize_arithmetic(std::span<const double> monthly_returns) {
  if (monthly_returns.empty()) throw ConfigError("annualize_arithmetic: empty series");
  return 12.0 * mean(monthly_returns);
}

CapmPredictor::CapmPredictor(const PricePanel& prices, const MacroPanel& macro, std::string rf_series)
    : prices_(prices), macro_(macro), market_(vw_market_index(prices)) {
  auto idx = macro.series_index(rf_series);
  if (!idx) throw ConfigError("macro panel has no '" + rf_series + "' series");
  rf_index_ = *idx;
}

CapmEstimate CapmPredictor::predict(std::string_view asset_id, int target_year) const {
  const int to = first_month_of_year(target_year) - 1;
  const int from = to - kBetaWindowMonths + 1;
  const auto rows = prices_.asset_rows(asset_id);
  if (rows.empty()) throw Error("capm_predict: unknown asset '" + std::string(asset_id) + "'");

  // The first usable month must also have a market return, i.e. a preceding panel month.
  const int earliest = std::max(rows.front().month, market_.first_month);
  const int needed = earliest + kBetaWindowMonths;  // first month of the earliest usable year, rounded up
  const int first_usable_year = year_of_month(needed) + (needed % 12 == 0 ? 0 : 1);
  const auto* first = prices_.find(asset_id, from);
  const auto* last = prices_.find(asset_id, to);
  if (!first || !last || !market_.covers(from, to)) {
    throw Error("capm_predict: asset '" + std::string(asset_id) + "' lacks 36 months of history before year " +
                std::to_string(target_year) + "; first usable year is " + std::to_string(first_usable_year));
  }
  std::vector<double> asset_returns;
  asset_returns.reserve(kBetaWindowMonths);
  for (const PriceRow* r = first; r <= last; ++r) asset_returns.push_back(r->monthly_return);

  std::vector<double> yields;
  yields.reserve(kBetaWindowMonths);
  for (int m = from; m <= to; ++m) {
    if (!macro_.has_month(m)) {
      throw Error("capm_predict: risk-free series missing month " + std::to_string(m) + " for asset '" +
                  std::string(asset_id) + "'");
    }
    yields.push_back(macro_.value(m, rf_index_));
  }

  const auto market = market_.window(from, to);
  CapmEstimate est;
  est.asset_id = std::string(asset_id);
  est.target_year = target_year;
  est.beta = estimate_beta(asset_returns, market);
  est.market_return_annual = annualize_arithmetic(market);
  est.rf_annual = mean(yields);
  est.expected_return = capm_expected_return(est.rf_annual, est.beta, est.market_return_annual);
  return est;
}

CapmEstimate capm_predict(const PricePanel& prices, const MacroPanel& macro, std::string_view asset_id,
                          int target_year) {
  return CapmPredictor(prices, macro).predict(asset_id, target_year);
}

double wacc(const WaccInputs& in) {
  if (!(in.debt_value >= 0.0) || !(in.equity_value >= 0.0)) throw ConfigError("wacc: D and E must be >= 0");
  const double v = in.debt_value + in.equity_value;
  if (!(v > 0.0)) throw ConfigError("wacc: firm value V = D + E must be > 0");
  return in.debt_value / v * in.cost_of_debt + in.equity_value / v * in.cost_of_equity;
}

double dcf_value(const DcfInputs& in) {
  if (!(in.discount_rate > -1.0)) throw ConfigError("dcf_value: discount rate must be > -1");
  if (in.fcf.empty()) throw ConfigError("dcf_value: at least one cash flow (FCF_0) is required");
  const double growth = 1.0 + in.discount_rate;
  double value = 0.0;
  double discount = 1.0;
  for (double cf : in.fcf) {
    value += cf / discount;
    discount *= growth;
  }
  return value + in.terminal_value / discount;
}

std::string capm_predictions_to_csv(std::span<const CapmEstimate> estimates) {
  std::string out = "asset_id,target_year,beta,rf_annual,market_return_annual,expected_return\n";
  for (const auto& e : estimates) {
    out += e.asset_id + ',' + std::to_string(e.target_year) + ',' + format_double(e.beta) + ',' +
           format_double(e.rf_annual) + ',' + format_double(e.market_return_annual) + ',' +
           format_double(e.expected_return) + '\n';
  }
  return out;
}

}  // namespace capmml
