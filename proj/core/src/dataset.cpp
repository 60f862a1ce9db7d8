#include "capmml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "capmml/error.hpp"
#include "capmml/numeric.hpp"
#include "capmml/random.hpp"
#include "csv.hpp"

namespace capmml {

// --- PricePanel -------------------------------------------------------------

PricePanel::PricePanel(std::vector<PriceRow> rows) : rows_(std::move(rows)) {
  std::sort(rows_.begin(), rows_.end(), [](const PriceRow& a, const PriceRow& b) {
    return a.asset_id != b.asset_id ? a.asset_id < b.asset_id : a.month < b.month;
  });

  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const PriceRow& r = rows_[i];
    const std::string key = "(" + r.asset_id + ", " + std::to_string(r.month) + ")";
    if (!(r.price > 0.0) || !std::isfinite(r.price)) offenders.push_back(key + " price must be > 0");
    if (!(r.shares_outstanding > 0.0) || !std::isfinite(r.shares_outstanding)) {
      offenders.push_back(key + " shares_outstanding must be > 0");
    }
    if (!(r.volume >= 0.0) || !std::isfinite(r.volume)) offenders.push_back(key + " volume must be >= 0");
    if (!std::isfinite(r.monthly_return)) offenders.push_back(key + " monthly_return not finite");
    if (i > 0 && rows_[i - 1].asset_id == r.asset_id) {
      const PriceRow& prev = rows_[i - 1];
      if (prev.month == r.month) {
        offenders.push_back(key + " duplicate");
      } else if (prev.month + 1 != r.month) {
        offenders.push_back(key + " gap after month " + std::to_string(prev.month));
      } else if (prev.price > 0.0 && std::abs(r.price / prev.price - 1.0 - r.monthly_return) > 1e-9) {
        offenders.push_back(key + " monthly_return inconsistent with prices");
      }
    }
  }
  if (!offenders.empty()) throw ValidationError("invalid price panel", std::move(offenders));

  for (std::size_t i = 0; i < rows_.size();) {
    std::size_t j = i;
    while (j < rows_.size() && rows_[j].asset_id == rows_[i].asset_id) ++j;
    assets_.push_back(rows_[i].asset_id);
    index_.emplace(rows_[i].asset_id, std::make_pair(i, j));
    i = j;
  }
  if (!rows_.empty()) {
    const auto [lo, hi] = std::minmax_element(rows_.begin(), rows_.end(),
                                              [](const PriceRow& a, const PriceRow& b) { return a.month < b.month; });
    min_month_ = lo->month;
    max_month_ = hi->month;
  }
}

std::span<const PriceRow> PricePanel::asset_rows(std::string_view asset_id) const {
  auto it = index_.find(asset_id);
  if (it == index_.end()) return {};
  return std::span<const PriceRow>(rows_).subspan(it->second.first, it->second.second - it->second.first);
}

const PriceRow* PricePanel::find(std::string_view asset_id, int month) const {
  auto rows = asset_rows(asset_id);
  if (rows.empty()) return nullptr;
  const long offset = static_cast<long>(month) - rows.front().month;
  if (offset < 0 || offset >= static_cast<long>(rows.size())) return nullptr;
  return &rows[static_cast<std::size_t>(offset)];
}

// --- FundamentalsPanel ------------------------------------------------------

FundamentalsPanel::FundamentalsPanel(std::vector<std::string> items, std::vector<FundamentalsRow> rows)
    : items_(std::move(items)), rows_(std::move(rows)) {
  std::sort(rows_.begin(), rows_.end(), [](const FundamentalsRow& a, const FundamentalsRow& b) {
    return a.asset_id != b.asset_id ? a.asset_id < b.asset_id : a.fiscal_year < b.fiscal_year;
  });
  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    const std::string key = "(" + r.asset_id + ", " + std::to_string(r.fiscal_year) + ")";
    if (r.values.size() != items_.size()) offenders.push_back(key + " wrong number of items");
    if (!index_.emplace(std::make_pair(r.asset_id, r.fiscal_year), i).second) offenders.push_back(key + " duplicate");
  }
  std::set<std::string, std::less<>> seen;
  for (const auto& item : items_) {
    if (!seen.insert(item).second) offenders.push_back("item '" + item + "' duplicated");
  }
  if (!offenders.empty()) throw ValidationError("invalid fundamentals panel", std::move(offenders));
}

std::optional<std::size_t> FundamentalsPanel::item_index(std::string_view item) const {
  auto it = std::find(items_.begin(), items_.end(), item);
  if (it == items_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - items_.begin());
}

const FundamentalsRow* FundamentalsPanel::find(std::string_view asset_id, int fiscal_year) const {
  auto it = index_.find(std::make_pair(std::string(asset_id), fiscal_year));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

// --- MacroPanel -------------------------------------------------------------

MacroPanel::MacroPanel(std::vector<std::string> series, int first_month, std::vector<std::vector<double>> values)
    : series_(std::move(series)), first_month_(first_month), values_(std::move(values)) {
  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].size() != series_.size()) {
      offenders.push_back("month " + std::to_string(first_month_ + static_cast<int>(i)) + " wrong number of series");
    }
  }
  if (!offenders.empty()) throw ValidationError("invalid macro panel", std::move(offenders));
}

std::optional<std::size_t> MacroPanel::series_index(std::string_view name) const {
  auto it = std::find(series_.begin(), series_.end(), name);
  if (it == series_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - series_.begin());
}

double MacroPanel::value(int month, std::size_t series_index) const {
  if (!has_month(month)) throw std::out_of_range("macro month " + std::to_string(month) + " not in panel");
  return values_[static_cast<std::size_t>(month - first_month_)].at(series_index);
}

std::span<const double> MacroPanel::row(int month) const {
  if (!has_month(month)) throw std::out_of_range("macro month " + std::to_string(month) + " not in panel");
  return values_[static_cast<std::size_t>(month - first_month_)];
}

// --- Synthetic generation ---------------------------------------------------

const std::vector<std::string>& synthetic_line_items() {
  static const std::vector<std::string> items = {
      "revenue",         "cogs",          "gross_profit",      "sga",
      "rnd",             "depreciation",  "ebit",              "interest_expense",
      "tax_expense",     "net_income",    "total_assets",      "current_assets",
      "cash",            "receivables",   "inventory",         "ppe",
      "intangibles",     "total_liabilities", "current_liabilities", "payables",
      "short_term_debt", "long_term_debt", "total_debt",       "total_equity",
      "retained_earnings", "operating_cash_flow", "capex",     "free_cash_flow",
      "dividends",       "share_repurchases"};
  return items;
}

namespace {

struct MacroSpec {
  const char* name;
  double mean;
  double persistence;  // monthly AR(1) coefficient
  double shock;        // monthly innovation s.d.
};

// treasury_10y_yield is handled separately: it is the risk-free process.
constexpr MacroSpec kMacroSpecs[] = {
    {"cpi", 0.025, 0.95, 0.002},
    {"gdp", 0.025, 0.90, 0.004},
    {"treasury_10y_yield", 0.0, 0.97, 0.002},
    {"wholesale_price_index", 100.0, 0.95, 1.0},
    {"industrial_price_index", 100.0, 0.95, 1.2},
    {"unemployment", 0.06, 0.90, 0.004},
    {"industrial_production", 0.02, 0.90, 0.005},
    {"consumer_sentiment", 85.0, 0.92, 2.0},
    {"housing_starts", 1.3, 0.93, 0.05},
    {"money_supply_growth", 0.05, 0.90, 0.004},
};

constexpr double kRoaMean = 0.05;
constexpr double kLeverageMean = 0.4;
constexpr double kLeverageScale = 0.12;
constexpr double kUnemploymentMean = 0.06;

double ar_step(Rng& rng, double prev, double mean, double persistence, double shock) {
  return mean + persistence * (prev - mean) + shock * rng.normal();
}

double stationary_draw(Rng& rng, double mean, double persistence, double shock) {
  return mean + shock / std::sqrt(1.0 - persistence * persistence) * rng.normal();
}

std::string asset_name(int index, int n_assets) {
  const int width = std::max(4, static_cast<int>(std::to_string(n_assets).size()));
  std::string digits = std::to_string(index + 1);
  return "A" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
}

// Cap weights w with sum w = 1 and sum w*beta = 1.
std::vector<double> balance_weights(std::vector<double> raw, const std::vector<double>& betas) {
  double excess = 0.0;
  double below_mass = 0.0;
  double above_mass = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    excess += raw[i] * (betas[i] - 1.0);
    if (betas[i] < 1.0) below_mass += raw[i] * (1.0 - betas[i]);
    if (betas[i] > 1.0) above_mass += raw[i] * (betas[i] - 1.0);
  }
  if (excess > 0.0) {
    if (below_mass <= 0.0) throw ConfigError("supplied betas cannot form a market with beta 1 (all >= 1)");
    const double k = 1.0 + excess / below_mass;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (betas[i] < 1.0) raw[i] *= k;
    }
  } else if (excess < 0.0) {
    if (above_mass <= 0.0) throw ConfigError("supplied betas cannot form a market with beta 1 (all <= 1)");
    const double k = 1.0 - excess / above_mass;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (betas[i] > 1.0) raw[i] *= k;
    }
  }
  double total = 0.0;
  for (double w : raw) total += w;
  for (double& w : raw) w /= total;
  return raw;
}

struct FirmState {
  double log_size_mean;
  double log_size;
  double total_assets;
  double roa;
  double leverage;
  std::vector<double> ratios;  // auxiliary ratios, see kAuxRatios
};

struct AuxRatio {
  double mean;
  double sd;
};
// turnover, gross margin, sga share, rnd share, depreciation/TA, current assets/TA,
// cash/TA, receivables/TA, inventory/TA, intangibles/TA, current liabilities/TA,
// payables/TA, short-debt share, retained/TA, capex/TA, payout, buyback/TA, accrual/TA
constexpr AuxRatio kAuxRatios[] = {
    {0.8, 0.15}, {0.35, 0.08}, {0.15, 0.04}, {0.04, 0.02}, {0.04, 0.01}, {0.35, 0.08},
    {0.08, 0.03}, {0.12, 0.03}, {0.10, 0.03}, {0.15, 0.05}, {0.25, 0.06}, {0.08, 0.02},
    {0.25, 0.08}, {0.20, 0.10}, {0.05, 0.015}, {0.30, 0.10}, {0.01, 0.005}, {0.02, 0.02},
};
constexpr std::size_t kNumAux = std::size(kAuxRatios);

double clamp_ratio(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

FirmState initial_firm(Rng& rng) {
  FirmState s;
  s.log_size_mean = rng.normal(std::log(1000.0), 1.0);
  s.log_size = stationary_draw(rng, s.log_size_mean, 0.8, 0.10);
  s.total_assets = std::exp(s.log_size);
  s.roa = stationary_draw(rng, kRoaMean, 0.5, 0.0433);
  s.leverage = clamp_ratio(stationary_draw(rng, kLeverageMean, 0.5, 0.104), 0.02, 0.95);
  for (const auto& a : kAuxRatios) s.ratios.push_back(std::max(0.0, stationary_draw(rng, a.mean, 0.6, a.sd * 0.8)));
  return s;
}

void advance_firm(Rng& rng, FirmState& s) {
  s.log_size = ar_step(rng, s.log_size, s.log_size_mean, 0.8, 0.10);
  s.total_assets = std::exp(s.log_size);
  s.roa = ar_step(rng, s.roa, kRoaMean, 0.5, 0.0433);
  s.leverage = clamp_ratio(ar_step(rng, s.leverage, kLeverageMean, 0.5, 0.104), 0.02, 0.95);
  for (std::size_t k = 0; k < kNumAux; ++k) {
    s.ratios[k] = std::max(0.0, ar_step(rng, s.ratios[k], kAuxRatios[k].mean, 0.6, kAuxRatios[k].sd * 0.8));
  }
}

std::vector<double> firm_items(const FirmState& s) {
  const auto& r = s.ratios;
  const double ta = s.total_assets;
  const double revenue = ta * r[0];
  const double gross_profit = revenue * r[1];
  const double cogs = revenue - gross_profit;
  const double sga = revenue * r[2];
  const double rnd = revenue * r[3];
  const double depreciation = ta * r[4];
  const double ebit = gross_profit - sga - rnd - depreciation;
  const double total_debt = ta * s.leverage;
  const double interest = total_debt * 0.05;
  const double tax = std::max(0.0, 0.25 * (ebit - interest));
  const double net_income = ta * s.roa;
  const double current_assets = ta * r[5];
  const double cash = ta * r[6];
  const double receivables = ta * r[7];
  const double inventory = ta * r[8];
  const double intangibles = ta * r[9];
  const double ppe = std::max(0.0, ta - current_assets - intangibles);
  const double current_liabilities = ta * r[10];
  const double payables = ta * r[11];
  const double short_debt = total_debt * std::min(1.0, r[12]);
  const double long_debt = total_debt - short_debt;
  const double total_liabilities = total_debt + payables;
  const double total_equity = ta - total_debt;
  const double retained = ta * r[13];
  const double capex = ta * r[14];
  const double ocf = net_income + depreciation + ta * (r[17] - kAuxRatios[17].mean);
  const double fcf = ocf - capex;
  const double dividends = std::max(0.0, net_income * r[15]);
  const double buybacks = ta * r[16];
  return {revenue,     cogs,        gross_profit,      sga,                 rnd,      depreciation,
          ebit,        interest,    tax,               net_income,          ta,       current_assets,
          cash,        receivables, inventory,         ppe,                 intangibles, total_liabilities,
          current_liabilities, payables, short_debt,   long_debt,           total_debt, total_equity,
          retained,    ocf,         capex,             fcf,                 dividends, buybacks};
}

}  // namespace

const std::vector<std::string>& synthetic_macro_series() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& s : kMacroSpecs) v.emplace_back(s.name);
    return v;
  }();
  return names;
}

double nonlinear_component(double amplitude, double roa, double leverage, double unemployment) noexcept {
  const double step = (roa > kRoaMean ? 1.0 : 0.0) - 0.5;
  const double regime = unemployment > kUnemploymentMean ? 1.0 : (unemployment < kUnemploymentMean ? -1.0 : 0.0);
  return amplitude * (step + 0.5 * (leverage - kLeverageMean) / kLeverageScale * regime);
}

SyntheticData generate_synthetic(const SynthConfig& config) {
  if (config.n_assets < 1) throw ConfigError("n_assets must be >= 1");
  if (config.n_years < 5) {
    throw ConfigError("n_years must be >= 5 (a 3-year window plus one target year needs history)");
  }
  if (config.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  if (!config.true_betas.empty() && config.true_betas.size() != static_cast<std::size_t>(config.n_assets)) {
    throw ConfigError("true_betas must have one entry per asset");
  }
  if (config.missing_rate < 0.0 || config.missing_rate >= 1.0) throw ConfigError("missing_rate must be in [0, 1)");

  const auto n_assets = static_cast<std::size_t>(config.n_assets);
  const int n_years = config.n_years;
  const int n_months = 12 * n_years;

  // Betas and cap weights.
  Rng structure_rng(derive_seed(config.seed, "structure"));
  std::vector<double> raw_weights(n_assets);
  for (auto& w : raw_weights) w = std::exp(0.5 * structure_rng.normal());
  std::vector<double> betas = config.true_betas;
  std::vector<double> weights;
  if (betas.empty()) {
    betas.resize(n_assets);
    for (auto& b : betas) b = structure_rng.uniform(0.5, 1.5);
    double total = 0.0;
    for (double w : raw_weights) total += w;
    weights = raw_weights;
    for (auto& w : weights) w /= total;
    double wb = 0.0;
    for (std::size_t i = 0; i < n_assets; ++i) wb += weights[i] * betas[i];
    for (auto& b : betas) b /= wb;
  } else {
    weights = balance_weights(raw_weights, betas);
  }

  // Macro series.
  Rng macro_rng(derive_seed(config.seed, "macro"));
  const std::size_t n_series = std::size(kMacroSpecs);
  std::vector<std::vector<double>> macro_values(static_cast<std::size_t>(n_months), std::vector<double>(n_series));
  {
    std::vector<double> state(n_series);
    for (std::size_t s = 0; s < n_series; ++s) {
      state[s] = stationary_draw(macro_rng, kMacroSpecs[s].mean, kMacroSpecs[s].persistence, kMacroSpecs[s].shock);
    }
    for (int t = 0; t < n_months; ++t) {
      for (std::size_t s = 0; s < n_series; ++s) {
        state[s] = ar_step(macro_rng, state[s], kMacroSpecs[s].mean, kMacroSpecs[s].persistence, kMacroSpecs[s].shock);
        macro_values[static_cast<std::size_t>(t)][s] = state[s];
      }
    }
  }
  const std::size_t yield_idx = 2;
  const std::size_t unemployment_idx = 5;
  for (auto& row : macro_values) row[yield_idx] = config.rf_annual + config.noise_scale * row[yield_idx];

  // Fundamentals.
  Rng firm_rng(derive_seed(config.seed, "fundamentals"));
  const auto& items = synthetic_line_items();
  std::vector<std::vector<FirmState>> firm_states(n_assets);
  std::vector<FundamentalsRow> fund_rows;
  std::vector<std::string> ids(n_assets);
  for (std::size_t i = 0; i < n_assets; ++i) ids[i] = asset_name(static_cast<int>(i), config.n_assets);
  for (std::size_t i = 0; i < n_assets; ++i) {
    FirmState state = initial_firm(firm_rng);
    for (int y = 0; y < n_years; ++y) {
      advance_firm(firm_rng, state);
      firm_states[i].push_back(state);
      FundamentalsRow row{ids[i], y, {}};
      for (double v : firm_items(state)) {
        const bool missing = config.missing_rate > 0.0 && firm_rng.uniform() < config.missing_rate;
        row.values.push_back(missing ? std::optional<double>{} : std::optional<double>{v});
      }
      fund_rows.push_back(std::move(row));
    }
  }

  // Nonlinear component: year 0 has no prior fiscal year, so g = 0 there.
  GroundTruth truth;
  truth.rf_annual = config.rf_annual;
  truth.market_premium = config.market_premium;
  truth.nonlinear_spec =
      "g(Y) = A * ( 1[roa(Y-1) > 0.05] - 0.5 + 0.5 * (leverage(Y-1) - 0.4) / 0.12 * sign(unemployment(Dec Y-1) - 0.06) ); "
      "A = " + format_double(config.nonlinear_amplitude) + "; applied as g/12 to each month of year Y; g = 0 in the first year";
  truth.nonlinear_features = {"roa_lag1", "leverage_lag1", "unemployment_level_lag1"};
  std::vector<std::vector<double>> g(n_assets, std::vector<double>(static_cast<std::size_t>(n_years), 0.0));
  for (std::size_t i = 0; i < n_assets; ++i) {
    for (int y = 1; y < n_years; ++y) {
      const FirmState& prev = firm_states[i][static_cast<std::size_t>(y - 1)];
      const double unemployment = macro_values[static_cast<std::size_t>(12 * y - 1)][unemployment_idx];
      g[i][static_cast<std::size_t>(y)] = nonlinear_component(config.nonlinear_amplitude, prev.roa, prev.leverage, unemployment);
    }
    truth.betas[ids[i]] = betas[i];
    truth.cap_weights[ids[i]] = weights[i];
    truth.nonlinear_component[ids[i]] = g[i];
  }

  // Returns and prices.
  Rng market_rng(derive_seed(config.seed, "market"));
  Rng asset_rng(derive_seed(config.seed, "returns"));
  std::vector<double> prev_price(n_assets);
  std::vector<double> turnover(n_assets);
  for (std::size_t i = 0; i < n_assets; ++i) {
    prev_price[i] = std::exp(asset_rng.normal(std::log(50.0), 0.5));
    turnover[i] = std::exp(asset_rng.normal(std::log(0.08), 0.3));
  }
  std::vector<std::vector<PriceRow>> per_asset(n_assets);
  double market_cap = 1.0e6;
  for (int t = 0; t < n_months; ++t) {
    const int year = t / 12;
    const double rf_month = macro_values[static_cast<std::size_t>(t)][yield_idx] / 12.0;
    const double seasonal = config.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (t % 12) / 12.0);
    const double market = rf_month + config.market_premium / 12.0 + seasonal +
                          config.noise_scale * config.market_vol * market_rng.normal();
    market_cap *= 1.0 + market;
    for (std::size_t i = 0; i < n_assets; ++i) {
      double r = rf_month + betas[i] * (market - rf_month) + g[i][static_cast<std::size_t>(year)] / 12.0 +
                 config.noise_scale * config.idio_vol * asset_rng.normal();
      r = std::max(r, -0.95);
      const double price = prev_price[i] * (1.0 + r);
      const double shares = weights[i] * market_cap / price;
      const double volume = std::round(shares * turnover[i] * std::exp(0.2 * asset_rng.normal()));
      per_asset[i].push_back(PriceRow{ids[i], t, price, price / prev_price[i] - 1.0, volume, shares});
      prev_price[i] = price;
    }
  }
  std::vector<PriceRow> price_rows;
  price_rows.reserve(n_assets * static_cast<std::size_t>(n_months));
  for (auto& rows : per_asset) {
    for (auto& r : rows) price_rows.push_back(std::move(r));
  }

  SyntheticData out;
  out.panels.prices = PricePanel(std::move(price_rows));
  out.panels.fundamentals = FundamentalsPanel(items, std::move(fund_rows));
  out.panels.macro = MacroPanel(synthetic_macro_series(), 0, std::move(macro_values));
  out.truth = std::move(truth);
  return out;
}

// --- IO ------------------------------------------------------------------

namespace {

double cell_double(const detail::CsvTable& t, std::size_t r, std::size_t c) {
  try {
    return parse_double(t.rows[r][c]);
  } catch (const std::invalid_argument& e) {
    throw ParseError(t.file, t.line_numbers[r], t.header[c], e.what());
  }
}

int cell_int(const detail::CsvTable& t, std::size_t r, std::size_t c) {
  try {
    const long long v = parse_int(t.rows[r][c]);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw std::invalid_argument("integer out of range");
    }
    return static_cast<int>(v);
  } catch (const std::invalid_argument& e) {
    throw ParseError(t.file, t.line_numbers[r], t.header[c], e.what());
  }
}

void expect_header_prefix(const detail::CsvTable& t, std::span<const std::string_view> expected) {
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != expected[i]) {
      throw ParseError(t.file, 1, i < t.header.size() ? t.header[i] : std::string("<missing>"),
                       "expected header column '" + std::string(expected[i]) + "'");
    }
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace

PricePanel read_prices_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path);
  static constexpr std::string_view kHeader[] = {"asset_id", "month", "price", "monthly_return", "volume",
                                                 "shares_outstanding"};
  expect_header_prefix(t, kHeader);
  if (t.header.size() != std::size(kHeader)) throw ParseError(t.file, 1, t.header.back(), "unexpected extra column");
  std::vector<PriceRow> rows;
  rows.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][0].empty()) throw ParseError(t.file, t.line_numbers[r], "asset_id", "empty asset_id");
    rows.push_back(PriceRow{t.rows[r][0], cell_int(t, r, 1), cell_double(t, r, 2), cell_double(t, r, 3),
                            cell_double(t, r, 4), cell_double(t, r, 5)});
  }
  return PricePanel(std::move(rows));
}

FundamentalsPanel read_fundamentals_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path);
  static constexpr std::string_view kHeader[] = {"asset_id", "fiscal_year"};
  expect_header_prefix(t, kHeader);
  std::vector<std::string> items(t.header.begin() + 2, t.header.end());
  std::vector<FundamentalsRow> rows;
  rows.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    FundamentalsRow row{t.rows[r][0], cell_int(t, r, 1), {}};
    for (std::size_t c = 2; c < t.header.size(); ++c) {
      row.values.push_back(t.rows[r][c].empty() ? std::optional<double>{} : std::optional<double>{cell_double(t, r, c)});
    }
    rows.push_back(std::move(row));
  }
  return FundamentalsPanel(std::move(items), std::move(rows));
}

MacroPanel read_macro_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path);
  static constexpr std::string_view kHeader[] = {"month"};
  expect_header_prefix(t, kHeader);
  std::vector<std::string> series(t.header.begin() + 1, t.header.end());
  std::vector<std::pair<int, std::vector<double>>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<double> values;
    for (std::size_t c = 1; c < t.header.size(); ++c) values.push_back(cell_double(t, r, c));
    rows.emplace_back(cell_int(t, r, 0), std::move(values));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> offenders;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) {
      offenders.push_back("month " + std::to_string(rows[i].first) + " duplicated");
    } else if (rows[i].first != rows[i - 1].first + 1) {
      offenders.push_back("months " + std::to_string(rows[i - 1].first) + " -> " + std::to_string(rows[i].first) +
                          " not contiguous");
    }
  }
  if (!offenders.empty()) throw ValidationError("invalid macro panel '" + path.string() + "'", std::move(offenders));
  std::vector<std::vector<double>> values;
  values.reserve(rows.size());
  for (auto& r : rows) values.push_back(std::move(r.second));
  return MacroPanel(std::move(series), rows.empty() ? 0 : rows.front().first, std::move(values));
}

Panels load_panels(const std::filesystem::path& price_path, const std::filesystem::path& fundamentals_path,
                   const std::filesystem::path& macro_path, LoadSummary* summary) {
  Panels p{read_prices_csv(price_path), read_fundamentals_csv(fundamentals_path), read_macro_csv(macro_path)};
  if (summary) *summary = {p.prices.size(), p.fundamentals.size(), p.macro.size()};
  return p;
}

Panels load_panels(const std::filesystem::path& directory, LoadSummary* summary) {
  return load_panels(directory / "prices.csv", directory / "fundamentals.csv", directory / "macro.csv", summary);
}

std::string prices_to_csv(const PricePanel& prices) {
  std::string out = "asset_id,month,price,monthly_return,volume,shares_outstanding\n";
  for (const auto& r : prices.rows()) {
    out += r.asset_id;
    out += ',' + std::to_string(r.month);
    out += ',' + format_double(r.price);
    out += ',' + format_double(r.monthly_return);
    out += ',' + format_double(r.volume);
    out += ',' + format_double(r.shares_outstanding);
    out += '\n';
  }
  return out;
}

std::string fundamentals_to_csv(const FundamentalsPanel& fundamentals) {
  std::string out = "asset_id,fiscal_year";
  for (const auto& item : fundamentals.items()) out += ',' + item;
  out += '\n';
  for (const auto& r : fundamentals.rows()) {
    out += r.asset_id + ',' + std::to_string(r.fiscal_year);
    for (const auto& v : r.values) {
      out += ',';
      if (v) out += format_double(*v);
    }
    out += '\n';
  }
  return out;
}

std::string macro_to_csv(const MacroPanel& macro) {
  std::string out = "month";
  for (const auto& s : macro.series()) out += ',' + s;
  out += '\n';
  for (std::size_t i = 0; i < macro.size(); ++i) {
    out += std::to_string(macro.first_month() + static_cast<int>(i));
    for (double v : macro.rows()[i]) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
  nlohmann::json j;
  j["betas"] = truth.betas;
  j["rf_annual"] = truth.rf_annual;
  j["nonlinear_spec"] = truth.nonlinear_spec;
  j["market_premium"] = truth.market_premium;
  j["cap_weights"] = truth.cap_weights;
  j["nonlinear_features"] = truth.nonlinear_features;
  return j;
}

void write_panels(const Panels& panels, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  write_file(directory / "prices.csv", prices_to_csv(panels.prices));
  write_file(directory / "fundamentals.csv", fundamentals_to_csv(panels.fundamentals));
  write_file(directory / "macro.csv", macro_to_csv(panels.macro));
}

}  // namespace capmml
