#include "capmml/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "capmml/error.hpp"
#include "capmml/numeric.hpp"
#include "capmml/random.hpp"

namespace capmml {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  const std::size_t width = std::max<std::size_t>(1, std::min(jobs, n));
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < width; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += width) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

nlohmann::json Attribution::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t i = 0; i < phi.size(); ++i) {
    feats.push_back({{"feature", i < feature_names.size() ? feature_names[i] : std::to_string(feature_indices[i])},
                     {"index", feature_indices[i]},
                     {"phi", phi[i]}});
  }
  return {{"base_value", base_value}, {"prediction", prediction}, {"attributions", feats}};
}

Attribution shapley_exact(const BatchPredictFn& predict, std::span<const double> row, const DenseMatrix& background,
                          std::span<const std::size_t> subset, std::span<const std::string> names, std::size_t jobs) {
  const std::size_t d = subset.size();
  if (d > kMaxShapleyFeatures) {
    throw ConfigError("shapley_exact supports at most 15 features (got " + std::to_string(d) +
                      "); use permutation_importance for wider rankings");
  }
  if (background.rows() == 0) throw ConfigError("shapley_exact: empty background set");
  if (background.cols() != row.size()) throw ConfigError("shapley_exact: background width differs from the row");
  for (std::size_t k = 0; k < d; ++k) {
    if (subset[k] >= row.size()) throw ConfigError("shapley_exact: feature index out of range");
    for (std::size_t m = 0; m < k; ++m) {
      if (subset[m] == subset[k]) throw ConfigError("shapley_exact: repeated feature index");
    }
  }

  const std::size_t n_masks = std::size_t{1} << d;
  const std::size_t n_bg = background.rows();
  std::vector<double> value(n_masks);
  parallel_for(n_masks, jobs, [&](std::size_t mask) {
    DenseMatrix x(n_bg, row.size());
    for (std::size_t b = 0; b < n_bg; ++b) {
      auto dst = x.row(b);
      std::copy(row.begin(), row.end(), dst.begin());
      for (std::size_t k = 0; k < d; ++k) {
        if (!(mask & (std::size_t{1} << k))) dst[subset[k]] = background(b, subset[k]);
      }
    }
    value[mask] = exact_mean(predict(x));
  });

  // weight[s] = s! (d - s - 1)! / d!
  std::vector<double> weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s + 1)) + std::lgamma(static_cast<double>(d - s)) -
                         std::lgamma(static_cast<double>(d + 1)));
  }

  Attribution out;
  out.feature_indices.assign(subset.begin(), subset.end());
  for (auto i : subset) out.feature_names.push_back(i < names.size() ? names[i] : "f" + std::to_string(i));
  out.phi.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t bit = std::size_t{1} << k;
    ExactSum acc;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const double delta = value[mask | bit] - value[mask];
      if (delta != 0.0) acc.add(weight[static_cast<std::size_t>(std::popcount(mask))] * delta);
    }
    out.phi[k] = acc.value();
  }
  out.base_value = value[0];
  DenseMatrix single(1, row.size());
  std::copy(row.begin(), row.end(), single.row(0).begin());
  out.prediction = predict(single).at(0);

  const double total = out.base_value + exact_sum(out.phi);
  const double scale = std::max({1.0, std::abs(out.prediction), std::abs(out.base_value)});
  if (!(std::abs(total - out.prediction) <= 1e-9 * scale)) {
    throw NumericError("shapley_exact: efficiency violated (base + sum(phi) = " + format_double(total) +
                       ", prediction = " + format_double(out.prediction) + ")");
  }
  return out;
}

nlohmann::json ImportanceRanking::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) {
    out.push_back({{"feature", e.feature}, {"index", e.feature_index}, {"importance", e.importance}, {"raw", e.raw}});
  }
  return out;
}

std::string ImportanceRanking::to_csv() const {
  std::string out = "rank,feature,importance\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out += std::to_string(i + 1) + ',' + entries[i].feature + ',' + format_double(entries[i].importance) + '\n';
  }
  return out;
}

namespace {

double squared_error(std::span<const double> pred, std::span<const double> y) {
  ExactSum s;
  for (std::size_t i = 0; i < y.size(); ++i) s.add((pred[i] - y[i]) * (pred[i] - y[i]));
  return s.value() / static_cast<double>(y.size());
}

}  // namespace

ImportanceRanking permutation_importance(const BatchPredictFn& predict, const DenseMatrix& x, std::span<const double> y,
                                         std::span<const std::string> names, std::size_t n_repeats, std::uint64_t seed,
                                         std::size_t jobs) {
  if (n_repeats < 1) throw ConfigError("permutation_importance: n_repeats must be >= 1");
  if (x.rows() != y.size()) throw ConfigError("permutation_importance: row count differs from target count");
  if (x.rows() == 0) throw ConfigError("permutation_importance: empty input");
  if (!names.empty() && names.size() != x.cols()) throw ConfigError("permutation_importance: one name per column needed");

  const std::size_t n = x.rows();
  const double baseline = squared_error(predict(x), y);
  std::vector<double> raw(x.cols(), 0.0);
  parallel_for(x.cols(), jobs, [&](std::size_t j) {
    DenseMatrix work = x;
    ExactSum total;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(j)), static_cast<std::uint64_t>(r)));
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      for (std::size_t i = 0; i < n; ++i) work(i, j) = x(perm[i], j);
      total.add(squared_error(predict(work), y) - baseline);
    }
    raw[j] = total.value() / static_cast<double>(n_repeats);
  });

  ImportanceRanking ranking;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    ranking.entries.push_back({names.empty() ? "f" + std::to_string(j) : names[j], j, std::max(raw[j], 0.0), raw[j]});
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.importance > b.importance; });
  return ranking;
}

ImportanceReport importance_report(const ImportanceRanking& ranking, std::size_t top_k) {
  if (top_k < 1) throw ConfigError("importance_report: top_k must be >= 1");
  ImportanceReport rep;
  rep.shown = std::min(top_k, ranking.entries.size());

  std::size_t width = std::string("feature").size();
  for (std::size_t i = 0; i < rep.shown; ++i) width = std::max(width, ranking.entries[i].feature.size());
  rep.table = "rank  " + std::string("feature") + std::string(width - 7, ' ') + "  importance\n";
  for (std::size_t i = 0; i < rep.shown; ++i) {
    const auto& e = ranking.entries[i];
    std::string rank = std::to_string(i + 1);
    rep.table += rank + std::string(6 - std::min<std::size_t>(6, rank.size()), ' ') + e.feature +
                 std::string(width - e.feature.size(), ' ') + "  " + format_double(e.importance) + '\n';
  }

  constexpr int kLabel = 240;
  constexpr int kBar = 360;
  constexpr int kRow = 22;
  constexpr int kTop = 30;
  double max_v = 0.0;
  for (std::size_t i = 0; i < rep.shown; ++i) max_v = std::max(max_v, ranking.entries[i].importance);
  const int height = kTop + kRow * static_cast<int>(rep.shown) + 10;
  const int total_width = kLabel + kBar + 110;

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(total_width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<text x=\"10\" y=\"18\" font-size=\"14\">Top " + std::to_string(rep.shown) + " feature importance</text>\n";
  for (std::size_t i = 0; i < rep.shown; ++i) {
    const auto& e = ranking.entries[i];
    const int y = kTop + kRow * static_cast<int>(i);
    const double len = max_v > 0.0 ? kBar * e.importance / max_v : 0.0;
    svg += "<text x=\"" + std::to_string(kLabel - 6) + "\" y=\"" + std::to_string(y + 14) + "\" text-anchor=\"end\">" +
           xml_escape(e.feature) + "</text>\n";
    svg += "<rect class=\"bar\" x=\"" + std::to_string(kLabel) + "\" y=\"" + std::to_string(y + 3) + "\" width=\"" +
           fixed(len, 2) + "\" height=\"" + std::to_string(kRow - 6) + "\" fill=\"#1f77b4\"/>\n";
    svg += "<text x=\"" + fixed(kLabel + len + 4, 2) + "\" y=\"" + std::to_string(y + 14) + "\">" +
           xml_escape(format_double(e.importance)) + "</text>\n";
  }
  svg += "</svg>\n";
  rep.svg = std::move(svg);
  return rep;
}

DenseMatrix sample_background(const DenseMatrix& x, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "background"));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  DenseMatrix out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace capmml
