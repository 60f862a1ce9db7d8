#include "capmml/hpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "capmml/error.hpp"

namespace capmml {

namespace {

bool is_integral(const nlohmann::json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

}  // namespace

bool Dimension::contains(const nlohmann::json& value) const {
  switch (kind) {
    case DimensionKind::uniform:
    case DimensionKind::log_uniform: {
      if (!value.is_number()) return false;
      const double v = value.get<double>();
      return v >= lo && v <= hi;
    }
    case DimensionKind::integer: {
      if (!is_integral(value)) return false;
      const auto v = value.get<long long>();
      return static_cast<double>(v) >= lo && static_cast<double>(v) <= hi;
    }
    case DimensionKind::categorical:
      return std::find(choices.begin(), choices.end(), value) != choices.end();
  }
  return false;
}

SearchSpace& SearchSpace::add(Dimension d) {
  if (d.name.empty()) throw ConfigError("search dimension needs a name");
  for (const auto& existing : dims_) {
    if (existing.name == d.name) throw ConfigError("duplicate search dimension '" + d.name + "'");
  }
  dims_.push_back(std::move(d));
  return *this;
}

SearchSpace& SearchSpace::uniform(std::string name, double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw ConfigError("uniform '" + name + "': need lo < hi");
  return add({std::move(name), DimensionKind::uniform, lo, hi, {}});
}

SearchSpace& SearchSpace::log_uniform(std::string name, double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo > 0.0 && lo < hi)) {
    throw ConfigError("log_uniform '" + name + "': need 0 < lo < hi");
  }
  return add({std::move(name), DimensionKind::log_uniform, lo, hi, {}});
}

SearchSpace& SearchSpace::integer(std::string name, long long lo, long long hi) {
  if (!(lo <= hi)) throw ConfigError("integer '" + name + "': need lo <= hi");
  return add({std::move(name), DimensionKind::integer, static_cast<double>(lo), static_cast<double>(hi), {}});
}

SearchSpace& SearchSpace::categorical(std::string name, std::vector<nlohmann::json> choices) {
  if (choices.empty()) throw ConfigError("categorical '" + name + "': no choices");
  return add({std::move(name), DimensionKind::categorical, 0.0, 0.0, std::move(choices)});
}

bool SearchSpace::contains(const nlohmann::json& params) const {
  if (!params.is_object()) return false;
  return std::all_of(dims_.begin(), dims_.end(), [&](const Dimension& d) {
    return params.contains(d.name) && d.contains(params.at(d.name));
  });
}

namespace {

std::size_t dimension_cardinality(const Dimension& d) {
  if (d.kind == DimensionKind::categorical) return d.choices.size();
  if (d.kind == DimensionKind::integer) return static_cast<std::size_t>(d.hi - d.lo) + 1;
  throw ConfigError("grid search needs finite dimensions; '" + d.name + "' is continuous");
}

nlohmann::json dimension_value(const Dimension& d, std::size_t i) {
  if (d.kind == DimensionKind::categorical) return d.choices[i];
  return static_cast<long long>(d.lo) + static_cast<long long>(i);
}

}  // namespace

std::size_t SearchSpace::grid_size() const {
  std::size_t n = 1;
  for (const auto& d : dims_) n *= dimension_cardinality(d);
  return n;
}

nlohmann::json SearchSpace::grid_point(std::size_t rank) const {
  const std::size_t total = grid_size();
  if (rank >= total) throw ConfigError("grid rank out of range");
  nlohmann::json p = nlohmann::json::object();
  for (std::size_t k = dims_.size(); k-- > 0;) {
    const std::size_t card = dimension_cardinality(dims_[k]);
    p[dims_[k].name] = dimension_value(dims_[k], rank % card);
    rank /= card;
  }
  return p;
}

nlohmann::json SearchSpace::sample_prior(Rng& rng) const {
  nlohmann::json p = nlohmann::json::object();
  for (const auto& d : dims_) {
    switch (d.kind) {
      case DimensionKind::uniform:
        p[d.name] = rng.uniform(d.lo, d.hi);
        break;
      case DimensionKind::log_uniform:
        p[d.name] = std::clamp(std::exp(rng.uniform(std::log(d.lo), std::log(d.hi))), d.lo, d.hi);
        break;
      case DimensionKind::integer:
        p[d.name] = static_cast<long long>(d.lo) + static_cast<long long>(rng.below(dimension_cardinality(d)));
        break;
      case DimensionKind::categorical:
        p[d.name] = d.choices[rng.below(d.choices.size())];
        break;
    }
  }
  return p;
}

// --- Trial records ------------------------------------------------------------

nlohmann::json TrialRecord::to_json() const {
  nlohmann::json j = {{"index", index},
                      {"params", params},
                      {"objective", status == TrialStatus::ok ? nlohmann::json(objective) : nlohmann::json(nullptr)},
                      {"status", status == TrialStatus::ok ? "ok" : "failed"},
                      {"duration_s", duration_s}};
  if (!error.empty()) j["error"] = error;
  return j;
}

TrialRecord TrialRecord::from_json(const nlohmann::json& j) {
  TrialRecord t;
  t.index = j.at("index").get<std::size_t>();
  t.params = j.at("params");
  const auto status = j.at("status").get<std::string>();
  if (status == "ok") {
    t.status = TrialStatus::ok;
    t.objective = j.at("objective").get<double>();
  } else if (status == "failed") {
    t.status = TrialStatus::failed;
  } else {
    throw ConfigError("unknown trial status '" + status + "'");
  }
  t.duration_s = j.value("duration_s", 0.0);
  t.error = j.value("error", std::string{});
  return t;
}

std::vector<TrialRecord> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trials file " + path.string());
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn final write
      throw ParseError(path.string(), line_no, "", "malformed trial record");
    }
    out.push_back(TrialRecord::from_json(j));
    if (out.back().index != out.size() - 1) {
      throw ParseError(path.string(), line_no, "", "trial indices must be contiguous from 0");
    }
  }
  return out;
}

// --- TPE ------------------------------------------------------------------------

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct Parzen {
  std::vector<double> centers;
  std::vector<double> widths;
  double lo = 0.0;
  double hi = 1.0;

  double density(double x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double h = widths[k];
      const double mass = 0.5 * (std::erf((hi - centers[k]) / h * kInvSqrt2) - std::erf((lo - centers[k]) / h * kInvSqrt2));
      const double z = (x - centers[k]) / h;
      s += kInvSqrt2Pi / h * std::exp(-0.5 * z * z) / std::max(mass, 1e-300);
    }
    return s / static_cast<double>(centers.size());
  }

  double sample(Rng& rng) const {
    const std::size_t k = rng.below(centers.size());
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double x = rng.normal(centers[k], widths[k]);
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(centers[k], lo, hi);
  }
};

double to_internal(const Dimension& d, const nlohmann::json& v) {
  const double x = v.get<double>();
  return d.kind == DimensionKind::log_uniform ? std::log(x) : x;
}

// Scott's rule on the observations, floored so a tight cluster keeps some spread,
// plus one prior component spanning the range.
Parzen fit_parzen(const Dimension& d, const std::vector<double>& obs) {
  Parzen p;
  p.lo = d.kind == DimensionKind::log_uniform ? std::log(d.lo) : d.lo;
  p.hi = d.kind == DimensionKind::log_uniform ? std::log(d.hi) : d.hi;
  if (d.kind == DimensionKind::integer) {
    p.lo -= 0.5;
    p.hi += 0.5;
  }
  const double range = p.hi - p.lo;
  const double n = static_cast<double>(obs.size());
  double bw = range;
  if (obs.size() > 1) {
    const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / n;
    double ss = 0.0;
    for (double o : obs) ss += (o - mean) * (o - mean);
    bw = 1.06 * std::sqrt(ss / (n - 1.0)) * std::pow(n, -0.2);
  }
  bw = std::clamp(bw, range / std::min(100.0, 1.0 + n), range);
  p.centers = obs;
  p.widths.assign(obs.size(), bw);
  p.centers.push_back(0.5 * (p.lo + p.hi));
  p.widths.push_back(range);
  return p;
}

struct Categorical {
  std::vector<double> probs;

  double sample(Rng& rng) const {
    double u = rng.uniform();
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      if (u < probs[k]) return static_cast<double>(k);
      u -= probs[k];
    }
    return static_cast<double>(probs.size() - 1);
  }
};

Categorical fit_categorical(const Dimension& d, const std::vector<double>& obs) {
  Categorical c;
  c.probs.assign(d.choices.size(), 1.0);
  for (double o : obs) c.probs[static_cast<std::size_t>(o)] += 1.0;
  const double total = static_cast<double>(obs.size() + d.choices.size());
  for (auto& p : c.probs) p /= total;
  return c;
}

double choice_index(const Dimension& d, const nlohmann::json& v) {
  const auto it = std::find(d.choices.begin(), d.choices.end(), v);
  if (it == d.choices.end()) throw ConfigError("value outside categorical '" + d.name + "'");
  return static_cast<double>(it - d.choices.begin());
}

nlohmann::json from_internal(const Dimension& d, double x) {
  switch (d.kind) {
    case DimensionKind::uniform:
      return std::clamp(x, d.lo, d.hi);
    case DimensionKind::log_uniform:
      return std::clamp(std::exp(x), d.lo, d.hi);
    case DimensionKind::integer:
      return static_cast<long long>(std::clamp(std::round(x), d.lo, d.hi));
    case DimensionKind::categorical:
      return d.choices[static_cast<std::size_t>(x)];
  }
  return nullptr;
}

}  // namespace

nlohmann::json tpe_suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, const TpeOptions& options,
                           Rng& rng) {
  if (!(options.gamma > 0.0 && options.gamma < 1.0)) throw ConfigError("tpe: gamma must lie in (0, 1)");
  std::vector<const TrialRecord*> done;
  for (const auto& t : history) {
    if (t.status == TrialStatus::ok && space.contains(t.params)) done.push_back(&t);
  }
  if (done.size() < std::max<std::size_t>(options.n_startup, 2)) return space.sample_prior(rng);
  std::stable_sort(done.begin(), done.end(),
                   [](const TrialRecord* a, const TrialRecord* b) { return a->objective < b->objective; });
  if (done.front()->objective == done.back()->objective) return space.sample_prior(rng);

  const auto n_good = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(done.size()))), 1, done.size() - 1);

  const auto& dims = space.dimensions();
  const std::size_t n_cand = std::max<std::size_t>(options.n_candidates, 1);
  std::vector<std::vector<double>> candidates(n_cand, std::vector<double>(dims.size()));
  std::vector<double> score(n_cand, 0.0);

  for (std::size_t k = 0; k < dims.size(); ++k) {
    const Dimension& d = dims[k];
    std::vector<double> good;
    std::vector<double> bad;
    for (std::size_t i = 0; i < done.size(); ++i) {
      const auto& v = done[i]->params.at(d.name);
      const double x = d.kind == DimensionKind::categorical ? choice_index(d, v) : to_internal(d, v);
      (i < n_good ? good : bad).push_back(x);
    }
    if (d.kind == DimensionKind::categorical) {
      const auto l = fit_categorical(d, good);
      const auto g = fit_categorical(d, bad);
      for (std::size_t c = 0; c < n_cand; ++c) {
        const double x = l.sample(rng);
        candidates[c][k] = x;
        const auto idx = static_cast<std::size_t>(x);
        score[c] += std::log(l.probs[idx]) - std::log(g.probs[idx]);
      }
    } else {
      const auto l = fit_parzen(d, good);
      const auto g = fit_parzen(d, bad);
      for (std::size_t c = 0; c < n_cand; ++c) {
        double x = l.sample(rng);
        if (d.kind == DimensionKind::integer) x = std::clamp(std::round(x), d.lo, d.hi);
        candidates[c][k] = x;
        score[c] += std::log(std::max(l.density(x), 1e-300)) - std::log(std::max(g.density(x), 1e-300));
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < n_cand; ++c) {
    if (score[c] > score[best]) best = c;
  }
  nlohmann::json p = nlohmann::json::object();
  for (std::size_t k = 0; k < dims.size(); ++k) p[dims[k].name] = from_internal(dims[k], candidates[best][k]);
  return p;
}

// --- Search loops --------------------------------------------------------------

std::string to_string(SearchMethod m) {
  switch (m) {
    case SearchMethod::grid:
      return "grid";
    case SearchMethod::tpe:
      return "tpe";
    case SearchMethod::random:
      return "random";
  }
  return "?";
}

SearchMethod search_method_from_string(const std::string& name) {
  if (name == "grid") return SearchMethod::grid;
  if (name == "tpe") return SearchMethod::tpe;
  if (name == "random") return SearchMethod::random;
  throw ConfigError("unknown search method '" + name + "' (expected grid, tpe or random)");
}

namespace {

TrialRecord run_trial(const ObjectiveFn& objective, std::size_t index, nlohmann::json params) {
  TrialRecord t;
  t.index = index;
  t.params = std::move(params);
  const auto start = std::chrono::steady_clock::now();
  try {
    t.objective = objective(t.params, index);
    if (!std::isfinite(t.objective)) {
      t.status = TrialStatus::failed;
      t.error = "non-finite objective";
    }
  } catch (const std::exception& e) {
    t.status = TrialStatus::failed;
    t.error = e.what();
  }
  if (t.status == TrialStatus::failed) t.objective = 0.0;
  t.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

// Evaluates params[i] as trial first_index + i on up to `jobs` threads.
std::vector<TrialRecord> run_batch(const ObjectiveFn& objective, std::size_t first_index,
                                   std::vector<nlohmann::json> params, std::size_t jobs) {
  std::vector<TrialRecord> out(params.size());
  const std::size_t width = std::max<std::size_t>(1, std::min(jobs, params.size()));
  if (width == 1) {
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = run_trial(objective, first_index + i, std::move(params[i]));
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < width; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < params.size(); i += width) out[i] = run_trial(objective, first_index + i, params[i]);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

HpoResult finish(std::vector<TrialRecord> history) {
  const TrialRecord* best = nullptr;
  for (const auto& t : history) {
    if (t.status == TrialStatus::ok && (!best || t.objective < best->objective)) best = &t;
  }
  if (!best) {
    std::string msg = "hyperparameter search: all " + std::to_string(history.size()) + " trials failed";
    if (!history.empty() && !history.front().error.empty()) msg += " (first error: " + history.front().error + ")";
    throw Error(msg);
  }
  HpoResult r;
  r.best = *best;
  r.history = std::move(history);
  return r;
}

}  // namespace

HpoResult grid_search(const SearchSpace& space, const ObjectiveFn& objective, std::size_t jobs) {
  const std::size_t n = space.grid_size();
  std::vector<nlohmann::json> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) points.push_back(space.grid_point(i));
  return finish(run_batch(objective, 0, std::move(points), jobs));
}

HpoResult optimize(const SearchSpace& space, const ObjectiveFn& objective, const OptimizeOptions& options) {
  if (options.n_trials < 1) throw ConfigError("optimize: n_trials must be >= 1");
  std::size_t total = options.n_trials;
  if (options.method == SearchMethod::grid) total = std::min(total, space.grid_size());

  std::vector<TrialRecord> history;
  std::ofstream log;
  if (options.trials_path) {
    if (std::filesystem::exists(*options.trials_path)) {
      history = read_trials(*options.trials_path);
      if (history.size() > total) history.resize(total);
      for (const auto& t : history) {
        if (!space.contains(t.params)) throw ConfigError("resumed trial " + std::to_string(t.index) + " lies outside the search space");
      }
    }
    // Rewrite so a torn trailing line never survives a resume.
    std::ofstream rewrite(*options.trials_path, std::ios::trunc);
    for (const auto& t : history) rewrite << t.to_json().dump() << '\n';
    rewrite.close();
    log.open(*options.trials_path, std::ios::app);
    if (!log) throw Error("cannot write trials file " + options.trials_path->string());
  }

  const std::size_t width = options.method == SearchMethod::tpe ? std::max<std::size_t>(1, options.parallel_width)
                                                                 : std::max<std::size_t>(1, options.jobs);
  while (history.size() < total) {
    const std::size_t start = history.size();
    const std::size_t count = std::min(width, total - start);
    std::vector<nlohmann::json> params;
    for (std::size_t i = start; i < start + count; ++i) {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
      switch (options.method) {
        case SearchMethod::grid:
          params.push_back(space.grid_point(i));
          break;
        case SearchMethod::random:
          params.push_back(space.sample_prior(rng));
          break;
        case SearchMethod::tpe:
          params.push_back(tpe_suggest(history, space, options.tpe, rng));
          break;
      }
    }
    for (auto& t : run_batch(objective, start, std::move(params), options.jobs)) {
      if (log.is_open()) log << t.to_json().dump() << '\n' << std::flush;
      history.push_back(std::move(t));
    }
  }
  return finish(std::move(history));
}

// --- Default spaces -----------------------------------------------------------

SearchSpace gbt_search_space() {
  SearchSpace s;
  s.integer("n_estimators", 50, 500)
      .integer("max_depth", 2, 8)
      .log_uniform("learning_rate", 0.01, 0.3)
      .log_uniform("l2_leaf_penalty", 1e-3, 10.0)
      .uniform("subsample_rows", 0.5, 1.0)
      .uniform("subsample_features", 0.5, 1.0);
  return s;
}

SearchSpace ngboost_grid_space() {
  SearchSpace s;
  s.categorical("n_estimators", {50, 100, 200, 300, 400, 500});
  return s;
}

SearchSpace fnn_search_space(MlpPreset preset, const FnnSpaceOptions& options) {
  if (preset == MlpPreset::custom) throw ConfigError("fnn_search_space needs the shallow or deep preset");
  const int max_layers = preset == MlpPreset::shallow ? 2 : 5;
  SearchSpace s;
  s.integer("n_layers", preset == MlpPreset::shallow ? 1 : 3, max_layers);
  for (int k = 1; k <= max_layers; ++k) s.integer("width_" + std::to_string(k), options.min_width, options.max_width);
  s.categorical("activation", {"relu", "tanh"})
      .categorical("batch_norm", {false, true})
      .log_uniform("l2_penalty", 1e-6, 1e-2)
      .log_uniform("learning_rate", 1e-4, 1e-2)
      .categorical("batch_size", {32, 64, 128, 256});
  return s;
}

GbtParams gbt_params_from(const nlohmann::json& params, GbtParams base) {
  if (params.contains("n_estimators")) base.n_estimators = params.at("n_estimators").get<int>();
  if (params.contains("max_depth")) base.max_depth = params.at("max_depth").get<int>();
  if (params.contains("learning_rate")) base.learning_rate = params.at("learning_rate").get<double>();
  if (params.contains("l2_leaf_penalty")) base.l2_leaf_penalty = params.at("l2_leaf_penalty").get<double>();
  if (params.contains("subsample_rows")) base.subsample_rows = params.at("subsample_rows").get<double>();
  if (params.contains("subsample_features")) base.subsample_features = params.at("subsample_features").get<double>();
  base.validate();
  return base;
}

MlpConfig mlp_config_from(const nlohmann::json& params, MlpConfig base) {
  const int layers = params.at("n_layers").get<int>();
  const auto act = activation_from_string(params.value("activation", std::string("relu")));
  const bool bn = params.value("batch_norm", false);
  base.hidden_layer_sizes.clear();
  for (int k = 1; k <= layers; ++k) base.hidden_layer_sizes.push_back(params.at("width_" + std::to_string(k)).get<int>());
  base.activations.assign(static_cast<std::size_t>(layers), act);
  base.batch_norm.assign(static_cast<std::size_t>(layers), bn);
  if (params.contains("l2_penalty")) base.l2_penalty = params.at("l2_penalty").get<double>();
  if (params.contains("learning_rate")) base.learning_rate = params.at("learning_rate").get<double>();
  if (params.contains("batch_size")) base.batch_size = params.at("batch_size").get<int>();
  base.validate();
  return base;
}

}  // namespace capmml
