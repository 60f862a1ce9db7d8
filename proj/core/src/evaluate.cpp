#include "capmml/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "capmml/capm.hpp"
#include "capmml/error.hpp"
#include "capmml/numeric.hpp"

namespace capmml {

double mse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) {
    throw ValidationError("mse: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(actuals.size()) + " actuals",
                          {});
  }
  if (predictions.empty()) throw ValidationError("mse: empty input", {});
  ExactSum total;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - actuals[i];
    if (!std::isfinite(d)) throw NumericError("mse: non-finite value at position " + std::to_string(i));
    total.add(d * d);
  }
  return total.value() / static_cast<double>(predictions.size());
}

// --- Model kinds ----------------------------------------------------------------

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::capm:
      return "capm";
    case ModelKind::gbt:
      return "gbt";
    case ModelKind::ngboost:
      return "ngboost";
    case ModelKind::shallow_fnn:
      return "shallow_fnn";
    case ModelKind::deep_fnn:
      return "deep_fnn";
  }
  return "?";
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::capm:
      return "CAPM";
    case ModelKind::gbt:
      return "GBT";
    case ModelKind::ngboost:
      return "NGBoost";
    case ModelKind::shallow_fnn:
      return "Shallow FNN";
    case ModelKind::deep_fnn:
      return "Deep FNN";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (auto k : {ModelKind::capm, ModelKind::gbt, ModelKind::ngboost, ModelKind::shallow_fnn, ModelKind::deep_fnn}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown model '" + name + "' (expected capm, gbt, ngboost, shallow_fnn or deep_fnn)");
}

std::vector<ModelKind> parse_roster(const std::string& text) {
  std::vector<ModelKind> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    item = item.substr(first, item.find_last_not_of(" \t") - first + 1);
    const auto k = model_kind_from_string(item);
    if (std::find(out.begin(), out.end(), k) != out.end()) throw ConfigError("model '" + item + "' listed twice");
    out.push_back(k);
  }
  if (out.empty()) throw ConfigError("empty model roster");
  return out;
}

// --- Trained models -------------------------------------------------------------

namespace {

constexpr int kModelFormatVersion = 1;

MlpPreset preset_of(ModelKind k) { return k == ModelKind::shallow_fnn ? MlpPreset::shallow : MlpPreset::deep; }

}  // namespace

std::vector<double> TrainedModel::predict_standardized(const DenseMatrix& x) const {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

std::vector<double> TrainedModel::predict(const FeatureMatrix& raw) const {
  if (raw.feature_names != feature_names) throw ConfigError("feature layout differs from the one the model was trained on");
  FeatureMatrix copy = raw;
  standardizer.apply(copy);
  return predict_standardized(copy.design());
}

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json m;
  switch (model.index()) {
    case 0:
      m = ensemble_to_json(std::get<TreeEnsemble>(model));
      break;
    case 1:
      m = ngboost_to_json(std::get<NgbEnsemble>(model));
      break;
    default:
      m = mlp_to_json(std::get<MlpModel>(model));
      break;
  }
  return {{"format_version", kModelFormatVersion},
          {"model_kind", capmml::to_string(kind)},
          {"feature_names", feature_names},
          {"standardizer", standardizer.to_json()},
          {"best_params", best_params},
          {"best_validation_mse", best_validation_mse},
          {"model", m}};
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kModelFormatVersion) throw ConfigError("unsupported trained model format");
  TrainedModel t;
  t.kind = model_kind_from_string(j.at("model_kind").get<std::string>());
  t.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  t.standardizer = Standardizer::from_json(j.at("standardizer"));
  t.best_params = j.at("best_params");
  t.best_validation_mse = j.at("best_validation_mse").get<double>();
  const auto& m = j.at("model");
  switch (t.kind) {
    case ModelKind::gbt:
      t.model = ensemble_from_json(m);
      break;
    case ModelKind::ngboost:
      t.model = ngboost_from_json(m);
      break;
    case ModelKind::shallow_fnn:
    case ModelKind::deep_fnn:
      t.model = mlp_from_json(m);
      break;
    case ModelKind::capm:
      throw ConfigError("capm has no serialized model");
  }
  if (t.standardizer.means.size() != t.feature_names.size()) throw ConfigError("standardizer width differs from feature count");
  return t;
}

TrainedModel train_model(ModelKind kind, const FeatureMatrix& train, const BenchmarkConfig& config) {
  if (kind == ModelKind::capm) throw ConfigError("capm has no trainable hyperparameters");
  if (train.empty()) throw Error("train_model: empty training set");

  const SplitDataset inner = standardize_features(sequential_split(train, config.inner_validation_fraction));
  if (inner.train.empty() || inner.test.empty()) {
    throw Error("train_model: need at least two training years for the validation block");
  }
  const DenseMatrix x_fit = inner.train.design();
  const std::vector<double> y_fit = inner.train.targets();
  const DenseMatrix x_val = inner.test.design();
  const std::vector<double> y_val = inner.test.targets();
  const int n_features = static_cast<int>(train.n_features());

  const std::uint64_t model_seed = derive_seed(config.seed, to_string(kind));
  OptimizeOptions opts;
  opts.seed = derive_seed(model_seed, "hpo");
  opts.method = config.hpo.method;
  opts.tpe = config.hpo.tpe;
  opts.parallel_width = config.hpo.parallel_width;
  opts.jobs = config.jobs;
  if (config.trials_dir) {
    std::filesystem::create_directories(*config.trials_dir);
    opts.trials_path = *config.trials_dir / (to_string(kind) + ".jsonl");
  }

  GbtParams gbt_base;
  gbt_base.seed = derive_seed(model_seed, "fit");
  MlpConfig mlp_base;
  mlp_base.epochs = config.hpo.fnn_epochs;
  mlp_base.seed = derive_seed(model_seed, "fit");

  SearchSpace space;
  ObjectiveFn objective;
  switch (kind) {
    case ModelKind::gbt:
      space = gbt_search_space();
      opts.n_trials = config.hpo.gbt_trials;
      objective = [&](const nlohmann::json& p, std::size_t) {
        return mse(gbt_fit(x_fit, y_fit, gbt_params_from(p, gbt_base)).predict(x_val), y_val);
      };
      break;
    case ModelKind::ngboost:
      space = ngboost_grid_space();
      opts.method = SearchMethod::grid;
      opts.n_trials = config.hpo.ngboost_trials;
      objective = [&](const nlohmann::json& p, std::size_t) {
        return mse(ngboost_fit(x_fit, y_fit, gbt_params_from(p, gbt_base)).predict(x_val), y_val);
      };
      break;
    default: {
      const MlpPreset preset = preset_of(kind);
      space = fnn_search_space(preset, config.hpo.fnn_space);
      opts.n_trials = config.hpo.fnn_trials;
      objective = [&, preset](const nlohmann::json& p, std::size_t) {
        const MlpConfig cfg = mlp_config_from(p, mlp_base);
        cfg.validate(preset);
        const auto fit = mlp_train(mlp_init(cfg, n_features), x_fit, y_fit, cfg);
        return mse(fit.model.predict(x_val), y_val);
      };
      break;
    }
  }

  const HpoResult search = optimize(space, objective, opts);

  TrainedModel out;
  out.kind = kind;
  out.feature_names = train.feature_names;
  out.best_params = search.best.params;
  out.best_validation_mse = search.best.objective;
  out.standardizer = Standardizer::fit(train);
  FeatureMatrix full = train;
  out.standardizer.apply(full);
  const DenseMatrix x = full.design();
  const std::vector<double> y = full.targets();
  switch (kind) {
    case ModelKind::gbt:
      out.model = gbt_fit(x, y, gbt_params_from(search.best.params, gbt_base));
      break;
    case ModelKind::ngboost:
      out.model = ngboost_fit(x, y, gbt_params_from(search.best.params, gbt_base));
      break;
    default: {
      const MlpConfig cfg = mlp_config_from(search.best.params, mlp_base);
      out.model = mlp_train(mlp_init(cfg, n_features), x, y, cfg).model;
      break;
    }
  }
  return out;
}

// --- Reports --------------------------------------------------------------------

std::vector<TestKey> test_keys(const FeatureMatrix& m) {
  std::vector<TestKey> keys;
  keys.reserve(m.size());
  for (const auto& r : m.rows) keys.push_back({r.asset_id, r.target_year});
  return keys;
}

std::string keys_digest(std::span<const TestKey> keys) {
  std::string text;
  for (const auto& k : keys) text += k.asset_id + ',' + std::to_string(k.target_year) + '\n';
  return digest_hex(text);
}

bool BenchmarkReport::all_ok() const noexcept {
  return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.ok; });
}

nlohmann::json BenchmarkReport::to_json(bool include_timing) const {
  nlohmann::json out_rows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"model", r.model_name},
                        {"status", r.ok ? "ok" : "failed"},
                        {"test_mse", r.ok ? nlohmann::json(r.test_mse) : nlohmann::json(nullptr)},
                        {"n_test_rows", r.n_test_rows},
                        {"config_digest", r.config_digest},
                        {"config", r.config}};
    if (!r.ok) j["error"] = r.error;
    if (include_timing) j["train_duration_s"] = r.train_duration_s;
    out_rows.push_back(std::move(j));
  }
  return {{"metadata", metadata}, {"rows", out_rows}};
}

BenchmarkReport BenchmarkReport::from_json(const nlohmann::json& j) {
  BenchmarkReport r;
  r.metadata = j.value("metadata", nlohmann::json::object());
  for (const auto& row : j.at("rows")) {
    ReportRow x;
    x.model_name = row.at("model").get<std::string>();
    x.ok = row.at("status").get<std::string>() == "ok";
    if (x.ok) x.test_mse = row.at("test_mse").get<double>();
    x.n_test_rows = row.at("n_test_rows").get<std::size_t>();
    x.config_digest = row.value("config_digest", std::string{});
    x.config = row.value("config", nlohmann::json::object());
    x.error = row.value("error", std::string{});
    x.train_duration_s = row.value("train_duration_s", 0.0);
    r.rows.push_back(std::move(x));
  }
  return r;
}

std::string BenchmarkReport::to_csv() const {
  std::string out = "model,test_mse,n_test_rows\n";
  for (const auto& r : rows) {
    out += r.model_name + ',' + (r.ok ? format_double(r.test_mse) : std::string{}) + ',' + std::to_string(r.n_test_rows) + '\n';
  }
  return out;
}

std::string BenchmarkReport::render_table() const {
  std::size_t width = std::string("Optimized Model").size();
  for (const auto& r : rows) width = std::max(width, r.model_name.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  std::string out = "| " + pad("Optimized Model") + " | Mean Squared Error |\n";
  out += "|-" + std::string(width, '-') + "-|--------------------|\n";
  for (const auto& r : rows) {
    std::string value = "failed";
    if (r.ok) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", r.test_mse);
      value = buf;
    }
    out += "| " + pad(r.model_name) + " | " + value + std::string(18 - std::min<std::size_t>(18, value.size()), ' ') + " |\n";
  }
  return out;
}

BenchmarkReport assemble_report(std::span<const TestKey> keys, std::span<const double> actuals,
                                const std::vector<ModelOutcome>& outcomes, nlohmann::json metadata) {
  if (keys.size() != actuals.size()) throw ValidationError("assemble_report: keys and actuals differ in length", {});
  BenchmarkReport report;
  metadata["n_test_rows"] = keys.size();
  metadata["test_keys_digest"] = keys_digest(keys);
  report.metadata = std::move(metadata);
  for (const auto& o : outcomes) {
    ReportRow row;
    row.model_name = o.name;
    row.n_test_rows = keys.size();
    row.train_duration_s = o.train_duration_s;
    row.config = o.config;
    row.config_digest = digest_hex(o.config.dump());
    if (o.error) {
      row.ok = false;
      row.error = *o.error;
    } else {
      try {
        row.test_mse = mse(o.predictions, actuals);
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

nlohmann::json benchmark_config_to_json(const BenchmarkConfig& c) {
  std::vector<std::string> roster;
  for (auto k : c.roster) roster.push_back(to_string(k));
  return {{"roster", roster},
          {"test_fraction", c.test_fraction},
          {"window_years", c.window_years},
          {"inner_validation_fraction", c.inner_validation_fraction},
          {"seed", c.seed},
          {"data_source", c.data_source},
          {"hpo",
           {{"method", to_string(c.hpo.method)},
            {"gbt_trials", c.hpo.gbt_trials},
            {"fnn_trials", c.hpo.fnn_trials},
            {"ngboost_trials", c.hpo.ngboost_trials},
            {"fnn_epochs", c.hpo.fnn_epochs},
            {"fnn_min_width", c.hpo.fnn_space.min_width},
            {"fnn_max_width", c.hpo.fnn_space.max_width},
            {"gamma", c.hpo.tpe.gamma},
            {"n_startup", c.hpo.tpe.n_startup},
            {"n_candidates", c.hpo.tpe.n_candidates},
            {"parallel_width", c.hpo.parallel_width}}}};
}

BenchmarkRun run_benchmark(const Panels& panels, const BenchmarkConfig& config) {
  if (config.roster.empty()) throw ConfigError("run_benchmark: empty roster");
  BenchmarkRun run;
  run.matrix = build_feature_matrix(panels, config.window_years);
  run.split = sequential_split(run.matrix, config.test_fraction);
  if (run.split.test.empty()) throw Error("run_benchmark: the test block is empty");
  if (run.split.train.empty()) throw Error("run_benchmark: the training block is empty");

  const auto keys = test_keys(run.split.test);
  const auto actuals = run.split.test.targets();

  std::vector<ModelOutcome> outcomes;
  for (ModelKind kind : config.roster) {
    ModelOutcome o;
    o.name = display_name(kind);
    std::optional<TrainedModel> trained;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (kind == ModelKind::capm) {
        const CapmPredictor capm(panels.prices, panels.macro);
        for (const auto& k : keys) o.predictions.push_back(capm.predict(k.asset_id, k.target_year).expected_return);
        o.config = {{"rf_series", "treasury_10y_yield"}, {"beta_window_months", kBetaWindowMonths}};
      } else {
        trained = train_model(kind, run.split.train, config);
        o.predictions = trained->predict(run.split.test);
        o.config = trained->best_params;
      }
    } catch (const std::exception& e) {
      o.error = e.what();
      o.predictions.clear();
      trained.reset();
    }
    o.train_duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcomes.push_back(std::move(o));
    run.models.push_back(std::move(trained));
  }

  const auto train_years = run.split.train.distinct_years();
  const auto test_years = run.split.test.distinct_years();
  nlohmann::json metadata = {{"seed", config.seed},
                             {"test_fraction", config.test_fraction},
                             {"window_years", config.window_years},
                             {"data_source", config.data_source},
                             {"n_features", run.matrix.n_features()},
                             {"n_train_rows", run.split.train.size()},
                             {"train_years", {train_years.front(), train_years.back()}},
                             {"test_years", {test_years.front(), test_years.back()}},
                             {"dropped_missing", run.matrix.dropped_missing},
                             {"insufficient_history", run.matrix.insufficient_history},
                             {"config", benchmark_config_to_json(config)}};
  run.report = assemble_report(keys, actuals, outcomes, std::move(metadata));
  return run;
}

}  // namespace capmml
