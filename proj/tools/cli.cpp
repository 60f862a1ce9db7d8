#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "capmml/capm.hpp"
#include "capmml/dataset.hpp"
#include "capmml/error.hpp"
#include "capmml/evaluate.hpp"
#include "capmml/explain.hpp"
#include "capmml/features.hpp"
#include "capmml/numeric.hpp"

namespace capmml::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag values win over the --config file, which wins over defaults.
class Settings {
 public:
  Settings(CLI::App& app, nlohmann::json config) : app_(app), config_(std::move(config)) {}

  template <typename T>
  T get(const std::string& name, const T& parsed) const {
    const CLI::Option* opt = app_.get_option_no_throw("--" + name);
    if (opt && opt->count() > 0) return parsed;
    if (config_.contains(name)) {
      try {
        return config_.at(name).get<T>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + name + "' has the wrong type");
      }
    }
    return parsed;
  }

 private:
  CLI::App& app_;
  nlohmann::json config_;
};

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// Shortest round-trip text, padded to at least two decimals.
std::string money(double v) {
  std::string s = format_double(v);
  if (s.find_first_of("eEn") != std::string::npos) return s;
  const auto dot = s.find('.');
  if (dot == std::string::npos) return s + ".00";
  if (s.size() - dot == 2) s += '0';
  return s;
}

std::string default_out() {
  if (const char* env = std::getenv("CAPMML_OUT"); env && *env) return env;
  return "out";
}

struct Common {
  std::string config_path;
  std::string out = default_out();
  std::uint64_t seed = 7;
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON file with default option values");
  sub->add_option("--out", c.out, "Output directory (default $CAPMML_OUT or ./out)");
  sub->add_option("--seed", c.seed, "Master random seed");
  sub->add_option("--jobs", c.jobs, "Maximum worker threads")->check(CLI::PositiveNumber);
}

struct SplitOptions {
  std::string data;
  std::string features;
  double test_fraction = 0.30;
  int window = 3;
};

void add_split(CLI::App* sub, SplitOptions& s) {
  sub->add_option("--data", s.data, "Directory with prices.csv, fundamentals.csv, macro.csv");
  sub->add_option("--features", s.features, "features.csv from the features stage");
  sub->add_option("--test-fraction", s.test_fraction, "Share of years held out (latest first)");
  sub->add_option("--window", s.window, "Look-back window in years");
}

struct HpoOptions {
  std::string models = "capm,gbt,ngboost,shallow_fnn,deep_fnn";
  std::string method = "tpe";
  std::size_t trials = 0;
  std::size_t gbt_trials = 50;
  std::size_t fnn_trials = 100;
  int epochs = 20;
  int min_width = 256;
  int max_width = 1024;
};

void add_hpo(CLI::App* sub, HpoOptions& h) {
  sub->add_option("--method", h.method, "Search method: tpe, random or grid");
  sub->add_option("--trials", h.trials, "Trial budget for every searched model (overrides the per-family budgets)");
  sub->add_option("--gbt-trials", h.gbt_trials, "Trial budget for gradient boosting");
  sub->add_option("--fnn-trials", h.fnn_trials, "Trial budget for the networks");
  sub->add_option("--epochs", h.epochs, "Training epochs per network fit");
  sub->add_option("--min-width", h.min_width, "Smallest hidden width searched");
  sub->add_option("--max-width", h.max_width, "Largest hidden width searched");
}

FeatureMatrix load_features(const Settings& s, const SplitOptions& o, int window, std::ostream& out) {
  const auto features = s.get("features", o.features);
  const auto data = s.get("data", o.data);
  if (!features.empty()) {
    auto m = read_features_csv(features, window);
    out << "features: " << m.size() << " rows x " << m.n_features() << " columns from " << features << "\n";
    return m;
  }
  if (data.empty()) throw UsageError("need --data or --features");
  const Panels panels = load_panels(fs::path(data));
  auto m = build_feature_matrix(panels, window);
  out << "features: " << m.size() << " rows x " << m.n_features() << " columns (" << m.dropped_missing
      << " dropped for missing inputs)\n";
  return m;
}

BenchmarkConfig benchmark_config(const Settings& s, const Common& c, const SplitOptions& so, const HpoOptions& h) {
  BenchmarkConfig cfg;
  cfg.seed = s.get("seed", c.seed);
  cfg.jobs = s.get("jobs", c.jobs);
  cfg.test_fraction = s.get("test-fraction", so.test_fraction);
  cfg.window_years = s.get("window", so.window);
  cfg.roster = parse_roster(s.get("models", h.models));
  cfg.hpo.method = search_method_from_string(s.get("method", h.method));
  const std::size_t trials = s.get("trials", h.trials);
  cfg.hpo.gbt_trials = trials ? trials : s.get("gbt-trials", h.gbt_trials);
  cfg.hpo.fnn_trials = trials ? trials : s.get("fnn-trials", h.fnn_trials);
  cfg.hpo.fnn_epochs = s.get("epochs", h.epochs);
  cfg.hpo.fnn_space.min_width = s.get("min-width", h.min_width);
  cfg.hpo.fnn_space.max_width = s.get("max-width", h.max_width);
  if (cfg.hpo.fnn_space.min_width < 1 || cfg.hpo.fnn_space.min_width > cfg.hpo.fnn_space.max_width) {
    throw ConfigError("need 1 <= --min-width <= --max-width");
  }
  const auto data = s.get("data", so.data);
  cfg.data_source = data.empty() ? s.get("features", so.features) : data;
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asset return forecasting: CAPM against boosted trees and feed-forward networks"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  SplitOptions split;
  HpoOptions hpo;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic market");
  add_common(synth, common);
  int assets = 200;
  int years = 30;
  double noise = 1.0;
  double nonlinear = 0.4;
  double missing = 0.0;
  synth->add_option("--assets", assets, "Number of assets");
  synth->add_option("--years", years, "Number of years");
  synth->add_option("--noise", noise, "Scale of every random shock (0 gives an exact CAPM world)");
  synth->add_option("--nonlinear", nonlinear, "Amplitude of the nonlinear return component");
  synth->add_option("--missing-rate", missing, "Probability that a fundamentals cell is empty");

  // features
  auto* feats = app.add_subcommand("features", "Build the lagged feature matrix and its leakage audit");
  add_common(feats, common);
  feats->add_option("--data", split.data, "Directory with prices.csv, fundamentals.csv, macro.csv");
  feats->add_option("--window", split.window, "Look-back window in years");

  // train
  auto* train = app.add_subcommand("train", "Search hyperparameters and fit one model on the training block");
  add_common(train, common);
  add_split(train, split);
  add_hpo(train, hpo);
  std::string model_name = "gbt";
  train->add_option("--model", model_name, "gbt, ngboost, shallow_fnn or deep_fnn");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Run the full CAPM-versus-ML comparison");
  add_common(eval, common);
  add_split(eval, split);
  add_hpo(eval, hpo);
  eval->add_option("--models", hpo.models, "Comma-separated roster");

  // explain
  auto* expl = app.add_subcommand("explain", "Permutation importance and Shapley attributions for a trained model");
  add_common(expl, common);
  add_split(expl, split);
  std::string model_path;
  std::size_t top_k = 10;
  std::size_t repeats = 5;
  std::size_t background = 100;
  std::size_t shap_features = 10;
  std::size_t explain_rows = 1;
  expl->add_option("--model", model_path, "Trained model JSON from the train stage")->required();
  expl->add_option("--top-k", top_k, "Features shown in the ranking")->check(CLI::PositiveNumber);
  expl->add_option("--repeats", repeats, "Shuffles per feature")->check(CLI::PositiveNumber);
  expl->add_option("--background", background, "Background rows for Shapley values")->check(CLI::PositiveNumber);
  expl->add_option("--shap-features", shap_features, "Top-ranked features given exact Shapley values (<= 15)");
  expl->add_option("--rows", explain_rows, "Test rows explained individually");

  // report
  auto* rep = app.add_subcommand("report", "Render a saved benchmark report");
  add_common(rep, common);
  std::string report_path;
  rep->add_option("--report", report_path, "report.json (default <out>/report.json)");

  // valuate
  auto* val = app.add_subcommand("valuate", "Cost of capital and discounted cash flow calculators");
  add_common(val, common);
  std::string wacc_json;
  std::string dcf_json;
  std::string capm_json;
  val->add_option("--wacc", wacc_json, R"(JSON {"D","E","rD","rE"})");
  val->add_option("--dcf", dcf_json, R"(JSON {"fcf":[...],"tv","r"})");
  val->add_option("--capm", capm_json, R"(JSON {"rf","beta","rm"})");

  std::vector<const char*> argv{"capmml"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    nlohmann::json config = nlohmann::json::object();
    if (!common.config_path.empty()) {
      config = read_json_file(common.config_path);
      if (!config.is_object()) throw ConfigError("--config must hold a JSON object");
    }
    CLI::App& sub = *app.get_subcommands().front();
    const Settings s(sub, config);
    const fs::path out_dir = s.get("out", common.out);
    const std::uint64_t seed = s.get("seed", common.seed);
    const std::size_t jobs = s.get("jobs", common.jobs);

    if (synth->parsed()) {
      SynthConfig cfg;
      cfg.n_assets = s.get("assets", assets);
      cfg.n_years = s.get("years", years);
      cfg.seed = seed;
      cfg.noise_scale = s.get("noise", noise);
      cfg.nonlinear_amplitude = s.get("nonlinear", nonlinear);
      cfg.missing_rate = s.get("missing-rate", missing);
      const auto data = generate_synthetic(cfg);
      write_panels(data.panels, out_dir);
      write_json(out_dir / "groundtruth.json", ground_truth_to_json(data.truth));
      out << "synth: " << cfg.n_assets << " assets x " << cfg.n_years << " years -> " << out_dir.string() << "\n";
      return 0;
    }

    if (feats->parsed()) {
      const auto data = s.get("data", split.data);
      if (data.empty()) throw UsageError("features needs --data");
      const int window = s.get("window", split.window);
      const Panels panels = load_panels(fs::path(data));
      const auto m = build_feature_matrix(panels, window);
      const auto audit = audit_feature_matrix(m, panels);
      write_text(out_dir / "features.csv", features_to_csv(m));
      write_json(out_dir / "audit.json", audit.to_json());
      out << "features: " << m.size() << " rows x " << m.n_features() << " columns, " << m.dropped_missing
          << " dropped for missing inputs, " << audit.leakage_violations << " leakage violations\n";
      return audit.leakage_violations == 0 ? 0 : 1;
    }

    if (train->parsed()) {
      const auto cfg = [&] {
        auto c = benchmark_config(s, common, split, hpo);
        c.trials_dir = out_dir / "trials";
        return c;
      }();
      const ModelKind kind = model_kind_from_string(s.get("model", model_name));
      const auto m = load_features(s, split, cfg.window_years, out);
      const auto parts = sequential_split(m, cfg.test_fraction);
      const auto trained = train_model(kind, parts.train, cfg);
      const fs::path path = out_dir / ("model_" + to_string(kind) + ".json");
      auto doc = trained.to_json();
      doc["window_years"] = cfg.window_years;
      doc["test_fraction"] = cfg.test_fraction;
      write_json(path, doc);
      out << "train: " << display_name(kind) << " validation MSE " << format_double(trained.best_validation_mse)
          << " -> " << path.string() << "\n";
      return 0;
    }

    if (eval->parsed()) {
      auto cfg = benchmark_config(s, common, split, hpo);
      cfg.trials_dir = out_dir / "trials";
      const auto data = s.get("data", split.data);
      if (data.empty()) throw UsageError("evaluate needs --data");
      const Panels panels = load_panels(fs::path(data));
      const auto run = run_benchmark(panels, cfg);
      // Durations go to their own file so report.json is reproducible byte for byte.
      write_json(out_dir / "report.json", run.report.to_json(false));
      nlohmann::json timing = nlohmann::json::object();
      for (const auto& r : run.report.rows) timing[r.model_name] = r.train_duration_s;
      write_json(out_dir / "timing.json", timing);
      write_text(out_dir / "report.csv", run.report.to_csv());
      for (std::size_t i = 0; i < cfg.roster.size(); ++i) {
        if (run.models[i]) {
          auto doc = run.models[i]->to_json();
          doc["window_years"] = cfg.window_years;
          doc["test_fraction"] = cfg.test_fraction;
          write_json(out_dir / ("model_" + to_string(cfg.roster[i]) + ".json"), doc);
        }
      }
      for (const auto& r : run.report.rows) {
        out << "evaluate: " << r.model_name << " "
            << (r.ok ? "test MSE " + format_double(r.test_mse) : "FAILED: " + r.error) << "\n";
      }
      out << run.report.render_table();
      return run.report.all_ok() ? 0 : 1;
    }

    if (expl->parsed()) {
      const auto doc = read_json_file(s.get("model", model_path));
      const TrainedModel model = TrainedModel::from_json(doc);
      const int window = doc.value("window_years", s.get("window", split.window));
      const double fraction = doc.value("test_fraction", s.get("test-fraction", split.test_fraction));
      const auto m = load_features(s, split, window, out);
      auto test = sequential_split(m, fraction).test;
      if (test.empty()) throw Error("explain: the test block is empty");
      model.standardizer.apply(test);
      const DenseMatrix x = test.design();
      const auto y = test.targets();
      const BatchPredictFn predict = [&](const DenseMatrix& rows) { return model.predict_standardized(rows); };

      const auto ranking = permutation_importance(predict, x, y, model.feature_names, s.get("repeats", repeats),
                                                  derive_seed(seed, "permutation"), jobs);
      const auto report = importance_report(ranking, s.get("top-k", top_k));
      write_text(out_dir / "importance.csv", ranking.to_csv());
      write_text(out_dir / "importance.svg", report.svg);

      FeatureMatrix train_part = sequential_split(m, fraction).train;
      model.standardizer.apply(train_part);
      const DenseMatrix bg = sample_background(train_part.design(), s.get("background", background), derive_seed(seed, "explain"));
      const std::size_t n_shap = std::min({s.get("shap-features", shap_features), kMaxShapleyFeatures, ranking.entries.size()});
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < n_shap; ++i) subset.push_back(ranking.entries[i].feature_index);
      nlohmann::json attributions = nlohmann::json::array();
      const std::size_t n_rows = std::min(s.get("rows", explain_rows), x.rows());
      for (std::size_t r = 0; r < n_rows; ++r) {
        auto a = shapley_exact(predict, x.row(r), bg, subset, model.feature_names, jobs).to_json();
        a["asset_id"] = test.rows[r].asset_id;
        a["target_year"] = test.rows[r].target_year;
        attributions.push_back(std::move(a));
      }
      write_json(out_dir / "attribution.json", attributions);
      out << report.table;
      out << "explain: " << report.shown << " features ranked, " << n_rows << " rows attributed -> "
          << out_dir.string() << "\n";
      return 0;
    }

    if (rep->parsed()) {
      const fs::path path = s.get("report", report_path).empty() ? out_dir / "report.json" : fs::path(s.get("report", report_path));
      const auto report = BenchmarkReport::from_json(read_json_file(path));
      out << report.render_table();
      return report.all_ok() ? 0 : 1;
    }

    if (val->parsed()) {
      const auto w = s.get("wacc", wacc_json);
      const auto d = s.get("dcf", dcf_json);
      const auto c = s.get("capm", capm_json);
      if (w.empty() && d.empty() && c.empty()) throw UsageError("valuate needs --wacc, --dcf or --capm");
      auto parse = [](const std::string& text) {
        try {
          return nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
          throw ConfigError(std::string("bad JSON argument: ") + e.what());
        }
      };
      try {
        if (!w.empty()) {
          const auto j = parse(w);
          out << money(wacc({j.at("D").get<double>(), j.at("E").get<double>(), j.at("rD").get<double>(),
                             j.at("rE").get<double>()}))
              << "\n";
        }
        if (!d.empty()) {
          const auto j = parse(d);
          out << money(dcf_value({j.at("fcf").get<std::vector<double>>(), j.value("tv", 0.0), j.at("r").get<double>()}))
              << "\n";
        }
        if (!c.empty()) {
          const auto j = parse(c);
          out << money(capm_expected_return(j.at("rf").get<double>(), j.at("beta").get<double>(), j.at("rm").get<double>()))
              << "\n";
        }
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("valuate: ") + e.what());
      }
      return 0;
    }
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace capmml::cli
