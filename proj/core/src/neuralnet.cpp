#include "capmml/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capmml/error.hpp"

namespace capmml {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

void MlpConfig::validate(MlpPreset preset) const {
  const std::size_t layers = hidden_layer_sizes.size();
  if (activations.size() != layers || batch_norm.size() != layers) {
    throw ConfigError("MlpConfig: activations and batch_norm need one entry per hidden layer");
  }
  for (int w : hidden_layer_sizes) {
    if (w < 1) throw ConfigError("MlpConfig: hidden layer widths must be >= 1");
  }
  if (!(l2_penalty >= 0.0)) throw ConfigError("MlpConfig: l2_penalty must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("MlpConfig: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("MlpConfig: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("MlpConfig: epochs must be >= 0");
  if (preset == MlpPreset::custom) return;
  const auto [lo, hi] = preset == MlpPreset::shallow ? std::pair{1u, 2u} : std::pair{3u, 5u};
  if (layers < lo || layers > hi) {
    throw ConfigError(std::string(preset == MlpPreset::shallow ? "shallow" : "deep") + " preset needs " +
                      std::to_string(lo) + "-" + std::to_string(hi) + " hidden layers");
  }
  for (int w : hidden_layer_sizes) {
    if (w < 256 || w > 1024) throw ConfigError("preset hidden layer widths must lie in [256, 1024]");
  }
}

void to_json(nlohmann::json& j, const MlpConfig& c) {
  std::vector<std::string> acts;
  for (auto a : c.activations) acts.push_back(to_string(a));
  j = {{"hidden_layer_sizes", c.hidden_layer_sizes},
       {"activations", acts},
       {"batch_norm", c.batch_norm},
       {"l2_penalty", c.l2_penalty},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, MlpConfig& c) {
  c = MlpConfig{};
  c.hidden_layer_sizes = j.at("hidden_layer_sizes").get<std::vector<int>>();
  c.activations.clear();
  for (const auto& a : j.at("activations")) c.activations.push_back(activation_from_string(a.get<std::string>()));
  c.batch_norm = j.at("batch_norm").get<std::vector<bool>>();
  c.l2_penalty = j.value("l2_penalty", c.l2_penalty);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
}

Eigen::MatrixXd to_eigen(const DenseMatrix& x) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x(r, c);
  }
  return m;
}

// --- Parameter views -------------------------------------------------------

namespace {

void append_span(std::vector<std::span<double>>& out, Eigen::MatrixXd& m) {
  out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
}

void append_span(std::vector<std::span<double>>& out, Eigen::VectorXd& v) {
  out.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
}

std::vector<std::span<double>> parameter_spans(MlpModel& m) {
  std::vector<std::span<double>> out;
  for (auto& l : m.hidden) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    if (l.batch_norm) {
      out.emplace_back(l.gamma.data(), static_cast<std::size_t>(l.gamma.size()));
      out.emplace_back(l.beta.data(), static_cast<std::size_t>(l.beta.size()));
    }
  }
  out.emplace_back(m.head.weight.data(), static_cast<std::size_t>(m.head.weight.size()));
  out.emplace_back(m.head.bias.data(), static_cast<std::size_t>(m.head.bias.size()));
  return out;
}

std::vector<std::span<double>> gradient_spans(const MlpModel& m, MlpGradients& g) {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < m.hidden.size(); ++i) {
    auto& l = g.hidden[i];
    append_span(out, l.weight);
    append_span(out, l.bias);
    if (m.hidden[i].batch_norm) {
      append_span(out, l.gamma);
      append_span(out, l.beta);
    }
  }
  out.emplace_back(g.head.weight.data(), static_cast<std::size_t>(g.head.weight.size()));
  out.emplace_back(g.head.bias.data(), static_cast<std::size_t>(g.head.bias.size()));
  return out;
}

// --- Forward / backward -------------------------------------------------------

struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd xhat;      // normalized pre-activation (batch norm only)
  Eigen::RowVectorXd inv_std;
  Eigen::RowVectorXd batch_mean;
  Eigen::RowVectorXd batch_var;
  Eigen::MatrixXd pre;       // input to the activation
  Eigen::MatrixXd out;
};

void apply_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  if (a == Activation::relu) {
    out = pre.cwiseMax(0.0);
  } else {
    out = pre.array().tanh().matrix();
  }
}

Eigen::VectorXd forward_impl(const MlpModel& model, const Eigen::MatrixXd& x, bool training,
                             std::vector<LayerCache>* caches) {
  if (x.cols() != model.input_dim) {
    throw ConfigError("mlp_forward: expected " + std::to_string(model.input_dim) + " inputs, got " +
                      std::to_string(x.cols()));
  }
  if (caches) caches->assign(model.hidden.size(), LayerCache{});
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < model.hidden.size(); ++i) {
    const DenseLayer& l = model.hidden[i];
    Eigen::MatrixXd z = (a * l.weight).rowwise() + l.bias.transpose();
    Eigen::MatrixXd pre;
    LayerCache local;
    LayerCache& c = caches ? (*caches)[i] : local;
    if (l.batch_norm) {
      Eigen::RowVectorXd mean;
      Eigen::RowVectorXd var;
      if (training) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean().matrix();
      } else {
        mean = l.running_mean.transpose();
        var = l.running_var.transpose();
      }
      c.inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
      c.xhat = ((z.rowwise() - mean).array().rowwise() * c.inv_std.array()).matrix();
      pre = ((c.xhat.array().rowwise() * l.gamma.transpose().array()).rowwise() + l.beta.transpose().array()).matrix();
      c.batch_mean = std::move(mean);
      c.batch_var = std::move(var);
    } else {
      pre = std::move(z);
    }
    Eigen::MatrixXd out;
    apply_activation(l.activation, pre, out);
    if (caches) {
      c.input = std::move(a);
      c.pre = std::move(pre);
      c.out = out;
    }
    a = std::move(out);
  }
  Eigen::VectorXd y = a * model.head.weight.col(0);
  y.array() += model.head.bias(0);
  if (caches) {
    caches->emplace_back();
    caches->back().input = std::move(a);
  }
  return y;
}

double weight_penalty(const MlpModel& model) {
  double s = model.head.weight.squaredNorm();
  for (const auto& l : model.hidden) s += l.weight.squaredNorm();
  return model.config.l2_penalty * s;
}

double loss_impl(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, MlpGradients* grads,
                 std::vector<LayerCache>* caches_out) {
  if (x.rows() == 0) throw ConfigError("mlp_loss: empty batch");
  if (x.rows() != y.size()) throw ConfigError("mlp_loss: row count differs from target count");
  std::vector<LayerCache> caches;
  const Eigen::VectorXd pred = forward_impl(model, x, true, &caches);
  const Eigen::VectorXd diff = pred - y;
  const double batch = static_cast<double>(x.rows());
  const double l2 = model.config.l2_penalty;
  const double loss = diff.squaredNorm() / batch + weight_penalty(model);

  if (grads) {
    grads->hidden.resize(model.hidden.size());
    const Eigen::VectorXd d_pred = 2.0 * diff / batch;
    const Eigen::MatrixXd& last = caches.back().input;
    grads->head.weight = last.transpose() * d_pred + 2.0 * l2 * model.head.weight;
    grads->head.bias = Eigen::VectorXd::Constant(1, d_pred.sum());
    Eigen::MatrixXd d_a = d_pred * model.head.weight.col(0).transpose();
    for (std::size_t k = model.hidden.size(); k-- > 0;) {
      const DenseLayer& l = model.hidden[k];
      const LayerCache& c = caches[k];
      auto& g = grads->hidden[k];
      Eigen::MatrixXd d_pre;
      if (l.activation == Activation::relu) {
        d_pre = (c.pre.array() > 0.0).select(d_a, 0.0);
      } else {
        d_pre = (d_a.array() * (1.0 - c.out.array().square())).matrix();
      }
      Eigen::MatrixXd d_z;
      if (l.batch_norm) {
        g.gamma = (d_pre.array() * c.xhat.array()).colwise().sum().transpose();
        g.beta = d_pre.colwise().sum().transpose();
        const Eigen::MatrixXd d_xhat = (d_pre.array().rowwise() * l.gamma.transpose().array()).matrix();
        const Eigen::RowVectorXd mean_dxhat = d_xhat.colwise().mean();
        const Eigen::RowVectorXd mean_dxhat_xhat = (d_xhat.array() * c.xhat.array()).colwise().mean().matrix();
        d_z = (((d_xhat.rowwise() - mean_dxhat).array() - c.xhat.array().rowwise() * mean_dxhat_xhat.array())
                   .rowwise() *
               c.inv_std.array())
                  .matrix();
      } else {
        d_z = std::move(d_pre);
      }
      g.weight = c.input.transpose() * d_z + 2.0 * l2 * l.weight;
      g.bias = d_z.colwise().sum().transpose();
      if (k > 0) d_a = d_z * l.weight.transpose();
    }
  }
  if (caches_out) *caches_out = std::move(caches);
  return loss;
}

DenseLayer make_layer(Rng& rng, int in, int out, double variance, Activation act, bool bn) {
  DenseLayer l;
  l.weight.resize(in, out);
  const double sd = std::sqrt(variance);
  // Row-major fill order so the draw sequence matches the serialized layout.
  for (int r = 0; r < in; ++r) {
    for (int c = 0; c < out; ++c) l.weight(r, c) = sd * rng.normal();
  }
  l.bias = Eigen::VectorXd::Zero(out);
  l.activation = act;
  l.batch_norm = bn;
  if (bn) {
    l.gamma = Eigen::VectorXd::Ones(out);
    l.beta = Eigen::VectorXd::Zero(out);
    l.running_mean = Eigen::VectorXd::Zero(out);
    l.running_var = Eigen::VectorXd::Ones(out);
  }
  return l;
}

}  // namespace

// --- Public API -------------------------------------------------------------

std::size_t MlpModel::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(head.weight.size() + head.bias.size());
  for (const auto& l : hidden) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    if (l.batch_norm) n += static_cast<std::size_t>(l.gamma.size() + l.beta.size());
  }
  return n;
}

std::vector<double> MlpModel::predict(const DenseMatrix& x) const {
  std::vector<double> out;
  out.reserve(x.rows());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < x.rows(); start += kChunk) {
    const std::size_t stop = std::min(x.rows(), start + kChunk);
    Eigen::MatrixXd chunk(static_cast<Eigen::Index>(stop - start), static_cast<Eigen::Index>(x.cols()));
    for (std::size_t r = start; r < stop; ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        chunk(static_cast<Eigen::Index>(r - start), static_cast<Eigen::Index>(c)) = x(r, c);
      }
    }
    const Eigen::VectorXd y = mlp_forward(*this, chunk, false);
    out.insert(out.end(), y.data(), y.data() + y.size());
  }
  return out;
}

MlpModel mlp_init(const MlpConfig& config, int input_dim) {
  config.validate();
  if (input_dim < 1) throw ConfigError("mlp_init: input_dim must be >= 1");
  MlpModel m;
  m.input_dim = input_dim;
  m.config = config;
  Rng rng(derive_seed(config.seed, "mlp_init"));
  int fan_in = input_dim;
  for (std::size_t i = 0; i < config.hidden_layer_sizes.size(); ++i) {
    const int width = config.hidden_layer_sizes[i];
    m.hidden.push_back(make_layer(rng, fan_in, width, 2.0 / fan_in, config.activations[i], config.batch_norm[i]));
    fan_in = width;
  }
  m.head = make_layer(rng, fan_in, 1, 1.0 / fan_in, Activation::relu, false);
  return m;
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x, bool training_mode) {
  return forward_impl(model, x, training_mode, nullptr);
}

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, MlpGradients* gradients) {
  return loss_impl(model, x, y, gradients, nullptr);
}

MlpTrainResult mlp_train(MlpModel model, const DenseMatrix& x, std::span<const double> y, const MlpConfig& config) {
  config.validate();
  if (x.rows() != y.size()) throw ConfigError("mlp_train: row count differs from target count");
  if (static_cast<int>(x.cols()) != model.input_dim) throw ConfigError("mlp_train: feature dimension mismatch");
  model.config.l2_penalty = config.l2_penalty;
  model.config.learning_rate = config.learning_rate;
  model.config.batch_size = config.batch_size;
  model.config.epochs = config.epochs;

  MlpTrainResult result;
  if (config.epochs == 0 || x.rows() == 0) {
    result.model = std::move(model);
    return result;
  }

  const Eigen::MatrixXd data = to_eigen(x);
  const Eigen::Map<const Eigen::VectorXd> targets(y.data(), static_cast<Eigen::Index>(y.size()));
  const bool any_bn = std::any_of(model.hidden.begin(), model.hidden.end(), [](const DenseLayer& l) { return l.batch_norm; });

  auto params = parameter_spans(model);
  std::vector<std::vector<double>> m1(params.size());
  std::vector<std::vector<double>> m2(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    m1[p].assign(params[p].size(), 0.0);
    m2[p].assign(params[p].size(), 0.0);
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  long step = 0;

  Rng rng(derive_seed(config.seed, "mlp_shuffle"));
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto n = static_cast<std::size_t>(x.rows());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  MlpGradients grads;
  std::vector<LayerCache> caches;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t epoch_rows = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      if (any_bn && stop - start < 2) continue;  // batch statistics need two rows
      const auto b = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(b, data.cols());
      Eigen::VectorXd yb(b);
      for (std::size_t i = start; i < stop; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = data.row(static_cast<Eigen::Index>(order[i]));
        yb(static_cast<Eigen::Index>(i - start)) = targets(static_cast<Eigen::Index>(order[i]));
      }
      const double loss = loss_impl(model, xb, yb, &grads, &caches);
      if (!std::isfinite(loss)) {
        throw NumericError("mlp_train: loss diverged at epoch " + std::to_string(epoch + 1) + " with learning rate " +
                           std::to_string(config.learning_rate));
      }
      epoch_loss += loss * static_cast<double>(b);
      epoch_rows += static_cast<std::size_t>(b);

      for (std::size_t k = 0; k < model.hidden.size(); ++k) {
        DenseLayer& l = model.hidden[k];
        if (!l.batch_norm) continue;
        l.running_mean = kBatchNormMomentum * l.running_mean + (1.0 - kBatchNormMomentum) * caches[k].batch_mean.transpose();
        l.running_var = kBatchNormMomentum * l.running_var + (1.0 - kBatchNormMomentum) * caches[k].batch_var.transpose();
      }

      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      const auto gspans = gradient_spans(model, grads);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& mp = m1[p];
        auto& vp = m2[p];
        const auto g = gspans[p];
        auto w = params[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
          mp[i] = kBeta1 * mp[i] + (1.0 - kBeta1) * g[i];
          vp[i] = kBeta2 * vp[i] + (1.0 - kBeta2) * g[i] * g[i];
          w[i] -= config.learning_rate * (mp[i] / c1) / (std::sqrt(vp[i] / c2) + kAdamEps);
        }
      }
    }
    const double mean_loss = epoch_rows ? epoch_loss / static_cast<double>(epoch_rows) : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw NumericError("mlp_train: loss diverged at epoch " + std::to_string(epoch + 1) + " with learning rate " +
                         std::to_string(config.learning_rate));
    }
    result.loss_curve.push_back(mean_loss);
  }
  for (const auto& span : params) {
    for (double v : span) {
      if (!std::isfinite(v)) throw NumericError("mlp_train: parameters became non-finite");
    }
  }
  result.model = std::move(model);
  return result;
}

namespace {

using ExtMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using ExtRow = Eigen::Matrix<long double, 1, Eigen::Dynamic>;

// Training-mode objective evaluated in extended precision, written apart from
// forward_impl so the finite differences do not share its arithmetic. Appends
// the sign pattern of every relu input to relu_active.
long double extended_loss(const MlpModel& model, const ExtMatrix& x, const Eigen::VectorXd& y,
                          std::vector<bool>& relu_active) {
  relu_active.clear();
  ExtMatrix a = x;
  for (const auto& l : model.hidden) {
    ExtMatrix z = a * l.weight.cast<long double>();
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j).array() += static_cast<long double>(l.bias(j));
    if (l.batch_norm) {
      const long double n = static_cast<long double>(z.rows());
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const long double mean = z.col(j).sum() / n;
        const long double var = (z.col(j).array() - mean).square().sum() / n;
        const long double scale = static_cast<long double>(l.gamma(j)) / std::sqrt(var + kBatchNormEpsilon);
        z.col(j) = ((z.col(j).array() - mean) * scale + static_cast<long double>(l.beta(j))).matrix();
      }
    }
    if (l.activation == Activation::relu) {
      for (Eigen::Index k = 0; k < z.size(); ++k) relu_active.push_back(z.data()[k] > 0.0L);
      a = z.cwiseMax(0.0L);
    } else {
      a = z.array().tanh().matrix();
    }
  }
  long double loss = 0.0L;
  const auto w = model.head.weight.col(0).cast<long double>();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const long double d = a.row(i).dot(w) + static_cast<long double>(model.head.bias(0)) - y(i);
    loss += d * d;
  }
  loss /= static_cast<long double>(a.rows());
  long double penalty = model.head.weight.cast<long double>().squaredNorm();
  for (const auto& l : model.hidden) penalty += l.weight.cast<long double>().squaredNorm();
  return loss + static_cast<long double>(model.config.l2_penalty) * penalty;
}

}  // namespace

double gradient_check(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t n_params,
                      std::uint64_t seed) {
  if (x.rows() == 0) throw ConfigError("gradient_check: empty batch");
  MlpModel work = model;
  MlpGradients grads;
  loss_impl(work, x, y, &grads, nullptr);
  auto params = parameter_spans(work);
  const auto gspans = gradient_spans(work, grads);

  // Biases feeding a batch-norm layer cancel in the batch mean, so their true
  // gradient is identically zero and finite differences measure only roundoff.
  std::vector<bool> invariant;
  for (const auto& l : work.hidden) {
    invariant.push_back(false);
    invariant.push_back(l.batch_norm);
    if (l.batch_norm) invariant.insert(invariant.end(), {false, false});
  }
  invariant.insert(invariant.end(), {false, false});

  std::vector<std::pair<std::size_t, std::size_t>> flat;  // (span, offset)
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (invariant[p]) continue;
    for (std::size_t i = 0; i < params[p].size(); ++i) flat.emplace_back(p, i);
  }
  Rng rng(derive_seed(seed, "gradient_check"));
  rng.shuffle(std::span<std::pair<std::size_t, std::size_t>>(flat));
  const std::size_t wanted = std::max<std::size_t>(n_params, 100);

  // A perturbation that flips a relu between its linear pieces straddles a
  // kink, where central differences do not estimate the derivative.
  const ExtMatrix xe = x.cast<long double>();
  std::vector<bool> base_pattern, pattern;
  extended_loss(work, xe, y, base_pattern);

  constexpr double kStep = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& [p, i] : flat) {
    if (checked == wanted) break;
    double& w = params[p][i];
    const double saved = w;
    w = saved + kStep;
    const double w_up = w;
    const long double up = extended_loss(work, xe, y, pattern);
    bool smooth = pattern == base_pattern;
    w = saved - kStep;
    const double w_down = w;
    const long double down = extended_loss(work, xe, y, pattern);
    smooth = smooth && pattern == base_pattern;
    w = saved;
    if (!smooth) continue;
    ++checked;
    const double numeric = static_cast<double>((up - down) / (static_cast<long double>(w_up) - w_down));
    const double analytic = gspans[p][i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  if (checked == 0) throw NumericError("gradient_check: every sampled parameter straddles a relu kink");
  return worst;
}

// --- Serialization ------------------------------------------------------------

namespace {

constexpr int kMlpFormatVersion = 1;

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json layer_to_json(const DenseLayer& l) {
  nlohmann::json j = {{"inputs", l.inputs()},
                      {"outputs", l.outputs()},
                      {"activation", to_string(l.activation)},
                      {"batch_norm", l.batch_norm},
                      {"weight", row_major(l.weight)},
                      {"bias", to_vec(l.bias)}};
  if (l.batch_norm) {
    j["gamma"] = to_vec(l.gamma);
    j["beta"] = to_vec(l.beta);
    j["running_mean"] = to_vec(l.running_mean);
    j["running_var"] = to_vec(l.running_var);
  }
  return j;
}

DenseLayer layer_from_json(const nlohmann::json& j) {
  DenseLayer l;
  const auto in = j.at("inputs").get<Eigen::Index>();
  const auto out = j.at("outputs").get<Eigen::Index>();
  const auto w = j.at("weight").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != in * out) throw ConfigError("mlp layer: weight size mismatch");
  l.weight.resize(in, out);
  for (Eigen::Index r = 0; r < in; ++r) {
    for (Eigen::Index c = 0; c < out; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * out + c)];
  }
  l.bias = from_vec(j.at("bias").get<std::vector<double>>());
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  l.batch_norm = j.at("batch_norm").get<bool>();
  if (l.batch_norm) {
    l.gamma = from_vec(j.at("gamma").get<std::vector<double>>());
    l.beta = from_vec(j.at("beta").get<std::vector<double>>());
    l.running_mean = from_vec(j.at("running_mean").get<std::vector<double>>());
    l.running_var = from_vec(j.at("running_var").get<std::vector<double>>());
  }
  if (l.bias.size() != out) throw ConfigError("mlp layer: bias size mismatch");
  return l;
}

}  // namespace

nlohmann::json mlp_to_json(const MlpModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.hidden) layers.push_back(layer_to_json(l));
  return {{"format_version", kMlpFormatVersion},
          {"kind", "mlp"},
          {"input_dim", model.input_dim},
          {"config", model.config},
          {"hidden", layers},
          {"head", layer_to_json(model.head)}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kMlpFormatVersion || j.value("kind", std::string{}) != "mlp") {
    throw ConfigError("not a supported mlp model document");
  }
  MlpModel m;
  m.input_dim = j.at("input_dim").get<int>();
  m.config = j.at("config").get<MlpConfig>();
  for (const auto& l : j.at("hidden")) m.hidden.push_back(layer_from_json(l));
  m.head = layer_from_json(j.at("head"));
  Eigen::Index expected = m.input_dim;
  for (const auto& l : m.hidden) {
    if (l.inputs() != expected) throw ConfigError("mlp model: inconsistent layer dimensions");
    expected = l.outputs();
  }
  if (m.head.inputs() != expected || m.head.outputs() != 1) throw ConfigError("mlp model: bad output head");
  return m;
}

}  // namespace capmml
