#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "capmml/matrix.hpp"
#include "capmml/random.hpp"

namespace capmml {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

enum class MlpPreset { custom, shallow, deep };

struct MlpConfig {
  std::vector<int> hidden_layer_sizes;
  std::vector<Activation> activations;  // one per hidden layer
  std::vector<bool> batch_norm;         // one per hidden layer
  double l2_penalty = 0.0;
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 20;
  std::uint64_t seed = 0;

  /// Throws ConfigError for malformed configurations. Presets additionally
  /// require 1-2 (shallow) or 3-5 (deep) hidden layers of width 256..1024.
  void validate(MlpPreset preset = MlpPreset::custom) const;
};

void to_json(nlohmann::json& j, const MlpConfig& c);
void from_json(const nlohmann::json& j, MlpConfig& c);

/// One affine layer with optional batch normalization and an activation.
/// weight is (inputs x outputs); the output head has no batch norm and no activation.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Activation activation = Activation::relu;
  bool batch_norm = false;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;

  Eigen::Index inputs() const { return weight.rows(); }
  Eigen::Index outputs() const { return weight.cols(); }
};

struct MlpModel {
  int input_dim = 0;
  std::vector<DenseLayer> hidden;
  DenseLayer head;  // outputs() == 1
  MlpConfig config;

  /// Number of trainable scalars.
  std::size_t parameter_count() const;
  /// Inference-mode predictions for the rows of x.
  std::vector<double> predict(const DenseMatrix& x) const;
};

constexpr double kBatchNormEpsilon = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

/// He initialization: weights ~ N(0, 2/fan_in) in hidden layers and
/// N(0, 1/fan_in) in the linear head; zero biases; batch-norm scale 1,
/// shift 0, running mean 0, running variance 1.
MlpModel mlp_init(const MlpConfig& config, int input_dim);

/// Forward pass. training_mode normalizes with batch statistics; otherwise
/// with running statistics. Never mutates the model.
Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x, bool training_mode);

/// Parameter-shaped gradient buffers, in the same order as model parameters.
struct MlpGradients {
  struct Layer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
  };
  std::vector<Layer> hidden;
  Layer head;
};

/// Training-mode objective mean((y_hat - y)^2) + l2 * sum ||W||^2 and its
/// analytic gradient (backpropagation through batch statistics).
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                MlpGradients* gradients = nullptr);

struct MlpTrainResult {
  MlpModel model;
  std::vector<double> loss_curve;  // mean mini-batch objective per epoch
};

/// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the objective of
/// mlp_loss, reshuffling rows every epoch. Batch-norm running statistics are
/// updated by exponential moving average with momentum 0.9. Throws
/// NumericError if the loss becomes non-finite.
MlpTrainResult mlp_train(MlpModel model, const DenseMatrix& x, std::span<const double> y, const MlpConfig& config);

/// Largest relative error |a - n| / max(|a|, |n|, 1e-8) between analytic
/// gradients and central differences (step 1e-5) over a sample of at least
/// 100 parameters (all of them when fewer exist). Biases that feed a
/// batch-norm layer have zero gradient by construction and are not sampled.
/// Parameters whose perturbation flips any relu unit straddle a kink and are
/// replaced by further draws.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      std::size_t n_params = 200, std::uint64_t seed = 0);

nlohmann::json mlp_to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);

Eigen::MatrixXd to_eigen(const DenseMatrix& x);

}  // namespace capmml
