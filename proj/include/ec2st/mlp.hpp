#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ec2st/data.hpp"

namespace ec2st {

// Architecture: input -> [Linear -> LayerNorm -> ReLU] per hidden width ->
// Linear head with a single logit.  sigma(logit) estimates P(y = 1 | x).
struct MlpSpec {
  std::vector<Eigen::Index> hidden = {30, 30};
  bool layer_norm = true;

  void validate() const;
};

struct LayerNormParams {
  Eigen::VectorXd gain;
  Eigen::VectorXd shift;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  std::optional<LayerNormParams> layer_norm;
};

struct MlpModel {
  std::vector<DenseLayer> layers;  // last layer is the logit head

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  void validate() const;  // shape chain consistent, parameters finite
};

inline constexpr double kLayerNormEps = 1e-8;

// Logits for a batch (one sample per row).
Eigen::VectorXd mlp_logits(const MlpModel& model, const Eigen::MatrixXd& x);

double mlp_forward(const MlpModel& model, const Eigen::VectorXd& x);

// sigma(logit), clamped to [kProbClamp, 1 - kProbClamp].
Eigen::VectorXd predict_probs(const MlpModel& model, const Eigen::MatrixXd& x);
double predict_prob(const MlpModel& model, const Eigen::VectorXd& x);

// Activations of the last hidden layer (the embedding used by the MMD test).
Eigen::MatrixXd mlp_hidden_features(const MlpModel& model,
                                    const Eigen::MatrixXd& x);

// Mean binary cross-entropy of the model on (x, y), computed through
// softplus so extreme logits stay finite.
double mlp_bce_loss(const MlpModel& model, const Eigen::MatrixXd& x,
                    const Eigen::VectorXi& y);

struct LayerGradients {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  std::optional<LayerNormParams> layer_norm;  // gain/shift gradients
};

struct MlpGradients {
  double loss = 0.0;
  std::vector<LayerGradients> layers;
};

// Analytic gradients of the mean BCE with respect to every parameter.
MlpGradients mlp_bce_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                               const Eigen::VectorXi& y);

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  // Up to full_batch_limit training points each epoch is one full-batch step;
  // beyond it, shuffled minibatches of minibatch_size.
  Eigen::Index minibatch_size = 64;
  Eigen::Index full_batch_limit = 512;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  MlpModel model;  // parameters restored to the best validation epoch
  std::vector<double> train_loss;  // full-set loss after each epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 0-based index into the loss traces
};

// Adam + early stopping on validation loss: training stops once patience
// epochs pass without a new validation best, and the returned model is the
// snapshot from the best epoch.
TrainResult mlp_train_traced(const MlpSpec& spec, const Dataset& train,
                             const Dataset& val, const TrainConfig& config);

MlpModel mlp_train(const MlpSpec& spec, const Dataset& train,
                   const Dataset& val, const TrainConfig& config);

// Versioned JSON round-trip for trained classifiers.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace ec2st
