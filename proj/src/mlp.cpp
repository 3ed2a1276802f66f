#include "ec2st/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ec2st/numerics.hpp"
#include "ec2st/rng.hpp"

namespace ec2st {

void MlpSpec::validate() const {
  for (Eigen::Index h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
  }
}

void MlpModel::validate() const {
  if (layers.empty()) throw std::invalid_argument("model has no layers");
  Eigen::Index in = layers.front().weight.cols();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    if (layer.weight.cols() != in) {
      throw std::invalid_argument("layer width chain is inconsistent");
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw std::invalid_argument("bias width does not match layer output");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw std::invalid_argument("model parameters must be finite");
    }
    if (layer.layer_norm) {
      if (l + 1 == layers.size()) {
        throw std::invalid_argument("the logit head must not be normalized");
      }
      if (layer.layer_norm->gain.size() != layer.weight.rows() ||
          layer.layer_norm->shift.size() != layer.weight.rows()) {
        throw std::invalid_argument("layer norm width does not match layer");
      }
      if (!layer.layer_norm->gain.allFinite() ||
          !layer.layer_norm->shift.allFinite()) {
        throw std::invalid_argument("model parameters must be finite");
      }
    }
    in = layer.weight.rows();
  }
  if (layers.back().weight.rows() != 1) {
    throw std::invalid_argument("the head must emit a single logit");
  }
}

namespace {

// Everything the backward pass needs from one forward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;   // activation entering each layer
  std::vector<Eigen::MatrixXd> xhat;     // normalized pre-activations
  std::vector<Eigen::VectorXd> inv_std;  // per-row 1/sqrt(var + eps)
  std::vector<Eigen::MatrixXd> relu_out; // post-ReLU activations
  Eigen::VectorXd logits;
};

ForwardCache forward_pass(const MlpModel& model, const Eigen::MatrixXd& x) {
  const std::size_t n_hidden = model.layers.size() - 1;
  ForwardCache cache;
  cache.inputs.reserve(model.layers.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const DenseLayer& layer = model.layers[l];
    cache.inputs.push_back(a);
    Eigen::MatrixXd z =
        (a * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    if (layer.layer_norm) {
      const double width = static_cast<double>(z.cols());
      const Eigen::VectorXd mu = z.rowwise().mean();
      Eigen::MatrixXd centered = z.colwise() - mu;
      const Eigen::VectorXd var = centered.array().square().rowwise().sum() / width;
      const Eigen::VectorXd inv =
          (var.array() + kLayerNormEps).sqrt().inverse();
      Eigen::MatrixXd xhat = centered.array().colwise() * inv.array();
      z = (xhat.array().rowwise() * layer.layer_norm->gain.transpose().array())
              .rowwise() +
          layer.layer_norm->shift.transpose().array();
      cache.xhat.push_back(std::move(xhat));
      cache.inv_std.push_back(inv);
    } else {
      cache.xhat.emplace_back();
      cache.inv_std.emplace_back();
    }
    a = z.cwiseMax(0.0);
    cache.relu_out.push_back(a);
  }
  cache.inputs.push_back(a);
  const DenseLayer& head = model.layers.back();
  cache.logits =
      (a * head.weight.transpose()).rowwise() + head.bias.transpose();
  return cache;
}

}  // namespace

Eigen::VectorXd mlp_logits(const MlpModel& model, const Eigen::MatrixXd& x) {
  model.validate();
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("input width does not match the model");
  }
  return forward_pass(model, x).logits;
}

double mlp_forward(const MlpModel& model, const Eigen::VectorXd& x) {
  return mlp_logits(model, x.transpose())[0];
}

Eigen::VectorXd predict_probs(const MlpModel& model, const Eigen::MatrixXd& x) {
  Eigen::VectorXd logits = mlp_logits(model, x);
  Eigen::VectorXd probs(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    probs[i] =
        std::min(1.0 - kProbClamp, std::max(kProbClamp, sigmoid(logits[i])));
  }
  return probs;
}

double predict_prob(const MlpModel& model, const Eigen::VectorXd& x) {
  return predict_probs(model, x.transpose())[0];
}

Eigen::MatrixXd mlp_hidden_features(const MlpModel& model,
                                    const Eigen::MatrixXd& x) {
  model.validate();
  if (model.layers.size() < 2) {
    throw std::invalid_argument("model has no hidden layer to embed with");
  }
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("input width does not match the model");
  }
  return forward_pass(model, x).relu_out.back();
}

static void check_labels(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) {
  if (x.rows() != y.size()) {
    throw std::invalid_argument("features and labels disagree in length");
  }
  if (x.rows() == 0) throw std::invalid_argument("empty batch");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
  }
}

double mlp_bce_loss(const MlpModel& model, const Eigen::MatrixXd& x,
                    const Eigen::VectorXi& y) {
  check_labels(x, y);
  const Eigen::VectorXd logits = mlp_logits(model, x);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    acc += softplus(logits[i]) - static_cast<double>(y[i]) * logits[i];
  }
  return acc / static_cast<double>(logits.size());
}

MlpGradients mlp_bce_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                               const Eigen::VectorXi& y) {
  model.validate();
  check_labels(x, y);
  if (x.cols() != model.input_dim()) {
    throw std::invalid_argument("input width does not match the model");
  }

  const ForwardCache cache = forward_pass(model, x);
  const Eigen::Index n = x.rows();
  const std::size_t n_hidden = model.layers.size() - 1;

  MlpGradients grads;
  grads.layers.resize(model.layers.size());

  double loss = 0.0;
  Eigen::VectorXd dlogit(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = cache.logits[i];
    const double yi = static_cast<double>(y[i]);
    loss += softplus(t) - yi * t;
    dlogit[i] = (sigmoid(t) - yi) / static_cast<double>(n);
  }
  grads.loss = loss / static_cast<double>(n);

  const DenseLayer& head = model.layers.back();
  grads.layers.back().weight = dlogit.transpose() * cache.inputs.back();
  grads.layers.back().bias = Eigen::VectorXd::Constant(1, dlogit.sum());

  // Gradient flowing into the activation below the layer being processed.
  Eigen::MatrixXd da = dlogit * head.weight;

  for (std::size_t l = n_hidden; l-- > 0;) {
    const DenseLayer& layer = model.layers[l];
    LayerGradients& lg = grads.layers[l];

    // ReLU: active exactly where the forward output is positive.
    Eigen::MatrixXd dy =
        (cache.relu_out[l].array() > 0.0).select(da, Eigen::MatrixXd::Zero(da.rows(), da.cols()));

    Eigen::MatrixXd dz;
    if (layer.layer_norm) {
      const Eigen::MatrixXd& xhat = cache.xhat[l];
      const Eigen::VectorXd& inv = cache.inv_std[l];
      const double width = static_cast<double>(dy.cols());

      lg.layer_norm.emplace();
      lg.layer_norm->gain = (dy.array() * xhat.array()).colwise().sum();
      lg.layer_norm->shift = dy.colwise().sum();

      // d/dz of (z - mu) / sqrt(var + eps), with biased variance over the
      // layer width: dz = inv * (g - mean(g) - xhat * mean(g .* xhat)),
      // where g = dy .* gain and means run over the width.
      Eigen::MatrixXd g =
          dy.array().rowwise() * layer.layer_norm->gain.transpose().array();
      const Eigen::VectorXd g_mean = g.rowwise().sum() / width;
      const Eigen::VectorXd gx_mean =
          (g.array() * xhat.array()).rowwise().sum() / width;
      dz = ((g.colwise() - g_mean).array() -
            (xhat.array().colwise() * gx_mean.array()))
               .colwise() *
           inv.array();
    } else {
      dz = std::move(dy);
    }

    lg.weight = dz.transpose() * cache.inputs[l];
    lg.bias = dz.colwise().sum();
    if (l > 0) da = dz * layer.weight;
  }
  return grads;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be > 0");
  }
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) {
    throw std::invalid_argument("patience must lie in [1, max_epochs]");
  }
  if (minibatch_size < 1) {
    throw std::invalid_argument("minibatch size must be >= 1");
  }
  if (full_batch_limit < 1) {
    throw std::invalid_argument("full batch limit must be >= 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
}

namespace {

MlpModel init_model(const MlpSpec& spec, Eigen::Index input_dim,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MlpModel model;
  Eigen::Index in = input_dim;
  std::vector<Eigen::Index> widths = spec.hidden;
  widths.push_back(1);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const Eigen::Index out = widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    }
    layer.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r) layer.bias[r] = u(rng);
    if (spec.layer_norm && l + 1 < widths.size()) {
      layer.layer_norm.emplace();
      layer.layer_norm->gain = Eigen::VectorXd::Ones(out);
      layer.layer_norm->shift = Eigen::VectorXd::Zero(out);
    }
    model.layers.push_back(std::move(layer));
    in = out;
  }
  return model;
}

// First/second moment buffers mirroring the parameter tree.
struct AdamState {
  std::vector<LayerGradients> m;
  std::vector<LayerGradients> v;
  std::size_t t = 0;

  explicit AdamState(const MlpModel& model) {
    m.resize(model.layers.size());
    v.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const DenseLayer& layer = model.layers[l];
      for (auto* s : {&m[l], &v[l]}) {
        s->weight = Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols());
        s->bias = Eigen::VectorXd::Zero(layer.bias.size());
        if (layer.layer_norm) {
          s->layer_norm.emplace();
          s->layer_norm->gain = Eigen::VectorXd::Zero(layer.bias.size());
          s->layer_norm->shift = Eigen::VectorXd::Zero(layer.bias.size());
        }
      }
    }
  }
};

void adam_update_array(Eigen::Ref<Eigen::MatrixXd> param,
                       const Eigen::MatrixXd& grad,
                       Eigen::Ref<Eigen::MatrixXd> m,
                       Eigen::Ref<Eigen::MatrixXd> v,
                       const TrainConfig& config, double bc1, double bc2) {
  m = config.beta1 * m + (1.0 - config.beta1) * grad;
  v = config.beta2 * v.array().matrix() +
      (1.0 - config.beta2) * grad.array().square().matrix();
  param.array() -= config.learning_rate * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + config.adam_eps);
}

void adam_step(MlpModel& model, const MlpGradients& grads, AdamState& state,
               const TrainConfig& config) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    DenseLayer& layer = model.layers[l];
    adam_update_array(layer.weight, grads.layers[l].weight, state.m[l].weight,
                      state.v[l].weight, config, bc1, bc2);
    adam_update_array(layer.bias, grads.layers[l].bias, state.m[l].bias,
                      state.v[l].bias, config, bc1, bc2);
    if (layer.layer_norm) {
      adam_update_array(layer.layer_norm->gain, grads.layers[l].layer_norm->gain,
                        state.m[l].layer_norm->gain, state.v[l].layer_norm->gain,
                        config, bc1, bc2);
      adam_update_array(layer.layer_norm->shift,
                        grads.layers[l].layer_norm->shift,
                        state.m[l].layer_norm->shift,
                        state.v[l].layer_norm->shift, config, bc1, bc2);
    }
  }
}

}  // namespace

TrainResult mlp_train_traced(const MlpSpec& spec, const Dataset& train,
                             const Dataset& val, const TrainConfig& config) {
  spec.validate();
  config.validate();
  train.validate();
  val.validate();
  if (train.empty() || val.empty()) {
    throw std::invalid_argument("training and validation sets must be non-empty");
  }
  if (train.dim() != val.dim()) {
    throw std::invalid_argument("train and validation widths disagree");
  }

  MlpModel model =
      init_model(spec, train.dim(), derive_seed(config.seed, 0, SeedRole::kTrain));
  AdamState adam(model);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1, SeedRole::kTrain));

  TrainResult result;
  result.model = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  const Eigen::Index n = train.n();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    if (n <= config.full_batch_limit) {
      const MlpGradients grads = mlp_bce_gradients(model, train.x, train.y);
      if (!std::isfinite(grads.loss)) {
        throw TrainingError("training loss diverged at epoch " +
                            std::to_string(epoch + 1));
      }
      adam_step(model, grads, adam, config);
    } else {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (Eigen::Index start = 0; start < n; start += config.minibatch_size) {
        const Eigen::Index stop = std::min(n, start + config.minibatch_size);
        Eigen::MatrixXd xb(stop - start, train.dim());
        Eigen::VectorXi yb(stop - start);
        for (Eigen::Index i = start; i < stop; ++i) {
          xb.row(i - start) = train.x.row(order[static_cast<std::size_t>(i)]);
          yb[i - start] = train.y[order[static_cast<std::size_t>(i)]];
        }
        const MlpGradients grads = mlp_bce_gradients(model, xb, yb);
        if (!std::isfinite(grads.loss)) {
          throw TrainingError("training loss diverged at epoch " +
                              std::to_string(epoch + 1));
        }
        adam_step(model, grads, adam, config);
      }
    }

    const double train_loss = mlp_bce_loss(model, train.x, train.y);
    const double val_loss = mlp_bce_loss(model, val.x, val.y);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw TrainingError("loss became non-finite at epoch " +
                          std::to_string(epoch + 1));
    }
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= config.patience) break;
    }
  }
  return result;
}

MlpModel mlp_train(const MlpSpec& spec, const Dataset& train,
                   const Dataset& val, const TrainConfig& config) {
  return mlp_train_traced(spec, train, val, config).model;
}

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  }
  return v;
}

}  // namespace

std::string model_to_json(const MlpModel& model) {
  model.validate();
  nlohmann::json j;
  j["format"] = "ec2st-mlp";
  j["version"] = 1;
  j["layers"] = nlohmann::json::array();
  for (const DenseLayer& layer : model.layers) {
    nlohmann::json lj;
    lj["weight"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      lj["weight"].push_back(vector_to_json(layer.weight.row(r).transpose()));
    }
    lj["bias"] = vector_to_json(layer.bias);
    if (layer.layer_norm) {
      lj["layer_norm"] = {{"gain", vector_to_json(layer.layer_norm->gain)},
                          {"shift", vector_to_json(layer.layer_norm->shift)}};
    }
    j["layers"].push_back(std::move(lj));
  }
  return j.dump();
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("model json is malformed: ") + e.what());
  }
  if (j.value("format", "") != "ec2st-mlp") {
    throw std::runtime_error("model json has the wrong format tag");
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported model version");
  }
  MlpModel model;
  for (const nlohmann::json& lj : j.at("layers")) {
    DenseLayer layer;
    const nlohmann::json& w = lj.at("weight");
    const Eigen::Index rows = static_cast<Eigen::Index>(w.size());
    if (rows == 0) throw std::runtime_error("model layer has no rows");
    const Eigen::Index cols = static_cast<Eigen::Index>(w.at(0).size());
    layer.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      layer.weight.row(r) =
          vector_from_json(w.at(static_cast<std::size_t>(r))).transpose();
    }
    layer.bias = vector_from_json(lj.at("bias"));
    if (lj.contains("layer_norm")) {
      layer.layer_norm.emplace();
      layer.layer_norm->gain = vector_from_json(lj["layer_norm"].at("gain"));
      layer.layer_norm->shift = vector_from_json(lj["layer_norm"].at("shift"));
    }
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << model_to_json(model) << "\n";
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace ec2st
