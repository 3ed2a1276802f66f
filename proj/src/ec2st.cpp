#include "ec2st/ec2st.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ec2st/models.hpp"
#include "ec2st/numerics.hpp"
#include "ec2st/rng.hpp"

namespace ec2st {

// Above this, exp() would overflow inside the linear-domain mixture; the
// log-sum-exp form takes over.
static constexpr double kMaxLinearLogE = 700.0;

BatchEValue batch_log_evalue(const Eigen::VectorXd& probs,
                             const Eigen::VectorXi& labels) {
  if (probs.size() != labels.size()) {
    throw std::invalid_argument("probabilities and labels disagree in length");
  }
  if (probs.size() == 0) throw std::invalid_argument("empty batch");
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0 && probs[i] < 1.0)) {
      throw std::invalid_argument("classifier probabilities must lie in (0, 1)");
    }
  }

  BatchEValue out;
  const BernoulliNull null = bernoulli_mle(labels);
  out.q_hat = null.q_hat;
  out.points.reserve(static_cast<std::size_t>(labels.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    PointEValue p;
    p.log_p_alt = bernoulli_log_prob(probs[i], labels[i]);
    p.log_p_null = bernoulli_log_density(null, labels[i]);
    p.log_e = p.log_p_alt - p.log_p_null;
    acc += p.log_e;
    out.points.push_back(p);
  }
  out.log_e = acc;
  return out;
}

double point_bounded_log_evalue(double log_e, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must lie in [0, 1]");
  }
  if (std::isnan(log_e)) throw std::invalid_argument("log e-value is NaN");
  if (lambda == 0.0) return log_e;
  if (lambda == 1.0) return 0.0;
  if (log_e <= kMaxLinearLogE) {
    // lambda + (1 - lambda) e  =  1 + (1 - lambda)(e - 1): exact zero when
    // e = 1, and log1p keeps precision when e is close to 1.
    return std::log1p((1.0 - lambda) * std::expm1(log_e));
  }
  return log_sum_exp(std::log(lambda), std::log1p(-lambda) + log_e);
}

double bounded_log_evalue(std::span<const PointEValue> points, double lambda) {
  if (points.empty()) throw std::invalid_argument("empty batch");
  double acc = 0.0;
  for (const PointEValue& p : points) {
    acc += point_bounded_log_evalue(p.log_e, lambda);
  }
  return acc;
}

static void check_bounds(const LambdaBounds& bounds) {
  if (!(bounds.min > 0.0 && bounds.min <= bounds.max && bounds.max < 1.0)) {
    throw std::invalid_argument("lambda bounds must satisfy 0 < min <= max < 1");
  }
}

double optimize_lambda(std::span<const PointEValue> points,
                       const LambdaBounds& bounds) {
  check_bounds(bounds);
  if (points.empty()) throw std::invalid_argument("empty batch");

  // e_n - 1, with e capped so the derivative stays finite; the cap only
  // matters for astronomically large per-point e-values whose derivative
  // contribution has already saturated at -1/(1 - lambda).
  std::vector<double> t;
  t.reserve(points.size());
  for (const PointEValue& p : points) {
    t.push_back(std::expm1(std::min(p.log_e, kMaxLinearLogE)));
  }

  // Derivative of sum_n log(1 + (1 - lambda) t_n) with respect to lambda.
  const auto deriv = [&t](double lambda) {
    double acc = 0.0;
    for (double tn : t) acc += -tn / (1.0 + (1.0 - lambda) * tn);
    return acc;
  };

  double lo = bounds.min;
  double hi = bounds.max;
  // Concave objective: a non-positive slope at the lower bound means the
  // maximum sits there (and ties break low); non-negative at the upper bound
  // means it sits there.
  if (deriv(lo) <= 0.0) return lo;
  if (deriv(hi) >= 0.0) return hi;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (deriv(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void Ec2stConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1]");
  }
  check_bounds(lambda_bounds);
  if (!(initial_lambda >= lambda_bounds.min &&
        initial_lambda <= lambda_bounds.max)) {
    throw std::invalid_argument("initial lambda must lie within the bounds");
  }
  if (!(first_batch_split.first > 0.0 && first_batch_split.second > 0.0) ||
      std::fabs(first_batch_split.first + first_batch_split.second - 1.0) >
          1e-9) {
    throw std::invalid_argument("first-batch split fractions must be positive and sum to 1");
  }
  if (!oracle_probs) {
    mlp.validate();
    train.validate();
  }
}

Ec2stState ec2st_init(const Ec2stConfig& config) {
  config.validate();
  Ec2stState state;
  state.lambda = config.initial_lambda;
  state.process = make_eprocess(config.alpha);
  return state;
}

Verdict ec2st_step(Ec2stState& state, const Dataset& batch,
                   const Ec2stConfig& config, StepLog* log) {
  config.validate();
  batch.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (!state.train_set.empty() && batch.dim() != state.train_set.dim()) {
    throw std::invalid_argument("batch width does not match earlier batches");
  }

  const std::size_t m = state.batches_seen + 1;
  const bool was_rejected = state.process.rejected_at.has_value();
  StepLog entry;
  entry.batch = m;
  entry.batch_size = static_cast<std::size_t>(batch.n());
  entry.lambda = state.lambda;
  entry.lambda_next = state.lambda;

  if (m == 1) {
    auto parts = stratified_split(
        batch, {config.first_batch_split.first, config.first_batch_split.second},
        derive_seed(config.train.seed, 0, SeedRole::kSplit));
    if (parts[0].empty() || parts[1].empty()) {
      throw std::invalid_argument(
          "first batch is too small to split into train and validation");
    }
    state.train_set = std::move(parts[0]);
    state.val_set = std::move(parts[1]);
    ep_update(state.process, log_evalue(0.0));
  } else {
    Eigen::VectorXd probs;
    if (config.oracle_probs) {
      probs = config.oracle_probs(batch.x);
      if (probs.size() != batch.n()) {
        throw std::invalid_argument("oracle returned the wrong number of probabilities");
      }
    } else {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.train.seed, m, SeedRole::kTrain);
      state.model = mlp_train(config.mlp, state.train_set, state.val_set, tc);
      probs = predict_probs(*state.model, batch.x);
    }
    const BatchEValue be = batch_log_evalue(probs, batch.y);
    const double increment = bounded_log_evalue(be.points, state.lambda);
    ep_update(state.process, log_evalue(increment));

    if ((!state.process.rejected_at.has_value() && !was_rejected) ||
        config.continue_after_rejection) {
      state.lambda = optimize_lambda(be.points, config.lambda_bounds);
      state.train_set.append(state.val_set);
      state.val_set = batch;
    }
    entry.lambda_next = state.lambda;
  }

  state.batches_seen = m;
  state.samples_seen += static_cast<std::size_t>(batch.n());

  entry.log_increment = state.process.log_increments.back();
  entry.log_running = state.process.log_value();
  entry.rejected = state.process.rejected_at.has_value();
  if (log) *log = entry;
  return make_verdict(state.process, state.samples_seen);
}

Verdict ec2st_run(BatchStream& stream, const Ec2stConfig& config,
                  std::size_t max_batches, std::vector<StepLog>* logs) {
  Ec2stState state = ec2st_init(config);
  Verdict verdict = make_verdict(state.process, 0);
  while (state.batches_seen < max_batches) {
    std::optional<Dataset> batch = stream.next();
    if (!batch) break;
    StepLog entry;
    verdict = ec2st_step(state, *batch, config, &entry);
    if (logs) logs->push_back(entry);
    if (verdict.rejected && !config.continue_after_rejection) break;
  }
  return verdict;
}

namespace {

nlohmann::json dataset_to_json(const Dataset& data) {
  nlohmann::json j;
  j["x"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index f = 0; f < data.dim(); ++f) row.push_back(data.x(i, f));
    j["x"].push_back(std::move(row));
  }
  j["y"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < data.n(); ++i) j["y"].push_back(data.y[i]);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  Dataset data;
  const auto& x = j.at("x");
  const auto& y = j.at("y");
  if (x.size() != y.size()) {
    throw std::runtime_error("checkpoint dataset rows and labels disagree");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index d =
      n == 0 ? 0 : static_cast<Eigen::Index>(x.at(0).size());
  data.x.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = x.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != d) {
      throw std::runtime_error("checkpoint dataset width is inconsistent");
    }
    for (Eigen::Index f = 0; f < d; ++f) {
      data.x(i, f) = row.at(static_cast<std::size_t>(f)).get<double>();
    }
    data.y[i] = y.at(static_cast<std::size_t>(i)).get<int>();
  }
  return data;
}

}  // namespace

std::string state_to_json(const Ec2stState& state) {
  nlohmann::json j;
  j["format"] = "ec2st-state";
  j["version"] = 1;
  j["lambda"] = state.lambda;
  j["batches_seen"] = state.batches_seen;
  j["samples_seen"] = state.samples_seen;
  j["train_set"] = dataset_to_json(state.train_set);
  j["val_set"] = dataset_to_json(state.val_set);
  j["process"] = {{"alpha", state.process.alpha},
                  {"log_increments", state.process.log_increments}};
  if (state.process.rejected_at) {
    j["process"]["rejected_at"] = *state.process.rejected_at;
  } else {
    j["process"]["rejected_at"] = nullptr;
  }
  if (state.model) {
    j["model"] = nlohmann::json::parse(model_to_json(*state.model));
  } else {
    j["model"] = nullptr;
  }
  return j.dump();
}

Ec2stState state_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint json is malformed: ") +
                             e.what());
  }
  if (j.value("format", "") != "ec2st-state") {
    throw std::runtime_error("checkpoint json has the wrong format tag");
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  Ec2stState state;
  state.lambda = j.at("lambda").get<double>();
  state.batches_seen = j.at("batches_seen").get<std::size_t>();
  state.samples_seen = j.at("samples_seen").get<std::size_t>();
  state.train_set = dataset_from_json(j.at("train_set"));
  state.val_set = dataset_from_json(j.at("val_set"));

  const auto& pj = j.at("process");
  state.process = make_eprocess(pj.at("alpha").get<double>());
  for (const auto& inc : pj.at("log_increments")) {
    // Rebuild the running product through the same update path so the
    // restored ledger is bitwise identical to the original.
    ep_update(state.process, log_evalue(inc.get<double>()));
  }
  if (!pj.at("rejected_at").is_null()) {
    const auto stored = pj.at("rejected_at").get<std::size_t>();
    if (state.process.rejected_at != stored) {
      throw std::runtime_error("checkpoint rejection ledger is inconsistent");
    }
  } else if (state.process.rejected_at) {
    throw std::runtime_error("checkpoint rejection ledger is inconsistent");
  }
  if (!j.at("model").is_null()) {
    state.model = model_from_json(j.at("model").dump());
  }
  return state;
}

void save_checkpoint(const Ec2stState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << state_to_json(state) << "\n";
}

Ec2stState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return state_from_json(ss.str());
}

}  // namespace ec2st
