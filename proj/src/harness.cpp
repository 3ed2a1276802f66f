#include "ec2st/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "ec2st/models.hpp"
#include "ec2st/numerics.hpp"
#include "ec2st/rng.hpp"
#include "ec2st/stats.hpp"
#include "ec2st/svg.hpp"

namespace ec2st {

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kType1: return "type1";
    case ExperimentKind::kPower: return "power";
    case ExperimentKind::kStoppingTime: return "stopping-time";
    case ExperimentKind::kLambdaAblation: return "lambda-ablation";
    case ExperimentKind::kBatchOrder: return "batch-order";
    case ExperimentKind::kInflationDemo: return "inflation-demo";
    case ExperimentKind::kGrowthRate: return "growth-rate";
  }
  throw std::logic_error("unknown experiment kind");
}

std::optional<bool> DataSpec::known_null() const {
  switch (kind) {
    case Kind::kBlob:
      return blob.sigma0 == blob.sigma1;
    case Kind::kGaussianMean:
      return mean0 == mean1;
    case Kind::kDiscreteToy: {
      toy.validate();
      const Eigen::VectorXd px = toy.joint.rowwise().sum();
      const Eigen::RowVector2d py = toy.joint.colwise().sum();
      for (Eigen::Index i = 0; i < toy.joint.rows(); ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
          if (std::fabs(toy.joint(i, c) - px[i] * py[c]) > 1e-12) return false;
        }
      }
      return true;
    }
    case Kind::kCsv:
      return std::nullopt;
  }
  throw std::logic_error("unknown data kind");
}

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const std::size_t n_threads = std::min<std::size_t>(jobs, n);
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    threads.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (first_error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::unique_ptr<BatchStream> make_stream(const DataSpec& data,
                                         Eigen::Index batch_size, bool balanced,
                                         std::uint64_t seed) {
  switch (data.kind) {
    case DataSpec::Kind::kBlob:
      return stream_blob_batches(data.blob, batch_size, balanced, seed);
    case DataSpec::Kind::kGaussianMean:
      return stream_gaussian_batches(data.mean0, data.mean1, batch_size,
                                     balanced, seed);
    case DataSpec::Kind::kDiscreteToy:
      return discrete_toy_stream(data.toy, batch_size, seed).stream;
    case DataSpec::Kind::kCsv: {
      Dataset full = load_csv(data.csv_path, data.csv_schema);
      return stream_dataset_batches(std::move(full), batch_size, seed);
    }
  }
  throw std::logic_error("unknown data kind");
}

Dataset make_pooled_dataset(const DataSpec& data, Eigen::Index total,
                            std::uint64_t seed) {
  if (total < 2 || total % 2 != 0) {
    throw ConfigError("pooled sample sizes must be even and >= 2");
  }
  const Eigen::Index half = total / 2;
  switch (data.kind) {
    case DataSpec::Kind::kBlob: {
      Eigen::MatrixXd x0 =
          blob_sample(data.blob, half, 0, derive_seed(seed, 0, SeedRole::kStream));
      Eigen::MatrixXd x1 =
          blob_sample(data.blob, half, 1, derive_seed(seed, 1, SeedRole::kStream));
      return pool_and_label(x0, x1, derive_seed(seed, 2, SeedRole::kPool));
    }
    case DataSpec::Kind::kGaussianMean: {
      std::mt19937_64 rng(derive_seed(seed, 0, SeedRole::kStream));
      std::normal_distribution<double> noise(0.0, 1.0);
      Eigen::MatrixXd x0(half, 1), x1(half, 1);
      for (Eigen::Index i = 0; i < half; ++i) x0(i, 0) = data.mean0 + noise(rng);
      for (Eigen::Index i = 0; i < half; ++i) x1(i, 0) = data.mean1 + noise(rng);
      return pool_and_label(x0, x1, derive_seed(seed, 2, SeedRole::kPool));
    }
    case DataSpec::Kind::kCsv: {
      const Dataset full = load_csv(data.csv_path, data.csv_schema);
      std::vector<Eigen::Index> zeros, ones;
      for (Eigen::Index i = 0; i < full.n(); ++i) {
        (full.y[i] == 1 ? ones : zeros).push_back(i);
      }
      if (static_cast<Eigen::Index>(zeros.size()) < half ||
          static_cast<Eigen::Index>(ones.size()) < half) {
        throw ConfigError("csv has fewer rows per class than the requested size");
      }
      std::mt19937_64 rng(derive_seed(seed, 0, SeedRole::kStream));
      std::shuffle(zeros.begin(), zeros.end(), rng);
      std::shuffle(ones.begin(), ones.end(), rng);
      std::vector<Eigen::Index> rows(zeros.begin(), zeros.begin() + half);
      rows.insert(rows.end(), ones.begin(), ones.begin() + half);
      Dataset subsample = full.subset(rows);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(subsample.n()));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::mt19937_64 rng2(derive_seed(seed, 2, SeedRole::kPool));
      std::shuffle(order.begin(), order.end(), rng2);
      return subsample.subset(order);
    }
    case DataSpec::Kind::kDiscreteToy:
      throw ConfigError("the discrete toy generator has no balanced pooled form");
  }
  throw std::logic_error("unknown data kind");
}

std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> make_oracle(
    const DataSpec& data) {
  switch (data.kind) {
    case DataSpec::Kind::kDiscreteToy: {
      const DiscreteToyConfig toy = data.toy;
      return [toy](const Eigen::MatrixXd& x) {
        return discrete_toy_oracle_probs(toy, x);
      };
    }
    case DataSpec::Kind::kBlob: {
      // Balanced classes: P(y = 1 | x) = p1(x) / (p0(x) + p1(x)) with each
      // class a uniform mixture over the nine modes.
      const BlobConfig blob = data.blob;
      return [blob](const Eigen::MatrixXd& x) {
        Eigen::VectorXd probs(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          double best = -std::numeric_limits<double>::infinity();
          std::array<double, 9> l0{}, l1{};
          for (int m = 0; m < 9; ++m) {
            Eigen::Vector2d c(blob.spacing * (m % 3), blob.spacing * (m / 3));
            const double d2 = (x.row(i).transpose() - c).squaredNorm();
            l0[m] = -0.5 * d2 / (blob.sigma0 * blob.sigma0) -
                    std::log(blob.sigma0 * blob.sigma0);
            l1[m] = -0.5 * d2 / (blob.sigma1 * blob.sigma1) -
                    std::log(blob.sigma1 * blob.sigma1);
            best = std::max({best, l0[m], l1[m]});
          }
          double p0 = 0.0, p1 = 0.0;
          for (int m = 0; m < 9; ++m) {
            p0 += std::exp(l0[m] - best);
            p1 += std::exp(l1[m] - best);
          }
          probs[i] = std::min(1.0 - kProbClamp,
                              std::max(kProbClamp, p1 / (p0 + p1)));
        }
        return probs;
      };
    }
    case DataSpec::Kind::kGaussianMean: {
      const double m0 = data.mean0, m1 = data.mean1;
      return [m0, m1](const Eigen::MatrixXd& x) {
        Eigen::VectorXd probs(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          const double v = x(i, 0);
          const double l1 = -0.5 * (v - m1) * (v - m1);
          const double l0 = -0.5 * (v - m0) * (v - m0);
          probs[i] = std::min(1.0 - kProbClamp,
                              std::max(kProbClamp, sigmoid(l1 - l0)));
        }
        return probs;
      };
    }
    case DataSpec::Kind::kCsv:
      throw ConfigError("csv data has no closed-form oracle");
  }
  throw std::logic_error("unknown data kind");
}

namespace {

std::vector<std::size_t> resolve_budgets(const ExperimentConfig& config) {
  if (!config.grid_batches.empty()) {
    for (std::size_t b : config.grid_batches) {
      if (b < 1 || b > config.max_batches) {
        throw ConfigError("grid budgets must lie in [1, max_batches]");
      }
    }
    std::vector<std::size_t> budgets = config.grid_batches;
    std::sort(budgets.begin(), budgets.end());
    return budgets;
  }
  std::vector<std::size_t> budgets(config.max_batches);
  std::iota(budgets.begin(), budgets.end(), std::size_t{1});
  return budgets;
}

Ec2stConfig resolve_ec2st(const ExperimentConfig& config) {
  Ec2stConfig e = config.method.ec2st;
  e.alpha = config.alpha;
  if (config.method.oracle) e.oracle_probs = make_oracle(config.data);
  e.validate();
  return e;
}

BaselineConfig resolve_baselines(const ExperimentConfig& config) {
  BaselineConfig b = config.method.baselines;
  b.mlp.validate();
  b.train.validate();
  return b;
}

nlohmann::json verdict_to_json(const Verdict& v) {
  nlohmann::json j;
  j["rejected"] = v.rejected;
  if (v.at_batch) {
    j["at_batch"] = *v.at_batch + 1;  // 1-based ordinal in reports
  } else {
    j["at_batch"] = nullptr;
  }
  j["final_log_e"] = v.final_log_e;
  j["samples"] = v.samples_consumed;
  return j;
}

nlohmann::json steplogs_to_json(const std::vector<StepLog>& logs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const StepLog& s : logs) {
    arr.push_back({{"batch", s.batch},
                   {"batch_size", s.batch_size},
                   {"lambda", s.lambda},
                   {"lambda_next", s.lambda_next},
                   {"log_increment", s.log_increment},
                   {"log_running", s.log_running},
                   {"rejected", s.rejected}});
  }
  return arr;
}

// Rejection ordinal (1-based) of an anytime run, if it rejected.
std::optional<std::size_t> rejection_ordinal(const Verdict& v) {
  if (!v.rejected) return std::nullopt;
  return *v.at_batch + 1;
}

RejectionCurve curve_from_ordinals(
    const std::string& method, const std::vector<std::size_t>& budgets,
    double samples_per_batch,
    const std::vector<std::optional<std::size_t>>& ordinals) {
  RejectionCurve curve;
  curve.method = method;
  const double r = static_cast<double>(ordinals.size());
  for (std::size_t b : budgets) {
    std::size_t hits = 0;
    for (const auto& o : ordinals) {
      if (o && *o <= b) ++hits;
    }
    const double rate = static_cast<double>(hits) / r;
    curve.sample_sizes.push_back(static_cast<double>(b) * samples_per_batch);
    curve.rates.push_back(rate);
    curve.stderrs.push_back(binomial_stderr(rate, ordinals.size()));
  }
  return curve;
}

void check_common(const ExperimentConfig& config) {
  if (!(config.alpha > 0.0 && config.alpha <= 1.0)) {
    throw ConfigError("alpha must lie in (0, 1]");
  }
  if (config.replications < 1) {
    throw ConfigError("replications must be >= 1");
  }
  if (config.max_batches < 1) throw ConfigError("max_batches must be >= 1");
  if (config.batch_size < 2) throw ConfigError("batch_size must be >= 2");
}

// Shared engine behind type1 and power.
ExperimentResult run_rejection_grid(const ExperimentConfig& config) {
  check_common(config);
  ExperimentResult result;
  const std::size_t R = config.replications;

  if (config.method.kind == MethodSpec::Kind::kEc2st) {
    const std::vector<std::size_t> budgets = resolve_budgets(config);
    const Ec2stConfig base = resolve_ec2st(config);
    std::vector<std::optional<std::size_t>> ordinals(R);
    std::vector<nlohmann::json> records(R);
    parallel_for(R, config.jobs, [&](std::size_t r) {
      const std::uint64_t stream_seed =
          derive_seed(config.master_seed, r, SeedRole::kStream);
      Ec2stConfig cfg = base;
      cfg.train.seed = derive_seed(config.master_seed, r, SeedRole::kTrain);
      auto stream =
          make_stream(config.data, config.batch_size, config.balanced, stream_seed);
      std::vector<StepLog> logs;
      const Verdict v = ec2st_run(*stream, cfg, config.max_batches, &logs);
      ordinals[r] = rejection_ordinal(v);
      records[r] = {{"replication", r},
                    {"seed", stream_seed},
                    {"method", "ec2st"},
                    {"verdict", verdict_to_json(v)},
                    {"batches", steplogs_to_json(logs)}};
    });
    result.curves.push_back(curve_from_ordinals(
        "ec2st", budgets, static_cast<double>(config.batch_size), ordinals));
    result.runs = std::move(records);
  } else if (config.method.kind == MethodSpec::Kind::kMslrt) {
    if (config.data.kind != DataSpec::Kind::kGaussianMean) {
      throw ConfigError("the split LRT runner models a Gaussian mean stream");
    }
    if (config.data.mean0 != config.data.mean1) {
      throw ConfigError("the split LRT stream is a single sample: mean0 must equal mean1");
    }
    const std::vector<std::size_t> budgets = resolve_budgets(config);
    std::vector<std::optional<std::size_t>> ordinals(R);
    std::vector<nlohmann::json> records(R);
    parallel_for(R, config.jobs, [&](std::size_t r) {
      const std::uint64_t stream_seed =
          derive_seed(config.master_seed, r, SeedRole::kStream);
      auto stream =
          make_stream(config.data, config.batch_size, config.balanced, stream_seed);
      GaussianMeanLearner learner;
      std::unique_ptr<NullFamily> null_family;
      if (config.method.mslrt_null == "singleton") {
        null_family = std::make_unique<SingletonGaussianNull>(
            Eigen::VectorXd::Constant(1, config.method.mslrt_null_mean));
      } else if (config.method.mslrt_null == "mean") {
        null_family = std::make_unique<GaussianMeanFamily>();
      } else {
        throw ConfigError("unknown split LRT null family: " + config.method.mslrt_null);
      }
      std::vector<StepLog> logs;
      const Verdict v = msplit_run(*stream, learner, *null_family, config.alpha,
                                   config.max_batches, &logs);
      ordinals[r] = rejection_ordinal(v);
      records[r] = {{"replication", r},
                    {"seed", stream_seed},
                    {"method", "mslrt"},
                    {"verdict", verdict_to_json(v)},
                    {"batches", steplogs_to_json(logs)}};
    });
    result.curves.push_back(curve_from_ordinals(
        "mslrt", budgets, static_cast<double>(config.batch_size), ordinals));
    result.runs = std::move(records);
  } else {
    // Fixed-horizon baselines over a grid of pooled sample sizes.
    if (config.sample_sizes.empty()) {
      throw ConfigError("baseline experiments need sample_sizes");
    }
    for (const std::string& t : config.method.baseline_tests) {
      if (t != "sc2st" && t != "lc2st" && t != "mc2st") {
        throw ConfigError("unknown baseline test: " + t);
      }
    }
    const BaselineConfig bcfg = resolve_baselines(config);
    const std::size_t n_sizes = config.sample_sizes.size();
    const std::size_t total = R * n_sizes;
    std::vector<nlohmann::json> records(total);
    std::vector<std::array<double, 3>> pvals(total);
    parallel_for(total, config.jobs, [&](std::size_t i) {
      const std::size_t r = i / n_sizes;
      const std::size_t si = i % n_sizes;
      const Eigen::Index size = config.sample_sizes[si];
      const std::uint64_t seed = derive_seed(config.master_seed, i, SeedRole::kStream);
      const Dataset pooled = make_pooled_dataset(config.data, size, seed);
      const BaselineSuiteResult suite = run_baseline_suite(
          pooled, bcfg, derive_seed(config.master_seed, i, SeedRole::kPool));
      pvals[i] = {suite.s.p_value, suite.l.p_value, suite.m.p_value};
      records[i] = {{"replication", r},
                    {"seed", seed},
                    {"sample_size", size},
                    {"p_values",
                     {{"sc2st", suite.s.p_value},
                      {"lc2st", suite.l.p_value},
                      {"mc2st", suite.m.p_value}}},
                    {"statistics",
                     {{"sc2st", suite.s.statistic},
                      {"lc2st", suite.l.statistic},
                      {"mc2st", suite.m.statistic}}}};
    });
    const std::array<std::string, 3> names{"sc2st", "lc2st", "mc2st"};
    for (std::size_t t = 0; t < names.size(); ++t) {
      if (std::find(config.method.baseline_tests.begin(),
                    config.method.baseline_tests.end(),
                    names[t]) == config.method.baseline_tests.end()) {
        continue;
      }
      RejectionCurve curve;
      curve.method = names[t];
      for (std::size_t si = 0; si < n_sizes; ++si) {
        std::size_t hits = 0;
        for (std::size_t r = 0; r < R; ++r) {
          if (pvals[r * n_sizes + si][t] <= config.alpha) ++hits;
        }
        const double rate = static_cast<double>(hits) / static_cast<double>(R);
        curve.sample_sizes.push_back(static_cast<double>(config.sample_sizes[si]));
        curve.rates.push_back(rate);
        curve.stderrs.push_back(binomial_stderr(rate, R));
      }
      result.curves.push_back(std::move(curve));
    }
    result.runs = std::move(records);
  }

  result.summary["x_label"] = "samples";
  result.summary["y_label"] = "rejection rate";
  return result;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

ExperimentResult run_type1(const ExperimentConfig& config) {
  const std::optional<bool> null = config.data.known_null();
  if (config.method.kind == MethodSpec::Kind::kMslrt) {
    if (config.data.kind == DataSpec::Kind::kGaussianMean &&
        config.data.mean0 != config.method.mslrt_null_mean &&
        config.method.mslrt_null == "singleton") {
      throw ConfigError("type1 with a singleton null needs the stream mean to match it");
    }
  } else if (null.has_value() && !*null) {
    throw ConfigError("type1 experiments need identical samples; the generator differs");
  }
  ExperimentResult result = run_rejection_grid(config);
  result.summary["experiment"] = "type1";
  return result;
}

ExperimentResult run_power(const ExperimentConfig& config) {
  if (config.method.kind == MethodSpec::Kind::kMslrt) {
    if (config.data.kind == DataSpec::Kind::kGaussianMean &&
        config.method.mslrt_null == "singleton" &&
        config.data.mean0 == config.method.mslrt_null_mean) {
      throw ConfigError("power with a singleton null needs the stream mean to differ from it");
    }
  } else {
    const std::optional<bool> null = config.data.known_null();
    if (null.has_value() && *null) {
      throw ConfigError("power experiments need distinct samples; the generator is null");
    }
  }
  ExperimentResult result = run_rejection_grid(config);
  result.summary["experiment"] = "power";
  return result;
}

ExperimentResult run_stopping_time(const ExperimentConfig& config) {
  check_common(config);
  if (config.method.kind != MethodSpec::Kind::kEc2st) {
    throw ConfigError("stopping-time is an ec2st experiment");
  }
  if (config.stopping_batch_sizes.empty()) {
    throw ConfigError("stopping-time needs batch sizes");
  }
  const std::optional<bool> null = config.data.known_null();
  if (null.has_value() && *null) {
    throw ConfigError("stopping-time needs distinct samples; the generator is null");
  }
  const Ec2stConfig base = resolve_ec2st(config);
  const std::size_t R = config.replications;
  const std::size_t n_sizes = config.stopping_batch_sizes.size();
  for (Eigen::Index b : config.stopping_batch_sizes) {
    if (b < 2 || static_cast<std::size_t>(b) * 2 > config.max_samples) {
      throw ConfigError("each stopping batch size needs room for two batches");
    }
  }

  ExperimentResult result;
  const std::size_t total = R * n_sizes;
  std::vector<nlohmann::json> records(total);
  std::vector<std::optional<std::size_t>> steps(total);
  std::vector<std::size_t> samples(total);
  parallel_for(total, config.jobs, [&](std::size_t i) {
    const std::size_t r = i / n_sizes;
    const std::size_t si = i % n_sizes;
    const Eigen::Index b = config.stopping_batch_sizes[si];
    const std::size_t max_batches = config.max_samples / static_cast<std::size_t>(b);
    const std::uint64_t stream_seed =
        derive_seed(config.master_seed, i, SeedRole::kStream);
    Ec2stConfig cfg = base;
    cfg.train.seed = derive_seed(config.master_seed, i, SeedRole::kTrain);
    auto stream = make_stream(config.data, b, config.balanced, stream_seed);
    const Verdict v = ec2st_run(*stream, cfg, max_batches);
    steps[i] = rejection_ordinal(v);
    samples[i] = v.samples_consumed;
    records[i] = {{"replication", r},
                  {"seed", stream_seed},
                  {"batch_size", b},
                  {"rejected", v.rejected},
                  {"steps", steps[i] ? nlohmann::json(*steps[i]) : nlohmann::json()},
                  {"samples", v.samples_consumed}};
  });

  nlohmann::json per_size = nlohmann::json::array();
  for (std::size_t si = 0; si < n_sizes; ++si) {
    const Eigen::Index b = config.stopping_batch_sizes[si];
    const std::size_t max_batches = config.max_samples / static_cast<std::size_t>(b);
    std::vector<std::optional<std::size_t>> ordinals(R);
    std::vector<double> rej_steps;
    for (std::size_t r = 0; r < R; ++r) {
      ordinals[r] = steps[r * n_sizes + si];
      if (ordinals[r]) rej_steps.push_back(static_cast<double>(*ordinals[r]));
    }
    std::vector<std::size_t> budgets(max_batches);
    std::iota(budgets.begin(), budgets.end(), std::size_t{1});
    result.curves.push_back(
        curve_from_ordinals("ec2st[b=" + std::to_string(b) + "]", budgets,
                            static_cast<double>(b), ordinals));

    nlohmann::json entry;
    entry["batch_size"] = b;
    entry["rejected"] = rej_steps.size();
    entry["censored"] = R - rej_steps.size();
    if (!rej_steps.empty()) {
      std::sort(rej_steps.begin(), rej_steps.end());
      entry["mean_steps"] = mean(rej_steps);
      entry["median_steps"] = quantile_sorted(rej_steps, 0.5);
      entry["mean_samples_at_rejection"] =
          mean(rej_steps) * static_cast<double>(b);
    }
    per_size.push_back(std::move(entry));
  }
  result.runs = std::move(records);
  result.summary["experiment"] = "stopping-time";
  result.summary["per_batch_size"] = std::move(per_size);
  result.summary["x_label"] = "samples";
  result.summary["y_label"] = "cumulative rejection rate";
  return result;
}

ExperimentResult run_lambda_ablation(const ExperimentConfig& config) {
  check_common(config);
  if (config.method.kind != MethodSpec::Kind::kEc2st) {
    throw ConfigError("lambda-ablation is an ec2st experiment");
  }
  if (config.initial_lambdas.empty()) {
    throw ConfigError("lambda-ablation needs initial lambdas");
  }
  const Ec2stConfig base = resolve_ec2st(config);
  for (double l : config.initial_lambdas) {
    if (!(l >= base.lambda_bounds.min && l <= base.lambda_bounds.max)) {
      throw ConfigError("every initial lambda must lie within the lambda bounds");
    }
  }
  const std::size_t R = config.replications;
  const std::size_t n_arms = config.initial_lambdas.size();
  const std::vector<std::size_t> budgets = resolve_budgets(config);

  // Each replication reuses one stream seed across the arms, so the arms see
  // identical data and the comparison is paired.
  std::vector<std::vector<std::optional<std::size_t>>> ordinals(
      n_arms, std::vector<std::optional<std::size_t>>(R));
  std::vector<nlohmann::json> records(R * n_arms);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const std::uint64_t stream_seed =
        derive_seed(config.master_seed, r, SeedRole::kStream);
    for (std::size_t a = 0; a < n_arms; ++a) {
      Ec2stConfig cfg = base;
      cfg.initial_lambda = config.initial_lambdas[a];
      cfg.train.seed = derive_seed(config.master_seed, r, SeedRole::kTrain);
      auto stream = make_stream(config.data, config.batch_size, config.balanced,
                                stream_seed);
      const Verdict v = ec2st_run(*stream, cfg, config.max_batches);
      ordinals[a][r] = rejection_ordinal(v);
      records[r * n_arms + a] = {
          {"replication", r},
          {"seed", stream_seed},
          {"initial_lambda", config.initial_lambdas[a]},
          {"verdict", verdict_to_json(v)}};
    }
  });

  ExperimentResult result;
  for (std::size_t a = 0; a < n_arms; ++a) {
    char label[64];
    std::snprintf(label, sizeof(label), "ec2st[lambda1=%g]",
                  config.initial_lambdas[a]);
    result.curves.push_back(curve_from_ordinals(
        label, budgets, static_cast<double>(config.batch_size), ordinals[a]));
  }
  result.runs = std::move(records);
  result.summary["experiment"] = "lambda-ablation";
  result.summary["x_label"] = "samples";
  result.summary["y_label"] = "rejection rate";
  return result;
}

ExperimentResult run_batch_order(const ExperimentConfig& config) {
  check_common(config);
  if (config.method.kind != MethodSpec::Kind::kEc2st) {
    throw ConfigError("batch-order is an ec2st experiment");
  }
  if (config.order_shuffles < 1) {
    throw ConfigError("batch-order needs at least one shuffle");
  }
  const Ec2stConfig base = resolve_ec2st(config);
  const std::size_t R = config.replications;
  const std::size_t K = config.order_shuffles;
  const std::size_t M = config.max_batches;

  // The shuffle orders are fixed for the whole experiment.
  std::vector<std::vector<std::size_t>> orders(K);
  for (std::size_t k = 0; k < K; ++k) {
    orders[k].resize(M);
    std::iota(orders[k].begin(), orders[k].end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.master_seed, k, SeedRole::kShuffle));
    std::shuffle(orders[k].begin(), orders[k].end(), rng);
  }

  std::vector<std::vector<std::optional<std::size_t>>> ordinals(
      K, std::vector<std::optional<std::size_t>>(R));
  std::vector<nlohmann::json> records(R * K);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const std::uint64_t stream_seed =
        derive_seed(config.master_seed, r, SeedRole::kStream);
    auto stream =
        make_stream(config.data, config.batch_size, config.balanced, stream_seed);
    Dataset pool;
    for (std::size_t m = 0; m < M; ++m) {
      std::optional<Dataset> batch = stream->next();
      if (!batch) throw ConfigError("the generator ran out of batches");
      pool.append(*batch);
    }
    for (std::size_t k = 0; k < K; ++k) {
      Ec2stConfig cfg = base;
      cfg.train.seed = derive_seed(config.master_seed, r, SeedRole::kTrain);
      auto ordered =
          stream_dataset_batches_ordered(pool, config.batch_size, orders[k]);
      const Verdict v = ec2st_run(*ordered, cfg, M);
      ordinals[k][r] = rejection_ordinal(v);
      records[r * K + k] = {{"replication", r},
                            {"seed", stream_seed},
                            {"order", k},
                            {"verdict", verdict_to_json(v)}};
    }
  });

  std::vector<std::size_t> budgets(M);
  std::iota(budgets.begin(), budgets.end(), std::size_t{1});
  ExperimentResult result;
  std::vector<RejectionCurve> shuffle_curves;
  for (std::size_t k = 0; k < K; ++k) {
    shuffle_curves.push_back(
        curve_from_ordinals("ec2st[order=" + std::to_string(k) + "]", budgets,
                            static_cast<double>(config.batch_size), ordinals[k]));
  }

  RejectionCurve mean_curve;
  mean_curve.method = "ec2st[order-mean]";
  nlohmann::json band = nlohmann::json::array();
  double max_dev = 0.0;
  for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
    std::vector<double> rates;
    for (std::size_t k = 0; k < K; ++k) rates.push_back(shuffle_curves[k].rates[bi]);
    const double m = mean(rates);
    for (double rate : rates) max_dev = std::max(max_dev, std::fabs(rate - m));
    std::sort(rates.begin(), rates.end());
    mean_curve.sample_sizes.push_back(shuffle_curves[0].sample_sizes[bi]);
    mean_curve.rates.push_back(m);
    mean_curve.stderrs.push_back(binomial_stderr(m, R * K));
    band.push_back({{"samples", shuffle_curves[0].sample_sizes[bi]},
                    {"mean", m},
                    {"q025", quantile_sorted(rates, 0.025)},
                    {"q975", quantile_sorted(rates, 0.975)}});
  }
  result.curves.push_back(std::move(mean_curve));
  for (auto& c : shuffle_curves) result.curves.push_back(std::move(c));
  result.runs = std::move(records);
  result.summary["experiment"] = "batch-order";
  result.summary["order_shuffles"] = K;
  result.summary["max_abs_deviation_from_mean"] = max_dev;
  result.summary["band"] = std::move(band);
  result.summary["x_label"] = "samples";
  result.summary["y_label"] = "rejection rate";
  return result;
}

// The naive arm re-runs a fixed-horizon testing protocol on everything seen
// so far after each batch and stops at the first p <= alpha.  For the t-test
// variant two protocol flavors are reported side by side: "fold" holds out a
// fresh stratified test fold of the accumulated pool each round (the same
// split protocol the batch baselines use), "pool" tests all accumulated
// samples directly.  The fold flavor re-randomizes every round, which is what
// makes repeated looks so destructive; the pool flavor's looks are strongly
// correlated and inflate much more slowly.
ExperimentResult run_inflation_demo(const ExperimentConfig& config) {
  check_common(config);
  if (config.data.kind != DataSpec::Kind::kGaussianMean ||
      config.data.mean0 != config.data.mean1) {
    throw ConfigError("inflation-demo measures type-I error on a null Gaussian pair");
  }
  const bool ttest_variant = config.inflation_variant == "gaussian_ttest";
  if (!ttest_variant && config.inflation_variant != "lc2st") {
    throw ConfigError("unknown inflation variant: " + config.inflation_variant);
  }
  if (ttest_variant &&
      (config.min_batch < 15 || config.max_batch < config.min_batch)) {
    throw ConfigError("the t-test variant needs min_batch >= 15 and max >= min");
  }
  const Ec2stConfig base = resolve_ec2st(config);
  const BaselineConfig bcfg = resolve_baselines(config);
  const std::size_t R = config.replications;
  const std::size_t M = config.max_batches;

  std::vector<std::optional<std::size_t>> fold_stop(R);
  std::vector<std::optional<std::size_t>> pool_stop(R);
  std::vector<std::optional<std::size_t>> ec2st_stop(R);
  std::vector<nlohmann::json> records(R);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const std::uint64_t stream_seed =
        derive_seed(config.master_seed, r, SeedRole::kStream);
    std::unique_ptr<BatchStream> stream;
    if (ttest_variant) {
      stream = stream_gaussian_variable_batches(config.data.mean0,
                                                config.data.mean1,
                                                config.min_batch,
                                                config.max_batch, stream_seed);
    } else {
      stream = make_stream(config.data, config.batch_size, config.balanced,
                           stream_seed);
    }

    Ec2stConfig cfg = base;
    cfg.train.seed = derive_seed(config.master_seed, r, SeedRole::kTrain);
    Ec2stState state = ec2st_init(cfg);
    const std::uint64_t retest_seed =
        derive_seed(config.master_seed, r, SeedRole::kPool);

    Dataset pool;
    nlohmann::json rounds = nlohmann::json::array();
    for (std::size_t m = 1; m <= M; ++m) {
      std::optional<Dataset> batch = stream->next();
      if (!batch) throw ConfigError("the generator ran out of batches");
      pool.append(*batch);
      const std::uint64_t round_seed = derive_seed(retest_seed, m, SeedRole::kSplit);

      double p_fold = 1.0;
      double p_pool = 1.0;
      if (ttest_variant) {
        std::vector<double> all0, all1;
        for (Eigen::Index i = 0; i < pool.n(); ++i) {
          (pool.y[i] == 0 ? all0 : all1).push_back(pool.x(i, 0));
        }
        if (all0.size() >= 2 && all1.size() >= 2) {
          p_pool = welch_t_test(all0, all1).p_value;
        }
        const Dataset test_fold =
            stratified_split(pool, bcfg.split, round_seed).back();
        std::vector<double> f0, f1;
        for (Eigen::Index i = 0; i < test_fold.n(); ++i) {
          (test_fold.y[i] == 0 ? f0 : f1).push_back(test_fold.x(i, 0));
        }
        if (f0.size() >= 2 && f1.size() >= 2) {
          p_fold = welch_t_test(f0, f1).p_value;
        }
      } else {
        const Eigen::Index n1 = pool.ones();
        if (n1 >= 7 && pool.n() - n1 >= 7) {
          p_fold = run_baseline_suite(pool, bcfg, round_seed).l.p_value;
        }
      }
      if (!fold_stop[r] && p_fold <= config.alpha) fold_stop[r] = m;
      if (!pool_stop[r] && p_pool <= config.alpha) pool_stop[r] = m;

      // The anytime arm on the identical stream.
      if (!ec2st_stop[r]) {
        const Verdict v = ec2st_step(state, *batch, cfg);
        if (v.rejected) ec2st_stop[r] = m;
      }
      nlohmann::json round = {{"round", m},
                              {"n_total", static_cast<std::size_t>(pool.n())},
                              {"p_fold", p_fold}};
      if (ttest_variant) round["p_pool"] = p_pool;
      rounds.push_back(std::move(round));
    }
    records[r] = {
        {"replication", r},
        {"seed", stream_seed},
        {"naive_first_rejection",
         fold_stop[r] ? nlohmann::json(*fold_stop[r]) : nlohmann::json()},
        {"ec2st_first_rejection",
         ec2st_stop[r] ? nlohmann::json(*ec2st_stop[r]) : nlohmann::json()},
        {"rounds", std::move(rounds)}};
  });

  std::vector<std::size_t> budgets(M);
  std::iota(budgets.begin(), budgets.end(), std::size_t{1});
  ExperimentResult result;
  result.curves.push_back(curve_from_ordinals(
      ttest_variant ? "naive-ttest[fold]" : "naive-lc2st", budgets, 1.0,
      fold_stop));
  if (ttest_variant) {
    result.curves.push_back(
        curve_from_ordinals("naive-ttest[pool]", budgets, 1.0, pool_stop));
  }
  result.curves.push_back(curve_from_ordinals("ec2st", budgets, 1.0, ec2st_stop));
  result.runs = std::move(records);
  result.summary["experiment"] = "inflation-demo";
  result.summary["variant"] = config.inflation_variant;
  result.summary["final_naive_rate"] = result.curves[0].rates.back();
  if (ttest_variant) {
    result.summary["final_naive_pool_rate"] = result.curves[1].rates.back();
  }
  result.summary["final_ec2st_rate"] = result.curves.back().rates.back();
  result.summary["x_label"] = "rounds";
  result.summary["y_label"] = "cumulative type-I error";
  return result;
}

ExperimentResult run_growth_rate(const ExperimentConfig& config) {
  check_common(config);
  if (config.data.kind != DataSpec::Kind::kDiscreteToy) {
    throw ConfigError("growth-rate runs on the discrete toy generator");
  }
  if (config.method.kind != MethodSpec::Kind::kEc2st) {
    throw ConfigError("growth-rate is an ec2st experiment");
  }
  Ec2stConfig base = resolve_ec2st(config);
  base.continue_after_rejection = true;
  const double exact_mi = mutual_information(config.data.toy);
  const std::size_t R = config.replications;
  const std::size_t M = config.max_batches;

  std::vector<double> per_sample(R);
  std::vector<std::vector<double>> running(R);
  std::vector<nlohmann::json> records(R);
  parallel_for(R, config.jobs, [&](std::size_t r) {
    const std::uint64_t stream_seed =
        derive_seed(config.master_seed, r, SeedRole::kStream);
    Ec2stConfig cfg = base;
    cfg.train.seed = derive_seed(config.master_seed, r, SeedRole::kTrain);
    auto stream = make_stream(config.data, config.batch_size, config.balanced,
                              stream_seed);
    std::vector<StepLog> logs;
    const Verdict v = ec2st_run(*stream, cfg, M, &logs);
    per_sample[r] = v.final_log_e / static_cast<double>(v.samples_consumed);
    running[r].reserve(logs.size());
    for (const StepLog& s : logs) running[r].push_back(s.log_running);
    records[r] = {{"replication", r},
                  {"seed", stream_seed},
                  {"final_log_e", v.final_log_e},
                  {"samples", v.samples_consumed},
                  {"per_sample", per_sample[r]}};
  });

  ExperimentResult result;
  RejectionCurve curve;  // here: mean per-sample log e-value vs samples seen
  curve.method = config.method.oracle ? "growth[oracle]" : "growth[mlp]";
  for (std::size_t m = 1; m <= M; ++m) {
    double acc = 0.0;
    for (std::size_t r = 0; r < R; ++r) acc += running[r][m - 1];
    const double samples =
        static_cast<double>(m) * static_cast<double>(config.batch_size);
    curve.sample_sizes.push_back(samples);
    curve.rates.push_back(acc / static_cast<double>(R) / samples);
    curve.stderrs.push_back(0.0);
  }
  result.curves.push_back(std::move(curve));
  result.runs = std::move(records);

  const double estimate = mean(per_sample);
  const double sd = R >= 2 ? sample_stddev(per_sample) : 0.0;
  const double stderr_ = sd / std::sqrt(static_cast<double>(R));
  result.summary["experiment"] = "growth-rate";
  result.summary["per_sample_estimate"] = estimate;
  result.summary["per_sample_std"] = sd;
  result.summary["per_sample_stderr"] = stderr_;
  result.summary["exact_mi"] = exact_mi;
  result.summary["bound_satisfied"] = estimate <= exact_mi + 3.0 * stderr_;
  result.summary["x_label"] = "samples";
  result.summary["y_label"] = "per-sample log e-value";
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::kType1: return run_type1(config);
    case ExperimentKind::kPower: return run_power(config);
    case ExperimentKind::kStoppingTime: return run_stopping_time(config);
    case ExperimentKind::kLambdaAblation: return run_lambda_ablation(config);
    case ExperimentKind::kBatchOrder: return run_batch_order(config);
    case ExperimentKind::kInflationDemo: return run_inflation_demo(config);
    case ExperimentKind::kGrowthRate: return run_growth_rate(config);
  }
  throw std::logic_error("unknown experiment kind");
}

namespace {

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void emit_reports(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write config.json");
    out << config_to_json(config).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "rates.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write rates.csv");
    out << "method,sample_size,rate,stderr\n";
    for (const RejectionCurve& c : result.curves) {
      for (std::size_t i = 0; i < c.sample_sizes.size(); ++i) {
        out << c.method << "," << fmt17(c.sample_sizes[i]) << ","
            << fmt17(c.rates[i]) << "," << fmt17(c.stderrs[i]) << "\n";
      }
    }
  }
  {
    std::ofstream out(dir / "runs.jsonl", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write runs.jsonl");
    for (const nlohmann::json& record : result.runs) {
      out << record.dump() << "\n";
    }
  }
  {
    nlohmann::json summary = result.summary;
    summary["alpha"] = config.alpha;
    summary["replications"] = config.replications;
    summary["seed"] = config.master_seed;
    std::ofstream out(dir / "summary.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << summary.dump(2) << "\n";
  }
  if (config.svg && !result.curves.empty()) {
    SvgChart chart;
    chart.title = experiment_kind_name(config.kind);
    chart.x_label = result.summary.value("x_label", "samples");
    chart.y_label = result.summary.value("y_label", "rate");
    if (config.kind != ExperimentKind::kGrowthRate) {
      chart.has_hline = true;
      chart.hline = config.alpha;
    }
    for (const RejectionCurve& c : result.curves) {
      chart.series.push_back({c.method, c.sample_sizes, c.rates});
    }
    std::ofstream out(dir / "curves.svg", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write curves.svg");
    out << render_line_chart(chart);
  }
}

namespace {

void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + context);
    }
  }
}

DataSpec parse_data(const nlohmann::json& j) {
  DataSpec data;
  const std::string kind = j.value("kind", "");
  if (kind == "blob") {
    check_keys(j, {"kind", "spacing", "sigma0", "sigma1"}, "data");
    data.kind = DataSpec::Kind::kBlob;
    data.blob.spacing = j.value("spacing", data.blob.spacing);
    data.blob.sigma0 = j.value("sigma0", data.blob.sigma0);
    data.blob.sigma1 = j.value("sigma1", data.blob.sigma1);
  } else if (kind == "gaussian_mean") {
    check_keys(j, {"kind", "mean0", "mean1"}, "data");
    data.kind = DataSpec::Kind::kGaussianMean;
    data.mean0 = j.value("mean0", 0.0);
    data.mean1 = j.value("mean1", 0.0);
  } else if (kind == "discrete_toy") {
    check_keys(j, {"kind", "joint"}, "data");
    data.kind = DataSpec::Kind::kDiscreteToy;
    if (!j.contains("joint")) throw ConfigError("discrete_toy needs a joint table");
    const auto& rows = j["joint"];
    data.toy.joint.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != 2) {
        throw ConfigError("each joint table row needs two entries");
      }
      data.toy.joint(static_cast<Eigen::Index>(i), 0) = rows[i][0].get<double>();
      data.toy.joint(static_cast<Eigen::Index>(i), 1) = rows[i][1].get<double>();
    }
    data.toy.validate();
  } else if (kind == "csv") {
    check_keys(j, {"kind", "path", "label_column", "feature_columns"}, "data");
    data.kind = DataSpec::Kind::kCsv;
    if (!j.contains("path")) throw ConfigError("csv data needs a path");
    data.csv_path = j["path"].get<std::string>();
    data.csv_schema.label_column =
        j.value("label_column", data.csv_schema.label_column);
    if (j.contains("feature_columns")) {
      for (const auto& c : j["feature_columns"]) {
        data.csv_schema.feature_columns.push_back(c.get<std::string>());
      }
    }
  } else {
    throw ConfigError("data.kind must be blob, gaussian_mean, discrete_toy or csv");
  }
  return data;
}

MlpSpec parse_mlp(const nlohmann::json& j) {
  check_keys(j, {"hidden", "layer_norm"}, "mlp");
  MlpSpec spec;
  if (j.contains("hidden")) {
    spec.hidden.clear();
    for (const auto& h : j["hidden"]) {
      spec.hidden.push_back(h.get<Eigen::Index>());
    }
  }
  spec.layer_norm = j.value("layer_norm", spec.layer_norm);
  spec.validate();
  return spec;
}

TrainConfig parse_train(const nlohmann::json& j) {
  check_keys(j,
             {"learning_rate", "max_epochs", "patience", "minibatch_size",
              "full_batch_limit"},
             "train");
  TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.patience = j.value("patience", t.patience);
  t.minibatch_size = j.value("minibatch_size", t.minibatch_size);
  t.full_batch_limit = j.value("full_batch_limit", t.full_batch_limit);
  t.validate();
  return t;
}

MethodSpec parse_method(const nlohmann::json& j) {
  MethodSpec method;
  const std::string kind = j.value("kind", "ec2st");
  if (kind == "ec2st") {
    check_keys(j,
               {"kind", "initial_lambda", "lambda_min", "lambda_max",
                "first_batch_split", "oracle", "mlp", "train"},
               "method");
    method.kind = MethodSpec::Kind::kEc2st;
    method.ec2st.initial_lambda =
        j.value("initial_lambda", method.ec2st.initial_lambda);
    method.ec2st.lambda_bounds.min =
        j.value("lambda_min", method.ec2st.lambda_bounds.min);
    method.ec2st.lambda_bounds.max =
        j.value("lambda_max", method.ec2st.lambda_bounds.max);
    if (j.contains("first_batch_split")) {
      const auto& split = j["first_batch_split"];
      if (split.size() != 2) {
        throw ConfigError("first_batch_split needs two fractions");
      }
      method.ec2st.first_batch_split = {split[0].get<double>(),
                                        split[1].get<double>()};
    }
    method.oracle = j.value("oracle", false);
    if (j.contains("mlp")) method.ec2st.mlp = parse_mlp(j["mlp"]);
    if (j.contains("train")) method.ec2st.train = parse_train(j["train"]);
  } else if (kind == "baselines") {
    check_keys(j, {"kind", "tests", "n_permutations", "bandwidth", "mlp", "train"},
               "method");
    method.kind = MethodSpec::Kind::kBaselines;
    if (j.contains("tests")) {
      method.baseline_tests.clear();
      for (const auto& t : j["tests"]) {
        method.baseline_tests.push_back(t.get<std::string>());
      }
      if (method.baseline_tests.empty()) {
        throw ConfigError("method.tests must not be empty");
      }
    }
    method.baselines.n_permutations =
        j.value("n_permutations", method.baselines.n_permutations);
    if (j.contains("bandwidth") && !j["bandwidth"].is_null()) {
      method.baselines.bandwidth = j["bandwidth"].get<double>();
    }
    if (j.contains("mlp")) method.baselines.mlp = parse_mlp(j["mlp"]);
    if (j.contains("train")) method.baselines.train = parse_train(j["train"]);
  } else if (kind == "mslrt") {
    check_keys(j, {"kind", "null", "null_mean"}, "method");
    method.kind = MethodSpec::Kind::kMslrt;
    method.mslrt_null = j.value("null", method.mslrt_null);
    method.mslrt_null_mean = j.value("null_mean", 0.0);
    if (method.mslrt_null != "singleton" && method.mslrt_null != "mean") {
      throw ConfigError("method.null must be singleton or mean");
    }
  } else {
    throw ConfigError("method.kind must be ec2st, baselines or mslrt");
  }
  return method;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         ExperimentKind kind) {
  check_keys(j,
             {"experiment", "alpha", "replications", "batch_size", "balanced",
              "max_batches", "grid_batches", "sample_sizes", "seed", "svg",
              "data", "method", "stopping", "lambda_ablation", "batch_order",
              "inflation"},
             "config");
  // Emitted configs carry their experiment name; refuse to run one under a
  // different subcommand.
  if (j.contains("experiment") &&
      j["experiment"].get<std::string>() != experiment_kind_name(kind)) {
    throw ConfigError("config is for experiment '" +
                      j["experiment"].get<std::string>() + "', not '" +
                      experiment_kind_name(kind) + "'");
  }
  ExperimentConfig config;
  config.kind = kind;
  config.alpha = j.value("alpha", config.alpha);
  config.replications = j.value("replications", config.replications);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.balanced = j.value("balanced", config.balanced);
  config.max_batches = j.value("max_batches", config.max_batches);
  config.master_seed = j.value("seed", config.master_seed);
  config.svg = j.value("svg", config.svg);
  if (j.contains("grid_batches")) {
    for (const auto& b : j["grid_batches"]) {
      config.grid_batches.push_back(b.get<std::size_t>());
    }
  }
  if (j.contains("sample_sizes")) {
    for (const auto& s : j["sample_sizes"]) {
      config.sample_sizes.push_back(s.get<Eigen::Index>());
    }
  }
  if (!j.contains("data")) throw ConfigError("config needs a data block");
  config.data = parse_data(j["data"]);
  if (j.contains("method")) {
    config.method = parse_method(j["method"]);
  }
  if (j.contains("stopping")) {
    check_keys(j["stopping"], {"batch_sizes", "max_samples"}, "stopping");
    if (j["stopping"].contains("batch_sizes")) {
      config.stopping_batch_sizes.clear();
      for (const auto& b : j["stopping"]["batch_sizes"]) {
        config.stopping_batch_sizes.push_back(b.get<Eigen::Index>());
      }
    }
    config.max_samples = j["stopping"].value("max_samples", config.max_samples);
  }
  if (j.contains("lambda_ablation")) {
    check_keys(j["lambda_ablation"], {"initial_lambdas"}, "lambda_ablation");
    if (j["lambda_ablation"].contains("initial_lambdas")) {
      config.initial_lambdas.clear();
      for (const auto& l : j["lambda_ablation"]["initial_lambdas"]) {
        config.initial_lambdas.push_back(l.get<double>());
      }
    }
  }
  if (j.contains("batch_order")) {
    check_keys(j["batch_order"], {"shuffles"}, "batch_order");
    config.order_shuffles =
        j["batch_order"].value("shuffles", config.order_shuffles);
  }
  if (j.contains("inflation")) {
    check_keys(j["inflation"], {"variant", "min_batch", "max_batch"}, "inflation");
    config.inflation_variant =
        j["inflation"].value("variant", config.inflation_variant);
    config.min_batch = j["inflation"].value("min_batch", config.min_batch);
    config.max_batch = j["inflation"].value("max_batch", config.max_batch);
  }
  return config;
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["experiment"] = experiment_kind_name(config.kind);
  j["alpha"] = config.alpha;
  j["replications"] = config.replications;
  j["batch_size"] = config.batch_size;
  j["balanced"] = config.balanced;
  j["max_batches"] = config.max_batches;
  j["seed"] = config.master_seed;
  j["svg"] = config.svg;
  if (!config.grid_batches.empty()) j["grid_batches"] = config.grid_batches;
  if (!config.sample_sizes.empty()) {
    j["sample_sizes"] = nlohmann::json::array();
    for (Eigen::Index s : config.sample_sizes) j["sample_sizes"].push_back(s);
  }

  switch (config.data.kind) {
    case DataSpec::Kind::kBlob:
      j["data"] = {{"kind", "blob"},
                   {"spacing", config.data.blob.spacing},
                   {"sigma0", config.data.blob.sigma0},
                   {"sigma1", config.data.blob.sigma1}};
      break;
    case DataSpec::Kind::kGaussianMean:
      j["data"] = {{"kind", "gaussian_mean"},
                   {"mean0", config.data.mean0},
                   {"mean1", config.data.mean1}};
      break;
    case DataSpec::Kind::kDiscreteToy: {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < config.data.toy.joint.rows(); ++i) {
        rows.push_back({config.data.toy.joint(i, 0), config.data.toy.joint(i, 1)});
      }
      j["data"] = {{"kind", "discrete_toy"}, {"joint", std::move(rows)}};
      break;
    }
    case DataSpec::Kind::kCsv:
      j["data"] = {{"kind", "csv"},
                   {"path", config.data.csv_path},
                   {"label_column", config.data.csv_schema.label_column}};
      if (!config.data.csv_schema.feature_columns.empty()) {
        j["data"]["feature_columns"] = config.data.csv_schema.feature_columns;
      }
      break;
  }

  switch (config.method.kind) {
    case MethodSpec::Kind::kEc2st:
      j["method"] = {
          {"kind", "ec2st"},
          {"initial_lambda", config.method.ec2st.initial_lambda},
          {"lambda_min", config.method.ec2st.lambda_bounds.min},
          {"lambda_max", config.method.ec2st.lambda_bounds.max},
          {"first_batch_split",
           {config.method.ec2st.first_batch_split.first,
            config.method.ec2st.first_batch_split.second}},
          {"oracle", config.method.oracle},
          {"mlp",
           {{"hidden", config.method.ec2st.mlp.hidden},
            {"layer_norm", config.method.ec2st.mlp.layer_norm}}},
          {"train",
           {{"learning_rate", config.method.ec2st.train.learning_rate},
            {"max_epochs", config.method.ec2st.train.max_epochs},
            {"patience", config.method.ec2st.train.patience},
            {"minibatch_size", config.method.ec2st.train.minibatch_size},
            {"full_batch_limit", config.method.ec2st.train.full_batch_limit}}}};
      break;
    case MethodSpec::Kind::kBaselines:
      j["method"] = {
          {"kind", "baselines"},
          {"tests", config.method.baseline_tests},
          {"n_permutations", config.method.baselines.n_permutations},
          {"mlp",
           {{"hidden", config.method.baselines.mlp.hidden},
            {"layer_norm", config.method.baselines.mlp.layer_norm}}},
          {"train",
           {{"learning_rate", config.method.baselines.train.learning_rate},
            {"max_epochs", config.method.baselines.train.max_epochs},
            {"patience", config.method.baselines.train.patience},
            {"minibatch_size", config.method.baselines.train.minibatch_size},
            {"full_batch_limit",
             config.method.baselines.train.full_batch_limit}}}};
      if (config.method.baselines.bandwidth) {
        j["method"]["bandwidth"] = *config.method.baselines.bandwidth;
      } else {
        j["method"]["bandwidth"] = nullptr;
      }
      break;
    case MethodSpec::Kind::kMslrt:
      j["method"] = {{"kind", "mslrt"},
                     {"null", config.method.mslrt_null},
                     {"null_mean", config.method.mslrt_null_mean}};
      break;
  }

  switch (config.kind) {
    case ExperimentKind::kStoppingTime: {
      nlohmann::json sizes = nlohmann::json::array();
      for (Eigen::Index b : config.stopping_batch_sizes) sizes.push_back(b);
      j["stopping"] = {{"batch_sizes", std::move(sizes)},
                       {"max_samples", config.max_samples}};
      break;
    }
    case ExperimentKind::kLambdaAblation:
      j["lambda_ablation"] = {{"initial_lambdas", config.initial_lambdas}};
      break;
    case ExperimentKind::kBatchOrder:
      j["batch_order"] = {{"shuffles", config.order_shuffles}};
      break;
    case ExperimentKind::kInflationDemo:
      j["inflation"] = {{"variant", config.inflation_variant},
                        {"min_batch", config.min_batch},
                        {"max_batch", config.max_batch}};
      break;
    default:
      break;
  }
  return j;
}

}  // namespace ec2st
