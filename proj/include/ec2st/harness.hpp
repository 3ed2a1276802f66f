#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ec2st/baselines.hpp"
#include "ec2st/data.hpp"
#include "ec2st/ec2st.hpp"
#include "ec2st/mslrt.hpp"

namespace ec2st {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  kType1,
  kPower,
  kStoppingTime,
  kLambdaAblation,
  kBatchOrder,
  kInflationDemo,
  kGrowthRate,
};

std::string experiment_kind_name(ExperimentKind kind);

struct DataSpec {
  enum class Kind { kBlob, kGaussianMean, kDiscreteToy, kCsv };
  Kind kind = Kind::kBlob;
  BlobConfig blob;
  double mean0 = 0.0;  // gaussian_mean
  double mean1 = 0.0;
  DiscreteToyConfig toy;
  std::string csv_path;
  CsvSchema csv_schema;

  // True when the generator provably satisfies the null (identical samples).
  // CSV data has no generator to inspect, so it is never "known".
  std::optional<bool> known_null() const;
};

struct MethodSpec {
  enum class Kind { kEc2st, kBaselines, kMslrt };
  Kind kind = Kind::kEc2st;

  // ec2st (alpha and seeds are filled in by the runner)
  Ec2stConfig ec2st;
  bool oracle = false;  // use the Bayes predictor of the generator

  // baselines
  BaselineConfig baselines;
  std::vector<std::string> baseline_tests{"sc2st", "lc2st", "mc2st"};

  // mslrt
  std::string mslrt_null = "singleton";  // "singleton" or "mean"
  double mslrt_null_mean = 0.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kType1;
  DataSpec data;
  MethodSpec method;

  double alpha = 0.05;
  std::size_t replications = 100;
  Eigen::Index batch_size = 90;
  bool balanced = true;
  std::size_t max_batches = 20;
  // Budgets (in batches) the anytime curve is reported at; empty = 1..max.
  std::vector<std::size_t> grid_batches;
  // Pooled sample sizes for the fixed-horizon baselines.
  std::vector<Eigen::Index> sample_sizes;

  // stopping-time
  std::vector<Eigen::Index> stopping_batch_sizes{8, 16, 32, 64, 128};
  std::size_t max_samples = 4000;

  // lambda-ablation
  std::vector<double> initial_lambdas{0.1, 0.3, 0.5, 0.7, 0.9};

  // batch-order
  std::size_t order_shuffles = 10;

  // inflation-demo
  std::string inflation_variant = "gaussian_ttest";  // or "lc2st"
  Eigen::Index min_batch = 32;
  Eigen::Index max_batch = 64;

  std::uint64_t master_seed = 20260818ull;
  int jobs = 1;
  bool svg = true;
};

struct RejectionCurve {
  std::string method;
  std::vector<double> sample_sizes;
  std::vector<double> rates;
  std::vector<double> stderrs;
};

struct ExperimentResult {
  std::vector<RejectionCurve> curves;
  std::vector<nlohmann::json> runs;  // one JSONL record per run
  nlohmann::json summary;
};

// Runs fn(0..n-1), each index exactly once, on up to `jobs` threads.  Writers
// must address results by index; the schedule never influences the bytes any
// experiment emits.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

ExperimentResult run_type1(const ExperimentConfig& config);
ExperimentResult run_power(const ExperimentConfig& config);
ExperimentResult run_stopping_time(const ExperimentConfig& config);
ExperimentResult run_lambda_ablation(const ExperimentConfig& config);
ExperimentResult run_batch_order(const ExperimentConfig& config);
ExperimentResult run_inflation_demo(const ExperimentConfig& config);
ExperimentResult run_growth_rate(const ExperimentConfig& config);

ExperimentResult run_experiment(const ExperimentConfig& config);

// Writes config.json, rates.csv, runs.jsonl, summary.json and (optionally)
// curves.svg into out_dir.  Identical config + master seed produce identical
// bytes regardless of jobs.
void emit_reports(const ExperimentResult& result, const ExperimentConfig& config,
                  const std::string& out_dir);

// JSON round-trip for experiment configs (the CLI surface).
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         ExperimentKind kind);
nlohmann::json config_to_json(const ExperimentConfig& config);

// The generator stream an experiment replication reads from.
std::unique_ptr<BatchStream> make_stream(const DataSpec& data,
                                         Eigen::Index batch_size, bool balanced,
                                         std::uint64_t seed);

// Balanced pooled dataset of `total` points from the generator (baselines).
Dataset make_pooled_dataset(const DataSpec& data, Eigen::Index total,
                            std::uint64_t seed);

// Bayes predictor P(y = 1 | x) of the generator, when it has a closed form.
std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> make_oracle(
    const DataSpec& data);

}  // namespace ec2st
