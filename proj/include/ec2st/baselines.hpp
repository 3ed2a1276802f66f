#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ec2st/data.hpp"
#include "ec2st/mlp.hpp"

namespace ec2st {

struct PermutationResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> permuted;
};

// Add-one permutation p-value: (1 + #{permuted >= observed}) / (B + 1).
double permutation_pvalue(double observed, std::span<const double> permuted);

// Accuracy-based test: predict 1 where the logit is positive, score accuracy
// on the held-out fold, and compare against label permutations.
PermutationResult sc2st(const MlpModel& model, const Dataset& test,
                        std::size_t n_permutations, std::uint64_t seed);

// Logit-based test: absolute difference between the mean logit of the two
// groups, against label permutations.
PermutationResult lc2st(const MlpModel& model, const Dataset& test,
                        std::size_t n_permutations, std::uint64_t seed);

// Biased MMD^2 with a Gaussian kernel exp(-d^2 / (2 h^2)).
double mmd2_biased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                   double bandwidth);

// Median pairwise Euclidean distance over all rows.
double median_heuristic_bandwidth(const Eigen::MatrixXd& pooled);

// Kernel test on embeddings (in the pipeline: the classifier's last hidden
// layer).  bandwidth = nullopt picks the median heuristic on the pooled rows.
PermutationResult mc2st(const Eigen::MatrixXd& features0,
                        const Eigen::MatrixXd& features1,
                        std::optional<double> bandwidth,
                        std::size_t n_permutations, std::uint64_t seed);

struct BaselineConfig {
  MlpSpec mlp;
  TrainConfig train;
  std::size_t n_permutations = 500;
  std::optional<double> bandwidth;  // M-C2ST; nullopt = median heuristic
  // Train / validation / test fractions (the 5:1:1 split).
  std::vector<double> split{5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0};
};

struct BaselineSuiteResult {
  PermutationResult s;
  PermutationResult l;
  PermutationResult m;
};

// Shared protocol for the three batch baselines: one stratified 5:1:1 split,
// one classifier fit, three permutation tests on the test fold.
BaselineSuiteResult run_baseline_suite(const Dataset& pooled,
                                       const BaselineConfig& config,
                                       std::uint64_t seed);

}  // namespace ec2st
