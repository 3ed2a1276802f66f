#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "ec2st/data.hpp"
#include "ec2st/ec2st.hpp"
#include "ec2st/numerics.hpp"

using namespace ec2st;

namespace {

// Features encode the label (x = 0 or 1); the oracle reads it back with the
// given confidence.  Lets the sequential plumbing be tested with exactly
// predictable e-values and no classifier in the loop.
Ec2stConfig oracle_config(double confidence) {
  Ec2stConfig config;
  config.oracle_probs = [confidence](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd probs(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      probs[i] = x(i, 0) > 0.5 ? confidence : 1.0 - confidence;
    }
    return probs;
  };
  return config;
}

// Balanced batch whose single feature equals the label, alternating 0,1,0,1.
Dataset label_batch(Eigen::Index n) {
  Dataset batch;
  batch.x.resize(n, 1);
  batch.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    batch.y[i] = static_cast<int>(i % 2);
    batch.x(i, 0) = static_cast<double>(i % 2);
  }
  return batch;
}

}  // namespace

TEST_CASE("batch_log_evalue scores labels against the batch Bernoulli fit") {
  Eigen::VectorXd probs(3);
  probs << 0.8, 0.3, 0.9;
  Eigen::VectorXi labels(3);
  labels << 1, 0, 1;

  const BatchEValue be = batch_log_evalue(probs, labels);
  CHECK(be.q_hat == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(be.points.size() == 3);

  const double q = 2.0 / 3.0;
  CHECK(be.points[0].log_p_alt == doctest::Approx(std::log(0.8)).epsilon(1e-15));
  CHECK(be.points[1].log_p_alt == doctest::Approx(std::log1p(-0.3)).epsilon(1e-15));
  CHECK(be.points[0].log_p_null == doctest::Approx(std::log(q)).epsilon(1e-15));
  CHECK(be.points[1].log_p_null == doctest::Approx(std::log1p(-q)).epsilon(1e-15));
  for (const auto& p : be.points) {
    CHECK(p.log_e == doctest::Approx(p.log_p_alt - p.log_p_null).epsilon(1e-15));
  }
  const double expected = (std::log(0.8) - std::log(q)) +
                          (std::log1p(-0.3) - std::log1p(-q)) +
                          (std::log(0.9) - std::log(q));
  CHECK(be.log_e == doctest::Approx(expected).epsilon(1e-14));

  // A classifier that matches the marginal exactly contributes nothing.
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.5);
  Eigen::VectorXi balanced(4);
  balanced << 0, 1, 0, 1;
  const BatchEValue neutral = batch_log_evalue(flat, balanced);
  CHECK(neutral.log_e == 0.0);
  for (const auto& p : neutral.points) CHECK(p.log_e == 0.0);

  // One-sided batches fit q_hat at the boundary without blowing up.
  Eigen::VectorXi all_ones(3);
  all_ones << 1, 1, 1;
  Eigen::VectorXd p9 = Eigen::VectorXd::Constant(3, 0.9);
  const BatchEValue ones = batch_log_evalue(p9, all_ones);
  CHECK(ones.q_hat == 1.0);
  CHECK(ones.log_e == doctest::Approx(3.0 * std::log(0.9)).epsilon(1e-15));

  Eigen::VectorXd short_probs(2);
  short_probs << 0.5, 0.5;
  CHECK_THROWS_AS(batch_log_evalue(short_probs, labels), std::invalid_argument);
  CHECK_THROWS_AS(batch_log_evalue(Eigen::VectorXd(), Eigen::VectorXi()),
                  std::invalid_argument);
  Eigen::VectorXd at_edge(3);
  at_edge << 0.8, 1.0, 0.9;
  CHECK_THROWS_AS(batch_log_evalue(at_edge, labels), std::invalid_argument);
  at_edge << 0.8, 0.0, 0.9;
  CHECK_THROWS_AS(batch_log_evalue(at_edge, labels), std::invalid_argument);
}

TEST_CASE("point_bounded_log_evalue is exact at e = 1 and stable at extremes") {
  // An uninformative point must contribute exactly zero, else neutral
  // evidence would drift over thousands of batches.
  CHECK(point_bounded_log_evalue(0.0, 0.37) == 0.0);
  CHECK(point_bounded_log_evalue(0.0, 1e-6) == 0.0);

  // Degenerate mixture weights.
  CHECK(point_bounded_log_evalue(2.5, 0.0) == 2.5);
  CHECK(point_bounded_log_evalue(2.5, 1.0) == 0.0);

  // Generic value agrees with the closed form.
  const double lam = 0.25;
  CHECK(point_bounded_log_evalue(std::log(2.0), lam) ==
        doctest::Approx(std::log(lam + (1 - lam) * 2.0)).epsilon(1e-15));

  // e far below 1 saturates at log(lambda)...
  CHECK(point_bounded_log_evalue(-1e9, 0.5) == std::log1p(-0.5));
  // ...and e past the exp() overflow point switches to log-sum-exp.
  CHECK(point_bounded_log_evalue(5000.0, lam) ==
        log_sum_exp(std::log(lam), std::log1p(-lam) + 5000.0));

  CHECK_THROWS_AS(
      point_bounded_log_evalue(std::numeric_limits<double>::quiet_NaN(), 0.5),
      std::invalid_argument);
  CHECK_THROWS_AS(point_bounded_log_evalue(1.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(point_bounded_log_evalue(1.0, 1.1), std::invalid_argument);
}

TEST_CASE("bounded_log_evalue sums point mixtures and respects the floor") {
  std::vector<PointEValue> points(4);
  points[0].log_e = 1.3;
  points[1].log_e = -2.0;
  points[2].log_e = 0.0;
  points[3].log_e = 800.0;

  const double lam = 0.4;
  double expected = 0.0;
  for (const auto& p : points) {
    expected += point_bounded_log_evalue(p.log_e, lam);
  }
  CHECK(bounded_log_evalue(points, lam) == expected);

  // Every per-point mixture is at least log(lambda): one batch can never
  // destroy more than n * log(lambda) of evidence.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> wild(-900.0, 900.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double log_e = wild(rng);
    const double v = point_bounded_log_evalue(log_e, lam);
    CHECK(v >= std::log(lam) - 1e-12);
    // Monotone in the evidence: never exceeds the unmixed value when e >= 1,
    // never falls below it when e <= 1.
    if (log_e >= 0.0) {
      CHECK(v <= log_e + 1e-12);
      CHECK(v >= -1e-12);
    } else {
      CHECK(v >= log_e - 1e-12);
      CHECK(v <= 1e-12);
    }
  }

  CHECK_THROWS_AS(bounded_log_evalue({}, 0.5), std::invalid_argument);
}

TEST_CASE("optimize_lambda: boundary cases and tie-breaks") {
  LambdaBounds bounds;

  // All evidence in favour (e > 1): the best mixture is as little shrinkage
  // as allowed.
  std::vector<PointEValue> up(5);
  for (auto& p : up) p.log_e = 0.7;
  CHECK(optimize_lambda(up, bounds) == bounds.min);

  // All evidence against (e < 1): full shrinkage.
  std::vector<PointEValue> down(5);
  for (auto& p : down) p.log_e = -0.7;
  CHECK(optimize_lambda(down, bounds) == bounds.max);

  // Perfectly neutral batch: flat objective, ties resolve low.
  std::vector<PointEValue> flat(5);
  for (auto& p : flat) p.log_e = 0.0;
  CHECK(optimize_lambda(flat, bounds) == bounds.min);

  // Custom bounds clamp the same way.
  LambdaBounds narrow{0.3, 0.7};
  CHECK(optimize_lambda(up, narrow) == 0.3);
  CHECK(optimize_lambda(down, narrow) == 0.7);

  CHECK_THROWS_AS(optimize_lambda({}, bounds), std::invalid_argument);
  CHECK_THROWS_AS(optimize_lambda(up, LambdaBounds{0.0, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(optimize_lambda(up, LambdaBounds{0.6, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(optimize_lambda(up, LambdaBounds{0.5, 1.0}),
                  std::invalid_argument);
}

TEST_CASE("optimize_lambda agrees with a dense grid search") {
  LambdaBounds bounds;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.1, 1.2);

  for (int instance = 0; instance < 10; ++instance) {
    std::vector<PointEValue> points(30);
    for (auto& p : points) p.log_e = noise(rng);

    const double lam = optimize_lambda(points, bounds);

    const int grid = 20000;
    double best_lambda = bounds.min;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int g = 0; g <= grid; ++g) {
      const double l =
          bounds.min + (bounds.max - bounds.min) * static_cast<double>(g) / grid;
      const double value = bounded_log_evalue(points, l);
      if (value > best_value) {
        best_value = value;
        best_lambda = l;
      }
    }

    CHECK(std::fabs(lam - best_lambda) <= 2e-4);
    // The bisection optimum is never worse than the best grid point.
    CHECK(bounded_log_evalue(points, lam) >= best_value - 1e-9);
  }
}

TEST_CASE("config validation") {
  Ec2stConfig config = oracle_config(0.6);
  CHECK_NOTHROW(config.validate());

  // With an oracle in place the classifier settings are never consulted.
  config.train.learning_rate = -1.0;
  CHECK_NOTHROW(config.validate());
  config.oracle_probs = nullptr;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);

  Ec2stConfig bad = oracle_config(0.6);
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = oracle_config(0.6);
  bad.initial_lambda = 1e-9;  // below the default lower bound
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = oracle_config(0.6);
  bad.first_batch_split = {0.5, 0.4};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const Ec2stState state = ec2st_init(oracle_config(0.6));
  CHECK(state.lambda == 0.5);
  CHECK(state.process.alpha == 0.05);
  CHECK(state.batches_seen == 0);
  CHECK(state.train_set.empty());
  CHECK(state.val_set.empty());
}

TEST_CASE("first batch only seeds the pools") {
  const Ec2stConfig config = oracle_config(0.9);
  Ec2stState state = ec2st_init(config);

  StepLog log;
  const Verdict v = ec2st_step(state, label_batch(10), config, &log);
  CHECK_FALSE(v.rejected);
  CHECK(v.final_log_e == 0.0);
  CHECK(v.samples_consumed == 10);
  CHECK(log.batch == 1);
  CHECK(log.batch_size == 10);
  CHECK(log.log_increment == 0.0);
  CHECK(log.log_running == 0.0);
  CHECK(log.lambda == 0.5);
  CHECK(log.lambda_next == 0.5);

  // 80/20 split of ten points, stratified over the two labels.
  CHECK(state.train_set.n() == 8);
  CHECK(state.val_set.n() == 2);
  CHECK(state.train_set.ones() == 4);
  CHECK(state.val_set.ones() == 1);

  Dataset tiny = label_batch(2);
  Ec2stState fresh = ec2st_init(config);
  CHECK_THROWS_AS(ec2st_step(fresh, tiny, config), std::invalid_argument);

  Ec2stState empty_state = ec2st_init(config);
  CHECK_THROWS_AS(ec2st_step(empty_state, Dataset{}, config),
                  std::invalid_argument);
}

TEST_CASE("a confident oracle rejects on the second batch and freezes state") {
  const Ec2stConfig config = oracle_config(0.9);
  Ec2stState state = ec2st_init(config);

  ec2st_step(state, label_batch(10), config);

  // Every point carries e = 1.8 (alt 0.9 vs null q_hat = 0.5); at the initial
  // lambda of 0.5 the batch contributes 10 * log(1.4), which crosses
  // -log(0.05) in one shot.
  StepLog log;
  const Verdict v = ec2st_step(state, label_batch(10), config, &log);
  CHECK(v.rejected);
  REQUIRE(v.at_batch.has_value());
  CHECK(*v.at_batch == 1);  // 0-based: the second update
  CHECK(v.samples_consumed == 20);
  CHECK(log.log_increment ==
        doctest::Approx(10.0 * std::log(1.4)).epsilon(1e-12));
  CHECK(log.rejected);
  // The rejecting step does not fold or re-tune.
  CHECK(log.lambda_next == 0.5);
  CHECK(state.train_set.n() == 8);
  CHECK(state.val_set.n() == 2);

  // Further batches only extend the ledger; the decision and pools are fixed.
  const Verdict after = ec2st_step(state, label_batch(10), config);
  CHECK(after.rejected);
  CHECK(*after.at_batch == 1);
  CHECK(after.samples_consumed == 30);
  CHECK(state.lambda == 0.5);
  CHECK(state.train_set.n() == 8);
  CHECK(state.process.size() == 3);
}

TEST_CASE("a mild oracle folds batches and adapts lambda") {
  const Ec2stConfig config = oracle_config(0.6);
  Ec2stState state = ec2st_init(config);

  const Dataset batch = label_batch(10);
  ec2st_step(state, batch, config);

  // Batch 2: per-point e = 1.2 > 1, so the tuned lambda drops to the floor.
  StepLog log;
  Verdict v = ec2st_step(state, batch, config, &log);
  CHECK_FALSE(v.rejected);
  CHECK(log.lambda == 0.5);
  CHECK(log.lambda_next == config.lambda_bounds.min);
  CHECK(log.log_increment == doctest::Approx(10.0 * std::log(1.1)).epsilon(1e-12));
  CHECK(state.train_set.n() == 10);  // batch 1 reunited
  CHECK(state.val_set.n() == 10);    // batch 2 parked for validation

  // Batch 3 is scored at the floor lambda, nearly the raw product.
  v = ec2st_step(state, batch, config, &log);
  CHECK_FALSE(v.rejected);
  const double lam = config.lambda_bounds.min;
  CHECK(log.log_increment ==
        doctest::Approx(10.0 * std::log1p((1.0 - lam) * 0.2)).epsilon(1e-9));
  CHECK(state.train_set.n() == 20);

  // Batch 4 pushes the running product over -log(alpha).
  v = ec2st_step(state, batch, config, &log);
  CHECK(v.rejected);
  REQUIRE(v.at_batch.has_value());
  CHECK(*v.at_batch == 3);
  CHECK(state.train_set.n() == 20);  // frozen at the rejecting step

  // Width changes are rejected once the pools are seeded.
  Dataset wide;
  wide.x.resize(4, 2);
  wide.x.setZero();
  wide.y.resize(4);
  wide.y << 0, 1, 0, 1;
  CHECK_THROWS_AS(ec2st_step(state, wide, config), std::invalid_argument);
}

TEST_CASE("continue_after_rejection keeps folding without moving the ledger") {
  Ec2stConfig config = oracle_config(0.9);
  config.continue_after_rejection = true;
  Ec2stState state = ec2st_init(config);

  const Dataset batch = label_batch(10);
  ec2st_step(state, batch, config);
  Verdict v = ec2st_step(state, batch, config);  // rejects here
  CHECK(v.rejected);
  CHECK(*v.at_batch == 1);
  CHECK(state.train_set.n() == 10);  // fold still happened
  CHECK(state.val_set.n() == 10);
  CHECK(state.lambda == config.lambda_bounds.min);

  StepLog log;
  v = ec2st_step(state, batch, config, &log);
  CHECK(*v.at_batch == 1);  // ledger pinned to the first crossing
  CHECK(state.train_set.n() == 20);
  CHECK(state.process.size() == 3);
  // Scored at the floor lambda now, so the increment is nearly raw evidence.
  CHECK(log.log_increment > 10.0 * std::log(1.4));
}

TEST_CASE("ec2st_run stops at rejection or at the batch budget") {
  const Ec2stConfig config = oracle_config(0.9);

  Dataset pool = label_batch(60);
  std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};

  auto stream = stream_dataset_batches_ordered(pool, 10, order);
  std::vector<StepLog> logs;
  const Verdict v = ec2st_run(*stream, config, 6, &logs);
  CHECK(v.rejected);
  CHECK(*v.at_batch == 1);
  CHECK(v.samples_consumed == 20);
  CHECK(logs.size() == 2);  // stopped as soon as the test rejected

  auto capped = stream_dataset_batches_ordered(pool, 10, order);
  const Verdict limited = ec2st_run(*capped, config, 1);
  CHECK_FALSE(limited.rejected);
  CHECK(limited.samples_consumed == 10);

  // An exhausted stream ends the run gracefully.
  auto short_stream = stream_dataset_batches_ordered(label_batch(20), 10, {0, 1});
  const Verdict exhausted = ec2st_run(*short_stream, oracle_config(0.6), 100);
  CHECK_FALSE(exhausted.rejected);
  CHECK(exhausted.samples_consumed == 20);
}

TEST_CASE("checkpoint round trip resumes bit-for-bit") {
  // Real classifier in the loop: distinguishable blobs, six batches.
  Ec2stConfig config;
  config.continue_after_rejection = true;
  config.mlp.hidden = {3};
  config.train.max_epochs = 30;
  config.train.patience = 5;
  config.train.learning_rate = 1e-3;
  config.train.seed = 7;

  BlobConfig blob;
  blob.sigma0 = 1.0;
  blob.sigma1 = 3.0;
  std::vector<Dataset> batches;
  {
    auto stream = stream_blob_batches(blob, 20, true, 99);
    for (int k = 0; k < 6; ++k) batches.push_back(*stream->next());
  }

  Ec2stState straight = ec2st_init(config);
  for (const auto& b : batches) ec2st_step(straight, b, config);

  Ec2stState first_half = ec2st_init(config);
  for (int k = 0; k < 3; ++k) ec2st_step(first_half, batches[k], config);

  const auto path =
      (std::filesystem::temp_directory_path() / "ec2st_ckpt.json").string();
  save_checkpoint(first_half, path);
  Ec2stState resumed = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(resumed.batches_seen == 3);
  for (int k = 3; k < 6; ++k) ec2st_step(resumed, batches[k], config);

  // Identical bits everywhere: pools, lambda, ledger, model weights.
  CHECK(state_to_json(resumed) == state_to_json(straight));
}

TEST_CASE("checkpoint schema problems are rejected") {
  CHECK_THROWS_WITH_AS(state_from_json("not json"),
                       doctest::Contains("malformed"), std::runtime_error);
  CHECK_THROWS_WITH_AS(state_from_json("{}"),
                       doctest::Contains("format"), std::runtime_error);

  const Ec2stConfig config = oracle_config(0.6);
  Ec2stState state = ec2st_init(config);
  ec2st_step(state, label_batch(10), config);
  const std::string good = state_to_json(state);

  nlohmann::json doctored = nlohmann::json::parse(good);
  doctored["version"] = 2;
  CHECK_THROWS_WITH_AS(state_from_json(doctored.dump()),
                       doctest::Contains("version"), std::runtime_error);

  doctored = nlohmann::json::parse(good);
  doctored["process"]["rejected_at"] = 0;  // ledger contradicts increments
  CHECK_THROWS_WITH_AS(state_from_json(doctored.dump()),
                       doctest::Contains("inconsistent"), std::runtime_error);

  doctored = nlohmann::json::parse(good);
  doctored["train_set"]["y"].push_back(1);
  CHECK_THROWS_WITH_AS(state_from_json(doctored.dump()),
                       doctest::Contains("disagree"), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"),
                  std::runtime_error);
}
