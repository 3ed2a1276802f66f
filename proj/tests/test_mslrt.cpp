#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "ec2st/data.hpp"
#include "ec2st/ec2st.hpp"
#include "ec2st/mslrt.hpp"
#include "ec2st/stats.hpp"

using namespace ec2st;

TEST_CASE("isotropic gaussian density matches the closed form") {
  Eigen::VectorXd mu(2);
  mu << 1.0, 2.0;
  const IsotropicGaussian density(mu);

  Eigen::VectorXd x(2);
  x << 0.0, 0.0;
  const double log_two_pi = 1.8378770664093453;
  CHECK(density.log_density(x) ==
        doctest::Approx(-0.5 * 5.0 - log_two_pi).epsilon(1e-15));

  // The mode carries only the normalizing constant.
  CHECK(density.log_density(mu) == doctest::Approx(-log_two_pi).epsilon(1e-15));

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(density.log_density(wrong), std::invalid_argument);
}

TEST_CASE("learner and null families fit the mean they claim") {
  Eigen::MatrixXd history(3, 2);
  history << 1, 2, 3, 4, 5, 6;

  const GaussianMeanLearner learner;
  const auto alt = learner.fit(history);
  const auto* fitted = dynamic_cast<const IsotropicGaussian*>(alt.get());
  REQUIRE(fitted != nullptr);
  CHECK(fitted->mean()[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(fitted->mean()[1] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS_AS(learner.fit(Eigen::MatrixXd(0, 2)), std::invalid_argument);

  Eigen::VectorXd mu(2);
  mu << -1.0, 7.0;
  const SingletonGaussianNull singleton(mu);
  const auto pinned = singleton.mle(history);
  const auto* pinned_g = dynamic_cast<const IsotropicGaussian*>(pinned.get());
  REQUIRE(pinned_g != nullptr);
  CHECK(pinned_g->mean() == mu);  // the batch is ignored
  CHECK_THROWS_AS(singleton.mle(Eigen::MatrixXd(2, 3)), std::invalid_argument);

  const GaussianMeanFamily family;
  const auto best = family.mle(history);
  const auto* best_g = dynamic_cast<const IsotropicGaussian*>(best.get());
  REQUIRE(best_g != nullptr);
  CHECK(best_g->mean()[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(family.mle(Eigen::MatrixXd(0, 1)), std::invalid_argument);
}

TEST_CASE("split likelihood ratio against the per-batch MLE") {
  Eigen::VectorXd alt_mean(1);
  alt_mean << 0.5;
  const IsotropicGaussian alt(alt_mean);
  const GaussianMeanFamily family;

  Eigen::MatrixXd batch(3, 1);
  batch << 0.0, 1.0, 2.0;
  // Batch MLE is the mean 1.0; the 2*pi terms cancel in the ratio:
  // -0.5 * [(0.25 + 0.25 + 2.25) - (1 + 0 + 1)] = -0.375.
  CHECK(msplit_batch_log_evalue(alt, family, batch) ==
        doctest::Approx(-0.375).epsilon(1e-12));

  // Against a singleton null the ratio can be positive.
  Eigen::VectorXd zero(1);
  zero << 0.0;
  const SingletonGaussianNull singleton(zero);
  Eigen::MatrixXd near_half(2, 1);
  near_half << 0.5, 0.5;
  // log e = sum 0.5 * [x^2 - (x - 0.5)^2] = sum (0.5 x - 0.125) = 0.25.
  CHECK(msplit_batch_log_evalue(alt, singleton, near_half) ==
        doctest::Approx(0.25).epsilon(1e-12));

  CHECK_THROWS_AS(msplit_batch_log_evalue(alt, family, Eigen::MatrixXd(0, 1)),
                  std::invalid_argument);
}

TEST_CASE("composite-null ratios never exceed one when the alt is in-family") {
  // The per-batch MLE maximizes the null likelihood over the family, so any
  // fixed in-family alternative can only do worse: log e <= 0, whatever the
  // data.  This is what makes the composite construction an e-variable.
  const GaussianMeanFamily family;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd mu(2);
    mu << noise(rng), noise(rng);
    const IsotropicGaussian alt(mu);
    Eigen::MatrixXd batch(4, 2);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      batch(i / 2, i % 2) = noise(rng);
    }
    CHECK(msplit_batch_log_evalue(alt, family, batch) <= 1e-12);
  }
}

TEST_CASE("split e-values against a singleton null average to at most one") {
  // Under the null the e-variable has expectation exactly 1 whatever the
  // (history-measurable) alternative; the sample mean stays within Monte
  // Carlo noise of it.
  Eigen::VectorXd zero(1);
  zero << 0.0;
  const SingletonGaussianNull null(zero);
  const GaussianMeanLearner learner;

  std::mt19937_64 rng(402);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Eigen::MatrixXd history(20, 1);
  for (Eigen::Index i = 0; i < history.rows(); ++i) history(i, 0) = std_normal(rng);
  const auto alt = learner.fit(history);

  const int reps = 2000;
  std::vector<double> evalues(reps);
  for (int r = 0; r < reps; ++r) {
    Eigen::MatrixXd batch(5, 1);
    for (Eigen::Index i = 0; i < batch.rows(); ++i) batch(i, 0) = std_normal(rng);
    evalues[static_cast<std::size_t>(r)] =
        std::exp(msplit_batch_log_evalue(*alt, null, batch));
  }
  const double m = mean(evalues);
  const double se = std::sqrt(sample_variance(evalues) / reps);
  CHECK(m <= 1.0 + 3.0 * se);
}

TEST_CASE("msplit_run seeds on the first batch and stops on rejection") {
  Eigen::VectorXd zero(1);
  zero << 0.0;
  const SingletonGaussianNull null(zero);
  const GaussianMeanLearner learner;

  SUBCASE("a shifted stream rejects quickly") {
    // Both labels share the mean, so the pooled draw is N(0.8, 1) while the
    // null insists on N(0, 1).
    auto stream = stream_gaussian_batches(0.8, 0.8, 20, true, 5);
    std::vector<StepLog> logs;
    const Verdict v = msplit_run(*stream, learner, null, 0.05, 30, &logs);
    CHECK(v.rejected);
    REQUIRE(v.at_batch.has_value());
    CHECK(*v.at_batch <= 4);
    CHECK(logs.size() == *v.at_batch + 1);
    CHECK(logs[0].log_increment == 0.0);  // batch 1 only seeds the history
    CHECK(logs[0].log_running == 0.0);
    CHECK_FALSE(logs[0].rejected);
    CHECK(logs.back().rejected);
    CHECK(v.samples_consumed == logs.size() * 20);
  }

  SUBCASE("the batch budget is respected") {
    auto stream = stream_gaussian_batches(0.0, 0.0, 20, true, 6);
    const Verdict v = msplit_run(*stream, learner, null, 0.05, 1);
    CHECK_FALSE(v.rejected);
    CHECK(v.samples_consumed == 20);
  }

  SUBCASE("an exhausted stream ends the run") {
    Dataset pool;
    pool.x.resize(8, 1);
    pool.x.setConstant(0.1);
    pool.y.resize(8);
    for (Eigen::Index i = 0; i < 8; ++i) pool.y[i] = static_cast<int>(i % 2);
    auto stream = stream_dataset_batches_ordered(pool, 4, {0, 1});
    const Verdict v = msplit_run(*stream, learner, null, 0.05, 100);
    CHECK_FALSE(v.rejected);
    CHECK(v.samples_consumed == 8);
  }
}

TEST_CASE("pcit with a constant stratum is exactly the two-sample e-value") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::bernoulli_distribution coin(0.5);

  const Eigen::Index n = 100;
  Eigen::VectorXd probs(n);
  Eigen::VectorXi y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    probs[i] = unit(rng);
    y[i] = coin(rng) ? 1 : 0;
  }
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(n, 3.7);

  // Same Bernoulli fit, same per-point terms, same accumulation order:
  // the reduction is bit-for-bit, not merely close.
  CHECK(pcit_batch_log_evalue(probs, y, z) == batch_log_evalue(probs, y).log_e);
}

TEST_CASE("pcit strata decompose into per-stratum e-values") {
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::bernoulli_distribution coin(0.5);

  const Eigen::Index n = 60;
  Eigen::VectorXd probs(n);
  Eigen::VectorXi y(n);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    probs[i] = unit(rng);
    y[i] = coin(rng) ? 1 : 0;
    z[i] = coin(rng) ? 1.0 : 0.0;
  }

  double per_stratum = 0.0;
  for (double stratum : {0.0, 1.0}) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (z[i] == stratum) rows.push_back(i);
    }
    Eigen::VectorXd ps(static_cast<Eigen::Index>(rows.size()));
    Eigen::VectorXi ys(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      ps[static_cast<Eigen::Index>(k)] = probs[rows[k]];
      ys[static_cast<Eigen::Index>(k)] = y[rows[k]];
    }
    per_stratum += batch_log_evalue(ps, ys).log_e;
  }

  CHECK(pcit_batch_log_evalue(probs, y, z) ==
        doctest::Approx(per_stratum).epsilon(1e-12));
}

TEST_CASE("pcit input validation") {
  Eigen::VectorXd probs(2);
  probs << 0.5, 0.5;
  Eigen::VectorXi y(2);
  y << 0, 1;
  Eigen::VectorXd z(2);
  z << 0.0, 0.0;

  Eigen::VectorXd short_z(1);
  short_z << 0.0;
  CHECK_THROWS_AS(pcit_batch_log_evalue(probs, y, short_z),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      pcit_batch_log_evalue(Eigen::VectorXd(), Eigen::VectorXi(), Eigen::VectorXd()),
      std::invalid_argument);

  Eigen::VectorXd edge = probs;
  edge[0] = 1.0;
  CHECK_THROWS_AS(pcit_batch_log_evalue(edge, y, z), std::invalid_argument);

  Eigen::VectorXi bad = y;
  bad[0] = 2;
  CHECK_THROWS_AS(pcit_batch_log_evalue(probs, bad, z), std::invalid_argument);
}
