#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "ec2st/data.hpp"
#include "ec2st/numerics.hpp"

using namespace ec2st;

namespace {

// Rows of one class as a sorted list of coordinate tuples, so pooled
// relabelings can be compared as multisets.
std::vector<std::vector<double>> class_rows(const Dataset& data, int label) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.y[i] != label) continue;
    std::vector<double> row(static_cast<std::size_t>(data.dim()));
    for (Eigen::Index f = 0; f < data.dim(); ++f) {
      row[static_cast<std::size_t>(f)] = data.x(i, f);
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<std::vector<double>> matrix_rows(const Eigen::MatrixXd& x) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      row[static_cast<std::size_t>(f)] = x(i, f);
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

bool datasets_identical(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n() || a.dim() != b.dim()) return false;
  for (Eigen::Index i = 0; i < a.n(); ++i) {
    if (a.y[i] != b.y[i]) return false;
    for (Eigen::Index f = 0; f < a.dim(); ++f) {
      if (a.x(i, f) != b.x(i, f)) return false;
    }
  }
  return true;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("dataset basics: append, subset, validate") {
  Dataset a;
  a.x.resize(2, 3);
  a.x << 1, 2, 3, 4, 5, 6;
  a.y.resize(2);
  a.y << 0, 1;

  Dataset b;
  b.x.resize(1, 3);
  b.x << 7, 8, 9;
  b.y.resize(1);
  b.y << 1;

  Dataset c = a;
  c.append(b);
  CHECK(c.n() == 3);
  CHECK(c.x(2, 0) == 7.0);
  CHECK(c.y[2] == 1);
  CHECK(c.ones() == 2);

  Dataset empty;
  Dataset d = empty;
  d.append(a);
  CHECK(datasets_identical(d, a));

  Dataset wide;
  wide.x.resize(1, 2);
  wide.x << 0, 0;
  wide.y.resize(1);
  wide.y << 0;
  CHECK_THROWS_AS(c.append(wide), std::invalid_argument);

  Dataset sub = c.subset({2, 0});
  CHECK(sub.n() == 2);
  CHECK(sub.x(0, 2) == 9.0);
  CHECK(sub.x(1, 0) == 1.0);
  CHECK_THROWS_AS(c.subset({3}), std::out_of_range);
  CHECK_THROWS_AS(c.subset({-1}), std::out_of_range);

  Dataset bad_label = a;
  bad_label.y[0] = 2;
  CHECK_THROWS_AS(bad_label.validate(), std::invalid_argument);
  Dataset bad_shape = a;
  bad_shape.y.resize(1);
  CHECK_THROWS_AS(bad_shape.validate(), std::invalid_argument);
  Dataset bad_value = a;
  bad_value.x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad_value.validate(), std::invalid_argument);
}

TEST_CASE("blob samples live around the 3x3 grid") {
  BlobConfig config;
  config.spacing = 5.0;
  config.sigma0 = 0.2;
  config.sigma1 = 0.2;

  const Eigen::Index n = 20000;
  Eigen::MatrixXd x = blob_sample(config, n, 0, 11);
  CHECK(x.rows() == n);
  CHECK(x.cols() == 2);

  // Mixture mean is the grid centre (spacing, spacing).
  const Eigen::RowVector2d mean = x.colwise().mean();
  CHECK(std::fabs(mean[0] - config.spacing) < 0.15);
  CHECK(std::fabs(mean[1] - config.spacing) < 0.15);

  // With sigma << spacing every point sits near one of the nine modes.
  std::map<std::pair<int, int>, int> mode_counts;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int mx = static_cast<int>(std::lround(x(i, 0) / config.spacing));
    const int my = static_cast<int>(std::lround(x(i, 1) / config.spacing));
    CHECK(mx >= 0);
    CHECK(mx <= 2);
    CHECK(my >= 0);
    CHECK(my <= 2);
    const double dx = x(i, 0) - config.spacing * mx;
    const double dy = x(i, 1) - config.spacing * my;
    CHECK(std::fabs(dx) < 6.0 * config.sigma0);
    CHECK(std::fabs(dy) < 6.0 * config.sigma0);
    ++mode_counts[{mx, my}];
  }
  CHECK(mode_counts.size() == 9);
  for (const auto& [mode, count] : mode_counts) {
    // Uniform over nine modes: expect n/9 up to ~5 sigma of binomial noise.
    CHECK(std::fabs(count - n / 9.0) < 5.0 * std::sqrt(n * (1.0 / 9) * (8.0 / 9)));
  }

  CHECK(blob_sample(config, 0, 0, 1).rows() == 0);
  CHECK_THROWS_AS(blob_sample(config, -1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(blob_sample(config, 1, 2, 1), std::invalid_argument);
  BlobConfig bad = config;
  bad.sigma1 = 0.0;
  CHECK_THROWS_AS(blob_sample(bad, 1, 0, 1), std::invalid_argument);
}

TEST_CASE("pool_and_label keeps every row and tags its class") {
  Eigen::MatrixXd x0(3, 2);
  x0 << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd x1(2, 2);
  x1 << 7, 8, 9, 10;

  Dataset pooled = pool_and_label(x0, x1, 99);
  pooled.validate();
  CHECK(pooled.n() == 5);
  CHECK(pooled.ones() == 2);
  CHECK(class_rows(pooled, 0) == matrix_rows(x0));
  CHECK(class_rows(pooled, 1) == matrix_rows(x1));

  // The interleaving is a seeded shuffle: same seed, same order.
  Dataset again = pool_and_label(x0, x1, 99);
  CHECK(datasets_identical(pooled, again));

  Eigen::MatrixXd narrow(1, 1);
  narrow << 0;
  CHECK_THROWS_AS(pool_and_label(x0, narrow, 1), std::invalid_argument);
}

TEST_CASE("stratified_split deals floor counts plus early remainders") {
  Dataset data;
  const Eigen::Index n = 70;
  data.x.resize(n, 1);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.x(i, 0) = static_cast<double>(i);
    data.y[i] = (i < 30) ? 0 : 1;  // 30 zeros, 40 ones
  }

  const std::vector<double> fractions = {5.0 / 7, 1.0 / 7, 1.0 / 7};
  const auto parts = stratified_split(data, fractions, 17);
  REQUIRE(parts.size() == 3);

  // Label 0: floor(30*5/7)=21, floor(30/7)=4, 4 -> 29, remainder 1 to part 0.
  // Label 1: floor(40*5/7)=28, floor(40/7)=5, 5 -> 38, remainder to parts 0,1.
  CHECK(parts[0].n() == 22 + 29);
  CHECK(parts[1].n() == 4 + 6);
  CHECK(parts[2].n() == 4 + 5);
  CHECK(parts[0].ones() == 29);
  CHECK(parts[1].ones() == 6);
  CHECK(parts[2].ones() == 5);

  // Disjoint cover: the x values are unique row ids.
  std::set<double> seen;
  for (const auto& part : parts) {
    for (Eigen::Index i = 0; i < part.n(); ++i) {
      CHECK(seen.insert(part.x(i, 0)).second);
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>(n));

  // Determinism in the seed.
  const auto parts2 = stratified_split(data, fractions, 17);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    CHECK(datasets_identical(parts[p], parts2[p]));
  }
  const auto parts3 = stratified_split(data, fractions, 18);
  bool any_differs = false;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (!datasets_identical(parts[p], parts3[p])) any_differs = true;
  }
  CHECK(any_differs);

  CHECK_THROWS_AS(stratified_split(data, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_split(data, {0.5, 0.6}, 1), std::invalid_argument);
  CHECK_THROWS_AS(stratified_split(data, {1.0, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("generator streams: batch k is a pure function of k") {
  BlobConfig config;

  auto sequential = stream_blob_batches(config, 12, true, 42);
  std::vector<Dataset> batches;
  for (int k = 0; k < 3; ++k) {
    auto b = sequential->next();
    REQUIRE(b.has_value());
    batches.push_back(*b);
  }

  // A fresh stream repositioned with seek() reproduces the same batch.
  auto resumed = stream_blob_batches(config, 12, true, 42);
  resumed->seek(2);
  auto third = resumed->next();
  REQUIRE(third.has_value());
  CHECK(datasets_identical(*third, batches[2]));
  CHECK(resumed->cursor() == 3);

  // Balanced batches carry exactly half of each label.
  for (const auto& b : batches) {
    CHECK(b.n() == 12);
    CHECK(b.ones() == 6);
  }
  CHECK_THROWS_AS(stream_blob_batches(config, 11, true, 1), std::invalid_argument);
  CHECK_THROWS_AS(stream_blob_batches(config, 1, false, 1), std::invalid_argument);

  // Unbalanced batches label by fair coin; counts move with the seed.
  auto coin = stream_blob_batches(config, 40, false, 7);
  auto cb = coin->next();
  REQUIRE(cb.has_value());
  CHECK(cb->n() == 40);
  CHECK(cb->ones() > 0);
  CHECK(cb->ones() < 40);
}

TEST_CASE("gaussian streams separate classes by the configured means") {
  auto stream = stream_gaussian_batches(0.0, 30.0, 400, true, 5);
  auto batch = stream->next();
  REQUIRE(batch.has_value());
  CHECK(batch->n() == 400);
  CHECK(batch->dim() == 1);
  CHECK(batch->ones() == 200);
  double sum0 = 0.0, sum1 = 0.0;
  for (Eigen::Index i = 0; i < batch->n(); ++i) {
    (batch->y[i] == 0 ? sum0 : sum1) += batch->x(i, 0);
  }
  CHECK(std::fabs(sum0 / 200.0 - 0.0) < 0.5);
  CHECK(std::fabs(sum1 / 200.0 - 30.0) < 0.5);

  auto variable = stream_gaussian_variable_batches(0.0, 0.0, 15, 32, 9);
  for (int k = 0; k < 20; ++k) {
    auto vb = variable->next();
    REQUIRE(vb.has_value());
    CHECK(vb->n() >= 30);
    CHECK(vb->n() <= 64);
    CHECK(vb->ones() >= 15);
    CHECK(vb->n() - vb->ones() >= 15);
  }
  CHECK_THROWS_AS(stream_gaussian_variable_batches(0, 0, 0, 4, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(stream_gaussian_variable_batches(0, 0, 8, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("dataset streams batch a fixed pool") {
  Dataset data;
  const Eigen::Index n = 10;
  data.x.resize(n, 1);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.x(i, 0) = static_cast<double>(i);
    data.y[i] = static_cast<int>(i % 2);
  }

  SUBCASE("shuffled batches cover distinct rows and drop the remainder") {
    auto stream = stream_dataset_batches(data, 3, 123);
    std::set<double> seen;
    int batches = 0;
    while (auto b = stream->next()) {
      CHECK(b->n() == 3);
      for (Eigen::Index i = 0; i < b->n(); ++i) {
        CHECK(seen.insert(b->x(i, 0)).second);
      }
      ++batches;
    }
    CHECK(batches == 3);  // 10 / 3 full batches; one row is never served
    CHECK(seen.size() == 9);
  }

  SUBCASE("ordered batches follow the requested permutation") {
    auto stream = stream_dataset_batches_ordered(data, 2, {4, 0, 2, 1, 3});
    auto first = stream->next();
    REQUIRE(first.has_value());
    CHECK(first->x(0, 0) == 8.0);  // batch 4 = rows 8,9
    CHECK(first->x(1, 0) == 9.0);
    auto second = stream->next();
    REQUIRE(second.has_value());
    CHECK(second->x(0, 0) == 0.0);
    int remaining = 0;
    while (stream->next()) ++remaining;
    CHECK(remaining == 3);

    CHECK_THROWS_AS(stream_dataset_batches_ordered(data, 2, {0, 1, 2, 3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(stream_dataset_batches_ordered(data, 2, {0, 1, 2, 3, 3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(stream_dataset_batches_ordered(data, 2, {0, 1, 2, 3, 5}),
                    std::invalid_argument);
  }
}

TEST_CASE("discrete toy: table sampling, oracle, mutual information") {
  DiscreteToyConfig config;
  config.joint.resize(2, 2);
  config.joint << 0.3, 0.1, 0.2, 0.4;

  auto toy = discrete_toy_stream(config, 5000, 31);
  auto batch = toy.stream->next();
  REQUIRE(batch.has_value());
  CHECK(batch->n() == 5000);
  std::map<std::pair<int, int>, int> counts;
  for (Eigen::Index i = 0; i < batch->n(); ++i) {
    const double v = batch->x(i, 0);
    CHECK((v == 0.0 || v == 1.0));
    ++counts[{static_cast<int>(v), batch->y[i]}];
  }
  // Cell frequencies track the table within ~5 sigma.
  for (Eigen::Index r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const double p = config.joint(r, c);
      const double expect = 5000.0 * p;
      const double slack = 5.0 * std::sqrt(5000.0 * p * (1 - p));
      CHECK(std::fabs(counts[{static_cast<int>(r), c}] - expect) < slack);
    }
  }

  // Oracle conditional class-1 probabilities straight from the table.
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  const Eigen::VectorXd probs = discrete_toy_oracle_probs(config, x);
  CHECK(probs[0] == doctest::Approx(0.1 / 0.4).epsilon(1e-15));
  CHECK(probs[1] == doctest::Approx(0.4 / 0.6).epsilon(1e-15));

  // Degenerate cells clamp instead of producing log(0).
  DiscreteToyConfig diag;
  diag.joint.resize(2, 2);
  diag.joint << 0.5, 0.0, 0.0, 0.5;
  const Eigen::VectorXd clamped = discrete_toy_oracle_probs(diag, x);
  CHECK(clamped[0] == kProbClamp);
  CHECK(clamped[1] == 1.0 - kProbClamp);

  Eigen::MatrixXd off_grid(1, 1);
  off_grid << 0.5;
  CHECK_THROWS_AS(discrete_toy_oracle_probs(config, off_grid),
                  std::invalid_argument);
  Eigen::MatrixXd out_of_range(1, 1);
  out_of_range << 2.0;
  CHECK_THROWS_AS(discrete_toy_oracle_probs(config, out_of_range),
                  std::invalid_argument);

  // Mutual information: zero for a product table, log 2 for the diagonal.
  DiscreteToyConfig product;
  product.joint.resize(2, 2);
  product.joint << 0.25, 0.25, 0.25, 0.25;
  CHECK(mutual_information(product) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mutual_information(diag) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(toy.exact_mi == doctest::Approx(mutual_information(config)).epsilon(1e-15));

  DiscreteToyConfig bad;
  bad.joint.resize(2, 2);
  bad.joint << 0.5, 0.5, 0.5, -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  DiscreteToyConfig short_sum;
  short_sum.joint.resize(1, 2);
  short_sum.joint << 0.4, 0.4;
  CHECK_THROWS_AS(short_sum.validate(), std::invalid_argument);
}

TEST_CASE("csv round trip preserves every bit") {
  Dataset data;
  data.x.resize(4, 2);
  data.x << 0.1, -3.5e300, 1e-17, 3.141592653589793, -0.0, 7.0,
      6.02214076e23, -1.0;
  data.y.resize(4);
  data.y << 0, 1, 1, 0;

  TempFile tmp("ec2st_roundtrip.csv");
  CsvSchema schema;
  schema.feature_columns = {"a", "b"};
  schema.label_column = "cls";
  save_csv(tmp.path, data, schema);

  const Dataset back = load_csv(tmp.path, schema);
  CHECK(datasets_identical(back, data));

  // Default schema: all non-label columns are features, in header order.
  CsvSchema label_only;
  label_only.label_column = "cls";
  const Dataset inferred = load_csv(tmp.path, label_only);
  CHECK(datasets_identical(inferred, data));

  // Column selection can reorder and drop features.
  CsvSchema reordered;
  reordered.feature_columns = {"b"};
  reordered.label_column = "cls";
  const Dataset only_b = load_csv(tmp.path, reordered);
  CHECK(only_b.dim() == 1);
  CHECK(only_b.x(0, 0) == -3.5e300);
}

TEST_CASE("csv loader reports structural problems with line numbers") {
  TempFile tmp("ec2st_bad.csv");
  auto write = [&](const std::string& text) {
    std::ofstream out(tmp.path, std::ios::binary);
    out << text;
  };

  write("a,b,y\n1,2,0\n3,oops,1\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, {}),
                       doctest::Contains("line 3"), std::runtime_error);

  write("a,b,y\n1,2,0\n3,4\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, {}),
                       doctest::Contains("line 3"), std::runtime_error);

  write("a,b,y\n1,2,2\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, {}),
                       doctest::Contains("label must be 0 or 1"),
                       std::runtime_error);

  write("a,b\n1,2\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, {}),
                       doctest::Contains("missing label column"),
                       std::runtime_error);

  write("a,b,y\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, {}),
                       doctest::Contains("no data rows"), std::runtime_error);

  write("");
  CHECK_THROWS_AS(load_csv(tmp.path, {}), std::runtime_error);

  CsvSchema missing_feature;
  missing_feature.feature_columns = {"zzz"};
  write("a,b,y\n1,2,0\n");
  CHECK_THROWS_WITH_AS(load_csv(tmp.path, missing_feature),
                       doctest::Contains("missing feature column"),
                       std::runtime_error);

  CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv", {}), std::runtime_error);
}
