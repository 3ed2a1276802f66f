#include "ec2st/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ec2st/numerics.hpp"
#include "ec2st/rng.hpp"

namespace ec2st {

Eigen::Index Dataset::ones() const {
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) c += (y[i] == 1);
  return c;
}

void Dataset::append(const Dataset& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  if (other.dim() != dim()) {
    throw std::invalid_argument("appending datasets of different widths");
  }
  const Eigen::Index n0 = n();
  x.conservativeResize(n0 + other.n(), Eigen::NoChange);
  y.conservativeResize(n0 + other.n());
  x.bottomRows(other.n()) = other.x;
  y.tail(other.n()) = other.y;
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), dim());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n()) {
      throw std::out_of_range("dataset row index out of range");
    }
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    out.y[static_cast<Eigen::Index>(i)] = y[rows[i]];
  }
  return out;
}

void Dataset::validate() const {
  if (x.rows() != y.size()) {
    throw std::invalid_argument("dataset rows and labels disagree");
  }
  if (!x.allFinite()) {
    throw std::invalid_argument("dataset features must be finite");
  }
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw std::invalid_argument("dataset labels must be 0 or 1");
    }
  }
}

// One draw from the blob mixture: uniform mode on the 3x3 grid, then
// isotropic Gaussian noise at the class scale.
static Eigen::Vector2d blob_row(const BlobConfig& config, int cls,
                                std::mt19937_64& rng) {
  std::uniform_int_distribution<int> mode(0, 8);
  std::normal_distribution<double> noise(0.0, cls == 0 ? config.sigma0
                                                       : config.sigma1);
  const int m = mode(rng);
  Eigen::Vector2d v;
  v[0] = config.spacing * static_cast<double>(m % 3) + noise(rng);
  v[1] = config.spacing * static_cast<double>(m / 3) + noise(rng);
  return v;
}

static void check_blob(const BlobConfig& config) {
  if (!(config.spacing > 0.0) || !(config.sigma0 > 0.0) ||
      !(config.sigma1 > 0.0)) {
    throw std::invalid_argument("blob spacing and noise scales must be > 0");
  }
}

Eigen::MatrixXd blob_sample(const BlobConfig& config, Eigen::Index n, int cls,
                            std::uint64_t seed) {
  check_blob(config);
  if (n < 0) throw std::invalid_argument("negative sample size");
  if (cls != 0 && cls != 1) throw std::invalid_argument("class must be 0 or 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = blob_row(config, cls, rng);
  return out;
}

Dataset pool_and_label(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1,
                       std::uint64_t seed) {
  if (x0.cols() != x1.cols()) {
    throw std::invalid_argument("pooled samples must share a width");
  }
  const Eigen::Index n0 = x0.rows();
  const Eigen::Index n = n0 + x1.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset out;
  out.x.resize(n, x0.cols());
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    if (src < n0) {
      out.x.row(i) = x0.row(src);
      out.y[i] = 0;
    } else {
      out.x.row(i) = x1.row(src - n0);
      out.y[i] = 1;
    }
  }
  return out;
}

std::vector<Dataset> stratified_split(const Dataset& data,
                                      const std::vector<double>& fractions,
                                      std::uint64_t seed) {
  data.validate();
  if (fractions.empty()) {
    throw std::invalid_argument("stratified_split needs at least one part");
  }
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be > 0");
    total += f;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }

  // Per-label index pools, shuffled, then dealt to the parts: floor counts
  // first, remainders to the earliest parts.
  std::vector<std::vector<Eigen::Index>> pools(2);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    pools[static_cast<std::size_t>(data.y[i])].push_back(i);
  }
  std::vector<std::vector<Eigen::Index>> parts(fractions.size());
  for (std::size_t label = 0; label < 2; ++label) {
    auto& pool = pools[label];
    std::mt19937_64 rng(derive_seed(seed, label, SeedRole::kSplit));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n = pool.size();
    std::vector<std::size_t> counts(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
      counts[p] = static_cast<std::size_t>(
          std::floor(fractions[p] * static_cast<double>(n)));
      assigned += counts[p];
    }
    for (std::size_t p = 0; assigned < n; p = (p + 1) % counts.size()) {
      ++counts[p];
      ++assigned;
    }
    std::size_t k = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
      for (std::size_t j = 0; j < counts[p]; ++j) parts[p].push_back(pool[k++]);
    }
  }

  std::vector<Dataset> out;
  out.reserve(fractions.size());
  for (std::size_t p = 0; p < fractions.size(); ++p) {
    std::mt19937_64 rng(derive_seed(seed, 16 + p, SeedRole::kSplit));
    std::shuffle(parts[p].begin(), parts[p].end(), rng);
    out.push_back(data.subset(parts[p]));
  }
  return out;
}

namespace {

// Stream whose batch k is produced by a pure function of k.
class GeneratorStream : public BatchStream {
 public:
  using BatchFn = std::function<std::optional<Dataset>(std::size_t)>;
  explicit GeneratorStream(BatchFn fn) : fn_(std::move(fn)) {}

  std::optional<Dataset> next() override {
    auto batch = fn_(cursor_);
    if (batch) ++cursor_;
    return batch;
  }

 private:
  BatchFn fn_;
};

}  // namespace

std::unique_ptr<BatchStream> stream_blob_batches(const BlobConfig& config,
                                                 Eigen::Index batch_size,
                                                 bool balanced,
                                                 std::uint64_t seed) {
  check_blob(config);
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (balanced && batch_size % 2 != 0) {
    throw std::invalid_argument("balanced batches need an even batch size");
  }
  return std::make_unique<GeneratorStream>(
      [config, batch_size, balanced, seed](std::size_t k) -> std::optional<Dataset> {
        const std::uint64_t bs = derive_seed(seed, k, SeedRole::kBatch);
        if (balanced) {
          const Eigen::Index half = batch_size / 2;
          Eigen::MatrixXd x0 =
              blob_sample(config, half, 0, derive_seed(bs, 0, SeedRole::kStream));
          Eigen::MatrixXd x1 =
              blob_sample(config, half, 1, derive_seed(bs, 1, SeedRole::kStream));
          return pool_and_label(x0, x1, derive_seed(bs, 2, SeedRole::kPool));
        }
        std::mt19937_64 rng(bs);
        std::bernoulli_distribution coin(0.5);
        Dataset out;
        out.x.resize(batch_size, 2);
        out.y.resize(batch_size);
        for (Eigen::Index i = 0; i < batch_size; ++i) {
          const int cls = coin(rng) ? 1 : 0;
          out.x.row(i) = blob_row(config, cls, rng);
          out.y[i] = cls;
        }
        return out;
      });
}

static std::unique_ptr<BatchStream> gaussian_stream_impl(
    double mean0, double mean1, Eigen::Index batch_size, bool balanced,
    std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (balanced && batch_size % 2 != 0) {
    throw std::invalid_argument("balanced batches need an even batch size");
  }
  return std::make_unique<GeneratorStream>(
      [mean0, mean1, batch_size, balanced, seed](std::size_t k) -> std::optional<Dataset> {
        std::mt19937_64 rng(derive_seed(seed, k, SeedRole::kBatch));
        std::normal_distribution<double> noise(0.0, 1.0);
        std::bernoulli_distribution coin(0.5);
        Dataset out;
        out.x.resize(batch_size, 1);
        out.y.resize(batch_size);
        for (Eigen::Index i = 0; i < batch_size; ++i) {
          const int cls = balanced ? (i % 2 == 1 ? 1 : 0) : (coin(rng) ? 1 : 0);
          out.x(i, 0) = (cls == 0 ? mean0 : mean1) + noise(rng);
          out.y[i] = cls;
        }
        return out;
      });
}

std::unique_ptr<BatchStream> stream_gaussian_batches(double mean0, double mean1,
                                                     Eigen::Index batch_size,
                                                     bool balanced,
                                                     std::uint64_t seed) {
  return gaussian_stream_impl(mean0, mean1, batch_size, balanced, seed);
}

std::unique_ptr<BatchStream> stream_gaussian_variable_batches(
    double mean0, double mean1, Eigen::Index min_batch, Eigen::Index max_batch,
    std::uint64_t seed) {
  if (min_batch < 1 || max_batch < min_batch) {
    throw std::invalid_argument("need 1 <= min_batch <= max_batch");
  }
  return std::make_unique<GeneratorStream>(
      [mean0, mean1, min_batch, max_batch, seed](std::size_t k) -> std::optional<Dataset> {
        std::mt19937_64 rng(derive_seed(seed, k, SeedRole::kBatch));
        std::uniform_int_distribution<Eigen::Index> size_draw(min_batch, max_batch);
        std::normal_distribution<double> noise(0.0, 1.0);
        const Eigen::Index n0 = size_draw(rng);
        const Eigen::Index n1 = size_draw(rng);
        Eigen::MatrixXd x0(n0, 1), x1(n1, 1);
        for (Eigen::Index i = 0; i < n0; ++i) x0(i, 0) = mean0 + noise(rng);
        for (Eigen::Index i = 0; i < n1; ++i) x1(i, 0) = mean1 + noise(rng);
        return pool_and_label(
            x0, x1, derive_seed(derive_seed(seed, k, SeedRole::kBatch), 0,
                                SeedRole::kPool));
      });
}

namespace {

class DatasetStream : public BatchStream {
 public:
  DatasetStream(Dataset data, Eigen::Index batch_size,
                std::vector<std::size_t> order)
      : data_(std::move(data)), batch_size_(batch_size), order_(std::move(order)) {}

  std::optional<Dataset> next() override {
    if (cursor_ >= order_.size()) return std::nullopt;
    const Eigen::Index start =
        static_cast<Eigen::Index>(order_[cursor_]) * batch_size_;
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(batch_size_));
    std::iota(rows.begin(), rows.end(), start);
    ++cursor_;
    return data_.subset(rows);
  }

 private:
  Dataset data_;
  Eigen::Index batch_size_;
  std::vector<std::size_t> order_;
};

}  // namespace

std::unique_ptr<BatchStream> stream_dataset_batches(Dataset data,
                                                    Eigen::Index batch_size,
                                                    std::uint64_t seed) {
  data.validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.n()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(seed, 0, SeedRole::kShuffle));
  std::shuffle(order.begin(), order.end(), rng);
  Dataset shuffled = data.subset(order);

  const std::size_t n_batches =
      static_cast<std::size_t>(shuffled.n() / batch_size);
  std::vector<std::size_t> batch_order(n_batches);
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
  return std::make_unique<DatasetStream>(std::move(shuffled), batch_size,
                                         std::move(batch_order));
}

std::unique_ptr<BatchStream> stream_dataset_batches_ordered(
    Dataset data, Eigen::Index batch_size,
    const std::vector<std::size_t>& order) {
  data.validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const std::size_t n_batches = static_cast<std::size_t>(data.n() / batch_size);
  if (order.size() != n_batches) {
    throw std::invalid_argument("batch order must cover every full batch");
  }
  std::vector<bool> seen(n_batches, false);
  for (std::size_t b : order) {
    if (b >= n_batches || seen[b]) {
      throw std::invalid_argument("batch order must be a permutation");
    }
    seen[b] = true;
  }
  return std::make_unique<DatasetStream>(std::move(data), batch_size, order);
}

void DiscreteToyConfig::validate() const {
  if (joint.rows() < 1 || joint.cols() != 2) {
    throw std::invalid_argument("joint table must be |X| x 2");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double p = joint(i, j);
      if (!std::isfinite(p) || p < 0.0) {
        throw std::invalid_argument("joint table entries must be >= 0");
      }
      total += p;
    }
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("joint table must sum to 1");
  }
}

double mutual_information(const DiscreteToyConfig& config) {
  config.validate();
  const auto& j = config.joint;
  const Eigen::VectorXd px = j.rowwise().sum();
  const Eigen::RowVector2d py = j.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < j.rows(); ++i) {
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double p = j(i, c);
      if (p > 0.0) mi += p * std::log(p / (px[i] * py[c]));
    }
  }
  return mi;
}

DiscreteToyStream discrete_toy_stream(const DiscreteToyConfig& config,
                                      Eigen::Index batch_size,
                                      std::uint64_t seed) {
  config.validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const Eigen::MatrixXd joint = config.joint;
  DiscreteToyStream out;
  out.exact_mi = mutual_information(config);
  out.stream = std::make_unique<GeneratorStream>(
      [joint, batch_size, seed](std::size_t k) -> std::optional<Dataset> {
        std::mt19937_64 rng(derive_seed(seed, k, SeedRole::kBatch));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Dataset batch;
        batch.x.resize(batch_size, 1);
        batch.y.resize(batch_size);
        for (Eigen::Index i = 0; i < batch_size; ++i) {
          double u = unit(rng);
          Eigen::Index xi = 0;
          int yi = 0;
          double acc = 0.0;
          bool placed = false;
          for (Eigen::Index r = 0; r < joint.rows() && !placed; ++r) {
            for (Eigen::Index c = 0; c < 2 && !placed; ++c) {
              acc += joint(r, c);
              if (u <= acc) {
                xi = r;
                yi = static_cast<int>(c);
                placed = true;
              }
            }
          }
          if (!placed) {  // u landed in the rounding slack past the last cell
            xi = joint.rows() - 1;
            yi = 1;
          }
          batch.x(i, 0) = static_cast<double>(xi);
          batch.y[i] = yi;
        }
        return batch;
      });
  return out;
}

Eigen::VectorXd discrete_toy_oracle_probs(const DiscreteToyConfig& config,
                                          const Eigen::MatrixXd& x) {
  config.validate();
  if (x.cols() != 1) {
    throw std::invalid_argument("discrete toy features are one-dimensional");
  }
  Eigen::VectorXd probs(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double raw = x(i, 0);
    const auto idx = static_cast<Eigen::Index>(std::llround(raw));
    if (idx < 0 || idx >= config.joint.rows() ||
        std::fabs(raw - static_cast<double>(idx)) > 1e-9) {
      throw std::invalid_argument("feature is not a category of the table");
    }
    const double mass = config.joint(idx, 0) + config.joint(idx, 1);
    if (mass <= 0.0) {
      throw std::invalid_argument("feature has zero probability under the table");
    }
    const double p = config.joint(idx, 1) / mass;
    probs[i] = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
  }
  return probs;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

static double parse_field(const std::string& field, std::size_t line_no,
                          const std::string& column) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  // Allow trailing whitespace only.
  while (pos < field.size() &&
         std::isspace(static_cast<unsigned char>(field[pos]))) {
    ++pos;
  }
  if (pos != field.size() || field.empty()) {
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": non-numeric field in column '" + column + "'");
  }
  return value;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("csv file is empty: " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.label_column) label_idx = i;
  }
  if (label_idx == header.size()) {
    throw std::runtime_error("csv is missing label column '" +
                             schema.label_column + "'");
  }

  std::vector<std::size_t> feature_idx;
  std::vector<std::string> feature_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != label_idx) {
        feature_idx.push_back(i);
        feature_names.push_back(header[i]);
      }
    }
  } else {
    for (const std::string& name : schema.feature_columns) {
      std::size_t idx = header.size();
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) idx = i;
      }
      if (idx == header.size()) {
        throw std::runtime_error("csv is missing feature column '" + name + "'");
      }
      feature_idx.push_back(idx);
      feature_names.push_back(name);
    }
  }
  if (feature_idx.empty()) {
    throw std::runtime_error("csv has no feature columns: " + path);
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row(feature_idx.size());
    for (std::size_t f = 0; f < feature_idx.size(); ++f) {
      row[f] = parse_field(fields[feature_idx[f]], line_no, feature_names[f]);
    }
    const double raw_label =
        parse_field(fields[label_idx], line_no, schema.label_column);
    if (raw_label != 0.0 && raw_label != 1.0) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": label must be 0 or 1");
    }
    rows.push_back(std::move(row));
    labels.push_back(raw_label == 1.0 ? 1 : 0);
  }
  if (rows.empty()) {
    throw std::runtime_error("csv has a header but no data rows: " + path);
  }

  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(feature_idx.size()));
  out.y.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t f = 0; f < feature_idx.size(); ++f) {
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) =
          rows[i][f];
    }
    out.y[static_cast<Eigen::Index>(i)] = labels[i];
  }
  return out;
}

void save_csv(const std::string& path, const Dataset& data,
              const CsvSchema& schema) {
  data.validate();
  std::vector<std::string> names = schema.feature_columns;
  if (names.empty()) {
    for (Eigen::Index f = 0; f < data.dim(); ++f) {
      names.push_back("x" + std::to_string(f));
    }
  }
  if (static_cast<Eigen::Index>(names.size()) != data.dim()) {
    throw std::invalid_argument("feature names do not match dataset width");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write csv file: " + path);
  for (std::size_t f = 0; f < names.size(); ++f) {
    out << names[f] << ",";
  }
  out << schema.label_column << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index f = 0; f < data.dim(); ++f) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(i, f));
      out << buf << ",";
    }
    out << data.y[i] << "\n";
  }
}

}  // namespace ec2st
