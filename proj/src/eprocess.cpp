#include "ec2st/eprocess.hpp"

#include <cmath>
#include <stdexcept>

#include "ec2st/numerics.hpp"

namespace ec2st {

LogEValue log_evalue(double log_e) {
  if (std::isnan(log_e)) {
    throw std::invalid_argument("log e-value is NaN");
  }
  if (std::isinf(log_e) && log_e > 0) {
    throw std::invalid_argument("log e-value is +inf");
  }
  return {log_e < kLogEValueFloor ? kLogEValueFloor : log_e};
}

LogEValue log_evalue_from_linear(double e) {
  if (std::isnan(e) || e < 0) {
    throw std::invalid_argument("e-value must be >= 0");
  }
  return log_evalue(std::log(e));
}

LogEValue ev_product(std::span<const LogEValue> values) {
  double acc = 0.0;
  for (const LogEValue& v : values) acc += v.log_e;
  return log_evalue(acc);
}

LogEValue ev_convex_combine(double gamma, LogEValue a, LogEValue b) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("convex weight must lie in [0, 1]");
  }
  if (gamma == 0.0) return b;
  if (gamma == 1.0) return a;
  const double term_a = std::log(gamma) + a.log_e;
  const double term_b = std::log1p(-gamma) + b.log_e;
  return log_evalue(log_sum_exp(term_a, term_b));
}

LogEValue ev_average(std::span<const LogEValue> values) {
  if (values.empty()) {
    throw std::invalid_argument("ev_average over an empty set");
  }
  std::vector<double> logs;
  logs.reserve(values.size());
  for (const LogEValue& v : values) logs.push_back(v.log_e);
  return log_evalue(log_mean_exp(logs));
}

double ev_to_pvalue(LogEValue e) {
  if (e.log_e <= 0.0) return 1.0;
  return std::exp(-e.log_e);
}

static void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1]");
  }
}

bool decide_fixed(LogEValue e, double alpha) {
  check_alpha(alpha);
  return e.log_e >= -std::log(alpha);
}

EProcess make_eprocess(double alpha) {
  check_alpha(alpha);
  EProcess p;
  p.alpha = alpha;
  p.log_threshold = -std::log(alpha);
  return p;
}

void ep_update(EProcess& process, LogEValue increment) {
  const double prev = process.log_value();
  const double next = prev + increment.log_e;
  process.log_increments.push_back(increment.log_e);
  process.log_running.push_back(next);
  if (!process.rejected_at && next >= process.log_threshold) {
    process.rejected_at = process.log_running.size() - 1;
  }
}

Verdict make_verdict(const EProcess& process, std::size_t samples_consumed) {
  Verdict v;
  v.rejected = process.rejected_at.has_value();
  v.at_batch = process.rejected_at;
  v.final_log_e = process.log_value();
  v.samples_consumed = samples_consumed;
  return v;
}

}  // namespace ec2st
