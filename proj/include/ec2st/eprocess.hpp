#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ec2st {

// An e-value kept in the log domain.  Everything downstream (products over
// batches, mixtures, averages) works on logs so that long runs can pile up
// evidence far beyond double range in either direction.
struct LogEValue {
  double log_e = 0.0;
};

// Floor for the log of an e-value.  exp(-745) is the smallest positive
// normal-ish double; flooring only ever shrinks an e-value, which keeps every
// downstream decision conservative.
inline constexpr double kLogEValueFloor = -745.0;

// Wraps a raw log-domain value, flooring -inf (an exact zero e-value).
LogEValue log_evalue(double log_e);

// Wraps a linear-domain e-value e >= 0.
LogEValue log_evalue_from_linear(double e);

// Product of e-values: sum of logs.
LogEValue ev_product(std::span<const LogEValue> values);

// gamma * e_a + (1 - gamma) * e_b, computed stably in the log domain.
LogEValue ev_convex_combine(double gamma, LogEValue a, LogEValue b);

// Arithmetic mean of e-values (log-sum-exp minus log n).
LogEValue ev_average(std::span<const LogEValue> values);

// p = min(1, 1/e).
double ev_to_pvalue(LogEValue e);

// Fixed-sample decision: reject iff e >= 1/alpha.  alpha must lie in (0, 1].
bool decide_fixed(LogEValue e, double alpha);

// Running product of batch e-values with a rejection ledger.  rejected_at is
// the index (0-based) of the first batch whose running product reached
// 1/alpha; once set it never moves, even if later increments drag the product
// back below the threshold.
struct EProcess {
  double alpha = 0.05;
  double log_threshold = 0.0;  // -log(alpha)
  std::vector<double> log_increments;
  std::vector<double> log_running;
  std::optional<std::size_t> rejected_at;

  double log_value() const {
    return log_running.empty() ? 0.0 : log_running.back();
  }
  std::size_t size() const { return log_increments.size(); }
};

EProcess make_eprocess(double alpha);

void ep_update(EProcess& process, LogEValue increment);

// Outcome of a sequential run.
struct Verdict {
  bool rejected = false;
  // 0-based index of the rejecting batch, if any.
  std::optional<std::size_t> at_batch;
  double final_log_e = 0.0;
  std::size_t samples_consumed = 0;
};

Verdict make_verdict(const EProcess& process, std::size_t samples_consumed);

}  // namespace ec2st
