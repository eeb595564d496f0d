#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"

namespace mtqsar::stats {

// Inverse of the standard normal CDF, algorithm AS 241 (Wichura 1988),
// PPND16 variant; absolute error below 1e-15 on (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::InvalidCounts, "quantile probability must be in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

// Wilson score interval for k successes out of n trials.
inline std::pair<double, double> wilson_interval(long k, long n,
                                                 double alpha = 0.05) {
  if (n < 1 || k < 0 || k > n)
    throw Error(ErrorCode::InvalidCounts,
                "need 0 <= k <= n, n >= 1; got k=" + std::to_string(k) +
                    " n=" + std::to_string(n));
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double nn = double(n);
  const double p_hat = double(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p_hat + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct SignTest {
  long positives = 0;  // k
  long nonzero = 0;    // n
};

// Counts strictly positive deltas among the nonzero ones; exact zeros are
// excluded. Throws AllZero when nothing remains.
inline SignTest sign_test(const std::vector<double>& deltas) {
  if (deltas.empty())
    throw Error(ErrorCode::EmptyInput, "sign test needs at least one delta");
  SignTest result;
  for (double d : deltas) {
    if (d == 0.0) continue;
    ++result.nonzero;
    if (d > 0.0) ++result.positives;
  }
  if (result.nonzero == 0)
    throw Error(ErrorCode::AllZero, "all deltas are exactly zero");
  return result;
}

// Even-length medians average the two central values.
inline double median(std::vector<double> values) {
  if (values.empty())
    throw Error(ErrorCode::EmptyInput, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Empirical quantile with linear interpolation between order statistics.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = q * double(n - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// Percentile bootstrap for the mean; deterministic for a given seed.
inline std::pair<double, double> bootstrap_mean_ci(
    const std::vector<double>& values, int resamples = 10000,
    double alpha = 0.05, std::uint64_t seed = 0) {
  if (values.empty())
    throw Error(ErrorCode::EmptyInput, "bootstrap of an empty list");
  Rng rng(derive_seed(seed, "bootstrap"));
  std::vector<double> means(static_cast<std::size_t>(resamples));
  const std::size_t n = values.size();
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[rng.next_below(n)];
    m = sum / double(n);
  }
  std::sort(means.begin(), means.end());
  return {sorted_quantile(means, alpha / 2.0),
          sorted_quantile(means, 1.0 - alpha / 2.0)};
}

// One model's per-task scores, in stable task order.
struct TaskAuc {
  std::string task;
  double auc = 0.0;
};

inline std::vector<double> paired_deltas(const std::vector<TaskAuc>& a,
                                         const std::vector<TaskAuc>& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::TaskMismatch,
                "task counts differ: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  std::vector<double> deltas;
  deltas.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = std::find_if(b.begin(), b.end(), [&](const TaskAuc& t) {
      return t.task == a[i].task;
    });
    if (it == b.end())
      throw Error(ErrorCode::TaskMismatch, "task missing from b: " + a[i].task);
    deltas.push_back(a[i].auc - it->auc);
  }
  return deltas;
}

struct ComparisonResult {
  std::vector<double> deltas;
  double median_delta = 0.0;
  long k = 0;
  long n = 0;
  // interval undefined when every delta is exactly zero
  std::optional<std::pair<double, double>> interval;
  bool significant = false;
};

// Paired sign-test comparison: median effect size plus a Wilson interval on
// the fraction of positive per-task differences. Two models are
// distinguishable only if the interval excludes 0.5.
inline ComparisonResult compare(const std::vector<TaskAuc>& a,
                                const std::vector<TaskAuc>& b,
                                double alpha = 0.05) {
  ComparisonResult result;
  result.deltas = paired_deltas(a, b);
  result.median_delta = median(result.deltas);
  try {
    const SignTest st = sign_test(result.deltas);
    result.k = st.positives;
    result.n = st.nonzero;
    result.interval = wilson_interval(result.k, result.n, alpha);
    result.significant =
        result.interval->first > 0.5 || result.interval->second < 0.5;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AllZero) throw;
    // identical models: indistinguishable by construction
  }
  return result;
}

}  // namespace mtqsar::stats
