#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mtqsar/chem.hpp"
#include "mtqsar/csv.hpp"
#include "mtqsar/data.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/split.hpp"

namespace mtqsar::analysis {

struct RelatednessReport {
  long similar_same = 0;  // S: similar pairs with equal labels
  long similar_diff = 0;  // D: similar pairs with different labels
  double tau = 0.5;
  long pairs_examined = 0;
  std::optional<double> r;  // undefined when no pair clears the threshold
};

// Cross-task relatedness: over all pairs (a in alpha, b in beta) count the
// pairs with Tanimoto >= tau whose labels agree (S) or differ (D);
// R = max(S, D) / (S + D). Self-pairs are included when alpha == beta.
// Exhaustive enumeration with a popcount bound (|intersection| <= min and
// |union| >= max, so T <= min/max) skipping pairs that cannot reach tau.
inline RelatednessReport relatedness(const data::TaskDataset& alpha,
                                     const data::TaskDataset& beta,
                                     double tau = 0.5, int n_jobs = 1) {
  RelatednessReport report;
  report.tau = tau;
  const std::size_t na = alpha.records.size(), nb = beta.records.size();
  report.pairs_examined = long(na) * long(nb);

  std::vector<int> pop_b(nb);
  for (std::size_t j = 0; j < nb; ++j)
    pop_b[j] = beta.records[j].fingerprint.popcount();

  const auto count_range = [&](std::size_t begin, std::size_t end, long& s, long& d) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& fa = alpha.records[i].fingerprint;
      const int pa = fa.popcount();
      for (std::size_t j = 0; j < nb; ++j) {
        const int pb = pop_b[j];
        const int lo = std::min(pa, pb), hi = std::max(pa, pb);
        if (double(lo) < tau * double(hi)) continue;  // bound cannot reach tau
        if (chem::tanimoto(fa, beta.records[j].fingerprint) < tau) continue;
        if (alpha.records[i].active == beta.records[j].active) ++s;
        else ++d;
      }
    }
  };

  if (n_jobs <= 1 || na < 64) {
    count_range(0, na, report.similar_same, report.similar_diff);
  } else {
    const int workers = std::min<int>(n_jobs, int(na));
    std::vector<long> s(std::size_t(workers), 0), d(std::size_t(workers), 0);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        const std::size_t lo = na * std::size_t(w) / std::size_t(workers);
        const std::size_t hi = na * std::size_t(w + 1) / std::size_t(workers);
        count_range(lo, hi, s[std::size_t(w)], d[std::size_t(w)]);
      });
    for (auto& t : pool) t.join();
    for (int w = 0; w < workers; ++w) {
      report.similar_same += s[std::size_t(w)];
      report.similar_diff += d[std::size_t(w)];
    }
  }

  const long total = report.similar_same + report.similar_diff;
  if (total > 0)
    report.r = double(std::max(report.similar_same, report.similar_diff)) /
               double(total);
  return report;
}

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};

// Ordinary least squares of benefit against log10(training size).
// points: (training size, delta AUC).
inline RegressionResult size_benefit_regression(
    const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw Error(ErrorCode::InvalidSpec, "regression needs >= 3 points");
  RegressionResult res;
  res.n = int(points.size());
  double sx = 0, sy = 0;
  for (const auto& [size, dauc] : points) {
    if (size <= 0.0)
      throw Error(ErrorCode::InvalidSpec, "training sizes must be positive");
    sx += std::log10(size);
    sy += dauc;
  }
  const double mx = sx / double(res.n), my = sy / double(res.n);
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [size, dauc] : points) {
    const double dx = std::log10(size) - mx;
    const double dy = dauc - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0)
    throw Error(ErrorCode::DegenerateX, "all training sizes are equal");
  res.slope = sxy / sxx;
  res.intercept = my - res.slope * mx;
  // constant response: zero slope explains nothing, reported as r2 = 0
  res.r2 = syy == 0.0 ? 0.0 : (sxy * sxy) / (sxx * syy);
  return res;
}

struct ShiftHistogram {
  std::vector<std::pair<std::string, double>> values;  // (compound_id, max sim)
  std::array<long, 20> bins{};                         // width 0.05 over [0,1]
  double mean = 0.0;
};

// For each test compound of the task, the maximum Tanimoto similarity to any
// training compound. Validation rows are excluded from the reference set.
inline ShiftHistogram covariate_shift(const data::TaskDataset& task,
                                      const std::vector<split::Bucket>& buckets) {
  if (buckets.size() != task.records.size())
    throw Error(ErrorCode::ShapeMismatch, "buckets do not cover the task");
  std::vector<int> train_rows, test_rows;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (buckets[i] == split::Bucket::kTrain) train_rows.push_back(int(i));
    if (buckets[i] == split::Bucket::kTest) test_rows.push_back(int(i));
  }
  if (train_rows.empty() || test_rows.empty())
    throw Error(ErrorCode::EmptySubset,
                task.name + ": need non-empty train and test subsets");

  std::vector<int> train_pop;
  train_pop.reserve(train_rows.size());
  for (int r : train_rows)
    train_pop.push_back(task.records[std::size_t(r)].fingerprint.popcount());

  ShiftHistogram hist;
  double sum = 0.0;
  for (int t : test_rows) {
    const auto& fp = task.records[std::size_t(t)].fingerprint;
    const int pt = fp.popcount();
    double best = 0.0;
    for (std::size_t k = 0; k < train_rows.size(); ++k) {
      const int pr = train_pop[k];
      const int lo = std::min(pt, pr), hi = std::max(pt, pr);
      if (hi > 0 && double(lo) < best * double(hi)) continue;  // cannot beat best
      const double sim =
          chem::tanimoto(fp, task.records[std::size_t(train_rows[k])].fingerprint);
      if (sim > best) best = sim;
    }
    hist.values.emplace_back(task.records[std::size_t(t)].compound_id, best);
    hist.bins[std::size_t(std::min(19, int(best * 20.0)))]++;
    sum += best;
  }
  hist.mean = sum / double(hist.values.size());
  return hist;
}

// Plot-ready two-column file: bin_center,count.
inline void write_histogram_csv(const ShiftHistogram& hist, const std::string& path) {
  csv::Writer w(path);
  w.row({"bin_center", "count"});
  for (std::size_t b = 0; b < hist.bins.size(); ++b)
    w.row({csv::format_double(0.05 * double(b) + 0.025),
           std::to_string(hist.bins[b])});
}

}  // namespace mtqsar::analysis
