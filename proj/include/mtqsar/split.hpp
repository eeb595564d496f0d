#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtqsar/data.hpp"
#include "mtqsar/date.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"

namespace mtqsar::split {

enum class Regime { kLeakyTemporal, kNonLeakyTemporal, kRandomKFold };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::kLeakyTemporal: return "leaky-temporal";
    case Regime::kNonLeakyTemporal: return "non-leaky-temporal";
    case Regime::kRandomKFold: return "random-kfold";
  }
  return "?";
}

inline std::optional<Regime> parse_regime(std::string_view s) {
  if (s == "leaky-temporal") return Regime::kLeakyTemporal;
  if (s == "non-leaky-temporal") return Regime::kNonLeakyTemporal;
  if (s == "random-kfold") return Regime::kRandomKFold;
  return std::nullopt;
}

// Excluded rows exist only in non-leaky side tasks: data dated past the
// focus cutoffs is kept for reporting but never trains or evaluates.
enum class Bucket : std::uint8_t { kTrain, kValid, kTest, kExcluded };

inline const char* bucket_name(Bucket b) {
  switch (b) {
    case Bucket::kTrain: return "train";
    case Bucket::kValid: return "valid";
    case Bucket::kTest: return "test";
    case Bucket::kExcluded: return "excluded";
  }
  return "?";
}

struct TaskCutoffs {
  Date train_cutoff;
  Date valid_cutoff;
  double train_fraction = 0.0;  // achieved
  double valid_fraction = 0.0;
};

struct SplitAssignment {
  Regime regime = Regime::kLeakyTemporal;
  std::string focus;                          // non-leaky only
  int fold = -1;                              // random CV only
  std::vector<std::vector<Bucket>> buckets;   // [task][record]
  std::map<std::string, TaskCutoffs> cutoffs; // per task, temporal regimes
  std::vector<std::string> dropped_tasks;     // excluded from training heads
  std::vector<std::string> warnings;

  bool task_dropped(const std::string& name) const {
    return std::find(dropped_tasks.begin(), dropped_tasks.end(), name) !=
           dropped_tasks.end();
  }
};

struct CutoffResult {
  TaskCutoffs cutoffs;
  std::vector<std::string> warnings;
};

// Chooses the two date cutoffs whose record-count prefixes come closest to
// the target cumulative fractions (70%, then 80%). Records dated exactly on
// a cutoff fall on the earlier side.
inline CutoffResult temporal_cutoffs(const data::TaskDataset& task,
                                     double train_frac = 0.7,
                                     double valid_frac = 0.1) {
  const std::size_t n = task.records.size();
  if (n < 10)
    throw Error(ErrorCode::TooFewRecords,
                task.name + ": need >= 10 dated records, have " + std::to_string(n));

  std::vector<Date> dates;
  dates.reserve(n);
  for (const auto& r : task.records) dates.push_back(r.date);
  std::sort(dates.begin(), dates.end());
  // distinct dates with cumulative counts
  std::vector<std::pair<Date, std::size_t>> prefix;
  for (std::size_t i = 0; i < n; ++i) {
    if (!prefix.empty() && prefix.back().first == dates[i]) {
      ++prefix.back().second;
    } else {
      prefix.emplace_back(dates[i], (prefix.empty() ? 0 : prefix.back().second) + 1);
    }
  }
  if (prefix.size() < 2)
    throw Error(ErrorCode::DegenerateDates,
                task.name + ": all records share one date");

  const auto closest = [&](double target_count, std::size_t first_idx) {
    std::size_t best = first_idx;
    double best_dev = std::abs(double(prefix[first_idx].second) - target_count);
    for (std::size_t i = first_idx + 1; i < prefix.size(); ++i) {
      const double dev = std::abs(double(prefix[i].second) - target_count);
      if (dev < best_dev) {
        best = i;
        best_dev = dev;
      }
    }
    return best;
  };

  CutoffResult result;
  const std::size_t t_idx = closest(train_frac * double(n), 0);
  const std::size_t v_idx = closest((train_frac + valid_frac) * double(n), t_idx);
  result.cutoffs.train_cutoff = prefix[t_idx].first;
  result.cutoffs.valid_cutoff = prefix[v_idx].first;
  result.cutoffs.train_fraction = double(prefix[t_idx].second) / double(n);
  result.cutoffs.valid_fraction =
      double(prefix[v_idx].second - prefix[t_idx].second) / double(n);

  const double train_dev = std::abs(result.cutoffs.train_fraction - train_frac);
  const double valid_dev = std::abs(result.cutoffs.valid_fraction - valid_frac);
  if (train_dev > 0.02 || valid_dev > 0.02) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%s: achievable split deviates from targets "
                  "(train %.3f vs %.3f, valid %.3f vs %.3f)",
                  task.name.c_str(), result.cutoffs.train_fraction, train_frac,
                  result.cutoffs.valid_fraction, valid_frac);
    result.warnings.push_back(buf);
  }
  if (result.cutoffs.valid_cutoff == prefix.back().first)
    result.warnings.push_back(task.name + ": test set is empty at these cutoffs");
  return result;
}

inline Bucket bucket_by_date(const Date& d, const TaskCutoffs& c) {
  if (d <= c.train_cutoff) return Bucket::kTrain;
  if (d <= c.valid_cutoff) return Bucket::kValid;
  return Bucket::kTest;
}

// Each task gets its own cutoff dates. Training data for one task may
// postdate test data for another; detected pairs are noted in warnings.
inline SplitAssignment leaky_split(const data::Collection& collection) {
  SplitAssignment out;
  out.regime = Regime::kLeakyTemporal;
  const auto& tasks = collection.tasks();
  out.buckets.resize(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    CutoffResult cr = temporal_cutoffs(tasks[t]);
    out.cutoffs[tasks[t].name] = cr.cutoffs;
    for (auto& w : cr.warnings) out.warnings.push_back(std::move(w));
    out.buckets[t].reserve(tasks[t].records.size());
    for (const auto& r : tasks[t].records)
      out.buckets[t].push_back(bucket_by_date(r.date, cr.cutoffs));
  }
  // anachronism provenance: train rows of one task after test rows of another
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    std::optional<Date> min_test;
    for (std::size_t r = 0; r < tasks[a].records.size(); ++r)
      if (out.buckets[a][r] == Bucket::kTest) {
        const Date d = tasks[a].records[r].date;
        if (!min_test || d < *min_test) min_test = d;
      }
    if (!min_test) continue;
    for (std::size_t b = 0; b < tasks.size(); ++b) {
      if (a == b) continue;
      for (std::size_t r = 0; r < tasks[b].records.size(); ++r)
        if (out.buckets[b][r] == Bucket::kTrain &&
            tasks[b].records[r].date > *min_test) {
          out.warnings.push_back("leakage: training rows of " + tasks[b].name +
                                 " postdate test rows of " + tasks[a].name);
          break;
        }
    }
  }
  return out;
}

// The focus task's own cutoffs partition every other task; side-task rows
// past the train/valid cutoffs are excluded rather than leaked into
// training. The focus rows match the leaky assignment exactly.
inline SplitAssignment non_leaky_split(const data::Collection& collection,
                                       const std::string& focus) {
  const int focus_idx = collection.task_index(focus);
  if (focus_idx < 0)
    throw Error(ErrorCode::FocusNotFound, "no task named '" + focus + "'");
  const auto& tasks = collection.tasks();

  SplitAssignment out;
  out.regime = Regime::kNonLeakyTemporal;
  out.focus = focus;
  CutoffResult cr = temporal_cutoffs(tasks[std::size_t(focus_idx)]);
  for (auto& w : cr.warnings) out.warnings.push_back(std::move(w));
  const TaskCutoffs cuts = cr.cutoffs;

  out.buckets.resize(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out.cutoffs[tasks[t].name] = cuts;
    const bool is_focus = int(t) == focus_idx;
    std::size_t train_rows = 0;
    bool has_active = false, has_inactive = false;
    out.buckets[t].reserve(tasks[t].records.size());
    for (const auto& r : tasks[t].records) {
      Bucket b = bucket_by_date(r.date, cuts);
      if (!is_focus && b != Bucket::kTrain) b = Bucket::kExcluded;
      if (b == Bucket::kTrain) {
        ++train_rows;
        (r.active ? has_active : has_inactive) = true;
      }
      out.buckets[t].push_back(b);
    }
    if (is_focus) continue;
    if (train_rows == 0) {
      out.dropped_tasks.push_back(tasks[t].name);
      out.warnings.push_back(tasks[t].name +
                             ": no rows before the focus train cutoff; dropped");
    } else if (!has_active || !has_inactive) {
      out.dropped_tasks.push_back(tasks[t].name);
      out.warnings.push_back(tasks[t].name +
                             ": single-class before the focus cutoff; dropped");
    }
  }
  return out;
}

// Per-task stratified k-fold: classes are shuffled independently and dealt
// round-robin, preserving the full-dataset class ratio in every fold.
struct FoldSet {
  int k = 0;
  std::vector<int> fold_of;  // record index -> fold

  std::vector<Bucket> materialize(int test_fold) const {
    std::vector<Bucket> out(fold_of.size());
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      out[i] = fold_of[i] == test_fold ? Bucket::kTest : Bucket::kTrain;
    return out;
  }
};

inline FoldSet stratified_kfold(const data::TaskDataset& task, int k,
                                std::uint64_t seed) {
  if (k < 2)
    throw Error(ErrorCode::InvalidFoldCount,
                "k-fold needs k >= 2, got " + std::to_string(k));
  std::vector<int> active_rows, inactive_rows;
  for (std::size_t i = 0; i < task.records.size(); ++i)
    (task.records[i].active ? active_rows : inactive_rows).push_back(int(i));
  if (long(active_rows.size()) < k || long(inactive_rows.size()) < k)
    throw Error(ErrorCode::ClassTooSmall,
                task.name + ": every class needs >= k members");

  FoldSet out;
  out.k = k;
  out.fold_of.assign(task.records.size(), 0);
  Rng rng(derive_seed(seed, "kfold:" + task.name));
  rng.shuffle(active_rows);
  rng.shuffle(inactive_rows);
  for (std::size_t i = 0; i < active_rows.size(); ++i)
    out.fold_of[std::size_t(active_rows[i])] = int(i % std::size_t(k));
  for (std::size_t i = 0; i < inactive_rows.size(); ++i)
    out.fold_of[std::size_t(inactive_rows[i])] = int(i % std::size_t(k));
  return out;
}

// Combines per-task folds into k collection-wide assignments.
inline std::vector<SplitAssignment> kfold_split(const data::Collection& collection,
                                                int k, std::uint64_t seed) {
  const auto& tasks = collection.tasks();
  std::vector<FoldSet> fold_sets;
  fold_sets.reserve(tasks.size());
  for (const auto& t : tasks) fold_sets.push_back(stratified_kfold(t, k, seed));

  std::vector<SplitAssignment> out;
  out.reserve(std::size_t(k));
  for (int fold = 0; fold < k; ++fold) {
    SplitAssignment a;
    a.regime = Regime::kRandomKFold;
    a.fold = fold;
    a.buckets.reserve(tasks.size());
    for (const auto& fs : fold_sets) a.buckets.push_back(fs.materialize(fold));
    out.push_back(std::move(a));
  }
  return out;
}

// Assignment CSV: task,compound_id,bucket,regime,focus,cutoff_train,cutoff_valid
inline void write_assignment_csv(const data::Collection& collection,
                                 const SplitAssignment& a,
                                 const std::string& path) {
  csv::Writer w(path);
  w.row({"task", "compound_id", "bucket", "regime", "focus", "cutoff_train",
         "cutoff_valid"});
  const auto& tasks = collection.tasks();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::string cut_train, cut_valid;
    const auto it = a.cutoffs.find(tasks[t].name);
    if (it != a.cutoffs.end()) {
      cut_train = it->second.train_cutoff.iso();
      cut_valid = it->second.valid_cutoff.iso();
    }
    for (std::size_t r = 0; r < tasks[t].records.size(); ++r)
      w.row({tasks[t].name, tasks[t].records[r].compound_id,
             bucket_name(a.buckets[t][r]), regime_name(a.regime), a.focus,
             cut_train, cut_valid});
  }
}

}  // namespace mtqsar::split
