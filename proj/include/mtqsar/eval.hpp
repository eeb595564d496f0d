#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtqsar/csv.hpp"
#include "mtqsar/data.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/nn.hpp"
#include "mtqsar/stats.hpp"

namespace mtqsar::eval {

// ROC AUC as the Mann-Whitney statistic: the fraction of (active, inactive)
// pairs ranked correctly, ties credited one half. Counting is exact integer
// arithmetic with a single final division, so a brute-force pair count
// reproduces it bit for bit.
inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "scores and labels differ in length");
  std::uint64_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw Error(ErrorCode::SingleClass, "AUC undefined without both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  std::uint64_t wins = 0, ties = 0, neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_pos : group_neg)++;
      ++j;
    }
    wins += group_pos * neg_below;
    ties += group_pos * group_neg;
    neg_below += group_neg;
    i = j;
  }
  return double(2 * wins + ties) / double(2 * n_pos * n_neg);
}

namespace detail {

// Rows of the matrix carrying a measurement for the task, with labels.
struct TaskRows {
  std::vector<int> rows;
  std::vector<int> labels;
  long n_active = 0, n_inactive = 0;
};

inline TaskRows task_rows(const data::MultitaskMatrix& m, int task) {
  TaskRows out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.weight(r, std::size_t(task)) == 0.0) continue;
    out.rows.push_back(int(r));
    const int y = m.label(r, std::size_t(task)) ? 1 : 0;
    out.labels.push_back(y);
    (y ? out.n_active : out.n_inactive)++;
  }
  return out;
}

inline std::vector<double> active_scores(const nn::RowMatrixXd& probs, int task) {
  std::vector<double> s(std::size_t(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r)
    s[std::size_t(r)] = probs(r, 2 * task + 1);
  return s;
}

}  // namespace detail

// AUC for one task over the rows of a matrix that carry a measurement.
inline double matrix_auc(const nn::ModelParams& params,
                         const data::MultitaskMatrix& m, int task) {
  const auto tr = detail::task_rows(m, task);
  if (tr.n_active == 0 || tr.n_inactive == 0)
    throw Error(ErrorCode::SingleClass,
                m.task_names[std::size_t(task)] + ": subset has a single class");
  const auto probs = nn::predict(params, m.features, tr.rows);
  return roc_auc(detail::active_scores(probs, task), tr.labels);
}

struct SelectedCheckpoint {
  long step = 0;
  double valid_auc = 0.0;
};

// Earliest checkpoint maximizing the task's validation AUC.
inline SelectedCheckpoint select_checkpoint(const nn::CheckpointStore& store,
                                            const data::MultitaskMatrix& valid,
                                            int task) {
  if (store.snapshots.empty())
    throw Error(ErrorCode::MissingArtifact, "checkpoint store is empty");
  SelectedCheckpoint best{store.snapshots.front().step, -1.0};
  for (const auto& ckpt : store.snapshots) {
    const double auc = matrix_auc(ckpt.params, valid, task);
    if (auc > best.valid_auc) best = {ckpt.step, auc};
  }
  return best;
}

// One model's evaluation over a task set. Tasks whose subset lacks a class
// are recorded as undefined without failing the rest.
struct TaskResult {
  std::string task;
  std::optional<double> auc;
  long step = -1;  // checkpoint step used; -1 for baseline models
  long n_active = 0;
  long n_inactive = 0;
  std::string error;
};

struct EvalResult {
  std::string model;
  std::string arch;
  std::string regime;
  std::vector<TaskResult> tasks;

  // defined AUCs in stable task order, for paired comparisons
  std::vector<stats::TaskAuc> task_aucs() const {
    std::vector<stats::TaskAuc> out;
    for (const auto& t : tasks)
      if (t.auc) out.push_back({t.task, *t.auc});
    return out;
  }
};

// Per-task checkpoint selection on validation data, then test scoring at
// the selected step.
inline EvalResult evaluate_network(const nn::CheckpointStore& store,
                                   const data::MultitaskMatrix& valid,
                                   const data::MultitaskMatrix& test,
                                   const std::string& model,
                                   const std::string& arch,
                                   const std::string& regime) {
  EvalResult result;
  result.model = model;
  result.arch = arch;
  result.regime = regime;
  for (std::size_t t = 0; t < test.n_tasks(); ++t) {
    TaskResult tr;
    tr.task = test.task_names[t];
    const auto rows = detail::task_rows(test, int(t));
    tr.n_active = rows.n_active;
    tr.n_inactive = rows.n_inactive;
    try {
      const auto selected = select_checkpoint(store, valid, int(t));
      tr.step = selected.step;
      tr.auc = matrix_auc(store.at_step(selected.step).params, test, int(t));
    } catch (const Error& e) {
      tr.error = e.what();
    }
    result.tasks.push_back(std::move(tr));
  }
  return result;
}

struct TargetStep {
  long step = 0;
  double mean_auc = 0.0;
};

// Common step maximizing the mean test AUC across folds; every fold must
// have been trained on the same checkpoint schedule. Ties take the earliest
// step. Each fold is read at its checkpoint closest to the chosen step.
inline TargetStep target_step_eval(
    std::span<const nn::CheckpointStore* const> stores,
    std::span<const data::MultitaskMatrix* const> test_matrices, int task) {
  if (stores.empty() || stores.size() != test_matrices.size())
    throw Error(ErrorCode::ScheduleMismatch, "need one store per test matrix");
  std::vector<long> schedule;
  for (const auto& c : stores.front()->snapshots) schedule.push_back(c.step);
  if (schedule.empty())
    throw Error(ErrorCode::MissingArtifact, "checkpoint store is empty");
  for (const auto* s : stores) {
    std::vector<long> other;
    for (const auto& c : s->snapshots) other.push_back(c.step);
    if (other != schedule)
      throw Error(ErrorCode::ScheduleMismatch,
                  "folds trained with different checkpoint schedules");
  }

  const auto closest = [](const nn::CheckpointStore& s, long target) -> const nn::Checkpoint& {
    const nn::Checkpoint* best = &s.snapshots.front();
    for (const auto& c : s.snapshots)
      if (std::abs(c.step - target) < std::abs(best->step - target)) best = &c;
    return *best;
  };

  TargetStep best{schedule.front(), -1.0};
  for (long step : schedule) {
    double sum = 0.0;
    for (std::size_t f = 0; f < stores.size(); ++f)
      sum += matrix_auc(closest(*stores[f], step).params, *test_matrices[f], task);
    const double mean = sum / double(stores.size());
    if (mean > best.mean_auc) best = {step, mean};
  }
  return best;
}

// EvalResult CSV: task,model,arch,regime,step,auc,n_active,n_inactive
inline void write_eval_csv(const std::vector<EvalResult>& results,
                           const std::string& path) {
  csv::Writer w(path);
  w.row({"task", "model", "arch", "regime", "step", "auc", "n_active",
         "n_inactive"});
  for (const auto& res : results)
    for (const auto& t : res.tasks)
      w.row({t.task, res.model, res.arch, res.regime,
             t.step >= 0 ? std::to_string(t.step) : "",
             t.auc ? csv::format_double(*t.auc) : "",
             std::to_string(t.n_active), std::to_string(t.n_inactive)});
}

}  // namespace mtqsar::eval
