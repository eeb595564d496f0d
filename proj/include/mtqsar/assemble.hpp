#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtqsar/data.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/split.hpp"

namespace mtqsar::data {

// Builds the dense matrix for one subset of a split: one row per unique
// compound_id appearing there, zero weight where a compound lacks a
// measurement. Training rows get class-balancing weights, with the class
// ratio taken from the training rows themselves except under random
// cross-validation, where the full dataset sets the ratio.
inline MultitaskMatrix assemble_dense(const Collection& collection,
                                      const split::SplitAssignment& assignment,
                                      split::Bucket subset) {
  const auto& tasks = collection.tasks();
  if (assignment.buckets.size() != tasks.size())
    throw Error(ErrorCode::ShapeMismatch,
                "assignment does not cover the collection");
  const WeightMode mode = assignment.regime == split::Regime::kRandomKFold
                              ? WeightMode::kFullDataset
                              : WeightMode::kSplitLocal;

  MultitaskMatrix m;
  m.width = collection.fingerprint_params().width;

  std::vector<int> retained;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (assignment.task_dropped(tasks[t].name)) continue;
    retained.push_back(int(t));
    m.task_names.push_back(tasks[t].name);
  }

  // rows in first-appearance order, scanning tasks in collection order
  std::map<std::string, int> row_of;
  for (int t : retained) {
    const auto& task = tasks[std::size_t(t)];
    for (std::size_t r = 0; r < task.records.size(); ++r) {
      if (assignment.buckets[std::size_t(t)][r] != subset) continue;
      const auto [it, inserted] =
          row_of.try_emplace(task.records[r].compound_id, int(m.row_ids.size()));
      if (inserted) {
        m.row_ids.push_back(task.records[r].compound_id);
        m.features.push_back(task.records[r].fingerprint.bits());
      }
    }
  }

  const std::size_t T = m.task_names.size();
  m.labels.assign(m.row_ids.size() * T, 0);
  m.weights.assign(m.row_ids.size() * T, 0.0);

  for (std::size_t ti = 0; ti < retained.size(); ++ti) {
    const auto& task = tasks[std::size_t(retained[ti])];
    const auto& buckets = assignment.buckets[std::size_t(retained[ti])];
    std::vector<int> subset_rows;
    for (std::size_t r = 0; r < task.records.size(); ++r)
      if (buckets[r] == subset) subset_rows.push_back(int(r));
    if (subset_rows.empty()) continue;

    std::vector<double> weights;
    if (subset == split::Bucket::kTrain) {
      weights = class_weights(task, subset_rows, mode);
    } else {
      weights.assign(subset_rows.size(), 1.0);
    }
    for (std::size_t k = 0; k < subset_rows.size(); ++k) {
      const auto& record = task.records[std::size_t(subset_rows[k])];
      const std::size_t row = std::size_t(row_of.at(record.compound_id));
      m.labels[row * T + ti] = record.active ? 1 : 0;
      m.weights[row * T + ti] = weights[k];
    }
  }
  return m;
}

}  // namespace mtqsar::data
