#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mtqsar/chem.hpp"
#include "mtqsar/csv.hpp"
#include "mtqsar/date.hpp"
#include "mtqsar/errors.hpp"

namespace mtqsar::data {

struct FingerprintParams {
  int radius = 2;
  int width = 1024;
};

struct Record {
  std::string compound_id;
  std::string smiles;
  chem::Fingerprint fingerprint;
  bool active = false;
  Date date;
};

struct TaskDataset {
  std::string name;
  std::vector<Record> records;

  long actives() const {
    long n = 0;
    for (const auto& r : records) n += r.active ? 1 : 0;
    return n;
  }
  long inactives() const { return long(records.size()) - actives(); }
};

// An ordered set of tasks; ordering fixes the output-head order of
// multitask models. Compound identity is the compound_id string, never the
// SMILES text.
class Collection {
 public:
  Collection() = default;
  Collection(std::vector<TaskDataset> tasks, FingerprintParams fp)
      : tasks_(std::move(tasks)), fp_(fp) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      if (!index_.emplace(tasks_[i].name, int(i)).second)
        throw Error(ErrorCode::InvalidSpec,
                    "duplicate task name: " + tasks_[i].name);
    }
  }

  const std::vector<TaskDataset>& tasks() const { return tasks_; }
  const FingerprintParams& fingerprint_params() const { return fp_; }

  int task_index(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? -1 : it->second;
  }

  // compound_id -> (task index, record index) occurrences
  std::map<std::string, std::vector<std::pair<int, int>>> compound_index() const {
    std::map<std::string, std::vector<std::pair<int, int>>> idx;
    for (std::size_t t = 0; t < tasks_.size(); ++t)
      for (std::size_t r = 0; r < tasks_[t].records.size(); ++r)
        idx[tasks_[t].records[r].compound_id].emplace_back(int(t), int(r));
    return idx;
  }

 private:
  std::vector<TaskDataset> tasks_;
  FingerprintParams fp_;
  std::map<std::string, int> index_;
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

// Ingests one task table. Expected header: compound_id,smiles,label,date.
// Inconclusive rows are dropped; duplicate compound rows merge when their
// labels agree and the whole compound is discarded when they disagree.
inline TaskDataset load_task_csv(const std::string& path,
                                 const FingerprintParams& fp) {
  TaskDataset task;
  task.name = std::filesystem::path(path).stem().string();

  csv::Reader reader(path);
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!reader.next(fields, line))
    throw Error(ErrorCode::EmptyTask, path + ": no rows");
  if (fields.size() != 4 || detail::lower(detail::trim(fields[0])) != "compound_id" ||
      detail::lower(detail::trim(fields[1])) != "smiles" ||
      detail::lower(detail::trim(fields[2])) != "label" ||
      detail::lower(detail::trim(fields[3])) != "date")
    throw Error(ErrorCode::MalformedRow,
                path + ":1: header must be compound_id,smiles,label,date");

  struct Pending {
    Record record;
    bool conflicted = false;
    std::size_t order = 0;
  };
  std::map<std::string, Pending> by_compound;
  std::size_t order = 0;

  while (reader.next(fields, line)) {
    const std::string where = path + ":" + std::to_string(line);
    if (fields.size() != 4)
      throw Error(ErrorCode::MalformedRow, where + ": expected 4 fields, got " +
                                               std::to_string(fields.size()));
    const std::string id = detail::trim(fields[0]);
    const std::string smiles = detail::trim(fields[1]);
    const std::string label = detail::lower(detail::trim(fields[2]));
    const std::string date_text = detail::trim(fields[3]);
    if (id.empty())
      throw Error(ErrorCode::MalformedRow, where + ": empty compound_id");
    bool active = false;
    if (label == "active") {
      active = true;
    } else if (label == "inactive") {
      active = false;
    } else if (label == "inconclusive") {
      continue;
    } else {
      throw Error(ErrorCode::MalformedRow, where + ": unknown label '" + label + "'");
    }
    const auto date = Date::parse(date_text);
    if (!date)
      throw Error(ErrorCode::MalformedRow,
                  where + ": date '" + date_text + "' is not YYYY-MM-DD");

    const auto it = by_compound.find(id);
    if (it != by_compound.end()) {
      Pending& p = it->second;
      if (p.conflicted) continue;
      if (p.record.active != active) {
        p.conflicted = true;  // agreeing rows merge; disagreeing compounds drop
      } else if (*date < p.record.date) {
        p.record.date = *date;
      }
      continue;
    }

    Record record;
    record.compound_id = id;
    record.smiles = smiles;
    record.active = active;
    record.date = *date;
    try {
      record.fingerprint =
          chem::circular_fingerprint(chem::parse_smiles(smiles), fp.radius, fp.width);
    } catch (const Error& e) {
      throw Error(ErrorCode::UnparseableSmiles,
                  where + ": '" + smiles + "': " + e.what());
    }
    by_compound.emplace(id, Pending{std::move(record), false, order++});
  }

  std::vector<const Pending*> kept;
  for (const auto& [id, p] : by_compound)
    if (!p.conflicted) kept.push_back(&p);
  std::sort(kept.begin(), kept.end(),
            [](const Pending* a, const Pending* b) { return a->order < b->order; });
  for (const Pending* p : kept) task.records.push_back(p->record);

  if (task.records.empty())
    throw Error(ErrorCode::EmptyTask, path + ": no usable records");
  if (task.actives() == 0 || task.inactives() == 0)
    throw Error(ErrorCode::EmptyTask,
                path + ": task needs at least one active and one inactive");
  return task;
}

inline Collection load_collection(const std::vector<std::string>& paths,
                                  FingerprintParams fp = {}) {
  std::vector<TaskDataset> tasks;
  tasks.reserve(paths.size());
  for (const auto& p : paths) tasks.push_back(load_task_csv(p, fp));
  return Collection(std::move(tasks), fp);
}

// Normalized output: same schema, canonical label text, ISO dates,
// collection record order. Reloading the emitted file reproduces the task.
inline void write_task_csv(const TaskDataset& task, const std::string& path) {
  csv::Writer w(path);
  w.row({"compound_id", "smiles", "label", "date"});
  for (const auto& r : task.records)
    w.row({r.compound_id, r.smiles, r.active ? "active" : "inactive",
           r.date.iso()});
}

enum class WeightMode {
  kSplitLocal,   // class ratio from the training rows (temporal regimes)
  kFullDataset,  // class ratio from the whole task (random cross-validation)
};

// Per-record weights balancing class totals: majority class keeps 1.0, the
// minority class is scaled by majority/minority.
inline std::vector<double> class_weights(const TaskDataset& task,
                                         const std::vector<int>& training_rows,
                                         WeightMode mode) {
  long n_active = 0, n_inactive = 0;
  if (mode == WeightMode::kFullDataset) {
    n_active = task.actives();
    n_inactive = task.inactives();
  } else {
    for (int r : training_rows)
      (task.records[std::size_t(r)].active ? n_active : n_inactive)++;
  }
  if (n_active == 0 || n_inactive == 0)
    throw Error(ErrorCode::SingleClassTraining,
                task.name + ": training rows contain a single class");
  const bool active_majority = n_active >= n_inactive;
  const double minority_weight =
      active_majority ? double(n_active) / double(n_inactive)
                      : double(n_inactive) / double(n_active);
  std::vector<double> weights;
  weights.reserve(training_rows.size());
  for (int r : training_rows) {
    const bool is_majority = task.records[std::size_t(r)].active == active_majority;
    weights.push_back(is_majority ? 1.0 : minority_weight);
  }
  return weights;
}

// Dense multitask design matrix: one row per unique compound_id, zero weight
// where a compound has no measurement for a task.
struct MultitaskMatrix {
  int width = 0;
  std::vector<BitVec> features;
  std::vector<std::string> row_ids;
  std::vector<std::string> task_names;
  std::vector<std::int8_t> labels;  // row-major n x T
  std::vector<double> weights;      // row-major n x T

  std::size_t rows() const { return features.size(); }
  std::size_t n_tasks() const { return task_names.size(); }
  std::int8_t label(std::size_t r, std::size_t t) const {
    return labels[r * n_tasks() + t];
  }
  double weight(std::size_t r, std::size_t t) const {
    return weights[r * n_tasks() + t];
  }
};

}  // namespace mtqsar::data
