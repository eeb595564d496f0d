#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mtqsar/split.hpp"

using namespace mtqsar;
using split::Bucket;

namespace {

// Task with one record per given date string; labels alternate.
data::TaskDataset dated_task(const std::string& name,
                             const std::vector<std::string>& dates) {
  data::TaskDataset task;
  task.name = name;
  int i = 0;
  for (const auto& d : dates) {
    data::Record r;
    r.compound_id = name + "-" + std::to_string(i);
    r.smiles = "C";
    r.active = (i % 2 == 0);
    r.date = *Date::parse(d);
    task.records.push_back(std::move(r));
    ++i;
  }
  return task;
}

std::vector<std::string> consecutive_dates(int n, int start_day = 1) {
  std::vector<std::string> out;
  const Date base = *Date::parse("2013-01-01");
  for (int i = 0; i < n; ++i)
    out.push_back(Date(base.days() + start_day + i).iso());
  return out;
}

}  // namespace

TEST_CASE("ten distinct dates split 7/1/2") {
  const auto task = dated_task("t", consecutive_dates(10));
  const auto cr = split::temporal_cutoffs(task);
  int train = 0, valid = 0, test = 0;
  for (const auto& r : task.records) {
    switch (split::bucket_by_date(r.date, cr.cutoffs)) {
      case Bucket::kTrain: ++train; break;
      case Bucket::kValid: ++valid; break;
      default: ++test; break;
    }
  }
  CHECK(train == 7);
  CHECK(valid == 1);
  CHECK(test == 2);
  CHECK(cr.warnings.empty());
}

TEST_CASE("degenerate and tiny tasks are rejected") {
  const auto single_date =
      dated_task("t", std::vector<std::string>(12, "2013-06-01"));
  try {
    split::temporal_cutoffs(single_date);
    FAIL("expected DegenerateDates");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateDates);
  }

  const auto tiny = dated_task("t", consecutive_dates(9));
  try {
    split::temporal_cutoffs(tiny);
    FAIL("expected TooFewRecords");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewRecords);
  }
}

TEST_CASE("tied dates fall on the earlier side and deviations warn") {
  // 100 records over 4 dates, 25 each: achievable split is 75/0/25
  std::vector<std::string> dates;
  for (const char* d : {"2013-01-01", "2013-02-01", "2013-03-01", "2013-04-01"})
    for (int i = 0; i < 25; ++i) dates.push_back(d);
  const auto task = dated_task("t", dates);
  const auto cr = split::temporal_cutoffs(task);
  int train = 0, valid = 0, test = 0;
  for (const auto& r : task.records) {
    switch (split::bucket_by_date(r.date, cr.cutoffs)) {
      case Bucket::kTrain: ++train; break;
      case Bucket::kValid: ++valid; break;
      default: ++test; break;
    }
  }
  CHECK(train == 75);
  CHECK(valid == 0);
  CHECK(test == 25);
  CHECK_FALSE(cr.warnings.empty());
}

TEST_CASE("leaky split cuts each task independently") {
  data::Collection c({dated_task("early", consecutive_dates(20)),
                      dated_task("late", consecutive_dates(20, 400))},
                     {});
  const auto a = split::leaky_split(c);
  REQUIRE(a.buckets.size() == 2);
  // both tasks keep their own 70/10/20
  for (std::size_t t = 0; t < 2; ++t) {
    int train = 0;
    for (auto b : a.buckets[t]) train += b == Bucket::kTrain;
    CHECK(train == 14);
  }
  // late task trains after the early task's test rows: flagged
  bool flagged = false;
  for (const auto& w : a.warnings)
    flagged = flagged || w.find("leakage") != std::string::npos;
  CHECK(flagged);

  // single-task collection matches temporal_cutoffs exactly
  data::Collection solo({dated_task("solo", consecutive_dates(10))}, {});
  const auto sa = split::leaky_split(solo);
  const auto cr = split::temporal_cutoffs(solo.tasks()[0]);
  for (std::size_t r = 0; r < solo.tasks()[0].records.size(); ++r)
    CHECK(sa.buckets[0][r] ==
          split::bucket_by_date(solo.tasks()[0].records[r].date, cr.cutoffs));
}

TEST_CASE("non-leaky split applies focus cutoffs everywhere") {
  data::Collection c({dated_task("focus", consecutive_dates(20)),
                      dated_task("side", consecutive_dates(20, 10)),
                      dated_task("future", consecutive_dates(20, 400)),
                      dated_task("past", consecutive_dates(20, -400))},
                     {});
  const auto a = split::non_leaky_split(c, "focus");
  const auto leaky = split::leaky_split(c);

  // focus task matches its leaky assignment exactly
  CHECK(a.buckets[0] == leaky.buckets[0]);

  const Date cutoff = a.cutoffs.at("focus").train_cutoff;
  // no training row anywhere postdates the focus train cutoff
  for (std::size_t t = 0; t < c.tasks().size(); ++t)
    for (std::size_t r = 0; r < c.tasks()[t].records.size(); ++r)
      if (a.buckets[t][r] == Bucket::kTrain)
        CHECK(c.tasks()[t].records[r].date <= cutoff);

  // side rows after the cutoffs are excluded, not tested
  for (std::size_t r = 0; r < c.tasks()[1].records.size(); ++r) {
    const auto b = a.buckets[1][r];
    CHECK((b == Bucket::kTrain || b == Bucket::kExcluded));
  }

  // the all-future side task is dropped with a warning
  CHECK(a.task_dropped("future"));
  CHECK_FALSE(a.task_dropped("side"));
  CHECK_FALSE(a.warnings.empty());

  // a task entirely before the train cutoff is all train
  for (std::size_t r = 0; r < c.tasks()[3].records.size(); ++r)
    CHECK(a.buckets[3][r] == Bucket::kTrain);

  CHECK_THROWS_AS(split::non_leaky_split(c, "nope"), Error);
}

TEST_CASE("every record lands in exactly one bucket") {
  data::Collection c({dated_task("a", consecutive_dates(37)),
                      dated_task("b", consecutive_dates(21, 5))},
                     {});
  for (const auto& assignment :
       {split::leaky_split(c), split::non_leaky_split(c, "a")}) {
    for (std::size_t t = 0; t < c.tasks().size(); ++t)
      CHECK(assignment.buckets[t].size() == c.tasks()[t].records.size());
  }
}

TEST_CASE("stratified folds preserve class counts exactly when divisible") {
  data::TaskDataset task;
  task.name = "s";
  for (int i = 0; i < 30; ++i)
    task.records.push_back({"a" + std::to_string(i), "C", {}, true, Date()});
  for (int i = 0; i < 70; ++i)
    task.records.push_back({"i" + std::to_string(i), "C", {}, false, Date()});
  const auto folds = split::stratified_kfold(task, 5, 17);
  for (int f = 0; f < 5; ++f) {
    int active = 0, inactive = 0;
    for (std::size_t r = 0; r < task.records.size(); ++r)
      if (folds.fold_of[r] == f)
        (task.records[r].active ? active : inactive)++;
    CHECK(active == 6);
    CHECK(inactive == 14);
  }

  // determinism
  const auto again = split::stratified_kfold(task, 5, 17);
  CHECK(folds.fold_of == again.fold_of);
  const auto other = split::stratified_kfold(task, 5, 18);
  CHECK(folds.fold_of != other.fold_of);

  CHECK_THROWS_AS(split::stratified_kfold(task, 1, 17), Error);
}

TEST_CASE("fold class ratios stay within one-over-fold-size") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    data::TaskDataset task;
    task.name = "r";
    const int n = 40 + int(rng.next_below(200));
    int actives = 0;
    for (int i = 0; i < n; ++i) {
      const bool a = rng.next_bool(0.3);
      actives += a;
      task.records.push_back({std::to_string(i), "C", {}, a, Date()});
    }
    if (actives < 5 || n - actives < 5) continue;
    const double full_ratio = double(actives) / double(n);
    const auto folds = split::stratified_kfold(task, 5, rng.next_u64());
    for (int f = 0; f < 5; ++f) {
      int fa = 0, fn = 0;
      for (std::size_t r = 0; r < task.records.size(); ++r)
        if (folds.fold_of[r] == f) {
          ++fn;
          fa += task.records[r].active;
        }
      REQUIRE(fn > 0);
      CHECK(std::abs(double(fa) / double(fn) - full_ratio) <= 1.0 / double(fn) + 1e-12);
    }
  }
}

TEST_CASE("folds partition the records") {
  data::TaskDataset task;
  task.name = "p";
  for (int i = 0; i < 53; ++i)
    task.records.push_back({std::to_string(i), "C", {}, i % 3 == 0, Date()});
  const auto folds = split::stratified_kfold(task, 5, 3);
  std::set<int> seen;
  for (std::size_t r = 0; r < task.records.size(); ++r) {
    CHECK(folds.fold_of[r] >= 0);
    CHECK(folds.fold_of[r] < 5);
    seen.insert(int(r));
  }
  CHECK(seen.size() == task.records.size());
}
