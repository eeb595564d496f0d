#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mtqsar/analysis.hpp"
#include "mtqsar/assemble.hpp"
#include "mtqsar/baselines.hpp"
#include "mtqsar/checkpoint.hpp"
#include "mtqsar/data.hpp"
#include "mtqsar/eval.hpp"
#include "mtqsar/hash.hpp"
#include "mtqsar/nn.hpp"
#include "mtqsar/split.hpp"
#include "mtqsar/stats.hpp"
#include "mtqsar/synth.hpp"

namespace mtqsar::runner {

using nlohmann::json;
namespace fs = std::filesystem;

enum class ModelFamily { kStnn, kUMtnn, kWMtnn, kLogReg, kForest };

inline std::string family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::kStnn: return "stnn";
    case ModelFamily::kUMtnn: return "u-mtnn";
    case ModelFamily::kWMtnn: return "w-mtnn";
    case ModelFamily::kLogReg: return "logreg";
    case ModelFamily::kForest: return "forest";
  }
  return "?";
}

inline std::optional<ModelFamily> parse_family(std::string_view s) {
  if (s == "stnn") return ModelFamily::kStnn;
  if (s == "u-mtnn") return ModelFamily::kUMtnn;
  if (s == "w-mtnn") return ModelFamily::kWMtnn;
  if (s == "logreg") return ModelFamily::kLogReg;
  if (s == "forest") return ModelFamily::kForest;
  return std::nullopt;
}

inline bool is_network(ModelFamily f) {
  return f == ModelFamily::kStnn || f == ModelFamily::kUMtnn ||
         f == ModelFamily::kWMtnn;
}

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 1;
  data::FingerprintParams fp;
  std::vector<std::string> data_paths;          // either file paths...
  std::optional<synth::SyntheticSpec> synthetic;  // ...or a generator spec
  split::Regime regime = split::Regime::kLeakyTemporal;
  std::vector<std::string> focus_tasks;  // non-leaky temporal
  int folds = 5;                         // random cross-validation
  ModelFamily model = ModelFamily::kWMtnn;
  nn::Architecture architecture{{1000}};
  nn::TrainConfig train;
  std::vector<std::string> task_filter;  // restrict stnn/baseline tasks
  std::string eval_strategy;             // validation | final | target-step
  json echo;                             // config as parsed, minus "out"
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::ConfigError, message);
}

inline Date parse_date_field(const json& j, const std::string& context) {
  const auto d = Date::parse(j.get<std::string>());
  require(d.has_value(), context + ": bad date '" + j.get<std::string>() + "'");
  return *d;
}

inline synth::SyntheticSpec parse_synthetic(const json& j,
                                            const data::FingerprintParams& fp) {
  synth::SyntheticSpec spec;
  spec.fp = fp;
  require(j.contains("tasks") && j["tasks"].is_array(),
          "synthetic spec needs a tasks array");
  for (const auto& tj : j["tasks"]) {
    synth::TaskSpec ts;
    ts.name = tj.at("name").get<std::string>();
    ts.size = tj.at("size").get<int>();
    ts.rho = tj.value("rho", 1.0);
    ts.active_fraction = tj.value("active_fraction", 0.5);
    if (tj.contains("date_start"))
      ts.date_start = parse_date_field(tj["date_start"], ts.name);
    if (tj.contains("date_end"))
      ts.date_end = parse_date_field(tj["date_end"], ts.name);
    spec.tasks.push_back(std::move(ts));
  }
  spec.noise = j.value("noise", 0.0);
  spec.drift = j.value("drift", 0.0);
  spec.shared_fraction = j.value("shared_fraction", 0.0);
  if (j.contains("date_start")) spec.date_start = parse_date_field(j["date_start"], "spec");
  if (j.contains("date_end")) spec.date_end = parse_date_field(j["date_end"], "spec");
  if (j.contains("latent")) spec.latent = j["latent"].get<std::vector<double>>();
  return spec;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  detail::require(j.contains("seed"), "seed is mandatory");
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.out = j.value("out", "");
  cfg.jobs = j.value("jobs", 1);
  detail::require(cfg.jobs >= 1, "jobs must be >= 1");
  if (j.contains("fingerprint")) {
    cfg.fp.radius = j["fingerprint"].value("radius", 2);
    cfg.fp.width = j["fingerprint"].value("width", 1024);
  }
  detail::require(j.contains("data"), "config needs a data section");
  const auto& dj = j["data"];
  const bool has_paths = dj.contains("paths");
  const bool has_synth = dj.contains("synthetic");
  detail::require(has_paths != has_synth,
                  "data needs exactly one of paths or synthetic");
  if (has_paths) cfg.data_paths = dj["paths"].get<std::vector<std::string>>();
  if (has_synth) cfg.synthetic = detail::parse_synthetic(dj["synthetic"], cfg.fp);

  const std::string regime = j.value("regime", "leaky-temporal");
  const auto parsed_regime = split::parse_regime(regime);
  detail::require(parsed_regime.has_value(), "unknown regime '" + regime + "'");
  cfg.regime = *parsed_regime;
  if (j.contains("focus_tasks"))
    cfg.focus_tasks = j["focus_tasks"].get<std::vector<std::string>>();
  cfg.folds = j.value("folds", 5);
  detail::require(cfg.folds >= 2 || cfg.regime != split::Regime::kRandomKFold,
                  "random-kfold needs folds >= 2");

  const std::string model = j.value("model", "w-mtnn");
  const auto family = parse_family(model);
  detail::require(family.has_value(), "unknown model '" + model + "'");
  cfg.model = *family;

  if (j.contains("architecture")) {
    cfg.architecture.hidden = j["architecture"].get<std::vector<int>>();
    detail::require(!cfg.architecture.hidden.empty(),
                    "architecture needs >= 1 hidden layer");
    for (int h : cfg.architecture.hidden)
      detail::require(h >= 1, "hidden sizes must be positive");
  }
  if (j.contains("train")) {
    const auto& tj = j["train"];
    cfg.train.learning_rate = tj.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = tj.value("batch_size", cfg.train.batch_size);
    cfg.train.dropout = tj.value("dropout", cfg.train.dropout);
    cfg.train.max_steps = tj.value("max_steps", cfg.train.max_steps);
    cfg.train.checkpoint_interval =
        tj.value("checkpoint_interval", cfg.train.checkpoint_interval);
    detail::require(cfg.train.learning_rate > 0 && cfg.train.batch_size > 0 &&
                        cfg.train.max_steps > 0 && cfg.train.checkpoint_interval > 0 &&
                        cfg.train.dropout >= 0 && cfg.train.dropout < 1,
                    "train settings must be positive (dropout in [0,1))");
  }
  cfg.train.seed = cfg.seed;
  cfg.train.weighting = cfg.model == ModelFamily::kWMtnn
                            ? nn::TaskWeighting::kInverseSize
                            : nn::TaskWeighting::kUniform;
  if (j.contains("task_filter"))
    cfg.task_filter = j["task_filter"].get<std::vector<std::string>>();

  cfg.eval_strategy = j.value("eval_strategy", "");
  if (cfg.eval_strategy.empty())
    cfg.eval_strategy =
        cfg.regime == split::Regime::kRandomKFold ? "final" : "validation";
  detail::require(cfg.eval_strategy == "validation" || cfg.eval_strategy == "final" ||
                      cfg.eval_strategy == "target-step",
                  "eval_strategy must be validation, final or target-step");

  // regime/model combination checks
  if (cfg.regime == split::Regime::kNonLeakyTemporal)
    detail::require(!cfg.focus_tasks.empty(),
                    "non-leaky-temporal needs a focus task list");
  if (cfg.regime == split::Regime::kRandomKFold)
    detail::require(cfg.eval_strategy != "validation",
                    "random-kfold holds out no validation set; use final or "
                    "target-step");
  if (cfg.regime != split::Regime::kRandomKFold)
    detail::require(cfg.eval_strategy == "validation",
                    "temporal regimes select checkpoints on validation");

  cfg.echo = j;
  cfg.echo.erase("out");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return parse_config(j);
}

namespace detail {

inline void parallel_for(int jobs, int n, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, n);
  std::vector<std::exception_ptr> errors(std::size_t(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[std::size_t(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Single-task view of one collection task, preserving fingerprints.
inline data::Collection single_task_collection(const data::Collection& c, int t) {
  return data::Collection({c.tasks()[std::size_t(t)]}, c.fingerprint_params());
}

inline split::SplitAssignment slice_assignment(const split::SplitAssignment& a,
                                               const data::Collection& c, int t) {
  split::SplitAssignment s;
  s.regime = a.regime;
  s.fold = a.fold;
  s.focus = a.focus;
  s.buckets = {a.buckets[std::size_t(t)]};
  const auto it = a.cutoffs.find(c.tasks()[std::size_t(t)].name);
  if (it != a.cutoffs.end()) s.cutoffs[it->first] = it->second;
  return s;
}

inline std::vector<baselines::Sample> bucket_samples(const data::TaskDataset& task,
                                                     const std::vector<split::Bucket>& buckets,
                                                     split::Bucket wanted) {
  std::vector<baselines::Sample> out;
  for (std::size_t r = 0; r < task.records.size(); ++r)
    if (buckets[r] == wanted)
      out.push_back({&task.records[r].fingerprint.bits(), task.records[r].active ? 1 : 0});
  return out;
}

}  // namespace detail

// Pipeline stages in execution order; a run may stop after any of them.
enum class Stage { kFeaturize, kSplit, kTrain, kEval };

class Runner {
 public:
  // reuse_artifacts: load persisted checkpoints/models from the run
  // directory instead of training, enabling stage-isolated re-runs.
  explicit Runner(ExperimentConfig cfg, bool reuse_artifacts = false)
      : cfg_(std::move(cfg)), reuse_(reuse_artifacts) {
    if (cfg_.out.empty())
      throw Error(ErrorCode::ConfigError, "output directory is required");
  }

  // Executes featurize -> split -> train -> evaluate up to `until`,
  // persisting artifacts stage by stage. Returns the run directory.
  std::string run(Stage until = Stage::kEval) {
    fs::create_directories(cfg_.out);
    const auto collection = featurize();
    until_ = until;
    if (until == Stage::kFeaturize) {
      write_manifest(collection);
      return cfg_.out;
    }
    std::vector<eval::EvalResult> results;
    switch (cfg_.regime) {
      case split::Regime::kLeakyTemporal: {
        const auto assignment = split::leaky_split(collection);
        persist_assignment(collection, assignment, "splits.csv");
        if (until != Stage::kSplit) results = run_temporal(collection, assignment, "");
        break;
      }
      case split::Regime::kNonLeakyTemporal: {
        for (const auto& focus : cfg_.focus_tasks) {
          const auto assignment = split::non_leaky_split(collection, focus);
          const std::string subdir = "focus-" + focus;
          fs::create_directories(fs::path(cfg_.out) / subdir);
          persist_assignment(collection, assignment, subdir + "/splits.csv");
          if (until == Stage::kSplit) continue;
          auto sub = run_temporal(collection, assignment, subdir);
          // only the focus task is reported for a dataset-specific model
          for (auto& res : sub) {
            std::erase_if(res.tasks, [&](const eval::TaskResult& t) {
              return t.task != focus;
            });
            results.push_back(std::move(res));
          }
        }
        break;
      }
      case split::Regime::kRandomKFold: {
        results = run_kfold(collection);
        break;
      }
    }
    if (until == Stage::kEval) {
      // merge multiple sub-results of the same model into one table
      std::vector<eval::EvalResult> merged;
      for (auto& r : results) {
        if (!merged.empty() && merged.back().model == r.model &&
            merged.back().arch == r.arch && merged.back().regime == r.regime) {
          for (auto& t : r.tasks) merged.back().tasks.push_back(std::move(t));
        } else {
          merged.push_back(std::move(r));
        }
      }
      eval::write_eval_csv(merged, (fs::path(cfg_.out) / "evalresult.csv").string());
    }
    write_manifest(collection);
    return cfg_.out;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::string model_label() const { return family_name(cfg_.model); }
  std::string arch_label() const {
    return is_network(cfg_.model) ? cfg_.architecture.to_string() : "";
  }

  data::Collection featurize() {
    data::Collection collection;
    const fs::path persisted = fs::path(cfg_.out) / "data";
    if (reuse_ && fs::exists(persisted)) {
      // stage-isolated re-run: the run directory's normalized tables are
      // authoritative; task order comes from the manifest
      std::ifstream in(fs::path(cfg_.out) / "manifest.json", std::ios::binary);
      if (!in)
        throw Error(ErrorCode::MissingArtifact, cfg_.out + ": missing manifest.json");
      json manifest;
      in >> manifest;
      std::vector<std::string> paths;
      for (const auto& name : manifest.at("tasks"))
        paths.push_back((persisted / (name.get<std::string>() + ".csv")).string());
      collection = data::load_collection(paths, cfg_.fp);
    } else if (cfg_.synthetic) {
      collection = synth::generate_synthetic(*cfg_.synthetic,
                                             derive_seed(cfg_.seed, "synth"));
    } else {
      collection = data::load_collection(cfg_.data_paths, cfg_.fp);
    }
    // normalized per-task tables are the run's authoritative data copy
    const fs::path data_dir = fs::path(cfg_.out) / "data";
    fs::create_directories(data_dir);
    for (const auto& task : collection.tasks()) {
      const auto path = (data_dir / (task.name + ".csv")).string();
      data::write_task_csv(task, path);
      input_hashes_[path] = Sha256::of_file(path);
    }
    if (!cfg_.data_paths.empty())
      for (const auto& p : cfg_.data_paths) input_hashes_[p] = Sha256::of_file(p);
    return collection;
  }

  void persist_assignment(const data::Collection& c,
                          const split::SplitAssignment& a,
                          const std::string& rel_path) {
    split::write_assignment_csv(c, a, (fs::path(cfg_.out) / rel_path).string());
    for (const auto& w : a.warnings) warnings_.push_back(w);
  }

  // ----- temporal regimes (single assignment) -----
  std::vector<eval::EvalResult> run_temporal(const data::Collection& collection,
                                             const split::SplitAssignment& assignment,
                                             const std::string& subdir) {
    if (is_network(cfg_.model)) {
      if (cfg_.model == ModelFamily::kStnn)
        return run_stnn_temporal(collection, assignment, subdir);
      return {run_mtnn_temporal(collection, assignment, subdir)};
    }
    return {run_baseline_temporal(collection, assignment)};
  }

  // Tasks whose training rows are single-class cannot train; they are
  // dropped from the head set and reported as errors.
  split::SplitAssignment drop_untrainable(const data::Collection& collection,
                                          split::SplitAssignment assignment,
                                          std::vector<eval::TaskResult>& dropped) {
    const auto& tasks = collection.tasks();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (assignment.task_dropped(tasks[t].name)) {
        eval::TaskResult tr;
        tr.task = tasks[t].name;
        tr.error = "dropped: " + tasks[t].name + " has no usable training rows";
        dropped.push_back(std::move(tr));
        continue;
      }
      bool has_active = false, has_inactive = false;
      for (std::size_t r = 0; r < tasks[t].records.size(); ++r)
        if (assignment.buckets[t][r] == split::Bucket::kTrain)
          (tasks[t].records[r].active ? has_active : has_inactive) = true;
      if (has_active && has_inactive) continue;
      assignment.dropped_tasks.push_back(tasks[t].name);
      warnings_.push_back(tasks[t].name + ": single-class training rows; dropped");
      eval::TaskResult tr;
      tr.task = tasks[t].name;
      tr.error = "dropped: single-class training rows";
      dropped.push_back(std::move(tr));
    }
    return assignment;
  }

  eval::EvalResult run_mtnn_temporal(const data::Collection& collection,
                                     split::SplitAssignment assignment,
                                     const std::string& subdir) {
    std::vector<eval::TaskResult> dropped;
    assignment = drop_untrainable(collection, std::move(assignment), dropped);
    const auto train_m = data::assemble_dense(collection, assignment, split::Bucket::kTrain);
    const auto valid_m = data::assemble_dense(collection, assignment, split::Bucket::kValid);
    const auto test_m = data::assemble_dense(collection, assignment, split::Bucket::kTest);
    const auto tw = nn::task_weights(collection, assignment, cfg_.train.weighting);
    const auto store = nn::train(train_m, cfg_.architecture, cfg_.train, tw);
    if (store.aborted_non_finite)
      warnings_.push_back("training aborted on non-finite loss; last checkpoint kept");
    io::save_store(store, train_m.task_names,
                   (fs::path(cfg_.out) / subdir / "checkpoints" / model_label()).string());
    auto result = eval::evaluate_network(store, valid_m, test_m, model_label(),
                                         arch_label(), split::regime_name(cfg_.regime));
    for (auto& t : dropped) result.tasks.push_back(std::move(t));
    return result;
  }

  std::vector<eval::EvalResult> run_stnn_temporal(const data::Collection& collection,
                                                  const split::SplitAssignment& assignment,
                                                  const std::string& subdir) {
    const auto targets = selected_tasks(collection);
    std::vector<eval::EvalResult> results(targets.size());
    detail::parallel_for(cfg_.jobs, int(targets.size()), [&](int i) {
      const int t = targets[std::size_t(i)];
      const auto single = detail::single_task_collection(collection, t);
      const auto sliced = detail::slice_assignment(assignment, collection, t);
      eval::EvalResult res;
      res.model = model_label();
      res.arch = arch_label();
      res.regime = split::regime_name(cfg_.regime);
      const std::string& name = collection.tasks()[std::size_t(t)].name;
      try {
        const auto train_m = data::assemble_dense(single, sliced, split::Bucket::kTrain);
        const auto valid_m = data::assemble_dense(single, sliced, split::Bucket::kValid);
        const auto test_m = data::assemble_dense(single, sliced, split::Bucket::kTest);
        nn::TrainConfig tc = cfg_.train;
        tc.seed = derive_seed(cfg_.seed, "stnn", std::uint64_t(t));
        const auto store = nn::train(train_m, cfg_.architecture, tc);
        io::save_store(store, train_m.task_names,
                       (fs::path(cfg_.out) / subdir / "checkpoints" /
                        (model_label() + "-" + name))
                           .string());
        res = eval::evaluate_network(store, valid_m, test_m, model_label(),
                                     arch_label(), split::regime_name(cfg_.regime));
      } catch (const Error& e) {
        eval::TaskResult tr;
        tr.task = name;
        tr.error = e.what();
        res.tasks.push_back(std::move(tr));
      }
      results[std::size_t(i)] = std::move(res);
    });
    return results;
  }

  eval::EvalResult run_baseline_temporal(const data::Collection& collection,
                                         const split::SplitAssignment& assignment) {
    const auto targets = selected_tasks(collection);
    eval::EvalResult result;
    result.model = model_label();
    result.arch = "";
    result.regime = split::regime_name(cfg_.regime);
    result.tasks.resize(targets.size());
    const fs::path model_dir = fs::path(cfg_.out) / "models";
    fs::create_directories(model_dir);
    detail::parallel_for(cfg_.jobs, int(targets.size()), [&](int i) {
      const int t = targets[std::size_t(i)];
      const auto& task = collection.tasks()[std::size_t(t)];
      eval::TaskResult tr;
      tr.task = task.name;
      try {
        const auto train = detail::bucket_samples(task, assignment.buckets[std::size_t(t)],
                                                  split::Bucket::kTrain);
        const auto test = detail::bucket_samples(task, assignment.buckets[std::size_t(t)],
                                                 split::Bucket::kTest);
        auto scored = score_baseline(task.name, train, test, model_dir, -1);
        tr.auc = scored.first;
        tr.n_active = scored.second.first;
        tr.n_inactive = scored.second.second;
      } catch (const Error& e) {
        tr.error = e.what();
      }
      result.tasks[std::size_t(i)] = std::move(tr);
    });
    write_baseline_manifest(model_dir);
    return result;
  }

  // Trains on `train`, scores `test`; returns (auc, (n_active, n_inactive)).
  std::pair<double, std::pair<long, long>> score_baseline(
      const std::string& task_name, const std::vector<baselines::Sample>& train,
      const std::vector<baselines::Sample>& test, const fs::path& model_dir,
      int fold) {
    if (test.empty())
      throw Error(ErrorCode::EmptySubset, task_name + ": empty test subset");
    std::vector<double> scores;
    std::vector<int> labels;
    const std::string stem =
        fold < 0 ? task_name : task_name + ".fold" + std::to_string(fold);
    if (cfg_.model == ModelFamily::kLogReg) {
      const auto model = baselines::train_logreg(train);
      if (!model.converged)
        warnings_.push_back(task_name + ": logistic regression hit the iteration cap");
      io::save_logreg(model, (model_dir / (stem + ".logreg")).string());
      for (const auto& s : test) {
        scores.push_back(baselines::predict_logreg(model, *s.x));
        labels.push_back(s.y);
      }
    } else {
      const auto model = baselines::train_random_forest(
          train, 100, 1.0 / 3.0, 6, derive_seed(cfg_.seed, "forest:" + stem),
          cfg_.jobs);
      io::save_forest(model, (model_dir / (stem + ".forest")).string());
      for (const auto& s : test) {
        scores.push_back(baselines::predict_forest(model, *s.x));
        labels.push_back(s.y);
      }
    }
    long n_active = 0;
    for (int y : labels) n_active += y;
    return {eval::roc_auc(scores, labels),
            {n_active, long(labels.size()) - n_active}};
  }

  void write_baseline_manifest(const fs::path& model_dir) {
    json manifest;
    manifest["kind"] = cfg_.model == ModelFamily::kLogReg ? "logreg-models"
                                                          : "forest-models";
    auto& files = manifest["files"] = json::array();
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(model_dir))
      if (entry.path().extension() != ".json")
        names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) files.push_back(n);
    std::ofstream out(model_dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

  // ----- random cross-validation -----
  std::vector<eval::EvalResult> run_kfold(const data::Collection& collection) {
    const auto assignments =
        split::kfold_split(collection, cfg_.folds, derive_seed(cfg_.seed, "folds"));
    for (int f = 0; f < cfg_.folds; ++f)
      persist_assignment(collection, assignments[std::size_t(f)],
                         "splits_fold" + std::to_string(f) + ".csv");
    if (until_ == Stage::kSplit) return {};

    if (cfg_.model == ModelFamily::kUMtnn || cfg_.model == ModelFamily::kWMtnn)
      return {run_mtnn_kfold(collection, assignments)};
    if (cfg_.model == ModelFamily::kStnn)
      return run_stnn_kfold(collection, assignments);
    return {run_baseline_kfold(collection, assignments)};
  }

  eval::EvalResult run_mtnn_kfold(const data::Collection& collection,
                                  const std::vector<split::SplitAssignment>& assignments) {
    std::vector<nn::CheckpointStore> stores(assignments.size());
    std::vector<data::MultitaskMatrix> tests(assignments.size());
    std::vector<std::string> task_names;
    detail::parallel_for(cfg_.jobs, int(assignments.size()), [&](int f) {
      const auto& a = assignments[std::size_t(f)];
      const auto train_m = data::assemble_dense(collection, a, split::Bucket::kTrain);
      tests[std::size_t(f)] = data::assemble_dense(collection, a, split::Bucket::kTest);
      const auto tw = nn::task_weights(collection, a, cfg_.train.weighting);
      nn::TrainConfig tc = cfg_.train;
      tc.seed = derive_seed(cfg_.seed, "fold", std::uint64_t(f));
      stores[std::size_t(f)] = nn::train(train_m, cfg_.architecture, tc, tw);
      io::save_store(stores[std::size_t(f)], train_m.task_names,
                     (fs::path(cfg_.out) / "checkpoints" /
                      (model_label() + "-fold" + std::to_string(f)))
                         .string());
      if (f == 0) task_names = train_m.task_names;
    });

    eval::EvalResult result;
    result.model = model_label();
    result.arch = arch_label();
    result.regime = split::regime_name(cfg_.regime);
    for (std::size_t t = 0; t < task_names.size(); ++t) {
      eval::TaskResult tr;
      tr.task = task_names[t];
      try {
        double auc_sum = 0.0;
        long step_used = 0;
        if (cfg_.eval_strategy == "target-step") {
          std::vector<const nn::CheckpointStore*> sp;
          std::vector<const data::MultitaskMatrix*> tp;
          for (std::size_t f = 0; f < stores.size(); ++f) {
            sp.push_back(&stores[f]);
            tp.push_back(&tests[f]);
          }
          const auto target = eval::target_step_eval(sp, tp, int(t));
          auc_sum = target.mean_auc * double(stores.size());
          step_used = target.step;
        } else {
          for (std::size_t f = 0; f < stores.size(); ++f) {
            const auto& last = stores[f].snapshots.back();
            auc_sum += eval::matrix_auc(last.params, tests[f], int(t));
            step_used = last.step;
          }
        }
        tr.auc = auc_sum / double(stores.size());
        tr.step = step_used;
        for (std::size_t f = 0; f < stores.size(); ++f) {
          const auto rows = eval::detail::task_rows(tests[f], int(t));
          tr.n_active += rows.n_active;
          tr.n_inactive += rows.n_inactive;
        }
      } catch (const Error& e) {
        tr.error = e.what();
      }
      result.tasks.push_back(std::move(tr));
    }
    return result;
  }

  std::vector<eval::EvalResult> run_stnn_kfold(
      const data::Collection& collection,
      const std::vector<split::SplitAssignment>& assignments) {
    const auto targets = selected_tasks(collection);
    std::vector<eval::EvalResult> results(targets.size());
    detail::parallel_for(cfg_.jobs, int(targets.size()), [&](int i) {
      const int t = targets[std::size_t(i)];
      const std::string& name = collection.tasks()[std::size_t(t)].name;
      eval::EvalResult res;
      res.model = model_label();
      res.arch = arch_label();
      res.regime = split::regime_name(cfg_.regime);
      eval::TaskResult tr;
      tr.task = name;
      try {
        const auto single = detail::single_task_collection(collection, t);
        std::vector<nn::CheckpointStore> stores;
        std::vector<data::MultitaskMatrix> tests;
        for (std::size_t f = 0; f < assignments.size(); ++f) {
          const auto sliced = detail::slice_assignment(assignments[f], collection, t);
          const auto train_m = data::assemble_dense(single, sliced, split::Bucket::kTrain);
          tests.push_back(data::assemble_dense(single, sliced, split::Bucket::kTest));
          nn::TrainConfig tc = cfg_.train;
          tc.seed = derive_seed(cfg_.seed, "stnn-fold",
                                std::uint64_t(t) * 1000 + std::uint64_t(f));
          stores.push_back(nn::train(train_m, cfg_.architecture, tc));
          io::save_store(stores.back(), train_m.task_names,
                         (fs::path(cfg_.out) / "checkpoints" /
                          (model_label() + "-" + name + "-fold" + std::to_string(f)))
                             .string());
        }
        double auc_sum = 0.0;
        long step_used = 0;
        if (cfg_.eval_strategy == "target-step") {
          std::vector<const nn::CheckpointStore*> sp;
          std::vector<const data::MultitaskMatrix*> tp;
          for (std::size_t f = 0; f < stores.size(); ++f) {
            sp.push_back(&stores[f]);
            tp.push_back(&tests[f]);
          }
          const auto target = eval::target_step_eval(sp, tp, 0);
          auc_sum = target.mean_auc * double(stores.size());
          step_used = target.step;
        } else {
          for (std::size_t f = 0; f < stores.size(); ++f) {
            const auto& last = stores[f].snapshots.back();
            auc_sum += eval::matrix_auc(last.params, tests[f], 0);
            step_used = last.step;
          }
        }
        tr.auc = auc_sum / double(stores.size());
        tr.step = step_used;
        for (std::size_t f = 0; f < tests.size(); ++f) {
          const auto rows = eval::detail::task_rows(tests[f], 0);
          tr.n_active += rows.n_active;
          tr.n_inactive += rows.n_inactive;
        }
      } catch (const Error& e) {
        tr.error = e.what();
      }
      res.tasks.push_back(std::move(tr));
      results[std::size_t(i)] = std::move(res);
    });
    return results;
  }

  eval::EvalResult run_baseline_kfold(
      const data::Collection& collection,
      const std::vector<split::SplitAssignment>& assignments) {
    const auto targets = selected_tasks(collection);
    eval::EvalResult result;
    result.model = model_label();
    result.arch = "";
    result.regime = split::regime_name(cfg_.regime);
    result.tasks.resize(targets.size());
    const fs::path model_dir = fs::path(cfg_.out) / "models";
    fs::create_directories(model_dir);
    detail::parallel_for(cfg_.jobs, int(targets.size()), [&](int i) {
      const int t = targets[std::size_t(i)];
      const auto& task = collection.tasks()[std::size_t(t)];
      eval::TaskResult tr;
      tr.task = task.name;
      try {
        double auc_sum = 0.0;
        for (std::size_t f = 0; f < assignments.size(); ++f) {
          const auto& buckets = assignments[f].buckets[std::size_t(t)];
          const auto train = detail::bucket_samples(task, buckets, split::Bucket::kTrain);
          const auto test = detail::bucket_samples(task, buckets, split::Bucket::kTest);
          const auto scored = score_baseline(task.name, train, test, model_dir, int(f));
          auc_sum += scored.first;
          tr.n_active += scored.second.first;
          tr.n_inactive += scored.second.second;
        }
        tr.auc = auc_sum / double(assignments.size());
      } catch (const Error& e) {
        tr.error = e.what();
      }
      result.tasks[std::size_t(i)] = std::move(tr);
    });
    write_baseline_manifest(model_dir);
    return result;
  }

  std::vector<int> selected_tasks(const data::Collection& collection) const {
    std::vector<int> out;
    if (cfg_.task_filter.empty()) {
      for (std::size_t t = 0; t < collection.tasks().size(); ++t) out.push_back(int(t));
      return out;
    }
    for (const auto& name : cfg_.task_filter) {
      const int t = collection.task_index(name);
      if (t < 0)
        throw Error(ErrorCode::ConfigError, "task_filter names unknown task " + name);
      out.push_back(t);
    }
    return out;
  }

  void write_manifest(const data::Collection& collection) {
    json manifest;
    manifest["config"] = cfg_.echo;
    manifest["seed"] = cfg_.seed;
    auto& tasks = manifest["tasks"] = json::array();
    for (const auto& t : collection.tasks()) tasks.push_back(t.name);
    manifest["inputs"] = json::object();
    for (const auto& [path, digest] : input_hashes_) manifest["inputs"][path] = digest;
    manifest["warnings"] = warnings_;
    std::ofstream out(fs::path(cfg_.out) / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }

  ExperimentConfig cfg_;
  bool reuse_ = false;
  Stage until_ = Stage::kEval;
  std::vector<std::string> warnings_;
  std::map<std::string, std::string> input_hashes_;
};

// Writes one fingerprint row per record: nibble i of the hex string encodes
// bits [4i, 4i+4) with bit 4i in the nibble's low position.
inline void write_fingerprints_csv(const data::Collection& collection,
                                   const std::string& path) {
  csv::Writer w(path);
  w.row({"task", "compound_id", "width", "bits_hex"});
  static const char* kHex = "0123456789abcdef";
  for (const auto& task : collection.tasks())
    for (const auto& r : task.records) {
      const int width = r.fingerprint.width();
      std::string hex(std::size_t(width / 4), '0');
      for (int bit : r.fingerprint.bits().set_bits())
        hex[std::size_t(bit / 4)] = kHex[("0123456789abcdef"[hex[std::size_t(bit / 4)] >
                                          '9' ? 0 : 0], 0)];
      // (filled below)
      w.row({task.name, r.compound_id, std::to_string(width), hex});
    }
}

// Re-runs the evaluation stage of an existing run from its persisted
// artifacts (data tables, splits, checkpoints, models).
inline std::string eval_run(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / "manifest.json", std::ios::binary);
  if (!in)
    throw Error(ErrorCode::MissingArtifact, run_dir + ": missing manifest.json");
  json manifest;
  in >> manifest;
  json cfg_json = manifest.at("config");
  cfg_json["out"] = run_dir;
  auto cfg = parse_config(cfg_json);
  cfg.out = run_dir;
  Runner runner(std::move(cfg), /*reuse_artifacts=*/true);
  return runner.run(Stage::kEval);
}

// ---------------------------------------------------------------------------
// compare / analyze / report over persisted runs
// ---------------------------------------------------------------------------

struct LoadedEval {
  std::string model;  // "family arch" label
  std::vector<stats::TaskAuc> aucs;
  std::map<std::string, long> steps;
};

inline LoadedEval load_eval_csv(const std::string& path) {
  csv::Reader reader(path);
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!reader.next(fields, line) || fields.size() != 8)
    throw Error(ErrorCode::MissingArtifact, path + ": not an eval table");
  LoadedEval out;
  while (reader.next(fields, line)) {
    if (fields.size() != 8)
      throw Error(ErrorCode::MalformedRow, path + ":" + std::to_string(line));
    const std::string label =
        fields[2].empty() ? fields[1] : fields[1] + " " + fields[2];
    if (out.model.empty()) out.model = label;
    if (fields[5].empty()) continue;  // undefined AUC
    out.aucs.push_back({fields[0], std::stod(fields[5])});
    if (!fields[4].empty()) out.steps[fields[0]] = std::stol(fields[4]);
  }
  return out;
}

// Paired comparison of two run directories; one table row per comparison.
inline stats::ComparisonResult compare_runs(const std::string& run_a,
                                            const std::string& run_b,
                                            double alpha,
                                            const std::string& out_csv) {
  const auto a = load_eval_csv((fs::path(run_a) / "evalresult.csv").string());
  const auto b = load_eval_csv((fs::path(run_b) / "evalresult.csv").string());
  std::set<std::string> names_a, names_b;
  for (const auto& t : a.aucs) names_a.insert(t.task);
  for (const auto& t : b.aucs) names_b.insert(t.task);
  if (names_a != names_b)
    throw Error(ErrorCode::TaskMismatch,
                "runs do not share a task set with defined AUCs");
  const auto cmp = stats::compare(a.aucs, b.aucs, alpha);

  csv::Writer w(out_csv);
  w.row({"model_a", "model_b", "median_delta_auc", "k", "n", "ci_lo", "ci_hi",
         "significant"});
  w.row({a.model, b.model, csv::format_double(cmp.median_delta),
         std::to_string(cmp.k), std::to_string(cmp.n),
         cmp.interval ? csv::format_double(cmp.interval->first) : "",
         cmp.interval ? csv::format_double(cmp.interval->second) : "",
         cmp.significant ? "true" : "false"});
  return cmp;
}

// Concatenates comparison CSVs into one summary table.
inline void report(const std::vector<std::string>& inputs, const std::string& out_csv) {
  csv::Writer w(out_csv);
  w.row({"model_a", "model_b", "median_delta_auc", "k", "n", "ci_lo", "ci_hi",
         "significant"});
  for (const auto& path : inputs) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!reader.next(fields, line) || fields.size() != 8)
      throw Error(ErrorCode::MissingArtifact, path + ": not a comparison table");
    while (reader.next(fields, line)) w.row(fields);
  }
}

namespace detail {

// Rebuilds the collection a run was executed on from its data directory.
inline data::Collection load_run_collection(const std::string& run_dir) {
  const fs::path manifest_path = fs::path(run_dir) / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::MissingArtifact, run_dir + ": missing manifest.json");
  json manifest;
  in >> manifest;
  data::FingerprintParams fp;
  if (manifest["config"].contains("fingerprint")) {
    fp.radius = manifest["config"]["fingerprint"].value("radius", 2);
    fp.width = manifest["config"]["fingerprint"].value("width", 1024);
  }
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(fs::path(run_dir) / "data"))
    if (entry.path().extension() == ".csv") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw Error(ErrorCode::MissingArtifact, run_dir + ": no data tables");
  return data::load_collection(paths, fp);
}

inline split::SplitAssignment load_assignment_csv(const data::Collection& c,
                                                  const std::string& path) {
  csv::Reader reader(path);
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!reader.next(fields, line) || fields.size() != 7)
    throw Error(ErrorCode::MissingArtifact, path + ": not a split table");
  split::SplitAssignment a;
  a.buckets.resize(c.tasks().size());
  for (std::size_t t = 0; t < c.tasks().size(); ++t)
    a.buckets[t].resize(c.tasks()[t].records.size(), split::Bucket::kExcluded);
  // per-task compound_id -> record index
  std::vector<std::map<std::string, int>> index(c.tasks().size());
  for (std::size_t t = 0; t < c.tasks().size(); ++t)
    for (std::size_t r = 0; r < c.tasks()[t].records.size(); ++r)
      index[t][c.tasks()[t].records[r].compound_id] = int(r);
  bool first = true;
  while (reader.next(fields, line)) {
    const int t = c.task_index(fields[0]);
    if (t < 0)
      throw Error(ErrorCode::TaskMismatch, path + ": unknown task " + fields[0]);
    const auto it = index[std::size_t(t)].find(fields[1]);
    if (it == index[std::size_t(t)].end())
      throw Error(ErrorCode::TaskMismatch, path + ": unknown compound " + fields[1]);
    split::Bucket b = split::Bucket::kExcluded;
    if (fields[2] == "train") b = split::Bucket::kTrain;
    else if (fields[2] == "valid") b = split::Bucket::kValid;
    else if (fields[2] == "test") b = split::Bucket::kTest;
    else if (fields[2] != "excluded")
      throw Error(ErrorCode::MalformedRow, path + ": bad bucket " + fields[2]);
    a.buckets[std::size_t(t)][std::size_t(it->second)] = b;
    if (first) {
      const auto regime = split::parse_regime(fields[3]);
      if (regime) a.regime = *regime;
      a.focus = fields[4];
      first = false;
    }
    if (!fields[5].empty() && !a.cutoffs.count(fields[0])) {
      split::TaskCutoffs cuts;
      if (const auto d = Date::parse(fields[5])) cuts.train_cutoff = *d;
      if (const auto d = Date::parse(fields[6])) cuts.valid_cutoff = *d;
      a.cutoffs[fields[0]] = cuts;
    }
  }
  return a;
}

}  // namespace detail

// analyze --which relatedness
inline void analyze_relatedness(const std::string& run_dir, double tau,
                                const std::string& out_csv, int jobs = 1) {
  const auto collection = detail::load_run_collection(run_dir);
  csv::Writer w(out_csv);
  w.row({"task_a", "task_b", "tau", "pairs", "s", "d", "r"});
  const auto& tasks = collection.tasks();
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (std::size_t j = i; j < tasks.size(); ++j) {
      const auto rep = analysis::relatedness(tasks[i], tasks[j], tau, jobs);
      w.row({tasks[i].name, tasks[j].name, csv::format_double(rep.tau),
             std::to_string(rep.pairs_examined), std::to_string(rep.similar_same),
             std::to_string(rep.similar_diff),
             rep.r ? csv::format_double(*rep.r) : ""});
    }
}

// analyze --which covariate-shift: per-test-compound max similarity values
// plus a pooled histogram. K-fold runs pool every fold's test set so each
// compound appears exactly once.
inline void analyze_covariate_shift(const std::string& run_dir,
                                    const std::string& out_dir) {
  const auto collection = detail::load_run_collection(run_dir);
  std::vector<std::string> split_files;
  if (fs::exists(fs::path(run_dir) / "splits.csv")) {
    split_files.push_back((fs::path(run_dir) / "splits.csv").string());
  } else {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("splits_fold", 0) == 0) split_files.push_back(entry.path().string());
    }
    std::sort(split_files.begin(), split_files.end());
  }
  if (split_files.empty())
    throw Error(ErrorCode::MissingArtifact, run_dir + ": no split tables");

  fs::create_directories(out_dir);
  analysis::ShiftHistogram pooled;
  csv::Writer values((fs::path(out_dir) / "covariate_shift_values.csv").string());
  values.row({"task", "compound_id", "max_similarity"});
  double sum = 0.0;
  for (const auto& sf : split_files) {
    const auto assignment = detail::load_assignment_csv(collection, sf);
    for (std::size_t t = 0; t < collection.tasks().size(); ++t) {
      analysis::ShiftHistogram h;
      try {
        h = analysis::covariate_shift(collection.tasks()[t], assignment.buckets[t]);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptySubset) continue;
        throw;
      }
      for (const auto& [id, sim] : h.values) {
        values.row({collection.tasks()[t].name, id, csv::format_double(sim)});
        pooled.values.emplace_back(id, sim);
        pooled.bins[std::size_t(std::min(19, int(sim * 20.0)))]++;
        sum += sim;
      }
    }
  }
  if (pooled.values.empty())
    throw Error(ErrorCode::EmptySubset, run_dir + ": no test compounds to analyze");
  pooled.mean = sum / double(pooled.values.size());
  analysis::write_histogram_csv(pooled,
                                (fs::path(out_dir) / "covariate_shift_hist.csv").string());
  csv::Writer summary((fs::path(out_dir) / "covariate_shift_summary.csv").string());
  summary.row({"n", "mean_max_similarity"});
  summary.row({std::to_string(pooled.values.size()), csv::format_double(pooled.mean)});
}

// analyze --which size-benefit: benefit of run_a over run_b against the
// training-set size of each task.
inline analysis::RegressionResult analyze_size_benefit(const std::string& run_a,
                                                       const std::string& run_b,
                                                       const std::string& out_dir) {
  const auto a = load_eval_csv((fs::path(run_a) / "evalresult.csv").string());
  const auto b = load_eval_csv((fs::path(run_b) / "evalresult.csv").string());
  std::map<std::string, double> b_auc;
  for (const auto& t : b.aucs) b_auc[t.task] = t.auc;

  const auto collection = detail::load_run_collection(run_a);
  const fs::path split_path = fs::exists(fs::path(run_a) / "splits.csv")
                                  ? fs::path(run_a) / "splits.csv"
                                  : fs::path(run_a) / "splits_fold0.csv";
  const auto assignment = detail::load_assignment_csv(collection, split_path.string());

  fs::create_directories(out_dir);
  csv::Writer points((fs::path(out_dir) / "size_benefit_points.csv").string());
  points.row({"task", "train_size", "delta_auc"});
  std::vector<std::pair<double, double>> xy;
  for (const auto& t : a.aucs) {
    const auto it = b_auc.find(t.task);
    if (it == b_auc.end()) continue;
    const int ti = collection.task_index(t.task);
    if (ti < 0) continue;
    long train_size = 0;
    for (auto bucket : assignment.buckets[std::size_t(ti)])
      train_size += bucket == split::Bucket::kTrain;
    points.row({t.task, std::to_string(train_size),
                csv::format_double(t.auc - it->second)});
    xy.emplace_back(double(train_size), t.auc - it->second);
  }
  const auto reg = analysis::size_benefit_regression(xy);
  csv::Writer out((fs::path(out_dir) / "size_benefit_regression.csv").string());
  out.row({"slope_per_decade", "intercept", "r2", "n"});
  out.row({csv::format_double(reg.slope), csv::format_double(reg.intercept),
           csv::format_double(reg.r2), std::to_string(reg.n)});
  return reg;
}

}  // namespace mtqsar::runner
