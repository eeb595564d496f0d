#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "mtqsar/bitvec.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"

namespace mtqsar::baselines {

struct Sample {
  const BitVec* x = nullptr;
  int y = 0;  // 1 = active
};

// ---------------------------------------------------------------------------
// Logistic regression: L2-regularized logistic loss, bias unregularized,
// full-batch gradient descent with Armijo backtracking.
// ---------------------------------------------------------------------------

struct LogRegModel {
  std::vector<double> w;
  double bias = 0.0;
  double l2 = 1.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LogRegObjective {
  const std::vector<Sample>& samples;
  double l2;

  double margin(const std::vector<double>& w, double b, const BitVec& x) const {
    double z = b;
    for (int bit : x.set_bits()) z += w[std::size_t(bit)];
    return z;
  }

  double value(const std::vector<double>& w, double b) const {
    double f = 0.0;
    for (const auto& s : samples) {
      const double z = margin(w, b, *s.x);
      const double sz = s.y ? z : -z;
      // log(1 + exp(-sz)) without overflow
      f += sz > 0.0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
    }
    double reg = 0.0;
    for (double wi : w) reg += wi * wi;
    return f + 0.5 * l2 * reg;
  }

  // returns the objective value at (w, b) as a byproduct
  double gradient(const std::vector<double>& w, double b, std::vector<double>& gw,
                  double& gb) const {
    gw.assign(w.size(), 0.0);
    gb = 0.0;
    double f = 0.0;
    for (const auto& s : samples) {
      const double z = margin(w, b, *s.x);
      const double sz = s.y ? z : -z;
      f += sz > 0.0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
      const double resid = sigmoid(z) - double(s.y);
      gb += resid;
      for (int bit : s.x->set_bits()) gw[std::size_t(bit)] += resid;
    }
    double reg = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      reg += w[i] * w[i];
      gw[i] += l2 * w[i];
    }
    return f + 0.5 * l2 * reg;
  }
};

}  // namespace detail

inline LogRegModel train_logreg(const std::vector<Sample>& samples, double l2 = 1.0,
                                int max_iterations = 5000,
                                double gradient_tolerance = 1e-6) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
  bool has_active = false, has_inactive = false;
  for (const auto& s : samples) (s.y ? has_active : has_inactive) = true;
  if (!has_active || !has_inactive)
    throw Error(ErrorCode::SingleClass, "logistic regression needs both classes");

  const int width = samples.front().x->width();
  for (const auto& s : samples)
    if (s.x->width() != width)
      throw Error(ErrorCode::ShapeMismatch, "inconsistent feature widths");

  LogRegModel model;
  model.w.assign(std::size_t(width), 0.0);
  model.l2 = l2;
  const detail::LogRegObjective obj{samples, l2};

  std::vector<double> gw, trial_w(model.w.size());
  double gb = 0.0;
  double step = 1.0;
  double f = obj.gradient(model.w, model.bias, gw, gb);
  for (int iter = 0; iter < max_iterations; ++iter) {
    double grad_sq = gb * gb;
    for (double g : gw) grad_sq += g * g;
    if (std::sqrt(grad_sq) < gradient_tolerance) {
      model.converged = true;
      model.iterations = iter;
      return model;
    }
    // Armijo backtracking on f(theta - t*g) <= f - 0.5*t*|g|^2
    double trial_b = 0.0, trial_f = 0.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t i = 0; i < model.w.size(); ++i)
        trial_w[i] = model.w[i] - step * gw[i];
      trial_b = model.bias - step * gb;
      trial_f = obj.value(trial_w, trial_b);
      if (trial_f <= f - 0.5 * step * grad_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step underflow: cannot improve further
    model.w.swap(trial_w);
    model.bias = trial_b;
    model.iterations = iter + 1;
    step = std::min(step * 2.0, 1.0e6);
    f = obj.gradient(model.w, model.bias, gw, gb);
    (void)trial_f;
  }
  model.converged = false;  // best iterate returned; caller may warn
  return model;
}

inline double predict_logreg(const LogRegModel& model, const BitVec& x) {
  if (x.width() != int(model.w.size()))
    throw Error(ErrorCode::ShapeMismatch, "feature width != model width");
  double z = model.bias;
  for (int bit : x.set_bits()) z += model.w[std::size_t(bit)];
  return detail::sigmoid(z);
}

// ---------------------------------------------------------------------------
// Random forest of CART trees on binary features: Gini impurity, bootstrap
// rows, per-node feature subsampling. The only split threshold on a bit
// feature is 0.5.
// ---------------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  int zero_child = -1;
  int one_child = -1;
  long n_active = 0;
  long n_inactive = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct ForestModel {
  int width = 0;
  int n_trees = 0;
  double max_features_frac = 1.0 / 3.0;
  int min_samples_split = 6;
  std::uint64_t seed = 0;
  std::vector<Tree> trees;
};

// Test hook: one entry per realized split so gains can be re-derived.
struct SplitAudit {
  int tree = 0;
  std::vector<int> rows;      // bootstrap sample rows reaching the node
  std::vector<int> features;  // candidate features offered
  int chosen = -1;
  double gain = 0.0;
};

namespace detail {

inline double gini(long active, long inactive) {
  const long n = active + inactive;
  if (n == 0) return 0.0;
  const double pa = double(active) / double(n);
  const double pi = double(inactive) / double(n);
  return 1.0 - pa * pa - pi * pi;
}

inline double split_gain(long act, long inact, long act1, long inact1) {
  const long act0 = act - act1, inact0 = inact - inact1;
  const long n = act + inact, n0 = act0 + inact0, n1 = act1 + inact1;
  if (n0 == 0 || n1 == 0) return -1.0;  // degenerate split
  return gini(act, inact) - double(n0) / double(n) * gini(act0, inact0) -
         double(n1) / double(n) * gini(act1, inact1);
}

struct TreeBuilder {
  const std::vector<Sample>& samples;
  int width;
  int min_samples_split;
  int n_candidates;
  Rng rng;
  Tree tree;
  std::vector<int> feature_pool;
  int tree_index;
  std::vector<SplitAudit>* audit;

  TreeBuilder(const std::vector<Sample>& s, int w, int min_split, int k,
              std::uint64_t seed, int index, std::vector<SplitAudit>* a)
      : samples(s),
        width(w),
        min_samples_split(min_split),
        n_candidates(k),
        rng(seed),
        tree_index(index),
        audit(a) {
    feature_pool.resize(std::size_t(width));
    for (int i = 0; i < width; ++i) feature_pool[std::size_t(i)] = i;
  }

  int build(std::vector<int> rows) {
    const int node_index = int(tree.nodes.size());
    tree.nodes.emplace_back();
    long act = 0;
    for (int r : rows) act += samples[std::size_t(r)].y;
    const long inact = long(rows.size()) - act;
    tree.nodes[std::size_t(node_index)].n_active = act;
    tree.nodes[std::size_t(node_index)].n_inactive = inact;
    if (act == 0 || inact == 0 || long(rows.size()) < min_samples_split)
      return node_index;

    // sample candidate features without replacement
    for (int i = 0; i < n_candidates; ++i) {
      const std::size_t j = std::size_t(i) + rng.next_below(std::uint64_t(width - i));
      std::swap(feature_pool[std::size_t(i)], feature_pool[j]);
    }
    int best_feature = -1;
    double best_gain = 0.0;
    for (int i = 0; i < n_candidates; ++i) {
      const int feat = feature_pool[std::size_t(i)];
      long act1 = 0, n1 = 0;
      for (int r : rows) {
        if (samples[std::size_t(r)].x->test(feat)) {
          ++n1;
          act1 += samples[std::size_t(r)].y;
        }
      }
      const double gain = split_gain(act, inact, act1, n1 - act1);
      if (gain > best_gain || (gain == best_gain && gain > 0.0 &&
                               (best_feature < 0 || feat < best_feature))) {
        best_gain = gain;
        best_feature = feat;
      }
    }
    if (best_feature < 0) return node_index;  // no improving split

    if (audit != nullptr) {
      SplitAudit entry;
      entry.tree = tree_index;
      entry.rows = rows;
      entry.features.assign(feature_pool.begin(),
                            feature_pool.begin() + n_candidates);
      entry.chosen = best_feature;
      entry.gain = best_gain;
      audit->push_back(std::move(entry));
    }

    std::vector<int> zeros, ones;
    for (int r : rows)
      (samples[std::size_t(r)].x->test(best_feature) ? ones : zeros).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree.nodes[std::size_t(node_index)].feature = best_feature;
    const int zc = build(std::move(zeros));
    tree.nodes[std::size_t(node_index)].zero_child = zc;
    const int oc = build(std::move(ones));
    tree.nodes[std::size_t(node_index)].one_child = oc;
    return node_index;
  }
};

}  // namespace detail

// Seeds per tree derive from the master seed by the splitmix rule, so the
// forest is identical however tree construction is scheduled.
inline ForestModel train_random_forest(const std::vector<Sample>& samples,
                                       int n_trees = 100,
                                       double max_features_frac = 1.0 / 3.0,
                                       int min_samples_split = 6,
                                       std::uint64_t seed = 0, int n_jobs = 1,
                                       std::vector<SplitAudit>* audit = nullptr) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
  if (long(samples.size()) < min_samples_split)
    throw Error(ErrorCode::EmptyInput,
                "need at least min_samples_split training samples");
  const int width = samples.front().x->width();
  for (const auto& s : samples)
    if (s.x->width() != width)
      throw Error(ErrorCode::ShapeMismatch, "inconsistent feature widths");

  ForestModel model;
  model.width = width;
  model.n_trees = n_trees;
  model.max_features_frac = max_features_frac;
  model.min_samples_split = min_samples_split;
  model.seed = seed;
  model.trees.resize(std::size_t(n_trees));
  const int k = std::min(width, std::max(1, int(std::ceil(max_features_frac * width))));

  const auto build_tree = [&](int t, std::vector<SplitAudit>* tree_audit) {
    const std::uint64_t tree_seed = derive_seed(seed, "tree", std::uint64_t(t));
    detail::TreeBuilder builder(samples, width, min_samples_split, k, tree_seed, t,
                                tree_audit);
    std::vector<int> rows(samples.size());
    for (auto& r : rows) r = int(builder.rng.next_below(samples.size()));
    builder.build(std::move(rows));
    model.trees[std::size_t(t)] = std::move(builder.tree);
  };

  if (n_jobs <= 1 || audit != nullptr) {
    for (int t = 0; t < n_trees; ++t) build_tree(t, audit);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(n_jobs, n_trees);
    for (int wk = 0; wk < workers; ++wk)
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < n_trees; t = next.fetch_add(1))
          build_tree(t, nullptr);
      });
    for (auto& th : pool) th.join();
  }
  return model;
}

inline double predict_forest(const ForestModel& model, const BitVec& x) {
  if (x.width() != model.width)
    throw Error(ErrorCode::ShapeMismatch, "feature width != model width");
  double sum = 0.0;
  for (const auto& tree : model.trees) {
    int node = 0;
    while (tree.nodes[std::size_t(node)].feature >= 0) {
      const auto& nd = tree.nodes[std::size_t(node)];
      node = x.test(nd.feature) ? nd.one_child : nd.zero_child;
    }
    const auto& leaf = tree.nodes[std::size_t(node)];
    sum += double(leaf.n_active) / double(leaf.n_active + leaf.n_inactive);
  }
  return sum / double(model.trees.size());
}

}  // namespace mtqsar::baselines
