#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtqsar/baselines.hpp"
#include "mtqsar/eval.hpp"

using namespace mtqsar;
using Catch::Matchers::WithinAbs;

namespace {

struct Dataset {
  std::vector<BitVec> x;
  std::vector<int> y;

  std::vector<baselines::Sample> samples() const {
    std::vector<baselines::Sample> s;
    for (std::size_t i = 0; i < x.size(); ++i)
      s.push_back({&x[i], y[i]});
    return s;
  }
};

Dataset random_dataset(int n, int width, double density, double flip, Rng& rng) {
  Dataset d;
  for (int i = 0; i < n; ++i) {
    BitVec v(width);
    const bool active = rng.next_bool(0.5);
    if (active) v.set(0);
    for (int j = 1; j < width; ++j)
      if (rng.next_bool(density)) v.set(j);
    d.x.push_back(std::move(v));
    d.y.push_back((rng.next_bool(flip) ? !active : active) ? 1 : 0);
  }
  return d;
}

// Brute-force Gini gain for a binary feature threshold at 0.5.
double gini_gain_oracle(const std::vector<baselines::Sample>& samples,
                        const std::vector<int>& rows, int feature) {
  auto gini = [](long a, long i) {
    const long n = a + i;
    if (n == 0) return 0.0;
    const double pa = double(a) / double(n), pi = double(i) / double(n);
    return 1.0 - pa * pa - pi * pi;
  };
  long a = 0, i0 = 0, a1 = 0, i1 = 0;
  for (int r : rows) {
    const auto& s = samples[std::size_t(r)];
    const bool one = s.x->test(feature);
    if (s.y) {
      ++a;
      if (one) ++a1;
    } else {
      ++i0;
      if (one) ++i1;
    }
  }
  const long n = a + i0, n1 = a1 + i1, n0 = n - n1;
  if (n0 == 0 || n1 == 0) return -1.0;
  return gini(a, i0) - double(n0) / double(n) * gini(a - a1, i0 - i1) -
         double(n1) / double(n) * gini(a1, i1);
}

}  // namespace

TEST_CASE("logistic regression separates 1-D separable data") {
  Dataset d;
  for (int i = 0; i < 40; ++i) {
    BitVec v(8);
    const bool active = i % 2 == 0;
    if (active) v.set(3);
    v.set(7);  // constant bit
    d.x.push_back(std::move(v));
    d.y.push_back(active ? 1 : 0);
  }
  const auto model = baselines::train_logreg(d.samples(), 0.01);
  std::vector<double> scores;
  for (const auto& v : d.x) scores.push_back(baselines::predict_logreg(model, v));
  CHECK(eval::roc_auc(scores, d.y) == 1.0);
}

TEST_CASE("logistic probability is monotone in the linear score") {
  Rng rng(2);
  const auto d = random_dataset(60, 16, 0.3, 0.15, rng);
  const auto model = baselines::train_logreg(d.samples());
  double prev_z = -1e30, prev_p = 0.0;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& v : d.x) {
    double z = model.bias;
    for (int b : v.set_bits()) z += model.w[std::size_t(b)];
    pairs.emplace_back(z, baselines::predict_logreg(model, v));
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [z, p] : pairs) {
    if (z > prev_z) CHECK(p >= prev_p);
    prev_z = z;
    prev_p = p;
  }
}

TEST_CASE("logreg gradient vanishes at the optimum") {
  Rng rng(3);
  const auto d = random_dataset(80, 12, 0.3, 0.2, rng);
  const auto samples = d.samples();
  const auto model = baselines::train_logreg(samples, 1.0);
  REQUIRE(model.converged);

  // finite differences of the objective at the returned iterate
  const baselines::detail::LogRegObjective obj{samples, 1.0};
  std::vector<double> gw;
  double gb = 0.0;
  obj.gradient(model.w, model.bias, gw, gb);
  const double h = 1e-6;
  auto w = model.w;
  for (std::size_t i : {std::size_t(0), std::size_t(5), std::size_t(11)}) {
    w[i] = model.w[i] + h;
    const double fp = obj.value(w, model.bias);
    w[i] = model.w[i] - h;
    const double fm = obj.value(w, model.bias);
    w[i] = model.w[i];
    const double numeric = (fp - fm) / (2.0 * h);
    CHECK_THAT(gw[i], WithinAbs(numeric, 1e-5 * std::max(1.0, std::abs(numeric))));
  }
  // the converged gradient norm is tiny
  double norm = gb * gb;
  for (double g : gw) norm += g * g;
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("logreg loss at the optimum beats random parameter draws") {
  Rng rng(4);
  const auto d = random_dataset(50, 10, 0.4, 0.25, rng);
  const auto samples = d.samples();
  const auto model = baselines::train_logreg(samples, 1.0);
  const baselines::detail::LogRegObjective obj{samples, 1.0};
  const double best = obj.value(model.w, model.bias);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(10);
    for (auto& v : w) v = rng.next_normal();
    CHECK(best <= obj.value(w, rng.next_normal()) + 1e-9);
  }
}

TEST_CASE("zero weights predict one half") {
  baselines::LogRegModel model;
  model.w.assign(16, 0.0);
  BitVec v(16);
  v.set(3);
  CHECK(baselines::predict_logreg(model, v) == 0.5);
}

TEST_CASE("pure-label forests predict that class everywhere") {
  Dataset d;
  for (int i = 0; i < 20; ++i) {
    BitVec v(8);
    if (i % 3 == 0) v.set(i % 8);
    d.x.push_back(std::move(v));
    d.y.push_back(1);
  }
  const auto model = baselines::train_random_forest(d.samples(), 10, 1.0 / 3, 6, 1);
  for (const auto& v : d.x) CHECK(baselines::predict_forest(model, v) == 1.0);
}

TEST_CASE("forests are deterministic per seed and schedule-independent") {
  Rng rng(5);
  const auto d = random_dataset(120, 24, 0.3, 0.2, rng);
  const auto a = baselines::train_random_forest(d.samples(), 20, 1.0 / 3, 6, 42, 1);
  const auto b = baselines::train_random_forest(d.samples(), 20, 1.0 / 3, 6, 42, 2);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
      CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
      CHECK(a.trees[t].nodes[n].n_active == b.trees[t].nodes[n].n_active);
    }
  }
  const auto c = baselines::train_random_forest(d.samples(), 20, 1.0 / 3, 6, 43, 1);
  bool same = a.trees.size() == c.trees.size();
  if (same)
    for (std::size_t t = 0; t < a.trees.size() && same; ++t)
      same = a.trees[t].nodes.size() == c.trees[t].nodes.size();
  CHECK_FALSE(same);
}

TEST_CASE("a perfectly predictive feature wins the root split") {
  Dataset d;
  for (int i = 0; i < 30; ++i) {
    BitVec v(6);
    const bool active = i % 2 == 0;
    if (active) v.set(4);
    if (i % 3 == 0) v.set(1);
    d.x.push_back(std::move(v));
    d.y.push_back(active ? 1 : 0);
  }
  // single tree, all features offered
  std::vector<baselines::SplitAudit> audit;
  const auto model =
      baselines::train_random_forest(d.samples(), 1, 1.0, 2, 9, 1, &audit);
  REQUIRE_FALSE(model.trees[0].nodes.empty());
  CHECK(model.trees[0].nodes[0].feature == 4);
  // oracle: feature 4 has the best Gini gain among all candidates
  REQUIRE_FALSE(audit.empty());
  const auto& root = audit.front();
  const double chosen = gini_gain_oracle(d.samples(), root.rows, root.chosen);
  for (int f = 0; f < 6; ++f)
    CHECK(chosen >= gini_gain_oracle(d.samples(), root.rows, f));
}

TEST_CASE("every realized split maximizes gain over its candidate set") {
  Rng rng(6);
  const auto d = random_dataset(80, 16, 0.35, 0.25, rng);
  const auto samples = d.samples();
  std::vector<baselines::SplitAudit> audit;
  baselines::train_random_forest(samples, 5, 1.0 / 3, 6, 11, 1, &audit);
  REQUIRE_FALSE(audit.empty());
  for (const auto& split : audit) {
    const double chosen = gini_gain_oracle(samples, split.rows, split.chosen);
    CHECK_THAT(chosen, WithinAbs(split.gain, 1e-12));
    for (int f : split.features)
      CHECK(chosen >= gini_gain_oracle(samples, split.rows, f) - 1e-12);
  }
}

TEST_CASE("forest probabilities stay in bounds and average leaf fractions") {
  Rng rng(7);
  const auto d = random_dataset(100, 20, 0.3, 0.3, rng);
  const auto model = baselines::train_random_forest(d.samples(), 15, 1.0 / 3, 6, 3);
  for (const auto& v : d.x) {
    const double p = baselines::predict_forest(model, v);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }

  // two hand-built stumps with leaf fractions 0.2 and 0.6 average to 0.4
  baselines::ForestModel hand;
  hand.width = 4;
  baselines::Tree t1, t2;
  t1.nodes.push_back({-1, -1, -1, 1, 4});  // 0.2 active
  t2.nodes.push_back({-1, -1, -1, 3, 2});  // 0.6 active
  hand.trees = {t1, t2};
  BitVec v(4);
  CHECK_THAT(baselines::predict_forest(hand, v), WithinAbs(0.4, 1e-15));
}

TEST_CASE("duplicated trees leave predictions unchanged") {
  Rng rng(8);
  const auto d = random_dataset(60, 12, 0.3, 0.2, rng);
  auto model = baselines::train_random_forest(d.samples(), 8, 1.0 / 3, 6, 5);
  auto doubled = model;
  doubled.trees.insert(doubled.trees.end(), model.trees.begin(), model.trees.end());
  for (const auto& v : d.x)
    CHECK_THAT(baselines::predict_forest(doubled, v),
               WithinAbs(baselines::predict_forest(model, v), 1e-12));
}

TEST_CASE("baseline input validation") {
  CHECK_THROWS_AS(baselines::train_logreg({}), Error);
  Dataset d;
  for (int i = 0; i < 4; ++i) {
    BitVec v(4);
    d.x.push_back(std::move(v));
    d.y.push_back(1);
  }
  CHECK_THROWS_AS(baselines::train_logreg(d.samples()), Error);  // single class
  CHECK_THROWS_AS(baselines::train_random_forest(d.samples(), 2, 1.0, 6, 0),
                  Error);  // fewer samples than min_samples_split
}
