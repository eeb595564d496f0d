#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "mtqsar/nn.hpp"

using namespace mtqsar;
using Catch::Matchers::WithinAbs;

namespace {

// Random binary feature rows.
std::vector<BitVec> random_features(int n, int width, double density, Rng& rng) {
  std::vector<BitVec> out;
  for (int i = 0; i < n; ++i) {
    BitVec v(width);
    for (int j = 0; j < width; ++j)
      if (rng.next_bool(density)) v.set(j);
    if (v.popcount() == 0) v.set(int(rng.next_below(std::uint64_t(width))));
    out.push_back(std::move(v));
  }
  return out;
}

nn::BatchTargets random_targets(int B, int T, double missing, Rng& rng) {
  nn::BatchTargets t;
  t.labels.resize(B, T);
  t.weights.resize(B, T);
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < T; ++c) {
      t.labels(r, c) = rng.next_bool(0.5) ? 1 : 0;
      t.weights(r, c) = rng.next_bool(missing) ? 0.0 : 0.5 + rng.next_double();
    }
  return t;
}

// Loss of a double-parameter network in train mode with dropout off;
// the finite-difference oracle re-runs this for every perturbation.
double net_loss(const nn::NetParams<double>& p, const std::vector<BitVec>& x,
                const std::vector<int>& rows, const nn::BatchTargets& targets,
                const std::vector<double>& tw) {
  const auto probs = nn::forward(p, x, rows, nn::Mode::kTrain, 0.0, nullptr);
  return nn::loss(probs, targets, tw);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Central finite differences over every parameter tensor. Differencing a
// loss of order one at h=1e-5 carries ~1e-11 of absolute roundoff, so the
// relative error uses a 1e-6 denominator floor; gradients that are exactly
// zero analytically (pre-batch-norm biases) otherwise drown in noise.
GradCheckReport finite_difference_check(nn::NetParams<double>& p,
                                        const std::vector<BitVec>& x,
                                        const std::vector<int>& rows,
                                        const nn::BatchTargets& targets,
                                        const std::vector<double>& tw,
                                        double h = 1e-5) {
  nn::Forward cache;
  const auto probs = nn::forward(p, x, rows, nn::Mode::kTrain, 0.0, nullptr, &cache);
  const auto dlogits = nn::loss_logit_gradient(probs, targets, tw);
  const auto grads = nn::backward(p, x, cache, dlogits);

  GradCheckReport report;
  const auto check_tensor = [&](double* param, const double* grad, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const double lp = net_loss(p, x, rows, targets, tw);
      param[i] = saved - h;
      const double lm = net_loss(p, x, rows, targets, tw);
      param[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
      report.max_rel_err =
          std::max(report.max_rel_err, std::abs(numeric - grad[i]) / denom);
      ++report.checked;
    }
  };
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    auto& l = p.layers[li];
    const auto& g = grads.layers[li];
    check_tensor(l.w.data(), g.w.data(), l.w.size());
    check_tensor(l.b.data(), g.b.data(), l.b.size());
    check_tensor(l.gamma.data(), g.gamma.data(), l.gamma.size());
    check_tensor(l.beta.data(), g.beta.data(), l.beta.size());
  }
  check_tensor(p.head_w.data(), grads.head_w.data(), p.head_w.size());
  check_tensor(p.head_b.data(), grads.head_b.data(), p.head_b.size());
  return report;
}

}  // namespace

TEST_CASE("model initialization shapes and determinism") {
  const nn::Architecture arch{{2000, 100}};
  const auto p = nn::init_model<float>(arch, 1024, 22, 7);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.layers[0].in == 1024);
  CHECK(p.layers[0].out == 2000);
  CHECK(p.layers[1].in == 2000);
  CHECK(p.layers[1].out == 100);
  CHECK(p.head_w.size() == std::size_t(100 * 44));
  CHECK(p.head_b.size() == 44);

  const auto q = nn::init_model<float>(arch, 1024, 22, 7);
  CHECK(p.layers[0].w == q.layers[0].w);
  CHECK(p.head_w == q.head_w);
  const auto r = nn::init_model<float>(arch, 1024, 22, 8);
  CHECK(p.layers[0].w != r.layers[0].w);

  const auto single = nn::init_model<float>(nn::Architecture{{16}}, 32, 1, 1);
  CHECK(single.head_b.size() == 2);  // exactly one softmax head
}

TEST_CASE("softmax rows sum to one per task") {
  Rng rng(3);
  const auto x = random_features(9, 64, 0.2, rng);
  const auto p = nn::init_model<float>(nn::Architecture{{16, 8}}, 64, 3, 5);
  std::vector<int> rows(9);
  std::iota(rows.begin(), rows.end(), 0);
  const auto probs = nn::forward(p, x, rows, nn::Mode::kInfer, 0.0, nullptr);
  for (int r = 0; r < 9; ++r)
    for (int t = 0; t < 3; ++t)
      CHECK_THAT(probs(r, 2 * t) + probs(r, 2 * t + 1), WithinAbs(1.0, 1e-12));
}

TEST_CASE("train mode without dropout matches infer mode when stats agree") {
  Rng rng(4);
  const auto x = random_features(16, 32, 0.3, rng);
  auto p = nn::init_model<float>(nn::Architecture{{8}}, 32, 2, 9);
  std::vector<int> rows(16);
  std::iota(rows.begin(), rows.end(), 0);
  // copy the batch statistics into the running statistics, then compare
  nn::Forward cache;
  nn::forward(p, x, rows, nn::Mode::kTrain, 0.0, nullptr, &cache);
  for (int j = 0; j < 8; ++j) {
    p.layers[0].run_mean[std::size_t(j)] = float(cache.mean[0](j));
    p.layers[0].run_var[std::size_t(j)] = float(cache.var[0](j));
  }
  const auto train_probs = nn::forward(p, x, rows, nn::Mode::kTrain, 0.0, nullptr);
  const auto infer_probs = nn::forward(p, x, rows, nn::Mode::kInfer, 0.0, nullptr);
  // float storage of the statistics costs a few ulps
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK_THAT(train_probs(r, c), WithinAbs(infer_probs(r, c), 1e-6));
}

TEST_CASE("zero head parameters give one-half probabilities") {
  Rng rng(5);
  const auto x = random_features(4, 16, 0.25, rng);
  auto p = nn::init_model<float>(nn::Architecture{{4}}, 16, 2, 1);
  for (auto& v : p.head_w) v = 0.0f;
  for (auto& v : p.head_b) v = 0.0f;
  std::vector<int> rows = {0, 1, 2, 3};
  const auto probs = nn::forward(p, x, rows, nn::Mode::kInfer, 0.0, nullptr);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(probs(r, c) == 0.5);
}

TEST_CASE("loss closed forms") {
  // single example, p(correct) = 0.5, weight 1 -> ln 2
  nn::RowMatrixXd probs(1, 2);
  probs << 0.5, 0.5;
  nn::BatchTargets t;
  t.labels.resize(1, 1);
  t.labels(0, 0) = 1;
  t.weights.resize(1, 1);
  t.weights(0, 0) = 1.0;
  CHECK_THAT(nn::loss(probs, t, {}), WithinAbs(std::log(2.0), 1e-12));

  // perfect prediction -> zero loss
  probs << 0.0, 1.0;
  CHECK(nn::loss(probs, t, {}) == 0.0);

  // all weights zero -> zero loss
  t.weights(0, 0) = 0.0;
  probs << 0.9, 0.1;
  CHECK(nn::loss(probs, t, {}) == 0.0);
}

TEST_CASE("zero-weight entries are bit-isolated from loss and gradients") {
  Rng rng(6);
  const auto x = random_features(12, 24, 0.3, rng);
  const auto p = nn::init_model<double>(nn::Architecture{{6, 4}}, 24, 3, 2);
  std::vector<int> rows(12);
  std::iota(rows.begin(), rows.end(), 0);
  auto targets = random_targets(12, 3, 0.4, rng);

  nn::Forward cache;
  const auto probs = nn::forward(p, x, rows, nn::Mode::kTrain, 0.0, nullptr, &cache);
  const double base_loss = nn::loss(probs, targets, {});
  const auto base_grads =
      nn::backward(p, x, cache, nn::loss_logit_gradient(probs, targets, {}));

  // flip every zero-weight label
  auto flipped = targets;
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 3; ++c)
      if (flipped.weights(r, c) == 0.0) flipped.labels(r, c) ^= 1;
  const double flipped_loss = nn::loss(probs, flipped, {});
  const auto flipped_grads =
      nn::backward(p, x, cache, nn::loss_logit_gradient(probs, flipped, {}));

  CHECK(base_loss == flipped_loss);
  CHECK(base_grads.head_w == flipped_grads.head_w);
  for (std::size_t li = 0; li < base_grads.layers.size(); ++li)
    CHECK(base_grads.layers[li].w == flipped_grads.layers[li].w);
}

TEST_CASE("analytic gradients match central finite differences") {
  // (8,4) network, 10 examples, float64 storage
  Rng rng(7);
  const auto x = random_features(10, 12, 0.3, rng);
  auto p = nn::init_model<double>(nn::Architecture{{8, 4}}, 12, 2, 11);
  std::vector<int> rows(10);
  std::iota(rows.begin(), rows.end(), 0);
  const auto targets = random_targets(10, 2, 0.2, rng);
  const std::vector<double> tw = {1.3, 0.7};
  const auto report = finite_difference_check(p, x, rows, targets, tw);
  INFO("checked " << report.checked << " parameters");
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradients hold across layer counts and weightings") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const int width = 6 + int(rng.next_below(8));
    const int B = 4 + int(rng.next_below(6));
    const int T = 1 + int(rng.next_below(3));
    std::vector<int> hidden;
    const int n_layers = 1 + int(rng.next_below(3));
    for (int l = 0; l < n_layers; ++l) hidden.push_back(3 + int(rng.next_below(5)));
    const auto x = random_features(B, width, 0.4, rng);
    auto p = nn::init_model<double>(nn::Architecture{hidden}, width, T,
                                    rng.next_u64());
    std::vector<int> rows(B);
    std::iota(rows.begin(), rows.end(), 0);
    const auto targets = random_targets(B, T, 0.3, rng);
    std::vector<double> tw;
    for (int t = 0; t < T; ++t) tw.push_back(0.5 + rng.next_double());
    const auto report = finite_difference_check(p, x, rows, targets, tw);
    INFO("trial " << trial);
    CHECK(report.max_rel_err < 1e-4);
  }
}

namespace {

data::MultitaskMatrix separable_matrix(int n, int width, Rng& rng) {
  data::MultitaskMatrix m;
  m.width = width;
  m.task_names = {"t"};
  for (int i = 0; i < n; ++i) {
    BitVec v(width);
    const bool active = i % 2 == 0;
    // class-specific bit plus noise
    v.set(active ? 0 : 1);
    for (int j = 2; j < width; ++j)
      if (rng.next_bool(0.2)) v.set(j);
    m.features.push_back(std::move(v));
    m.row_ids.push_back(std::to_string(i));
    m.labels.push_back(active ? 1 : 0);
    m.weights.push_back(1.0);
  }
  return m;
}

}  // namespace

TEST_CASE("training reduces loss on a separable task") {
  Rng rng(9);
  const auto m = separable_matrix(64, 32, rng);
  nn::TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_steps = 2000;
  cfg.checkpoint_interval = 500;
  cfg.seed = 21;
  const auto store = nn::train(m, nn::Architecture{{16}}, cfg);
  REQUIRE(store.snapshots.size() == 4);
  CHECK_FALSE(store.aborted_non_finite);

  std::vector<int> rows(m.rows());
  std::iota(rows.begin(), rows.end(), 0);
  const auto targets = nn::gather_targets(m, rows);
  const auto first = nn::forward(store.snapshots.front().params, m.features, rows,
                                 nn::Mode::kInfer, 0.0, nullptr);
  const auto last = nn::forward(store.snapshots.back().params, m.features, rows,
                                nn::Mode::kInfer, 0.0, nullptr);
  CHECK(nn::loss(last, targets, {}) < nn::loss(first, targets, {}));
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  Rng rng(10);
  const auto m = separable_matrix(32, 24, rng);
  nn::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_steps = 300;
  cfg.checkpoint_interval = 100;
  cfg.seed = 5;
  const auto a = nn::train(m, nn::Architecture{{8}}, cfg);
  const auto b = nn::train(m, nn::Architecture{{8}}, cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK(a.snapshots[i].step == b.snapshots[i].step);
    CHECK(a.snapshots[i].params.head_w == b.snapshots[i].params.head_w);
    for (std::size_t l = 0; l < a.snapshots[i].params.layers.size(); ++l) {
      CHECK(a.snapshots[i].params.layers[l].w == b.snapshots[i].params.layers[l].w);
      CHECK(a.snapshots[i].params.layers[l].run_mean ==
            b.snapshots[i].params.layers[l].run_mean);
    }
  }
}

TEST_CASE("adagrad effective step sizes never increase") {
  // G only accumulates squared gradients, so lr / sqrt(G + eps) is
  // non-increasing per parameter
  nn::detail::Adagrad opt(4);
  std::vector<float> params(4, 1.0f);
  std::vector<double> grad = {0.5, -0.25, 0.0, 2.0};
  std::vector<double> prev_step(4, 1e300);
  for (int it = 0; it < 50; ++it) {
    opt.update(params.data(), grad.data(), 4, 0.001, 0);
    for (int i = 0; i < 4; ++i) {
      const double eff =
          0.001 / std::sqrt(opt.accumulators()[std::size_t(i)] + nn::kAdagradEpsilon);
      CHECK(eff <= prev_step[std::size_t(i)]);
      prev_step[std::size_t(i)] = eff;
    }
  }
}

TEST_CASE("inverse-size task weights normalize to mean one") {
  data::TaskDataset t1, t2;
  t1.name = "small";
  t2.name = "large";
  for (int i = 0; i < 100; ++i)
    t1.records.push_back({"s" + std::to_string(i), "C", {}, i % 2 == 0, Date()});
  for (int i = 0; i < 400; ++i)
    t2.records.push_back({"l" + std::to_string(i), "C", {}, i % 2 == 0, Date()});
  data::Collection c({t1, t2}, {});
  split::SplitAssignment a;
  a.regime = split::Regime::kLeakyTemporal;
  a.buckets = {std::vector<split::Bucket>(100, split::Bucket::kTrain),
               std::vector<split::Bucket>(400, split::Bucket::kTrain)};

  const auto inv = nn::task_weights(c, a, nn::TaskWeighting::kInverseSize);
  REQUIRE(inv.size() == 2);
  CHECK_THAT(inv[0], WithinAbs(1.6, 1e-12));
  CHECK_THAT(inv[1], WithinAbs(0.4, 1e-12));

  const auto uni = nn::task_weights(c, a, nn::TaskWeighting::kUniform);
  CHECK(uni == std::vector<double>{1.0, 1.0});

  // equal sizes are uniform under inverse-size weighting too
  split::SplitAssignment eq;
  eq.regime = split::Regime::kLeakyTemporal;
  eq.buckets = {std::vector<split::Bucket>(100, split::Bucket::kTrain),
                std::vector<split::Bucket>(400, split::Bucket::kTrain)};
  for (std::size_t i = 100; i < 400; ++i) eq.buckets[1][i] = split::Bucket::kTest;
  const auto eq_w = nn::task_weights(c, eq, nn::TaskWeighting::kInverseSize);
  CHECK_THAT(eq_w[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(eq_w[1], WithinAbs(1.0, 1e-12));
}
