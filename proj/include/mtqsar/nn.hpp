#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtqsar/bitvec.hpp"
#include "mtqsar/data.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"
#include "mtqsar/split.hpp"

namespace mtqsar::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Architecture {
  std::vector<int> hidden;

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(hidden[i]);
    }
    return s + ")";
  }
};

// The five architectures studied throughout.
inline const std::vector<Architecture>& preset_architectures() {
  static const std::vector<Architecture> presets = {
      {{1000}}, {{4000}}, {{2000, 100}}, {{2000, 1000}}, {{4000, 2000, 1000, 1000}}};
  return presets;
}

enum class TaskWeighting { kUniform, kInverseSize };

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 128;
  double dropout = 0.5;  // drop probability
  // Desk-scale default; the full-scale recipe uses 1M steps (see paper()).
  long max_steps = 50000;
  long checkpoint_interval = 5000;
  std::uint64_t seed = 0;
  TaskWeighting weighting = TaskWeighting::kUniform;

  static TrainConfig paper() {
    TrainConfig c;
    c.max_steps = 1000000;
    c.checkpoint_interval = 50000;
    return c;
  }
};

// Fixed numeric constants of the training recipe.
inline constexpr double kBnEpsilon = 1e-3;
inline constexpr double kBnMomentum = 0.99;
inline constexpr double kAdagradInit = 0.1;
inline constexpr double kAdagradEpsilon = 1e-8;

// Parameters are stored in Scalar (float in production, double in the
// gradient tests); every computation accumulates in double.
template <typename Scalar>
struct LayerParams {
  int in = 0, out = 0;
  std::vector<Scalar> w;  // row-major in x out
  std::vector<Scalar> b;
  std::vector<Scalar> gamma, beta;        // batch-norm scale / shift
  std::vector<Scalar> run_mean, run_var;  // inference statistics
};

template <typename Scalar>
struct NetParams {
  int input_width = 0;
  int n_tasks = 0;
  Architecture arch;
  std::vector<LayerParams<Scalar>> layers;
  std::vector<Scalar> head_w;  // row-major last_hidden x 2*n_tasks
  std::vector<Scalar> head_b;  // 2*n_tasks

  int last_hidden() const { return arch.hidden.back(); }

  std::size_t parameter_count() const {
    std::size_t n = head_w.size() + head_b.size();
    for (const auto& l : layers)
      n += l.w.size() + l.b.size() + l.gamma.size() + l.beta.size();
    return n;
  }
};

using ModelParams = NetParams<float>;

template <typename Scalar>
NetParams<Scalar> init_model(const Architecture& arch, int input_width,
                             int n_tasks, std::uint64_t seed) {
  if (arch.hidden.empty())
    throw Error(ErrorCode::InvalidSpec, "architecture needs >= 1 hidden layer");
  if (input_width < 1 || n_tasks < 1)
    throw Error(ErrorCode::InvalidSpec, "input width and task count must be >= 1");
  NetParams<Scalar> p;
  p.input_width = input_width;
  p.n_tasks = n_tasks;
  p.arch = arch;
  Rng rng(derive_seed(seed, "init"));
  int in = input_width;
  for (int h : arch.hidden) {
    LayerParams<Scalar> l;
    l.in = in;
    l.out = h;
    l.w.resize(std::size_t(in) * std::size_t(h));
    const double scale = 1.0 / std::sqrt(double(in));
    for (auto& v : l.w) v = Scalar(rng.next_normal() * scale);
    l.b.assign(std::size_t(h), Scalar(0));
    l.gamma.assign(std::size_t(h), Scalar(1));
    l.beta.assign(std::size_t(h), Scalar(0));
    l.run_mean.assign(std::size_t(h), Scalar(0));
    l.run_var.assign(std::size_t(h), Scalar(1));
    p.layers.push_back(std::move(l));
    in = h;
  }
  p.head_w.resize(std::size_t(in) * std::size_t(2 * n_tasks));
  const double head_scale = 1.0 / std::sqrt(double(in));
  for (auto& v : p.head_w) v = Scalar(rng.next_normal() * head_scale);
  p.head_b.assign(std::size_t(2 * n_tasks), Scalar(0));
  return p;
}

enum class Mode { kTrain, kInfer };

// Everything the backward pass needs, all double precision.
struct Forward {
  std::vector<RowMatrixXd> bn_out;  // batch-norm output per layer (pre-ReLU)
  std::vector<RowMatrixXd> xhat;    // normalized activations
  std::vector<RowMatrixXd> act;     // post ReLU (and dropout) per layer
  std::vector<RowMatrixXd> mask;    // dropout keep mask, scaled by 1/keep
  std::vector<VectorXd> mean, var;  // batch statistics per layer
  std::vector<double> inv_std;      // flattened per layer*unit 1/sqrt(var+eps)
  RowMatrixXd logits;               // B x 2T
  RowMatrixXd probs;                // B x 2T
  std::vector<int> rows;            // batch row indices into the matrix
};

namespace detail {

// First layer exploits the binary input: activations are sums of weight
// rows selected by set bits, accumulated feature-major so the weight matrix
// streams sequentially.
template <typename Scalar>
void sparse_affine(const std::vector<const BitVec*>& batch_bits,
                   const LayerParams<Scalar>& l, RowMatrixXd& out,
                   std::vector<std::vector<int>>& byfeat_scratch) {
  const int B = int(batch_bits.size());
  const int H = l.out;
  out.resize(B, H);
  for (int r = 0; r < B; ++r)
    for (int j = 0; j < H; ++j) out(r, j) = double(l.b[std::size_t(j)]);
  byfeat_scratch.assign(std::size_t(l.in), {});
  for (int r = 0; r < B; ++r)
    for (int c : batch_bits[std::size_t(r)]->set_bits())
      byfeat_scratch[std::size_t(c)].push_back(r);
  for (int c = 0; c < l.in; ++c) {
    const auto& rows = byfeat_scratch[std::size_t(c)];
    if (rows.empty()) continue;
    const Scalar* wrow = l.w.data() + std::size_t(c) * std::size_t(H);
    for (int r : rows) {
      double* orow = out.data() + std::size_t(r) * std::size_t(H);
      for (int j = 0; j < H; ++j) orow[j] += double(wrow[j]);
    }
  }
}

template <typename Scalar>
Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
as_matrix(const std::vector<Scalar>& v, int rows, int cols) {
  return {v.data(), rows, cols};
}

}  // namespace detail

// Feed-forward pass: per layer affine -> batch norm -> ReLU -> dropout
// (train mode only), then per-task two-way softmax heads. Row r of the
// result holds columns (2t, 2t+1) = P(inactive), P(active) for task t.
template <typename Scalar>
RowMatrixXd forward(const NetParams<Scalar>& p,
                    const std::vector<BitVec>& features,
                    std::span<const int> rows, Mode mode, double dropout,
                    Rng* dropout_rng, Forward* cache = nullptr) {
  const int B = int(rows.size());
  if (B == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  for (int r : rows)
    if (features[std::size_t(r)].width() != p.input_width)
      throw Error(ErrorCode::ShapeMismatch,
                  "feature width " + std::to_string(features[std::size_t(r)].width()) +
                      " != model input width " + std::to_string(p.input_width));
  const bool train = mode == Mode::kTrain;
  if (train && dropout > 0.0 && dropout_rng == nullptr)
    throw Error(ErrorCode::InvalidSpec, "training with dropout needs a noise source");

  Forward local;
  Forward& f = cache ? *cache : local;
  const std::size_t L = p.layers.size();
  f.bn_out.resize(L);
  f.xhat.resize(L);
  f.act.resize(L);
  f.mask.resize(L);
  f.mean.resize(L);
  f.var.resize(L);
  f.rows.assign(rows.begin(), rows.end());

  std::vector<const BitVec*> batch_bits;
  batch_bits.reserve(std::size_t(B));
  for (int r : rows) batch_bits.push_back(&features[std::size_t(r)]);

  std::vector<std::vector<int>> byfeat;
  RowMatrixXd z;
  for (std::size_t li = 0; li < L; ++li) {
    const auto& l = p.layers[li];
    if (li == 0) {
      detail::sparse_affine(batch_bits, l, z, byfeat);
    } else {
      const auto w = detail::as_matrix(l.w, l.in, l.out);
      z.noalias() = f.act[li - 1] * w.template cast<double>();
      for (int r = 0; r < B; ++r)
        for (int j = 0; j < l.out; ++j) z(r, j) += double(l.b[std::size_t(j)]);
    }

    // batch norm: batch statistics when training, running statistics when
    // inferring; variance is the biased (1/N) estimate
    RowMatrixXd& xhat = f.xhat[li];
    RowMatrixXd& bn = f.bn_out[li];
    xhat.resize(B, l.out);
    bn.resize(B, l.out);
    VectorXd& mean = f.mean[li];
    VectorXd& var = f.var[li];
    mean.resize(l.out);
    var.resize(l.out);
    if (train) {
      for (int j = 0; j < l.out; ++j) {
        double m = 0.0;
        for (int r = 0; r < B; ++r) m += z(r, j);
        m /= double(B);
        double v = 0.0;
        for (int r = 0; r < B; ++r) {
          const double d = z(r, j) - m;
          v += d * d;
        }
        v /= double(B);
        mean(j) = m;
        var(j) = v;
      }
    } else {
      for (int j = 0; j < l.out; ++j) {
        mean(j) = double(l.run_mean[std::size_t(j)]);
        var(j) = double(l.run_var[std::size_t(j)]);
      }
    }
    for (int j = 0; j < l.out; ++j) {
      const double inv = 1.0 / std::sqrt(var(j) + kBnEpsilon);
      const double g = double(l.gamma[std::size_t(j)]);
      const double beta = double(l.beta[std::size_t(j)]);
      const double m = mean(j);
      for (int r = 0; r < B; ++r) {
        const double xh = (z(r, j) - m) * inv;
        xhat(r, j) = xh;
        bn(r, j) = g * xh + beta;
      }
    }

    // ReLU, then (inverted) dropout in train mode
    RowMatrixXd& act = f.act[li];
    act = bn.cwiseMax(0.0);
    if (train && dropout > 0.0) {
      const double keep = 1.0 - dropout;
      RowMatrixXd& mask = f.mask[li];
      mask.resize(B, l.out);
      for (int r = 0; r < B; ++r)
        for (int j = 0; j < l.out; ++j)
          mask(r, j) = dropout_rng->next_bool(keep) ? 1.0 / keep : 0.0;
      act.array() *= mask.array();
    } else {
      f.mask[li].resize(0, 0);
    }
  }

  // task heads: affine then per-task softmax over column pairs
  const int T2 = 2 * p.n_tasks;
  const auto hw = detail::as_matrix(p.head_w, p.last_hidden(), T2);
  f.logits.noalias() = f.act[L - 1] * hw.template cast<double>();
  for (int r = 0; r < B; ++r)
    for (int j = 0; j < T2; ++j) f.logits(r, j) += double(p.head_b[std::size_t(j)]);

  f.probs.resize(B, T2);
  for (int r = 0; r < B; ++r) {
    for (int t = 0; t < p.n_tasks; ++t) {
      const double a = f.logits(r, 2 * t);
      const double b = f.logits(r, 2 * t + 1);
      const double m = std::max(a, b);
      const double ea = std::exp(a - m);
      const double eb = std::exp(b - m);
      const double s = ea + eb;
      f.probs(r, 2 * t) = ea / s;
      f.probs(r, 2 * t + 1) = eb / s;
    }
  }
  return f.probs;
}

// Targets for a batch, gathered from the dense matrix.
struct BatchTargets {
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> labels;  // B x T
  RowMatrixXd weights;                                                // B x T
};

inline BatchTargets gather_targets(const data::MultitaskMatrix& m,
                                   std::span<const int> rows) {
  BatchTargets t;
  const int B = int(rows.size());
  const int T = int(m.n_tasks());
  t.labels.resize(B, T);
  t.weights.resize(B, T);
  for (int r = 0; r < B; ++r)
    for (int c = 0; c < T; ++c) {
      t.labels(r, c) = m.label(std::size_t(rows[std::size_t(r)]), std::size_t(c));
      t.weights(r, c) = m.weight(std::size_t(rows[std::size_t(r)]), std::size_t(c));
    }
  return t;
}

// Weighted softmax cross-entropy: mean over the batch, sum over tasks,
// example weights and task weights multiply. Entries with zero weight
// contribute exactly zero and their labels are never read.
inline double loss(const RowMatrixXd& probs, const BatchTargets& targets,
                   const std::vector<double>& task_weights) {
  const int B = int(probs.rows());
  const int T = int(targets.labels.cols());
  if (probs.cols() != 2 * T || targets.weights.rows() != B)
    throw Error(ErrorCode::ShapeMismatch, "loss shapes disagree");
  if (!task_weights.empty() && int(task_weights.size()) != T)
    throw Error(ErrorCode::ShapeMismatch, "task weight count != task count");
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    const double tw = task_weights.empty() ? 1.0 : task_weights[std::size_t(t)];
    double task_sum = 0.0;
    for (int r = 0; r < B; ++r) {
      const double w = targets.weights(r, t);
      if (w == 0.0) continue;
      const double p_correct = probs(r, 2 * t + (targets.labels(r, t) ? 1 : 0));
      task_sum += w * -std::log(std::max(p_correct, 1e-300));
    }
    total += tw * task_sum / double(B);
  }
  return total;
}

// d(loss)/d(logits) for the weighted softmax cross-entropy above.
inline RowMatrixXd loss_logit_gradient(const RowMatrixXd& probs,
                                       const BatchTargets& targets,
                                       const std::vector<double>& task_weights) {
  const int B = int(probs.rows());
  const int T = int(targets.labels.cols());
  RowMatrixXd d = RowMatrixXd::Zero(B, 2 * T);
  for (int t = 0; t < T; ++t) {
    const double tw = task_weights.empty() ? 1.0 : task_weights[std::size_t(t)];
    for (int r = 0; r < B; ++r) {
      const double w = targets.weights(r, t);
      if (w == 0.0) continue;
      const double scale = tw * w / double(B);
      const int y = targets.labels(r, t) ? 1 : 0;
      d(r, 2 * t) = scale * (probs(r, 2 * t) - (y == 0 ? 1.0 : 0.0));
      d(r, 2 * t + 1) = scale * (probs(r, 2 * t + 1) - (y == 1 ? 1.0 : 0.0));
    }
  }
  return d;
}

// Gradients, always double.
struct NetGrads {
  struct Layer {
    RowMatrixXd w;
    VectorXd b, gamma, beta;
  };
  std::vector<Layer> layers;
  RowMatrixXd head_w;
  VectorXd head_b;
};

// Backpropagation through the cached forward pass (train-mode batch
// statistics, fixed dropout mask).
template <typename Scalar>
NetGrads backward(const NetParams<Scalar>& p, const std::vector<BitVec>& features,
                  const Forward& f, const RowMatrixXd& dlogits) {
  const int B = int(dlogits.rows());
  const std::size_t L = p.layers.size();
  NetGrads g;
  g.layers.resize(L);

  // heads
  g.head_w.noalias() = f.act[L - 1].transpose() * dlogits;
  g.head_b = dlogits.colwise().sum();
  const auto hw = detail::as_matrix(p.head_w, p.last_hidden(), 2 * p.n_tasks);
  RowMatrixXd dact = dlogits * hw.template cast<double>().transpose();

  for (std::size_t li = L; li-- > 0;) {
    const auto& l = p.layers[li];
    // dropout
    if (f.mask[li].size() > 0) dact.array() *= f.mask[li].array();
    // ReLU
    RowMatrixXd dbn = (f.bn_out[li].array() > 0.0).select(dact, 0.0);
    // batch norm (batch statistics)
    g.layers[li].gamma.resize(l.out);
    g.layers[li].beta.resize(l.out);
    RowMatrixXd dz(B, l.out);
    for (int j = 0; j < l.out; ++j) {
      const double inv = 1.0 / std::sqrt(f.var[li](j) + kBnEpsilon);
      const double gam = double(l.gamma[std::size_t(j)]);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int r = 0; r < B; ++r) {
        sum_dy += dbn(r, j);
        sum_dy_xhat += dbn(r, j) * f.xhat[li](r, j);
      }
      g.layers[li].beta(j) = sum_dy;
      g.layers[li].gamma(j) = sum_dy_xhat;
      const double nb = double(B);
      for (int r = 0; r < B; ++r) {
        dz(r, j) = gam * inv / nb *
                   (nb * dbn(r, j) - sum_dy - f.xhat[li](r, j) * sum_dy_xhat);
      }
    }
    // affine
    g.layers[li].b = dz.colwise().sum();
    if (li == 0) {
      // scatter into the first-layer weight gradient feature-major
      RowMatrixXd& dw = g.layers[0].w;
      dw = RowMatrixXd::Zero(l.in, l.out);
      for (int r = 0; r < B; ++r) {
        const BitVec& bits = features[std::size_t(f.rows[std::size_t(r)])];
        const double* src = dz.data() + std::size_t(r) * std::size_t(l.out);
        for (int c : bits.set_bits()) {
          double* dst = dw.data() + std::size_t(c) * std::size_t(l.out);
          for (int j = 0; j < l.out; ++j) dst[j] += src[j];
        }
      }
    } else {
      g.layers[li].w.noalias() = f.act[li - 1].transpose() * dz;
      const auto w = detail::as_matrix(l.w, l.in, l.out);
      dact.noalias() = dz * w.template cast<double>().transpose();
    }
  }
  return g;
}

// Per-task cost weights: uniform, or inversely proportional to training
// size normalized so the mean weight is one.
inline std::vector<double> task_weights(const data::Collection& collection,
                                        const split::SplitAssignment& assignment,
                                        TaskWeighting mode) {
  std::vector<double> counts;
  const auto& tasks = collection.tasks();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (assignment.task_dropped(tasks[t].name)) continue;
    long n = 0;
    for (auto b : assignment.buckets[t])
      if (b == split::Bucket::kTrain) ++n;
    if (n == 0)
      throw Error(ErrorCode::EmptyTask,
                  tasks[t].name + ": no training rows for task weighting");
    counts.push_back(double(n));
  }
  std::vector<double> w(counts.size(), 1.0);
  if (mode == TaskWeighting::kInverseSize) {
    double sum_inv = 0.0;
    for (double c : counts) sum_inv += 1.0 / c;
    for (std::size_t i = 0; i < counts.size(); ++i)
      w[i] = (1.0 / counts[i]) * double(counts.size()) / sum_inv;
  }
  return w;
}

struct Checkpoint {
  long step = 0;
  ModelParams params;
};

// Snapshots taken every checkpoint interval plus at the final step.
struct CheckpointStore {
  std::vector<Checkpoint> snapshots;
  bool aborted_non_finite = false;

  const Checkpoint& at_step(long step) const {
    for (const auto& c : snapshots)
      if (c.step == step) return c;
    throw Error(ErrorCode::MissingArtifact,
                "no checkpoint at step " + std::to_string(step));
  }
};

namespace detail {

// Adagrad with double accumulators over Scalar-stored parameters:
// G += g^2; theta -= lr * g / sqrt(G + eps).
class Adagrad {
 public:
  explicit Adagrad(std::size_t n) : accum_(n, kAdagradInit) {}

  template <typename Scalar>
  void update(Scalar* param, const double* grad, std::size_t n, double lr,
              std::size_t offset) {
    double* acc = accum_.data() + offset;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      const double a = acc[i] + g * g;
      acc[i] = a;
      param[i] = Scalar(double(param[i]) - lr * g / std::sqrt(a + kAdagradEpsilon));
    }
  }

  const std::vector<double>& accumulators() const { return accum_; }

 private:
  std::vector<double> accum_;
};

}  // namespace detail

// Minibatch adagrad training with periodic checkpointing. Deterministic for
// a given config and seed. A non-finite loss aborts the run, retaining the
// snapshots taken so far (throws only if none exist yet).
inline CheckpointStore train(const data::MultitaskMatrix& m,
                             const Architecture& arch, const TrainConfig& cfg,
                             const std::vector<double>& tw = {}) {
  const int T = int(m.n_tasks());
  const std::size_t n_rows = m.rows();
  if (n_rows == 0) throw Error(ErrorCode::EmptyTask, "empty training matrix");
  for (int t = 0; t < T; ++t) {
    bool any = false;
    for (std::size_t r = 0; r < n_rows && !any; ++r)
      any = m.weight(r, std::size_t(t)) > 0.0;
    if (!any)
      throw Error(ErrorCode::EmptyTask,
                  m.task_names[std::size_t(t)] + ": no weighted training entries");
  }

  ModelParams params = init_model<float>(arch, m.width, T, cfg.seed);
  Rng batch_rng(derive_seed(cfg.seed, "batch"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));

  // one flat adagrad state covering every tensor, fixed layout
  std::size_t total = 0;
  for (const auto& l : params.layers)
    total += l.w.size() + l.b.size() + l.gamma.size() + l.beta.size();
  total += params.head_w.size() + params.head_b.size();
  detail::Adagrad opt(total);

  CheckpointStore store;
  std::vector<int> batch(std::size_t(cfg.batch_size));
  Forward cache;
  for (long step = 1; step <= cfg.max_steps; ++step) {
    for (auto& r : batch) r = int(batch_rng.next_below(n_rows));
    const auto probs =
        forward(params, m.features, batch, Mode::kTrain, cfg.dropout, &dropout_rng, &cache);
    const auto targets = gather_targets(m, batch);
    const double step_loss = loss(probs, targets, tw);
    if (!std::isfinite(step_loss)) {
      store.aborted_non_finite = true;
      if (store.snapshots.empty())
        throw Error(ErrorCode::NonFiniteLoss,
                    "loss became non-finite at step " + std::to_string(step) +
                        " before the first checkpoint");
      break;
    }
    const auto dlogits = loss_logit_gradient(probs, targets, tw);
    const NetGrads grads = backward(params, m.features, cache, dlogits);

    std::size_t off = 0;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      auto& l = params.layers[li];
      const auto& gl = grads.layers[li];
      opt.update(l.w.data(), gl.w.data(), l.w.size(), cfg.learning_rate, off);
      off += l.w.size();
      opt.update(l.b.data(), gl.b.data(), l.b.size(), cfg.learning_rate, off);
      off += l.b.size();
      opt.update(l.gamma.data(), gl.gamma.data(), l.gamma.size(), cfg.learning_rate, off);
      off += l.gamma.size();
      opt.update(l.beta.data(), gl.beta.data(), l.beta.size(), cfg.learning_rate, off);
      off += l.beta.size();
      // running statistics track the batch statistics by EMA
      for (int j = 0; j < l.out; ++j) {
        l.run_mean[std::size_t(j)] =
            float(kBnMomentum * double(l.run_mean[std::size_t(j)]) +
                  (1.0 - kBnMomentum) * cache.mean[li](j));
        l.run_var[std::size_t(j)] =
            float(kBnMomentum * double(l.run_var[std::size_t(j)]) +
                  (1.0 - kBnMomentum) * cache.var[li](j));
      }
    }
    opt.update(params.head_w.data(), grads.head_w.data(), params.head_w.size(),
               cfg.learning_rate, off);
    off += params.head_w.size();
    opt.update(params.head_b.data(), grads.head_b.data(), params.head_b.size(),
               cfg.learning_rate, off);

    if (step % cfg.checkpoint_interval == 0 || step == cfg.max_steps)
      store.snapshots.push_back(Checkpoint{step, params});
  }
  return store;
}

// Inference over arbitrary matrix rows in fixed-size chunks.
template <typename Scalar>
RowMatrixXd predict(const NetParams<Scalar>& p, const std::vector<BitVec>& features,
                    const std::vector<int>& rows, int chunk = 256) {
  RowMatrixXd out(rows.size(), 2 * p.n_tasks);
  for (std::size_t start = 0; start < rows.size(); start += std::size_t(chunk)) {
    const std::size_t len = std::min(std::size_t(chunk), rows.size() - start);
    std::span<const int> slice(rows.data() + start, len);
    const auto probs = forward(p, features, slice, Mode::kInfer, 0.0, nullptr);
    out.middleRows(Eigen::Index(start), Eigen::Index(len)) = probs;
  }
  return out;
}

}  // namespace mtqsar::nn
