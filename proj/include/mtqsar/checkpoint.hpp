#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtqsar/baselines.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/nn.hpp"

namespace mtqsar::io {

// Little-endian binary writers/readers for model files.
namespace detail {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; add byte swapping to port");

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot write " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    pod(std::uint64_t(v.size()));
    bytes(v.data(), v.size() * sizeof(T));
  }
  void str(const std::string& s) {
    pod(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorCode::MissingArtifact, "cannot read " + path);
  }
  void bytes(void* p, std::size_t n) {
    if (!in_.read(static_cast<char*>(p), std::streamsize(n)))
      throw Error(ErrorCode::IoError, path_ + ": truncated model file");
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  template <typename T>
  std::vector<T> array() {
    const auto n = pod<std::uint64_t>();
    std::vector<T> v(n);
    bytes(v.data(), n * sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace detail

inline constexpr char kCheckpointMagic[9] = "MTQCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const nn::Checkpoint& ckpt,
                            const std::vector<std::string>& task_names,
                            const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(kCheckpointMagic, 8);
  w.pod(kCheckpointVersion);
  w.pod(std::uint64_t(ckpt.step));
  w.pod(std::uint32_t(ckpt.params.input_width));
  w.pod(std::uint32_t(ckpt.params.n_tasks));
  w.pod(std::uint32_t(ckpt.params.arch.hidden.size()));
  for (int h : ckpt.params.arch.hidden) w.pod(std::uint32_t(h));
  w.pod(std::uint32_t(task_names.size()));
  for (const auto& name : task_names) w.str(name);
  for (const auto& l : ckpt.params.layers) {
    w.array(l.w);
    w.array(l.b);
    w.array(l.gamma);
    w.array(l.beta);
    w.array(l.run_mean);
    w.array(l.run_var);
  }
  w.array(ckpt.params.head_w);
  w.array(ckpt.params.head_b);
}

inline nn::Checkpoint load_checkpoint(const std::string& path,
                                      std::vector<std::string>* task_names = nullptr) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error(ErrorCode::IoError, path + ": not a checkpoint file");
  if (r.pod<std::uint32_t>() != kCheckpointVersion)
    throw Error(ErrorCode::IoError, path + ": unsupported checkpoint version");
  nn::Checkpoint ckpt;
  ckpt.step = long(r.pod<std::uint64_t>());
  ckpt.params.input_width = int(r.pod<std::uint32_t>());
  ckpt.params.n_tasks = int(r.pod<std::uint32_t>());
  const auto n_hidden = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    ckpt.params.arch.hidden.push_back(int(r.pod<std::uint32_t>()));
  const auto n_names = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_names; ++i) {
    const std::string name = r.str();
    if (task_names) task_names->push_back(name);
  }
  int in = ckpt.params.input_width;
  for (int h : ckpt.params.arch.hidden) {
    nn::LayerParams<float> l;
    l.in = in;
    l.out = h;
    l.w = r.array<float>();
    l.b = r.array<float>();
    l.gamma = r.array<float>();
    l.beta = r.array<float>();
    l.run_mean = r.array<float>();
    l.run_var = r.array<float>();
    if (l.w.size() != std::size_t(in) * std::size_t(h))
      throw Error(ErrorCode::IoError, path + ": layer shape mismatch");
    ckpt.params.layers.push_back(std::move(l));
    in = h;
  }
  ckpt.params.head_w = r.array<float>();
  ckpt.params.head_b = r.array<float>();
  return ckpt;
}

// Writes step files plus a manifest listing (step -> file).
inline void save_store(const nn::CheckpointStore& store,
                       const std::vector<std::string>& task_names,
                       const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "nn-checkpoints";
  manifest["aborted_non_finite"] = store.aborted_non_finite;
  manifest["tasks"] = task_names;
  auto& list = manifest["checkpoints"] = nlohmann::json::array();
  for (const auto& ckpt : store.snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%08ld.ckpt", ckpt.step);
    save_checkpoint(ckpt, task_names, (std::filesystem::path(dir) / name).string());
    list.push_back({{"step", ckpt.step}, {"file", name}});
  }
  std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
}

inline nn::CheckpointStore load_store(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
  if (!in)
    throw Error(ErrorCode::MissingArtifact, dir + ": no checkpoint manifest");
  nlohmann::json manifest;
  in >> manifest;
  nn::CheckpointStore store;
  store.aborted_non_finite = manifest.value("aborted_non_finite", false);
  for (const auto& entry : manifest.at("checkpoints"))
    store.snapshots.push_back(load_checkpoint(
        (std::filesystem::path(dir) / entry.at("file").get<std::string>()).string()));
  return store;
}

// Baseline models share the manifest scheme.
inline constexpr char kForestMagic[9] = "MTQFRST1";
inline constexpr char kLogRegMagic[9] = "MTQLOGR1";

inline void save_forest(const baselines::ForestModel& m, const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(kForestMagic, 8);
  w.pod(std::uint32_t(m.width));
  w.pod(std::uint32_t(m.n_trees));
  w.pod(m.max_features_frac);
  w.pod(std::uint32_t(m.min_samples_split));
  w.pod(std::uint64_t(m.seed));
  w.pod(std::uint64_t(m.trees.size()));
  for (const auto& tree : m.trees) {
    w.pod(std::uint64_t(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
      w.pod(std::int32_t(n.feature));
      w.pod(std::int32_t(n.zero_child));
      w.pod(std::int32_t(n.one_child));
      w.pod(std::int64_t(n.n_active));
      w.pod(std::int64_t(n.n_inactive));
    }
  }
}

inline baselines::ForestModel load_forest(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kForestMagic, 8) != 0)
    throw Error(ErrorCode::IoError, path + ": not a forest file");
  baselines::ForestModel m;
  m.width = int(r.pod<std::uint32_t>());
  m.n_trees = int(r.pod<std::uint32_t>());
  m.max_features_frac = r.pod<double>();
  m.min_samples_split = int(r.pod<std::uint32_t>());
  m.seed = r.pod<std::uint64_t>();
  const auto n_trees = r.pod<std::uint64_t>();
  for (std::uint64_t t = 0; t < n_trees; ++t) {
    baselines::Tree tree;
    const auto n_nodes = r.pod<std::uint64_t>();
    for (std::uint64_t n = 0; n < n_nodes; ++n) {
      baselines::TreeNode node;
      node.feature = int(r.pod<std::int32_t>());
      node.zero_child = int(r.pod<std::int32_t>());
      node.one_child = int(r.pod<std::int32_t>());
      node.n_active = long(r.pod<std::int64_t>());
      node.n_inactive = long(r.pod<std::int64_t>());
      tree.nodes.push_back(node);
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

inline void save_logreg(const baselines::LogRegModel& m, const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(kLogRegMagic, 8);
  w.pod(m.bias);
  w.pod(m.l2);
  w.pod(std::uint8_t(m.converged ? 1 : 0));
  w.pod(std::int32_t(m.iterations));
  w.array(m.w);
}

inline baselines::LogRegModel load_logreg(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kLogRegMagic, 8) != 0)
    throw Error(ErrorCode::IoError, path + ": not a logistic model file");
  baselines::LogRegModel m;
  m.bias = r.pod<double>();
  m.l2 = r.pod<double>();
  m.converged = r.pod<std::uint8_t>() != 0;
  m.iterations = int(r.pod<std::int32_t>());
  m.w = r.array<double>();
  return m;
}

}  // namespace mtqsar::io
