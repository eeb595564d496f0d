#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtqsar/chem.hpp"
#include "mtqsar/data.hpp"
#include "mtqsar/date.hpp"
#include "mtqsar/errors.hpp"
#include "mtqsar/rng.hpp"

namespace mtqsar::synth {

struct TaskSpec {
  std::string name;
  int size = 0;
  double rho = 1.0;  // correlation of the task direction with the latent
  double active_fraction = 0.5;
  std::optional<Date> date_start;  // defaults to the collection range
  std::optional<Date> date_end;
};

struct SyntheticSpec {
  std::vector<TaskSpec> tasks;
  double noise = 0.0;            // label flip probability
  double drift = 0.0;            // strength of the temporal structure shift
  double shared_fraction = 0.0;  // fraction of each task drawn from a shared pool
  data::FingerprintParams fp;
  Date date_start = Date::from_civil(2010, 1, 1);
  Date date_end = Date::from_civil(2015, 12, 31);
  std::vector<double> latent;  // optional explicit latent direction (fp.width)
};

namespace detail {

// Template library: scaffolds carry {0}/{1} holes filled with substituents.
// Two disjoint "eras" of building blocks realize the temporal drift; the mix
// slides from era A toward era B as a record's date advances.
struct TemplateLibrary {
  std::vector<std::string> scaffolds_a = {
      "c1ccc({0})cc1",      "c1ccc({0})c({1})c1", "C1CCC({0})CC1",
      "c1cc({0})ncc1",      "{0}C(=O)N{1}",       "{0}OC(=O){1}",
      "c1ccc2c(c1)cccc2{0}"};
  std::vector<std::string> subs_a = {"C",  "CC",      "CCC", "O",  "OC",
                                     "N",  "NC",      "F",   "Cl", "C(=O)O",
                                     "CO", "C(=O)OC", "C#N", "CN"};
  std::vector<std::string> scaffolds_b = {
      "C1CCN({0})CC1", "c1cc({0})sc1",     "C({0})({1})O",
      "{0}S(=O)(=O)N{1}", "C1CC1{0}",      "{0}C#CC{1}",
      "c1cc({0})c({1})cc1F"};
  std::vector<std::string> subs_b = {"Br",   "I",    "C(F)(F)F", "S",
                                     "SC",   "CCCC", "CCCCC",    "OCC",
                                     "N(C)C", "CCO", "C(C)C",    "SCC"};

  std::string sample(bool era_b, Rng& rng) const {
    const auto& scaffolds = era_b ? scaffolds_b : scaffolds_a;
    const auto& subs = era_b ? subs_b : subs_a;
    std::string tpl = scaffolds[rng.next_below(scaffolds.size())];
    for (int hole = 0; hole < 2; ++hole) {
      const std::string key = "{" + std::to_string(hole) + "}";
      const auto at = tpl.find(key);
      if (at == std::string::npos) continue;
      tpl.replace(at, key.size(), subs[rng.next_below(subs.size())]);
    }
    return tpl;
  }
};

struct Compound {
  std::string smiles;
  chem::Fingerprint fingerprint;
  Date date;
};

inline double date_fraction(const Date& d, const Date& lo, const Date& hi) {
  if (hi.days() <= lo.days()) return 0.5;
  return double(d.days() - lo.days()) / double(hi.days() - lo.days());
}

inline Compound make_compound(const TemplateLibrary& lib, Rng& rng,
                              const Date& lo, const Date& hi, double drift,
                              const data::FingerprintParams& fp) {
  Compound c;
  const std::int64_t span = hi.days() - lo.days();
  c.date = Date(lo.days() + std::int64_t(rng.next_below(std::uint64_t(span + 1))));
  const double frac = date_fraction(c.date, lo, hi);
  const double p_era_b = 0.5 + drift * (frac - 0.5);
  const bool era_b = rng.next_bool(p_era_b);
  c.smiles = lib.sample(era_b, rng);
  c.fingerprint =
      chem::circular_fingerprint(chem::parse_smiles(c.smiles), fp.radius, fp.width);
  return c;
}

inline double score(const chem::Fingerprint& fp, const std::vector<double>& w) {
  double s = 0.0;
  for (int bit : fp.bits().set_bits()) s += w[std::size_t(bit)];
  return s;
}

}  // namespace detail

inline void validate(const SyntheticSpec& spec) {
  if (spec.tasks.empty())
    throw Error(ErrorCode::InvalidSpec, "synthetic spec needs >= 1 task");
  for (const auto& t : spec.tasks) {
    if (t.name.empty()) throw Error(ErrorCode::InvalidSpec, "task without a name");
    if (t.size < 2)
      throw Error(ErrorCode::InvalidSpec, t.name + ": size must be >= 2");
    if (t.rho < -1.0 || t.rho > 1.0)
      throw Error(ErrorCode::InvalidSpec, t.name + ": rho must lie in [-1,1]");
    if (t.active_fraction <= 0.0 || t.active_fraction >= 1.0)
      throw Error(ErrorCode::InvalidSpec,
                  t.name + ": active fraction must lie in (0,1)");
    const Date lo = t.date_start.value_or(spec.date_start);
    const Date hi = t.date_end.value_or(spec.date_end);
    if (hi < lo)
      throw Error(ErrorCode::InvalidSpec, t.name + ": date range is reversed");
  }
  if (spec.noise < 0.0 || spec.noise >= 1.0)
    throw Error(ErrorCode::InvalidSpec, "noise must lie in [0,1)");
  if (spec.drift < 0.0 || spec.drift > 1.0)
    throw Error(ErrorCode::InvalidSpec, "drift must lie in [0,1]");
  if (spec.shared_fraction < 0.0 || spec.shared_fraction > 1.0)
    throw Error(ErrorCode::InvalidSpec, "shared fraction must lie in [0,1]");
  if (!spec.latent.empty() && int(spec.latent.size()) != spec.fp.width)
    throw Error(ErrorCode::InvalidSpec, "latent dimension must equal fp width");
  std::vector<std::string> names;
  for (const auto& t : spec.tasks) names.push_back(t.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw Error(ErrorCode::InvalidSpec, "duplicate task names");
}

// Deterministic collection generator. Compounds are decorated templates;
// labels come from thresholding a logistic-model score x . w_t, where
// w_t = rho * latent + sqrt(1 - rho^2) * u_t, the threshold is the task's
// active-fraction quantile of a fixed probe sample, and labels then flip
// with the configured noise rate.
inline data::Collection generate_synthetic(const SyntheticSpec& spec,
                                           std::uint64_t seed) {
  validate(spec);
  const detail::TemplateLibrary lib;

  std::vector<double> latent = spec.latent;
  if (latent.empty()) {
    latent.resize(std::size_t(spec.fp.width));
    Rng rng(derive_seed(seed, "latent"));
    for (auto& v : latent) v = rng.next_normal();
  }

  // probe compounds fix the score-quantile thresholds; drift-free era mix
  std::vector<detail::Compound> probe;
  {
    Rng rng(derive_seed(seed, "probe"));
    for (int i = 0; i < 512; ++i)
      probe.push_back(detail::make_compound(lib, rng, spec.date_start,
                                            spec.date_end, 0.0, spec.fp));
  }

  // shared pool, dated within the collection-wide range
  std::size_t pool_size = 0;
  for (const auto& t : spec.tasks)
    pool_size = std::max(
        pool_size, std::size_t(std::floor(spec.shared_fraction * double(t.size))));
  std::vector<detail::Compound> pool;
  {
    Rng rng(derive_seed(seed, "shared-pool"));
    for (std::size_t i = 0; i < pool_size; ++i)
      pool.push_back(detail::make_compound(lib, rng, spec.date_start,
                                           spec.date_end, spec.drift, spec.fp));
  }

  std::vector<data::TaskDataset> tasks;
  for (std::size_t ti = 0; ti < spec.tasks.size(); ++ti) {
    const TaskSpec& ts = spec.tasks[ti];
    const Date lo = ts.date_start.value_or(spec.date_start);
    const Date hi = ts.date_end.value_or(spec.date_end);

    // task direction
    std::vector<double> direction(latent.size());
    {
      Rng rng(derive_seed(seed, "direction", ti));
      const double ortho = std::sqrt(std::max(0.0, 1.0 - ts.rho * ts.rho));
      for (std::size_t j = 0; j < latent.size(); ++j)
        direction[j] = ts.rho * latent[j] + ortho * rng.next_normal();
    }
    // threshold from the probe quantile
    std::vector<double> probe_scores;
    probe_scores.reserve(probe.size());
    for (const auto& c : probe)
      probe_scores.push_back(detail::score(c.fingerprint, direction));
    std::sort(probe_scores.begin(), probe_scores.end());
    const std::size_t q_idx = std::min(
        probe_scores.size() - 1,
        std::size_t(std::floor((1.0 - ts.active_fraction) * double(probe_scores.size()))));
    const double threshold = probe_scores[q_idx];

    data::TaskDataset task;
    task.name = ts.name;
    const std::size_t n_shared =
        std::size_t(std::floor(spec.shared_fraction * double(ts.size)));
    Rng record_rng(derive_seed(seed, "records", ti));
    Rng noise_rng(derive_seed(seed, "noise", ti));
    char id_buf[64];
    for (int i = 0; i < ts.size; ++i) {
      data::Record r;
      if (std::size_t(i) < n_shared) {
        const auto& c = pool[std::size_t(i)];
        std::snprintf(id_buf, sizeof id_buf, "S%06d", i);
        r.compound_id = id_buf;
        r.smiles = c.smiles;
        r.fingerprint = c.fingerprint;
        r.date = c.date;
      } else {
        const auto c = detail::make_compound(lib, record_rng, lo, hi, spec.drift, spec.fp);
        std::snprintf(id_buf, sizeof id_buf, "%s-%06d", ts.name.c_str(), i);
        r.compound_id = id_buf;
        r.smiles = c.smiles;
        r.fingerprint = c.fingerprint;
        r.date = c.date;
      }
      bool active = detail::score(r.fingerprint, direction) > threshold;
      if (spec.noise > 0.0 && noise_rng.next_bool(spec.noise)) active = !active;
      r.active = active;
      task.records.push_back(std::move(r));
    }
    tasks.push_back(std::move(task));
  }
  return data::Collection(std::move(tasks), spec.fp);
}

}  // namespace mtqsar::synth
