#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtqsar/stats.hpp"

using namespace mtqsar;
using Catch::Matchers::WithinAbs;

namespace {
std::string round2(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace

TEST_CASE("normal quantile matches reference values to 1e-9") {
  // reference: scipy.stats.norm.ppf
  const std::pair<double, double> cases[] = {
      {0.5, 0.0},
      {0.6, 0.2533471031357997},
      {0.75, 0.6744897501960817},
      {0.9, 1.2815515655446004},
      {0.975, 1.959963984540054},
      {0.995, 2.5758293035489004},
      {0.9999, 3.719016485455709},
      {0.025, -1.9599639845400545},
      {1e-6, -4.753424308822899},
      {0.999999999, 5.997807019601637},
      {0.3, -0.5244005127080409},
  };
  for (const auto& [p, z] : cases) {
    INFO("p = " << p);
    CHECK_THAT(stats::normal_quantile(p), WithinAbs(z, 1e-9));
  }
  CHECK_THROWS_AS(stats::normal_quantile(0.0), Error);
  CHECK_THROWS_AS(stats::normal_quantile(1.0), Error);
}

TEST_CASE("wilson interval reproduces printed confidence intervals") {
  auto [lo1, hi1] = stats::wilson_interval(15, 22, 0.05);
  CHECK(round2(lo1) == "0.47");
  CHECK(round2(hi1) == "0.84");
  CHECK_THAT(lo1, WithinAbs(0.47318597741042745, 1e-12));
  CHECK_THAT(hi1, WithinAbs(0.8363940681864375, 1e-12));

  auto [lo2, hi2] = stats::wilson_interval(16, 22, 0.05);
  CHECK(round2(lo2) == "0.52");
  CHECK(round2(hi2) == "0.87");

  auto [lo3, hi3] = stats::wilson_interval(22, 22, 0.05);
  CHECK(round2(lo3) == "0.85");
  CHECK(round2(hi3) == "1.00");

  // p_hat = 0.5 centers the interval
  auto [lo4, hi4] = stats::wilson_interval(11, 22, 0.05);
  CHECK_THAT(lo4 + hi4, WithinAbs(1.0, 1e-12));

  CHECK_THROWS_AS(stats::wilson_interval(5, 4), Error);
  CHECK_THROWS_AS(stats::wilson_interval(-1, 4), Error);
  CHECK_THROWS_AS(stats::wilson_interval(0, 0), Error);
}

TEST_CASE("wilson intervals mirror about one half") {
  for (long n : {5L, 10L, 22L, 100L}) {
    for (long k = 0; k <= n; ++k) {
      auto [lo, hi] = stats::wilson_interval(k, n);
      auto [mlo, mhi] = stats::wilson_interval(n - k, n);
      INFO("k=" << k << " n=" << n);
      CHECK_THAT(lo, WithinAbs(1.0 - mhi, 1e-12));
      CHECK_THAT(hi, WithinAbs(1.0 - mlo, 1e-12));
    }
  }
}

TEST_CASE("wilson width shrinks as n grows at fixed proportion") {
  double prev = 1.0;
  for (long n : {4L, 8L, 16L, 32L, 64L, 128L}) {
    auto [lo, hi] = stats::wilson_interval(n / 2, n);
    const double width = hi - lo;
    CHECK(width < prev);
    prev = width;
  }
}

TEST_CASE("sign test excludes exact zeros") {
  const auto st = stats::sign_test({0.1, -0.2, 0.0});
  CHECK(st.positives == 1);
  CHECK(st.nonzero == 2);

  const auto all_pos = stats::sign_test({0.5, 0.25, 0.125});
  CHECK(all_pos.positives == 3);
  CHECK(all_pos.nonzero == 3);

  CHECK_THROWS_AS(stats::sign_test({0.0, 0.0}), Error);
  try {
    stats::sign_test({0.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllZero);
  }
}

TEST_CASE("median averages central values on even lengths") {
  CHECK(stats::median({0.10, -0.05}) == 0.025);
  CHECK(stats::median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(stats::median({1.0}) == 1.0);
}

TEST_CASE("bootstrap mean interval") {
  const auto constant = stats::bootstrap_mean_ci({2.5, 2.5, 2.5}, 1000, 0.05, 7);
  CHECK(constant.first == 2.5);
  CHECK(constant.second == 2.5);

  const auto a = stats::bootstrap_mean_ci({0.0, 1.0, 0.5, 0.25}, 5000, 0.05, 3);
  const auto b = stats::bootstrap_mean_ci({0.0, 1.0, 0.5, 0.25}, 5000, 0.05, 3);
  CHECK(a == b);

  const auto coin = stats::bootstrap_mean_ci({0.0, 1.0}, 10000, 0.05, 11);
  CHECK(coin.first <= 0.5);
  CHECK(coin.second >= 0.5);

  CHECK_THROWS_AS(stats::bootstrap_mean_ci({}, 100, 0.05, 0), Error);
}

TEST_CASE("paired deltas keep stable task order") {
  const std::vector<stats::TaskAuc> a = {{"t1", 0.8}, {"t2", 0.6}};
  const std::vector<stats::TaskAuc> b = {{"t2", 0.65}, {"t1", 0.7}};
  const auto deltas = stats::paired_deltas(a, b);
  REQUIRE(deltas.size() == 2);
  CHECK_THAT(deltas[0], WithinAbs(0.10, 1e-12));
  CHECK_THAT(deltas[1], WithinAbs(-0.05, 1e-12));

  const std::vector<stats::TaskAuc> missing = {{"t1", 0.7}, {"t3", 0.5}};
  CHECK_THROWS_AS(stats::paired_deltas(a, missing), Error);
}

TEST_CASE("compare flags identical models as indistinguishable") {
  const std::vector<stats::TaskAuc> a = {{"t1", 0.8}, {"t2", 0.6}};
  const auto result = stats::compare(a, a);
  CHECK(result.n == 0);
  CHECK_FALSE(result.interval.has_value());
  CHECK_FALSE(result.significant);
  CHECK(result.median_delta == 0.0);
}

TEST_CASE("compare is antisymmetric in significance direction") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<stats::TaskAuc> a, b;
    const int n = 5 + int(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      const std::string name = "t" + std::to_string(i);
      a.push_back({name, rng.next_double()});
      b.push_back({name, rng.next_double()});
    }
    const auto ab = stats::compare(a, b);
    const auto ba = stats::compare(b, a);
    CHECK(ab.significant == ba.significant);
    if (ab.interval && ba.interval) {
      CHECK_THAT(ab.interval->first, WithinAbs(1.0 - ba.interval->second, 1e-12));
      CHECK_THAT(ab.median_delta, WithinAbs(-ba.median_delta, 1e-12));
    }
  }
}

TEST_CASE("compare on a full sweep of positive deltas") {
  std::vector<stats::TaskAuc> a, b;
  for (int i = 0; i < 22; ++i) {
    const std::string name = "d" + std::to_string(i);
    a.push_back({name, 0.8 + 0.001 * i});
    b.push_back({name, 0.7});
  }
  const auto result = stats::compare(a, b);
  CHECK(result.k == 22);
  CHECK(result.n == 22);
  REQUIRE(result.interval.has_value());
  CHECK(round2(result.interval->first) == "0.85");
  CHECK(round2(result.interval->second) == "1.00");
  CHECK(result.significant);
}
