#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "sptoken/stats.hpp"

using namespace sptoken::stats;

namespace {

// Independent binomial CDF for the order-statistic ranks.
double binom_cdf(int k, int n) {
  double total = 0;
  for (int i = 0; i <= k; ++i) {
    double c = 1;
    for (int j = 1; j <= i; ++j) c = c * (n - i + j) / j;
    total += c;
  }
  return total / std::pow(2.0, n);
}

}  // namespace

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("median interval examples") {
  auto c = median_ci(std::vector<double>(20, 5.0));
  CHECK(c.lo == 5);
  CHECK(c.median == 5);
  CHECK(c.hi == 5);

  std::vector<double> x(20);
  std::iota(x.begin(), x.end(), 1.0);
  auto r = median_ci(x);
  CHECK(r.median == 10.5);
  CHECK(r.lo == 6);
  CHECK(r.hi == 15);
  CHECK(r.lower_rank == 6);
  CHECK(r.upper_rank == 15);
  CHECK_FALSE(r.degenerate);
  // Coverage of (6, 15) from the binomial table.
  CHECK(1.0 - 2.0 * binom_cdf(5, 20) >= 0.95);
  CHECK(1.0 - 2.0 * binom_cdf(6, 20) < 0.95);
}

TEST_CASE("median interval is shift equivariant and flags small samples") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> x(37);
  for (auto& v : x) v = nd(rng);
  auto a = median_ci(x);
  for (auto& v : x) v += 3.0;
  auto b = median_ci(x);
  CHECK(b.lo == doctest::Approx(a.lo + 3.0));
  CHECK(b.hi == doctest::Approx(a.hi + 3.0));
  CHECK(b.median == doctest::Approx(a.median + 3.0));
  CHECK(median_ci({1, 2, 3}).degenerate);
}

TEST_CASE("mean interval") {
  auto m = mean_ci({1, 2, 3, 4, 5});
  CHECK(m.mean == 3);
  // t(0.975, 4) = 2.776; sd = sqrt(2.5).
  CHECK(m.hi - m.mean == doctest::Approx(2.776 * std::sqrt(2.5) / std::sqrt(5.0)).epsilon(1e-3));
  auto one = mean_ci({7});
  CHECK(one.lo == 7);
  CHECK(one.hi == 7);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 5, 2, 1}) == doctest::Approx(-1.0));
  // Ties get average ranks: ranks y = (1.5, 1.5, 3, 4).
  CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 3}) == doctest::Approx(0.9486832981));
}

TEST_CASE("linear fit") {
  auto f = linear_fit({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.rss == doctest::Approx(0.0));
}

TEST_CASE("exponential fit recovers a decay") {
  std::vector<double> x{1, 5, 10, 20}, y;
  for (double v : x) y.push_back(40.0 * std::exp(-0.2 * v) + 5.0);
  auto e = exponential_fit(x, y);
  CHECK(e.rss < 1e-6);
  CHECK(e.b == doctest::Approx(0.2).epsilon(1e-3));
  CHECK(e.rss < linear_fit(x, y).rss);
}

TEST_CASE("episodes to learn") {
  CHECK(episodes_to_learn(std::vector<bool>(10, true)) == 0);
  std::vector<bool> trace(20, false);
  trace[3] = trace[4] = true;  // too short a run
  trace[7] = trace[8] = trace[9] = true;
  CHECK(episodes_to_learn(trace) == 7);
  CHECK_FALSE(episodes_to_learn(std::vector<bool>(10, false)).has_value());
  CHECK_FALSE(episodes_to_learn({true, true}).has_value());
  CHECK(episodes_to_learn({false, true}, 1) == 1);
}
