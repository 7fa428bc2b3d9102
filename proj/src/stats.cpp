#include "sptoken/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace sptoken::stats {

double median(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

MedianInterval median_ci(std::vector<double> samples, double level) {
  if (samples.empty()) throw std::invalid_argument("median_ci of empty sample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
  std::sort(samples.begin(), samples.end());
  const int n = static_cast<int>(samples.size());
  MedianInterval out;
  out.median = median(samples);
  const double tail = (1.0 - level) / 2.0;
  boost::math::binomial_distribution<double> bin(n, 0.5);
  int j = 0;
  for (int cand = 1; cand <= (n + 1) / 2; ++cand) {
    if (boost::math::cdf(bin, cand - 1) <= tail) j = cand;
    else break;
  }
  if (j == 0) {
    out.degenerate = true;
    out.lower_rank = 1;
    out.upper_rank = n;
  } else {
    out.lower_rank = j;
    out.upper_rank = n - j + 1;
  }
  out.lo = samples[out.lower_rank - 1];
  out.hi = samples[out.upper_rank - 1];
  return out;
}

MeanInterval mean_ci(const std::vector<double>& samples, double level) {
  MeanInterval out;
  out.n = samples.size();
  if (samples.empty()) return out;
  out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(out.n);
  out.lo = out.hi = out.mean;
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double v : samples) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  boost::math::students_t_distribution<double> t(static_cast<double>(out.n - 1));
  const double half = boost::math::quantile(t, 1.0 - (1.0 - level) / 2.0) * sd / std::sqrt(static_cast<double>(out.n));
  out.lo = out.mean - half;
  out.hi = out.mean + half;
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

void check_pairs(const std::vector<double>& x, const std::vector<double>& y, std::size_t min_n) {
  if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
  if (x.size() < min_n) throw std::invalid_argument("too few points");
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_pairs(x, y, 2);
  return pearson(ranks(x), ranks(y));
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  check_pairs(x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  LinearFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.rss += r * r;
  }
  return f;
}

namespace {

// Best (a, c) for a fixed decay rate, with the resulting residual sum.
ExponentialFit fit_for_rate(const std::vector<double>& x, const std::vector<double>& y, double b) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::exp(-b * x[i]);
  LinearFit lf = linear_fit(g, y);
  return {lf.slope, b, lf.intercept, lf.rss};
}

}  // namespace

ExponentialFit exponential_fit(const std::vector<double>& x, const std::vector<double>& y) {
  check_pairs(x, y, 3);
  const double span = *std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end());
  if (!(span > 0.0)) throw std::invalid_argument("exponential fit needs distinct x values");
  // scan decay rates on a log grid, then refine around the best by golden section
  const double lo_rate = 1e-4 / span;
  const double hi_rate = 50.0 / span;
  constexpr int kGrid = 400;
  ExponentialFit best = fit_for_rate(x, y, lo_rate);
  int best_i = 0;
  for (int i = 1; i <= kGrid; ++i) {
    const double b = lo_rate * std::pow(hi_rate / lo_rate, static_cast<double>(i) / kGrid);
    auto f = fit_for_rate(x, y, b);
    if (f.rss < best.rss) {
      best = f;
      best_i = i;
    }
  }
  auto rate_at = [&](int i) { return lo_rate * std::pow(hi_rate / lo_rate, static_cast<double>(std::clamp(i, 0, kGrid)) / kGrid); };
  double a = std::log(rate_at(best_i - 1));
  double b = std::log(rate_at(best_i + 1));
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double m1 = b - phi * (b - a);
    const double m2 = a + phi * (b - a);
    if (fit_for_rate(x, y, std::exp(m1)).rss < fit_for_rate(x, y, std::exp(m2)).rss) b = m2;
    else a = m1;
  }
  auto refined = fit_for_rate(x, y, std::exp((a + b) / 2.0));
  return refined.rss < best.rss ? refined : best;
}

std::optional<int> episodes_to_learn(const std::vector<bool>& satisfied, int persistence) {
  if (persistence < 1) throw std::invalid_argument("persistence must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < satisfied.size(); ++i) {
    run = satisfied[i] ? run + 1 : 0;
    if (run == persistence) return static_cast<int>(i) - persistence + 1;
  }
  return std::nullopt;
}

}  // namespace sptoken::stats
