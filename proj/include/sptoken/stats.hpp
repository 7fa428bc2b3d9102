#pragma once

#include <optional>
#include <vector>

namespace sptoken::stats {

double median(std::vector<double> samples);

struct MedianInterval {
  double lo = 0.0;
  double median = 0.0;
  double hi = 0.0;
  int lower_rank = 0;  // 1-based order statistics
  int upper_rank = 0;
  bool degenerate = false;  // too few samples for the requested coverage
};

/// Order-statistic interval for the median from the Binomial(n, 1/2) distribution.
MedianInterval median_ci(std::vector<double> samples, double level = 0.95);

struct MeanInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

/// Student-t interval for the mean; lo = hi = mean when n < 2.
MeanInterval mean_ci(const std::vector<double>& samples, double level = 0.95);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rss = 0.0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// y ~ a * exp(-b x) + c by least squares; b >= 0 is searched, (a, c) solved exactly.
struct ExponentialFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double rss = 0.0;
};
ExponentialFit exponential_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Offset (0-based, from the change) of the first episode that starts a run of
/// `persistence` consecutive satisfied episodes; nullopt when it never happens.
std::optional<int> episodes_to_learn(const std::vector<bool>& satisfied, int persistence = 3);

}  // namespace sptoken::stats
