#include "csmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace csmc {

double rescaled_sum(std::span<const double> values) {
  double vmax = 0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax <= 0) return 0;
  double acc = 0;
  for (double v : values) acc += v / vmax;
  return vmax * acc;
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(n);
  if (n >= 2)
    out.stderr_ = std::sqrt(sample_variance(values) / static_cast<double>(n));
  return out;
}

double sample_variance(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(n);
  double acc = 0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(n - 1);
}

double variance_stderr(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(n);
  double m2 = 0, m4 = 0;
  for (double v : values) {
    const double d2 = (v - mean) * (v - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  return std::sqrt(std::max(0.0, m4 - m2 * m2) / static_cast<double>(n));
}

TestResult chi_square_gof(std::span<const std::int64_t> counts,
                          std::span<const double> probs) {
  if (counts.size() != probs.size())
    throw std::invalid_argument("chi_square_gof: size mismatch");
  std::int64_t total = 0;
  double mass = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw std::invalid_argument("chi_square_gof: negative count");
    if (probs[i] < 0) throw std::invalid_argument("chi_square_gof: negative prob");
    if (probs[i] == 0 && counts[i] != 0)
      throw std::invalid_argument("chi_square_gof: count in zero-probability cell");
    total += counts[i];
    mass += probs[i];
  }
  if (total == 0 || mass <= 0)
    throw std::invalid_argument("chi_square_gof: empty sample or zero mass");

  double stat = 0;
  int dof = -1;  // k - 1 over cells with positive probability
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (probs[i] == 0) continue;
    const double expected = static_cast<double>(total) * probs[i] / mass;
    const double diff = static_cast<double>(counts[i]) - expected;
    stat += diff * diff / expected;
    ++dof;
  }
  if (dof <= 0) return {0, 1};
  boost::math::chi_squared dist(dof);
  return {stat, boost::math::cdf(boost::math::complement(dist, stat))};
}

TestResult f_test_variances(double var1, std::int64_t n1, double var2,
                            std::int64_t n2) {
  if (n1 < 2 || n2 < 2)
    throw std::invalid_argument("f_test_variances: need at least 2 samples each");
  if (var1 < 0 || var2 < 0)
    throw std::invalid_argument("f_test_variances: negative variance");
  if (var1 == 0 && var2 == 0) return {1, 1};
  if (var2 == 0 || var1 == 0) return {std::numeric_limits<double>::infinity(), 0};
  const double f = var1 / var2;
  boost::math::fisher_f dist(static_cast<double>(n1 - 1),
                             static_cast<double>(n2 - 1));
  const double lower = boost::math::cdf(dist, f);
  const double upper = boost::math::cdf(boost::math::complement(dist, f));
  return {f, std::min(1.0, 2 * std::min(lower, upper))};
}

TestResult anderson_darling_normality(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 8)
    throw std::invalid_argument("anderson_darling_normality: need >= 8 samples");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(n);
  const double sd = std::sqrt(sample_variance(values));
  if (sd == 0) return {std::numeric_limits<double>::infinity(), 0};

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  boost::math::normal unit;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = boost::math::cdf(unit, (sorted[i] - mean) / sd);
    z[i] = std::clamp(p, 1e-300, 1 - 1e-16);
  }
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i)
    acc += (2.0 * static_cast<double>(i) + 1) *
           (std::log(z[i]) + std::log1p(-z[n - 1 - i]));
  const double a2 = -static_cast<double>(n) - acc / static_cast<double>(n);
  // Size adjustment for estimated mean and variance, then the usual
  // piecewise exponential fit for the tail probability.
  const double a = a2 * (1 + 0.75 / static_cast<double>(n) +
                         2.25 / static_cast<double>(n * n));
  double p;
  if (a >= 10)
    p = 0;
  else if (a >= 0.6)
    p = std::exp(1.2937 - 5.709 * a + 0.0186 * a * a);
  else if (a >= 0.34)
    p = std::exp(0.9177 - 4.279 * a - 1.38 * a * a);
  else if (a > 0.2)
    p = 1 - std::exp(-8.318 + 42.796 * a - 59.938 * a * a);
  else
    p = 1 - std::exp(-13.436 + 101.14 * a - 223.73 * a * a);
  return {a, std::clamp(p, 0.0, 1.0)};
}

namespace {

// Average ranks (midranks) in [1, n], ties share their mean rank.
std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> u, std::span<const double> v) {
  const std::size_t n = u.size();
  const double um = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
  const double vm = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    suv += (u[i] - um) * (v[i] - vm);
    suu += (u[i] - um) * (u[i] - um);
    svv += (v[i] - vm) * (v[i] - vm);
  }
  if (suu == 0 || svv == 0) return std::numeric_limits<double>::quiet_NaN();
  return suv / std::sqrt(suu * svv);
}

}  // namespace

TestResult spearman_trend(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("spearman_trend: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("spearman_trend: need >= 3 points");

  const std::vector<double> rx = midranks(x);
  std::vector<double> ry = midranks(y);
  const double rho = pearson(rx, ry);
  if (std::isnan(rho)) return {0, 1};

  if (n <= 8) {
    // Exact permutation null over the multiset of y ranks. Distinct
    // arrangements of tied ranks are equiprobable, so counting them
    // uniformly matches the uniform law on raw permutations.
    std::vector<double> perm = ry;
    std::sort(perm.begin(), perm.end());
    std::int64_t total = 0, at_least = 0;
    do {
      ++total;
      if (pearson(rx, perm) >= rho - 1e-12) ++at_least;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {rho, static_cast<double>(at_least) / static_cast<double>(total)};
  }

  const double r = std::clamp(rho, -(1 - 1e-12), 1 - 1e-12);
  const double t = r * std::sqrt(static_cast<double>(n - 2) / (1 - r * r));
  boost::math::students_t dist(static_cast<double>(n - 2));
  return {rho, boost::math::cdf(boost::math::complement(dist, t))};
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("log_log_slope: size mismatch");
  if (x.size() < 2) throw std::invalid_argument("log_log_slope: need >= 2 points");
  std::vector<double> u, v;
  u.reserve(x.size());
  v.reserve(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0)
      throw std::invalid_argument("log_log_slope: inputs must be positive");
    u.push_back(std::log(x[i]));
    v.push_back(std::log(y[i]));
  }
  const double um = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
  const double vm = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double suv = 0, suu = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suv += (u[i] - um) * (v[i] - vm);
    suu += (u[i] - um) * (u[i] - um);
  }
  if (suu == 0) throw std::invalid_argument("log_log_slope: x values all equal");
  return suv / suu;
}

}  // namespace csmc
