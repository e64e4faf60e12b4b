#pragma once

#include <cstdint>
#include <span>

namespace csmc {

// Sum of nonnegative values computed as w_max * sum(w_i / w_max), which
// keeps the result finite and accurate when the raw values span many
// orders of magnitude. Returns 0 for empty or all-zero input.
double rescaled_sum(std::span<const double> values);

struct MeanStderr {
  double mean = 0;
  double stderr_ = 0;
};

MeanStderr mean_stderr(std::span<const double> values);

// Unbiased sample variance (divides by n-1).
double sample_variance(std::span<const double> values);

// Standard error of the sample variance, sqrt((m4 - m2^2) / n) with
// central moments m2, m4. Valid without normality assumptions.
double variance_stderr(std::span<const double> values);

struct TestResult {
  double statistic = 0;
  double p_value = 1;
};

// Pearson chi-square goodness of fit of observed counts against expected
// cell probabilities. Degrees of freedom = #cells - 1. Cells with zero
// expected probability must have zero counts.
TestResult chi_square_gof(std::span<const std::int64_t> counts,
                          std::span<const double> probs);

// Two-sided F test for equality of two variances with sample sizes n1, n2.
TestResult f_test_variances(double var1, std::int64_t n1, double var2,
                            std::int64_t n2);

// Anderson-Darling test of composite normality (mean and variance
// estimated from the sample). Returns the size-adjusted statistic A*^2
// and an approximate p-value.
TestResult anderson_darling_normality(std::span<const double> values);

// One-sided test of an increasing trend in y across the given x order,
// based on Spearman rank correlation. Small samples (<= 8 points) use the
// exact permutation null; larger ones a t approximation. Small p-values
// indicate evidence FOR an increasing trend.
TestResult spearman_trend(std::span<const double> x, std::span<const double> y);

// Least-squares slope of log(y) against log(x); inputs must be positive.
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace csmc
