#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace catres::stats {

enum class TestKind {
  chi_square_gof,
  kruskal_wallis,
  binomial,
  shapiro_wilk,
  lilliefors,
  kolmogorov_smirnov,
  jarque_bera,
  bartlett,
  levene,
};

const char* to_string(TestKind kind);

struct TestResult {
  TestKind test = TestKind::chi_square_gof;
  double statistic = 0.0;
  std::optional<double> df;
  std::optional<double> df2;  // denominator df of F-based tests
  double p_value = 1.0;
  // log10 of the p-value; stays finite when p_value underflows to 0
  double log10_p = 0.0;
  bool skipped = false;
  std::string notes;
};

// Upper tail of the chi-square distribution, natural log. Accurate far past
// the point where the plain survival function underflows.
double chi2_log_sf(double x, double df);
double normal_log_sf(double z);
double normal_quantile(double p);
// Kolmogorov limiting distribution, P(K > lambda).
double kolmogorov_sf(double lambda);

// Pearson statistic sum((O-E)^2/E), df = k-1. `expected` defaults to a
// uniform split of the observed total.
TestResult chi_square_gof(std::span<const double> observed,
                          std::optional<std::span<const double>> expected = std::nullopt);

// H with midranks and tie correction; chi-square approximation for p.
// Groups smaller than `min_group_size` are rejected.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups, std::size_t min_group_size = 5);

enum class Alternative { two_sided, greater, less };

// Exact binomial test. Two-sided uses the "minlike" convention: the sum of
// all outcome probabilities not exceeding P(k) (relative slack 1e-7).
TestResult binomial_test(std::int64_t k, std::int64_t n, double p0, Alternative alternative = Alternative::two_sided);

// Royston (1995) AS R94 approximation, 3 <= n <= 5000.
TestResult shapiro_wilk(std::span<const double> sample);
// KS distance to a normal with estimated mean/sd; Dallal-Wilkinson p.
TestResult lilliefors(std::span<const double> sample);
// KS against a fully specified normal distribution.
TestResult kolmogorov_smirnov(std::span<const double> sample, double mean, double sd);
TestResult jarque_bera(std::span<const double> sample);

// Biased moment estimators (population formulas).
double skewness(std::span<const double> sample);
double excess_kurtosis(std::span<const double> sample);

struct NormalityReport {
  std::vector<TestResult> tests;
  std::optional<double> skewness;
  std::optional<double> excess_kurtosis;
  std::vector<std::pair<double, double>> qq_points;  // (theoretical, sample)
};

NormalityReport normality_battery(std::span<const double> sample);

TestResult bartlett(const std::vector<std::vector<double>>& groups);
// Brown-Forsythe variant: deviations from group medians.
TestResult levene(const std::vector<std::vector<double>>& groups);

struct VarianceHomogeneity {
  TestResult bartlett;
  TestResult levene;
};

VarianceHomogeneity variance_homogeneity(const std::vector<std::vector<double>>& groups);

}  // namespace catres::stats
