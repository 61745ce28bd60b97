#include "catres/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "catres/error.hpp"

namespace catres::stats {

namespace {

constexpr double kLn10 = std::numbers::ln10;

void set_p_from_log(TestResult& r, double log_p) {
  log_p = std::min(log_p, 0.0);
  r.log10_p = log_p / kLn10;
  r.p_value = std::clamp(std::exp(log_p), 0.0, 1.0);
}

void set_p(TestResult& r, double p) {
  p = std::clamp(p, 0.0, 1.0);
  r.p_value = p;
  r.log10_p = p > 0.0 ? std::log10(p) : -std::numeric_limits<double>::infinity();
}

TestResult skipped(TestKind kind, std::string note) {
  TestResult r;
  r.test = kind;
  r.skipped = true;
  r.notes = std::move(note);
  return r;
}

// c[0] + c[1] x + c[2] x^2 + ...
template <std::size_t N>
double poly(const double (&c)[N], double x) {
  double r = 0.0;
  for (std::size_t i = N; i-- > 0;) r = r * x + c[i];
  return r;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Two-sided KS distance between the sorted sample and a continuous CDF.
template <typename Cdf>
double ks_distance(std::vector<double> sorted, Cdf cdf) {
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

const char* to_string(TestKind kind) {
  switch (kind) {
    case TestKind::chi_square_gof: return "chi_square_gof";
    case TestKind::kruskal_wallis: return "kruskal_wallis";
    case TestKind::binomial: return "binomial";
    case TestKind::shapiro_wilk: return "shapiro_wilk";
    case TestKind::lilliefors: return "lilliefors";
    case TestKind::kolmogorov_smirnov: return "kolmogorov_smirnov";
    case TestKind::jarque_bera: return "jarque_bera";
    case TestKind::bartlett: return "bartlett";
    case TestKind::levene: return "levene";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// distributions

double chi2_log_sf(double x, double df) {
  if (!(df > 0.0)) throw DomainError("chi2_log_sf: df must be positive");
  if (x <= 0.0) return 0.0;
  const double a = df / 2.0, z = x / 2.0;
  const double q = boost::math::gamma_q(a, z);
  if (q > 1e-280) return std::log(q);
  // Lentz continued fraction for Q(a,z), evaluated in log space.
  constexpr double tiny = 1e-300;
  double b = z + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return -z + a * std::log(z) - std::lgamma(a) + std::log(h);
}

double normal_log_sf(double z) {
  const double p = 0.5 * std::erfc(z / std::numbers::sqrt2);
  if (p > 1e-280) return std::log(p);
  // asymptotic Mills ratio expansion
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges slowly; sf is 1 to double precision here
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// chi-square goodness of fit

TestResult chi_square_gof(std::span<const double> observed, std::optional<std::span<const double>> expected) {
  if (observed.size() < 2) throw DomainError("chi_square_gof: need at least 2 categories");
  for (double o : observed) {
    if (!(o >= 0.0) || !std::isfinite(o)) throw DomainError("chi_square_gof: counts must be finite and non-negative");
  }
  const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
  std::vector<double> exp_counts;
  if (expected) {
    if (expected->size() != observed.size()) throw DomainError("chi_square_gof: expected/observed length mismatch");
    exp_counts.assign(expected->begin(), expected->end());
    const double exp_total = std::accumulate(exp_counts.begin(), exp_counts.end(), 0.0);
    if (std::abs(exp_total - total) > 1e-8 * std::max(1.0, total)) {
      throw DomainError("chi_square_gof: expected counts must sum to the observed total");
    }
  } else {
    exp_counts.assign(observed.size(), total / static_cast<double>(observed.size()));
  }
  TestResult r;
  r.test = TestKind::chi_square_gof;
  r.df = static_cast<double>(observed.size() - 1);
  double stat = 0.0;
  bool small = false;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!(exp_counts[i] > 0.0)) throw DomainError("chi_square_gof: expected counts must be positive");
    if (exp_counts[i] < 5.0) small = true;
    const double diff = observed[i] - exp_counts[i];
    stat += diff * diff / exp_counts[i];
  }
  r.statistic = stat;
  set_p_from_log(r, chi2_log_sf(stat, *r.df));
  if (small) r.notes = "expected count below 5 in at least one category; chi-square approximation is doubtful";
  return r;
}

// ---------------------------------------------------------------------------
// Kruskal-Wallis

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups, std::size_t min_group_size) {
  if (groups.size() < 2) throw DomainError("kruskal_wallis: need at least 2 groups");
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw DomainError("kruskal_wallis: empty group");
    if (g.size() < min_group_size) {
      throw DomainError("kruskal_wallis: group of size " + std::to_string(g.size()) + " below minimum " +
                        std::to_string(min_group_size));
    }
    total += g.size();
  }
  struct Item {
    double value;
    std::size_t group;
  };
  std::vector<Item> pooled;
  pooled.reserve(total);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    for (double v : groups[gi]) {
      if (!std::isfinite(v)) throw DomainError("kruskal_wallis: non-finite value");
      pooled.push_back({v, gi});
    }
  }
  std::sort(pooled.begin(), pooled.end(), [](const Item& a, const Item& b) { return a.value < b.value; });

  std::vector<double> rank_sums(groups.size(), 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) rank_sums[pooled[t].group] += midrank;
    const double ties = static_cast<double>(j - i);
    tie_term += ties * ties * ties - ties;
    i = j;
  }
  const double n = static_cast<double>(total);
  TestResult r;
  r.test = TestKind::kruskal_wallis;
  r.df = static_cast<double>(groups.size() - 1);
  const double correction = 1.0 - tie_term / (n * n * n - n);
  if (correction <= 0.0) {
    r.statistic = 0.0;
    set_p(r, 1.0);
    r.notes = "all values tied; H defined as 0";
    return r;
  }
  double s = 0.0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    s += rank_sums[gi] * rank_sums[gi] / static_cast<double>(groups[gi].size());
  }
  const double h = (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction;
  r.statistic = std::max(h, 0.0);
  set_p_from_log(r, chi2_log_sf(r.statistic, *r.df));
  return r;
}

// ---------------------------------------------------------------------------
// exact binomial

TestResult binomial_test(std::int64_t k, std::int64_t n, double p0, Alternative alternative) {
  if (n < 0 || k < 0 || k > n) throw DomainError("binomial_test: require 0 <= k <= n");
  if (!(p0 > 0.0 && p0 < 1.0)) throw DomainError("binomial_test: p0 must lie in (0,1)");
  const auto size = static_cast<std::size_t>(n + 1);
  // Log pmf for every outcome; small n also gets an exact product form so
  // dyadic cases (p0 = 0.5) sum without rounding.
  std::vector<double> log_pmf(size), pmf(size);
  const double lp = std::log(p0), lq = std::log1p(-p0);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  for (std::int64_t i = 0; i <= n; ++i) {
    log_pmf[i] = lgn - std::lgamma(static_cast<double>(i) + 1.0) - std::lgamma(static_cast<double>(n - i) + 1.0) +
                 static_cast<double>(i) * lp + static_cast<double>(n - i) * lq;
  }
  if (n <= 50) {
    double coef = 1.0;
    for (std::int64_t i = 0; i <= n; ++i) {
      if (i > 0) coef = coef * static_cast<double>(n - i + 1) / static_cast<double>(i);
      pmf[i] = coef * std::pow(p0, static_cast<double>(i)) * std::pow(1.0 - p0, static_cast<double>(n - i));
    }
  } else {
    for (std::size_t i = 0; i < size; ++i) pmf[i] = std::exp(log_pmf[i]);
  }

  std::vector<std::size_t> members;
  const auto kk = static_cast<std::size_t>(k);
  switch (alternative) {
    case Alternative::greater:
      for (std::size_t i = kk; i < size; ++i) members.push_back(i);
      break;
    case Alternative::less:
      for (std::size_t i = 0; i <= kk; ++i) members.push_back(i);
      break;
    case Alternative::two_sided: {
      const double cutoff = log_pmf[kk] + std::log1p(1e-7);
      for (std::size_t i = 0; i < size; ++i) {
        if (log_pmf[i] <= cutoff) members.push_back(i);
      }
      break;
    }
  }
  double p = 0.0;
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i : members) {
    p += pmf[i];
    max_log = std::max(max_log, log_pmf[i]);
  }
  TestResult r;
  r.test = TestKind::binomial;
  r.statistic = static_cast<double>(k);
  r.notes = alternative == Alternative::two_sided ? "two-sided p uses the minlike convention"
            : alternative == Alternative::greater ? "alternative: greater"
                                                  : "alternative: less";
  if (p > 1e-280) {
    set_p(r, p);
  } else {
    double acc = 0.0;
    for (std::size_t i : members) acc += std::exp(log_pmf[i] - max_log);
    set_p_from_log(r, max_log + std::log(acc));
  }
  return r;
}

// ---------------------------------------------------------------------------
// normality

TestResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) return skipped(TestKind::shapiro_wilk, "Shapiro-Wilk requires 3 <= n <= 5000");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 0.0) return skipped(TestKind::shapiro_wilk, "constant sample");

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};

  const std::size_t half = n / 2;
  const double an = static_cast<double>(n);
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::numbers::sqrt2 / 2.0;
  } else {
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, rsn) - m[0] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      first = 2;
      const double a2 = -m[1] / ssumm2 + poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      first = 1;
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  const double mean = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  double num = 0.0;
  for (std::size_t i = 0; i < half; ++i) num += a[i] * (x[n - 1 - i] - x[i]);
  const double w = std::min(num * num / ss, 1.0);

  TestResult r;
  r.test = TestKind::shapiro_wilk;
  r.statistic = w;
  if (n == 3) {
    const double p = 6.0 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::numbers::pi / 3.0);
    set_p(r, std::max(p, 0.0));
    return r;
  }
  double w1 = std::log(1.0 - w);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = -2.273 + 0.459 * an;
    if (w1 >= gamma) {
      set_p(r, 1e-99);
      r.notes = "W beyond the small-sample approximation range";
      return r;
    }
    w1 = -std::log(gamma - w1);
    mu = poly(c3, an);
    sigma = std::exp(poly(c4, an));
  } else {
    const double ln = std::log(an);
    mu = poly(c5, ln);
    sigma = std::exp(poly(c6, ln));
  }
  set_p_from_log(r, normal_log_sf((w1 - mu) / sigma));
  r.notes = "Royston AS R94 approximation";
  return r;
}

TestResult lilliefors(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 4) return skipped(TestKind::lilliefors, "Lilliefors requires n >= 4");
  if (is_constant(sample)) return skipped(TestKind::lilliefors, "constant sample");
  const double mean = mean_of(sample);
  const double sd = sample_sd(sample, mean);
  const double d = ks_distance({sample.begin(), sample.end()}, [&](double v) { return standard_normal_cdf((v - mean) / sd); });

  TestResult r;
  r.test = TestKind::lilliefors;
  r.statistic = d;
  // Dallal-Wilkinson, valid for p <= 0.1; above that Stephens' modified
  // statistic with the usual polynomial fit.
  double dd = d;
  double nd = static_cast<double>(n);
  if (n > 100) {
    dd = d * std::pow(nd / 100.0, 0.49);
    nd = 100.0;
  }
  const double log_p = -7.01256 * dd * dd * (nd + 2.78019) + 2.99587 * dd * std::sqrt(nd + 2.78019) - 0.122119 +
                       0.974598 / std::sqrt(nd) + 1.67997 / nd;
  if (std::exp(log_p) <= 0.1) {
    set_p_from_log(r, log_p);
    r.notes = "Dallal-Wilkinson approximation";
    return r;
  }
  const double sn = std::sqrt(static_cast<double>(n));
  const double kk = (sn - 0.01 + 0.85 / sn) * d;
  double p;
  if (kk <= 0.302) {
    p = 1.0;
  } else if (kk <= 0.5) {
    p = 2.76773 - 19.828315 * kk + 80.709644 * kk * kk - 138.55152 * kk * kk * kk + 81.218052 * std::pow(kk, 4);
  } else if (kk <= 0.9) {
    p = -4.901232 + 40.662806 * kk - 97.490286 * kk * kk + 94.029866 * kk * kk * kk - 32.355711 * std::pow(kk, 4);
  } else if (kk <= 1.31) {
    p = 6.198765 - 19.558097 * kk + 23.186922 * kk * kk - 12.234627 * kk * kk * kk + 2.423045 * std::pow(kk, 4);
  } else {
    p = 0.0;
  }
  set_p(r, p);
  r.notes = "Stephens modified-statistic approximation (p > 0.1)";
  return r;
}

TestResult kolmogorov_smirnov(std::span<const double> sample, double mean, double sd) {
  if (sample.empty()) throw DomainError("kolmogorov_smirnov: empty sample");
  if (!(sd > 0.0)) throw DomainError("kolmogorov_smirnov: sd must be positive");
  const double d = ks_distance({sample.begin(), sample.end()}, [&](double v) { return standard_normal_cdf((v - mean) / sd); });
  TestResult r;
  r.test = TestKind::kolmogorov_smirnov;
  r.statistic = d;
  const double sn = std::sqrt(static_cast<double>(sample.size()));
  set_p(r, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d));
  r.notes = "Kolmogorov limiting distribution with Stephens' small-sample correction";
  return r;
}

double skewness(std::span<const double> sample) {
  if (sample.size() < 2) throw DomainError("skewness: need at least 2 values");
  const double mean = mean_of(sample);
  double m2 = 0.0, m3 = 0.0;
  for (double x : sample) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  const double n = static_cast<double>(sample.size());
  m2 /= n;
  m3 /= n;
  if (m2 == 0.0) throw DomainError("skewness: constant sample");
  return m3 / std::pow(m2, 1.5);
}

double excess_kurtosis(std::span<const double> sample) {
  if (sample.size() < 2) throw DomainError("excess_kurtosis: need at least 2 values");
  const double mean = mean_of(sample);
  double m2 = 0.0, m4 = 0.0;
  for (double x : sample) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(sample.size());
  m2 /= n;
  m4 /= n;
  if (m2 == 0.0) throw DomainError("excess_kurtosis: constant sample");
  return m4 / (m2 * m2) - 3.0;
}

TestResult jarque_bera(std::span<const double> sample) {
  if (sample.size() < 2) return skipped(TestKind::jarque_bera, "Jarque-Bera requires n >= 2");
  if (is_constant(sample)) return skipped(TestKind::jarque_bera, "constant sample");
  const double s = skewness(sample);
  const double k = excess_kurtosis(sample);
  TestResult r;
  r.test = TestKind::jarque_bera;
  r.df = 2.0;
  r.statistic = static_cast<double>(sample.size()) / 6.0 * (s * s + k * k / 4.0);
  set_p_from_log(r, -r.statistic / 2.0);  // chi-square(2) survival is exp(-x/2)
  return r;
}

NormalityReport normality_battery(std::span<const double> sample) {
  NormalityReport rep;
  const std::size_t n = sample.size();
  if (n < 2 || is_constant(sample)) {
    const std::string note = n < 2 ? "sample too small" : "constant sample";
    for (auto kind : {TestKind::shapiro_wilk, TestKind::lilliefors, TestKind::kolmogorov_smirnov, TestKind::jarque_bera}) {
      rep.tests.push_back(skipped(kind, note));
    }
    return rep;
  }
  rep.tests.push_back(n >= 8 ? shapiro_wilk(sample) : skipped(TestKind::shapiro_wilk, "Shapiro-Wilk path needs n >= 8"));
  rep.tests.push_back(lilliefors(sample));
  const double mean = mean_of(sample);
  const double sd = sample_sd(sample, mean);
  auto ks = kolmogorov_smirnov(sample, mean, sd);
  ks.notes = "parameters estimated from the sample; p is conservative (see lilliefors)";
  rep.tests.push_back(std::move(ks));
  rep.tests.push_back(n >= 20 ? jarque_bera(sample) : skipped(TestKind::jarque_bera, "Jarque-Bera path needs n >= 20"));
  rep.skewness = skewness(sample);
  rep.excess_kurtosis = excess_kurtosis(sample);

  std::vector<double> z(sample.begin(), sample.end());
  std::sort(z.begin(), z.end());
  rep.qq_points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theoretical = normal_quantile((static_cast<double>(i + 1) - 0.375) / (static_cast<double>(n) + 0.25));
    rep.qq_points.emplace_back(theoretical, (z[i] - mean) / sd);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// variance homogeneity

namespace {

void check_groups(const std::vector<std::vector<double>>& groups, const char* who) {
  if (groups.size() < 2) throw DomainError(std::string(who) + ": need at least 2 groups");
  for (const auto& g : groups) {
    if (g.size() < 2) throw DomainError(std::string(who) + ": every group needs at least 2 values");
    for (double v : g) {
      if (!std::isfinite(v)) throw DomainError(std::string(who) + ": non-finite value");
    }
  }
}

}  // namespace

TestResult bartlett(const std::vector<std::vector<double>>& groups) {
  check_groups(groups, "bartlett");
  const double k = static_cast<double>(groups.size());
  double total = 0.0, pooled = 0.0, sum_log = 0.0, sum_inv = 0.0;
  for (const auto& g : groups) {
    const double ni = static_cast<double>(g.size());
    const double mean = mean_of(g);
    double ss = 0.0;
    for (double v : g) ss += (v - mean) * (v - mean);
    const double var = ss / (ni - 1.0);
    if (var <= 0.0) throw DomainError("bartlett: degenerate group with zero variance");
    total += ni;
    pooled += (ni - 1.0) * var;
    sum_log += (ni - 1.0) * std::log(var);
    sum_inv += 1.0 / (ni - 1.0);
  }
  pooled /= (total - k);
  const double numer = (total - k) * std::log(pooled) - sum_log;
  const double denom = 1.0 + (sum_inv - 1.0 / (total - k)) / (3.0 * (k - 1.0));
  TestResult r;
  r.test = TestKind::bartlett;
  r.df = k - 1.0;
  r.statistic = std::max(numer / denom, 0.0);
  set_p_from_log(r, chi2_log_sf(r.statistic, *r.df));
  return r;
}

TestResult levene(const std::vector<std::vector<double>>& groups) {
  check_groups(groups, "levene");
  const std::size_t k = groups.size();
  std::vector<std::vector<double>> z(k);
  std::vector<double> zbar(k);
  double total = 0.0, grand = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double med = median_of(groups[i]);
    for (double v : groups[i]) z[i].push_back(std::abs(v - med));
    zbar[i] = mean_of(z[i]);
    total += static_cast<double>(groups[i].size());
    grand += std::accumulate(z[i].begin(), z[i].end(), 0.0);
  }
  grand /= total;
  double between = 0.0, within = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    between += static_cast<double>(z[i].size()) * (zbar[i] - grand) * (zbar[i] - grand);
    for (double v : z[i]) within += (v - zbar[i]) * (v - zbar[i]);
  }
  TestResult r;
  r.test = TestKind::levene;
  r.df = static_cast<double>(k - 1);
  r.df2 = total - static_cast<double>(k);
  r.notes = "Brown-Forsythe variant (median centring)";
  if (between == 0.0) {
    r.statistic = 0.0;
    set_p(r, 1.0);
    return r;
  }
  if (within == 0.0) throw DomainError("levene: degenerate groups (no within-group spread of deviations)");
  r.statistic = (*r.df2 / *r.df) * between / within;
  const boost::math::fisher_f_distribution<double> f(*r.df, *r.df2);
  set_p(r, boost::math::cdf(boost::math::complement(f, r.statistic)));
  return r;
}

VarianceHomogeneity variance_homogeneity(const std::vector<std::vector<double>>& groups) {
  return {bartlett(groups), levene(groups)};
}

}  // namespace catres::stats
