#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "catres/error.hpp"
#include "catres/stats.hpp"
#include "doctest.h"

using namespace catres::stats;
using catres::DomainError;

// Reference values below were produced offline with SciPy/statsmodels and
// mpmath (40 digits) and are frozen here.

namespace {

const std::vector<double> kSample{2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 3.0,
                                  2.2, 6.1, 3.7, 2.9, 3.5, 4.8, 3.1, 2.6, 4.0, 3.8};
const std::vector<std::vector<double>> kGroups{
    {1.2, 2.3, 1.9, 2.8, 2.2, 1.7}, {3.1, 0.4, 5.2, 1.1, 4.4, 2.0, 6.3}, {2.0, 2.1, 2.2, 1.9, 2.05}};

std::vector<double> normal_sample(std::mt19937_64& rng, std::size_t n, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> g(mean, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

void standardize(std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  for (auto& v : x) v = (v - m) / sd;
}

void check_valid(const TestResult& r) {
  CHECK(std::isfinite(r.statistic));
  CHECK(r.p_value >= 0.0);
  CHECK(r.p_value <= 1.0);
}

}  // namespace

TEST_CASE("distribution tails in log space") {
  CHECK(chi2_log_sf(1873.9, 1) == doctest::Approx(-940.94421283876245).epsilon(1e-12));
  CHECK(chi2_log_sf(5000, 3) == doctest::Approx(-2495.9669948169020).epsilon(1e-12));
  CHECK(chi2_log_sf(0, 2) == 0.0);
  CHECK(std::exp(chi2_log_sf(4.0, 1)) == doctest::Approx(0.04550026389635857).epsilon(1e-12));
  CHECK(normal_log_sf(40) == doctest::Approx(-804.60844201375390).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
  CHECK(kolmogorov_sf(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-10));
  CHECK(kolmogorov_sf(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-10));
}

TEST_CASE("chi-square goodness of fit") {
  const std::vector<double> same{30, 30, 30};
  auto r0 = chi_square_gof(same);
  CHECK(r0.statistic == 0.0);
  CHECK(r0.p_value == 1.0);

  const std::vector<double> o{60, 40};
  auto r = chi_square_gof(o);
  CHECK(r.statistic == 4.0);
  REQUIRE(r.df);
  CHECK(*r.df == 1.0);
  CHECK(r.p_value == doctest::Approx(0.04550026389635857).epsilon(1e-12));

  const std::vector<double> big{6837, 2626};
  auto t1 = chi_square_gof(big);
  CHECK(t1.statistic == doctest::Approx(1873.8794251294516).epsilon(1e-12));
  CHECK(t1.p_value == 0.0);
  CHECK(t1.log10_p == doctest::Approx(-408.64240925661294).epsilon(1e-10));

  const std::vector<double> neg{-1, 3};
  CHECK_THROWS_AS(chi_square_gof(neg), DomainError);
  const std::vector<double> expected{75, 25};
  auto e = chi_square_gof(o, std::span<const double>(expected));
  CHECK(e.statistic == doctest::Approx(15.0 * 15.0 / 75.0 + 15.0 * 15.0 / 25.0));
}

TEST_CASE("Kruskal-Wallis") {
  auto r = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}, 1);
  CHECK(r.statistic == doctest::Approx(7.2).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.02732372244729252).epsilon(1e-12));
  auto g = kruskal_wallis(kGroups, 5);
  CHECK(g.statistic == doctest::Approx(0.8266193433895249).epsilon(1e-12));
  CHECK(g.p_value == doctest::Approx(0.661457416469658).epsilon(1e-12));
  auto ties = kruskal_wallis({{2, 2, 2}, {2, 2, 2}}, 1);
  CHECK(ties.statistic == 0.0);
  CHECK(ties.p_value == 1.0);
  CHECK_THROWS(kruskal_wallis({{1, 2, 3}, {4, 5, 6}}));  // below the default group size
  CHECK_THROWS_AS(kruskal_wallis({{1, 2}, {}}, 1), DomainError);
}

TEST_CASE("exact binomial") {
  CHECK(binomial_test(5, 10, 0.5).p_value == 1.0);
  CHECK(binomial_test(3, 10, 0.5).p_value == 0.34375);
  CHECK(binomial_test(10, 10, 0.5, Alternative::greater).p_value == 1.0 / 1024.0);
  CHECK(binomial_test(2, 30, 0.1, Alternative::less).p_value == doctest::Approx(0.4113512395595057).epsilon(1e-12));
  CHECK(binomial_test(7, 20, 0.3).p_value == doctest::Approx(0.6294979666766769).epsilon(1e-12));
  CHECK_THROWS_AS(binomial_test(11, 10, 0.5), DomainError);
  CHECK_THROWS_AS(binomial_test(-1, 10, 0.5), DomainError);
  CHECK_THROWS_AS(binomial_test(1, 10, 1.5), DomainError);
}

TEST_CASE("normality tests on a fixed sample") {
  auto sw = shapiro_wilk(kSample);
  CHECK(sw.statistic == doctest::Approx(0.9593079974136536).epsilon(1e-9));
  CHECK(sw.p_value == doctest::Approx(0.5301188342961611).epsilon(1e-6));
  auto lf = lilliefors(kSample);
  CHECK(lf.statistic == doctest::Approx(0.11113070125719171).epsilon(1e-12));
  CHECK(lf.p_value == doctest::Approx(0.7455868796008076).epsilon(1e-9));
  auto ks = kolmogorov_smirnov(kSample, 3.5, 1.0);
  CHECK(ks.statistic == doctest::Approx(0.08213557943718341).epsilon(1e-12));
  CHECK(ks.p_value == doctest::Approx(0.9987581762939066).epsilon(1e-9));
  auto jb = jarque_bera(kSample);
  CHECK(jb.statistic == doctest::Approx(1.35888258876917).epsilon(1e-12));
  CHECK(jb.p_value == doctest::Approx(0.5069001212095616).epsilon(1e-12));
  CHECK(skewness(kSample) == doctest::Approx(0.6382753668370093).epsilon(1e-12));
  CHECK(excess_kurtosis(kSample) == doctest::Approx(0.032822718950890284).epsilon(1e-10));
}

TEST_CASE("variance homogeneity on fixed groups") {
  auto b = bartlett(kGroups);
  CHECK(b.statistic == doctest::Approx(22.597720758923142).epsilon(1e-12));
  CHECK(b.p_value == doctest::Approx(1.2387032738025102e-05).epsilon(1e-10));
  auto l = levene(kGroups);
  CHECK(l.statistic == doctest::Approx(10.217451738450203).epsilon(1e-12));
  CHECK(l.p_value == doctest::Approx(0.0015847108710059733).epsilon(1e-10));
  REQUIRE(l.df);
  REQUIRE(l.df2);
  CHECK(*l.df == 2.0);
  CHECK(*l.df2 == 15.0);
}

TEST_CASE("identical groups give Levene 0 and p 1") {
  const std::vector<double> g{1.0, 2.5, 3.0, 4.5, 7.0};
  auto vh = variance_homogeneity({g, g, g});
  CHECK(vh.levene.statistic == 0.0);
  CHECK(vh.levene.p_value == 1.0);
  CHECK(vh.bartlett.statistic == doctest::Approx(0.0).epsilon(1e-12).scale(1));
  CHECK_THROWS_AS(variance_homogeneity({g}), DomainError);
  CHECK_THROWS_AS(variance_homogeneity({g, {1.0}}), DomainError);
}

TEST_CASE("variances 1 and 100 are detected") {
  std::mt19937_64 rng(2024);
  auto vh = variance_homogeneity({normal_sample(rng, 50, 0, 1), normal_sample(rng, 50, 0, 10)});
  CHECK(vh.bartlett.p_value < 0.001);
  CHECK(vh.levene.p_value < 0.001);
}

TEST_CASE("equal-variance groups rarely reject") {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    auto vh = variance_homogeneity({normal_sample(rng, 50), normal_sample(rng, 50)});
    if (vh.bartlett.p_value > 0.05 && vh.levene.p_value > 0.05) ++ok;
  }
  CHECK(ok >= 90);
}

TEST_CASE("constant samples skip every normality test") {
  const std::vector<double> flat(50, 3.0);
  const auto rep = normality_battery(flat);
  CHECK_FALSE(rep.tests.empty());
  for (const auto& t : rep.tests) {
    CHECK(t.skipped);
    CHECK_FALSE(t.notes.empty());
  }
  CHECK_FALSE(rep.skewness.has_value());
}

TEST_CASE("small samples skip the inapplicable tests") {
  const std::vector<double> x{1.0, 2.0, 4.0, 3.0, 5.5};
  const auto rep = normality_battery(x);
  for (const auto& t : rep.tests) {
    if (t.test == TestKind::shapiro_wilk || t.test == TestKind::jarque_bera) CHECK(t.skipped);
  }
  const auto& qq = rep.qq_points;
  CHECK(qq.size() == x.size());
  CHECK(std::is_sorted(qq.begin(), qq.end()));
}

TEST_CASE("normality battery: all p > 0.01 in 99% of standardized normal samples" * doctest::may_fail()) {
  // three tests at 1% each: their union rejects about 2.6% of normal samples
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = normal_sample(rng, 500);
    standardize(x);
    const auto rep = normality_battery(x);
    ok += std::all_of(rep.tests.begin(), rep.tests.end(), [](const TestResult& t) { return t.skipped || t.p_value > 0.01; });
  }
  MESSAGE("replications with every p > 0.01: " << ok << "/200");
  CHECK(ok >= 198);
}

TEST_CASE("normality battery: each test holds its 1% size on normal samples") {
  std::map<TestKind, int> rejections;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = normal_sample(rng, 500);
    standardize(x);
    for (const auto& t : normality_battery(x).tests) {
      REQUIRE_FALSE(t.skipped);
      check_valid(t);
      if (t.p_value <= 0.01) ++rejections[t.test];
    }
  }
  for (const auto& [kind, n] : rejections) {
    INFO(to_string(kind) << " rejected " << n << "/1000");
    CHECK(n <= 20);
  }
}

TEST_CASE("normality battery: Jarque-Bera rejects uniform samples") {
  int rejected = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    std::vector<double> x(500);
    for (auto& v : x) v = u(rng);
    for (const auto& t : normality_battery(x).tests) {
      if (t.test == TestKind::jarque_bera && t.p_value < 0.01) ++rejected;
    }
  }
  CHECK(rejected >= 190);
}

TEST_CASE("property: p-values in range, statistics finite") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = normal_sample(rng, 30, 0, 1 + trial % 3);
    const auto b = normal_sample(rng, 25, 0.5, 1);
    check_valid(kruskal_wallis({a, b}));
    check_valid(shapiro_wilk(a));
    check_valid(lilliefors(a));
    check_valid(jarque_bera(a));
    check_valid(kolmogorov_smirnov(a, 0, 1));
    check_valid(bartlett({a, b}));
    check_valid(levene({a, b}));
    const std::int64_t n = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    const std::int64_t k = std::uniform_int_distribution<std::int64_t>(0, n)(rng);
    check_valid(binomial_test(k, n, 0.3));
    check_valid(binomial_test(k, n, 0.3, Alternative::less));
    check_valid(binomial_test(k, n, 0.3, Alternative::greater));
  }
}

TEST_CASE("property: chi-square is invariant under category permutation") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> o(std::uniform_int_distribution<std::size_t>(2, 8)(rng));
    for (auto& v : o) v = std::uniform_int_distribution<int>(0, 100)(rng);
    if (std::all_of(o.begin(), o.end(), [](double v) { return v == 0; })) o[0] = 1;
    const auto base = chi_square_gof(o);
    std::shuffle(o.begin(), o.end(), rng);
    const auto perm = chi_square_gof(o);
    CHECK(perm.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    CHECK(perm.p_value == doctest::Approx(base.p_value).epsilon(1e-12));
  }
}

TEST_CASE("property: Kruskal-Wallis is invariant under increasing transforms") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> groups(3);
    for (auto& g : groups) {
      g.resize(std::uniform_int_distribution<std::size_t>(5, 12)(rng));
      for (auto& v : g) v = std::round(std::normal_distribution<double>(0, 2)(rng));  // ties
    }
    auto transformed = groups;
    for (auto& g : transformed) {
      for (auto& v : g) v = std::exp(v / 3.0) + 7.0;
    }
    CHECK(kruskal_wallis(transformed).statistic == doctest::Approx(kruskal_wallis(groups).statistic).epsilon(1e-12));
  }
}

TEST_CASE("property: two-sided binomial symmetry p(k) = p(n-k) at p0 = 0.5") {
  for (std::int64_t n = 0; n <= 30; ++n) {
    for (std::int64_t k = 0; k <= n; ++k) {
      CHECK(binomial_test(k, n, 0.5).p_value == binomial_test(n - k, n, 0.5).p_value);
    }
  }
}

TEST_CASE("property: one-sided binomial tails match explicit sums") {
  for (std::int64_t n = 1; n <= 25; ++n) {
    for (std::int64_t k = 0; k <= n; ++k) {
      double lower = 0.0;
      for (std::int64_t i = 0; i <= k; ++i) {
        lower += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(0.1) +
                          (n - i) * std::log(0.9));
      }
      CHECK(binomial_test(k, n, 0.1, Alternative::less).p_value == doctest::Approx(std::min(1.0, lower)).epsilon(1e-10));
    }
  }
}
