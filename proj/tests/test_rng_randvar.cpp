#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rgbn/randvar.hpp"
#include "rgbn/rng.hpp"

using namespace rgbn;

TEST_CASE("rng determinism and range") {
  RngState a = seed_rng(42), b = seed_rng(42);
  for (int i = 0; i < 1000; ++i) CHECK(next_u64(a) == next_u64(b));
  RngState c = seed_rng(42), d = seed_rng(43);
  bool differ = false;
  for (int i = 0; i < 10; ++i) differ |= (next_u64(c) != next_u64(d));
  CHECK(differ);

  RngState s = seed_rng(7);
  for (int i = 0; i < 100000; ++i) {
    double u = uniform01(s);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("derived streams are independent of parent counter") {
  RngState s = seed_rng(5);
  RngState sub1 = derive(s, 1);
  next_u64(s);
  RngState sub1_again = derive(s, 1);
  CHECK(next_u64(sub1) == next_u64(sub1_again));
  RngState sub2 = derive(s, 2);
  CHECK(next_u64(sub1) != next_u64(sub2));
}

TEST_CASE("normal01 moments") {
  RngState s = seed_rng(11);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) { double x = normal01(s); sum += x; sum2 += x * x; }
  double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::fabs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("gamma sampler: MC mean at shape=2 rate=1 within 3 SE") {
  RngState s = seed_rng(101);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += sample_gamma(2.0, 1.0, s);
  double mean = sum / n;
  double se = std::sqrt(2.0 / n);  // Var = shape/rate^2
  CHECK(std::fabs(mean - 2.0) < 3.0 * se);
}

TEST_CASE("gamma sampler: scaled mean contract at another parameter point") {
  RngState s = seed_rng(102);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += sample_gamma(5.0, 2.0, s);
  double se = std::sqrt(5.0 / 4.0 / n);
  CHECK(std::fabs(sum / n - 2.5) < 3.0 * se);
}

TEST_CASE("gamma sampler: sub-1 shape path strictly positive") {
  RngState s = seed_rng(103);
  for (int i = 0; i < 20000; ++i) CHECK(sample_gamma(0.3, 1.0, s) > 0.0);
  CHECK_THROWS_AS(sample_gamma(0.0, 1.0, s), error);
  CHECK_THROWS_AS(sample_gamma(1.0, -1.0, s), error);
}

TEST_CASE("crt: degenerate cases and analytic mean") {
  RngState s = seed_rng(201);
  CHECK(sample_crt(0, 2.0, s) == 0);
  for (int i = 0; i < 1000; ++i) CHECK(sample_crt(1, 0.37, s) == 1);

  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(sample_crt(3, 1.0, s));
  // mean 1 + 1/2 + 1/3 = 11/6; Var = sum p(1-p) = 1/4 + 2/9
  double se = std::sqrt((0.25 + 2.0 / 9.0) / n);
  CHECK(std::fabs(sum / n - 11.0 / 6.0) < 3.0 * se);
  CHECK_THROWS_AS(sample_crt(-1, 1.0, s), error);
  CHECK_THROWS_AS(sample_crt(3, 0.0, s), error);
}

// exact CRT pmf by dynamic programming over the Bernoulli chain
static std::vector<double> crt_exact_pmf(int n, double r) {
  std::vector<double> pmf{1.0};  // distribution of table count after 0 arrivals
  for (int i = 1; i <= n; ++i) {
    double p = r / (r + (i - 1));
    std::vector<double> nxt(pmf.size() + 1, 0.0);
    for (std::size_t t = 0; t < pmf.size(); ++t) {
      nxt[t] += pmf[t] * (1.0 - p);
      nxt[t + 1] += pmf[t] * p;
    }
    pmf = std::move(nxt);
  }
  return pmf;
}

TEST_CASE("crt: exact distribution at n=3, r=1 is [0,1/3,1/2,1/6]") {
  auto pmf = crt_exact_pmf(3, 1.0);
  REQUIRE(pmf.size() == 4);
  CHECK(pmf[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pmf[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(pmf[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pmf[3] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("crt: TV distance to exact law below 0.01 for n <= 4") {
  RngState s = seed_rng(202);
  const int reps = 100000;
  for (int n = 1; n <= 4; ++n) {
    for (double r : {0.5, 1.0, 3.0}) {
      auto pmf = crt_exact_pmf(n, r);
      std::vector<double> emp(pmf.size(), 0.0);
      for (int i = 0; i < reps; ++i) emp[static_cast<std::size_t>(sample_crt(n, r, s))] += 1.0 / reps;
      double tv = 0.0;
      for (std::size_t t = 0; t < pmf.size(); ++t) tv += std::fabs(pmf[t] - emp[t]);
      CHECK(tv / 2.0 < 0.01);
    }
  }
}

TEST_CASE("multinomial: degenerate and binomial-moment cases") {
  RngState s = seed_rng(301);
  auto one = sample_multinomial(7, {1.0}, s);
  CHECK(one == std::vector<long long>{7});
  auto zero = sample_multinomial(0, {0.5, 0.5}, s);
  CHECK(zero == std::vector<long long>{0, 0});

  const long long n = 100000;
  auto counts = sample_multinomial(n, {0.2, 0.8}, s);
  CHECK(counts[0] + counts[1] == n);
  double sd = std::sqrt(n * 0.2 * 0.8);
  CHECK(std::fabs(counts[0] - n * 0.2) < 3.0 * sd);
  CHECK_THROWS_AS(sample_multinomial(3, {0.5, 0.4}, s), error);
  CHECK_THROWS_AS(sample_multinomial(3, {1.5, -0.5}, s), error);
}

TEST_CASE("weibull transform: exact examples") {
  double eps1 = 1.0 - std::exp(-1.0);  // inner term (-ln(1-eps)) equals 1
  CHECK(weibull_from_uniform(eps1, 2.7, 3.0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(weibull_from_uniform(eps1, 0.4, 3.0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(weibull_from_uniform(0.5, 1.0, 2.0) == doctest::Approx(1.3862943611198906).epsilon(1e-14));
  CHECK_THROWS_AS(weibull_from_uniform(0.0, 1.0, 1.0), error);
  CHECK_THROWS_AS(weibull_from_uniform(1.0, 1.0, 1.0), error);
  CHECK_THROWS_AS(weibull_from_uniform(0.5, -1.0, 1.0), error);
}

TEST_CASE("weibull transform: MC mean at k=2 lam=1 matches lam*Gamma(1.5)") {
  RngState s = seed_rng(401);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += weibull_from_uniform(uniform01(s), 2.0, 1.0);
  // Var = Gamma(2) - Gamma(1.5)^2
  double g15 = 0.886226925452758;
  double se = std::sqrt((1.0 - g15 * g15) / n);
  CHECK(std::fabs(sum / n - g15) < 3.0 * se);
}

TEST_CASE("weibull transform: partial derivatives match central differences") {
  const double h = 1e-6;
  for (auto [eps, k, lam] : {std::tuple{0.3, 2.0, 1.5}, std::tuple{0.9, 0.7, 0.2}, std::tuple{0.05, 4.0, 3.0}}) {
    double fd_k = (weibull_from_uniform(eps, k + h, lam) - weibull_from_uniform(eps, k - h, lam)) / (2 * h);
    double fd_l = (weibull_from_uniform(eps, k, lam + h) - weibull_from_uniform(eps, k, lam - h)) / (2 * h);
    CHECK(weibull_dk(eps, k, lam) == doctest::Approx(fd_k).epsilon(1e-6));
    CHECK(weibull_dlam(eps, k, lam) == doctest::Approx(fd_l).epsilon(1e-6));
  }
}

TEST_CASE("dirichlet: degenerate, moments, normalization") {
  RngState s = seed_rng(501);
  auto v = sample_dirichlet({1.0}, s);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-15));

  const int n = 10000;
  std::vector<double> mean(4, 0.0);
  for (int i = 0; i < n; ++i) {
    auto d = sample_dirichlet({0.5, 0.5, 0.5, 0.5}, s);
    for (int j = 0; j < 4; ++j) mean[j] += d[j] / n;
  }
  // component variance alpha(alpha0-alpha)/(alpha0^2 (alpha0+1)) = 0.0625
  double se = std::sqrt(0.0625 / n);
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(mean[j] - 0.25) < 3.0 * se);

  for (int i = 0; i < 10000; ++i) {
    auto d = sample_dirichlet({0.01, 2.0, 0.3}, s);
    double total = d[0] + d[1] + d[2];
    CHECK(std::fabs(total - 1.0) < 1e-12);
    for (double x : d) CHECK(x >= 0.0);
  }
  CHECK_THROWS_AS(sample_dirichlet({1.0, 0.0}, s), error);
}

TEST_CASE("poisson: zero rate, small-rate moments, large-rate moments") {
  RngState s = seed_rng(601);
  CHECK(sample_poisson(0.0, s) == 0);

  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) { double x = static_cast<double>(sample_poisson(4.0, s)); sum += x; sum2 += x * x; }
  double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::fabs(mean - 4.0) < 3.0 * std::sqrt(4.0 / n));
  CHECK(std::fabs(var - 4.0) < 0.15);

  sum = sum2 = 0;
  for (int i = 0; i < n; ++i) { double x = static_cast<double>(sample_poisson(50.0, s)); sum += x; sum2 += x * x; }
  mean = sum / n; var = sum2 / n - mean * mean;
  CHECK(std::fabs(mean - 50.0) < 3.0 * std::sqrt(50.0 / n));
  CHECK(std::fabs(var - 50.0) < 1.0);
  CHECK_THROWS_AS(sample_poisson(-1.0, s), error);
}

TEST_CASE("samplers are reproducible under a fixed state") {
  RngState a = seed_rng(777), b = seed_rng(777);
  for (int i = 0; i < 100; ++i) {
    CHECK(sample_gamma(1.7, 2.0, a) == sample_gamma(1.7, 2.0, b));
    CHECK(sample_crt(5, 0.9, a) == sample_crt(5, 0.9, b));
    CHECK(sample_poisson(3.3, a) == sample_poisson(3.3, b));
  }
}
