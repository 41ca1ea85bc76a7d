#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rgbn/common.hpp"
#include "rgbn/rng.hpp"

namespace rgbn {

// Marsaglia-Tsang squeeze; shapes below 1 go through the boost trick
// (draw at shape+1, scale by U^{1/shape}) to avoid rejection pathologies.
inline double sample_gamma(double shape, double rate, RngState& rng) {
  if (!(shape > 0) || !(rate > 0))
    fail_numeric(strf("sample_gamma requires positive parameters, got shape=", shape, " rate=", rate));
  if (shape < 1.0) {
    double g = sample_gamma(shape + 1.0, 1.0, rng);
    double u = uniform01(rng);
    return g * std::pow(u, 1.0 / shape) / rate;
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do { x = normal01(rng); v = 1.0 + c * x; } while (v <= 0.0);
    v = v * v * v;
    double u = uniform01(rng);
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

// table count of a Chinese restaurant process after n arrivals, concentration r:
// sum of Bernoulli(r/(r+i-1)) over i=1..n; the first arrival always opens a table
inline long long sample_crt(long long n, double r, RngState& rng) {
  if (n < 0) fail_numeric(strf("sample_crt requires n >= 0, got ", n));
  if (!(r > 0)) fail_numeric(strf("sample_crt requires r > 0, got ", r));
  if (n == 0) return 0;
  long long t = 1;
  for (long long i = 2; i <= n; ++i)
    if (uniform01(rng) < r / (r + static_cast<double>(i - 1))) ++t;
  return t;
}

// counts over unnormalized nonnegative weights; the caller owns the
// zero-total-weight error so it can name its own context
inline std::vector<long long> sample_multinomial_weights(long long n, const std::vector<double>& w,
                                                         RngState& rng) {
  std::vector<long long> counts(w.size(), 0);
  if (n == 0) return counts;
  std::vector<double> cum(w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0)) fail_numeric(strf("multinomial weight ", i, " is negative: ", w[i]));
    total += w[i];
    cum[i] = total;
  }
  if (!(total > 0)) fail_numeric("multinomial weights sum to zero");
  for (long long trial = 0; trial < n; ++trial) {
    double u = uniform01(rng) * total;
    std::size_t idx = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (idx >= w.size()) idx = w.size() - 1;
    ++counts[idx];
  }
  return counts;
}

inline std::vector<long long> sample_multinomial(long long n, const std::vector<double>& p, RngState& rng) {
  if (n < 0) fail_numeric("sample_multinomial requires n >= 0");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0)) fail_numeric(strf("multinomial probability is negative: ", v));
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    fail_numeric(strf("multinomial probabilities sum to ", total, ", expected 1"));
  return sample_multinomial_weights(n, p, rng);
}

// lam * (-ln(1-eps))^{1/k}; differentiable in k and lam at fixed eps
inline double weibull_from_uniform(double eps, double k, double lam) {
  if (!(eps > 0.0) || !(eps < 1.0))
    fail_numeric(strf("weibull_from_uniform requires eps in (0,1), got ", eps));
  if (!(k > 0) || !(lam > 0))
    fail_numeric(strf("weibull_from_uniform requires positive k, lam, got k=", k, " lam=", lam));
  double w = -std::log1p(-eps);
  if (k == 1.0) return lam * w;
  return lam * std::exp(std::log(w) / k);
}

inline double weibull_dlam(double eps, double k, double /*lam*/) {
  double w = -std::log1p(-eps);
  return k == 1.0 ? w : std::exp(std::log(w) / k);
}

inline double weibull_dk(double eps, double k, double lam) {
  double w = -std::log1p(-eps);
  return -weibull_from_uniform(eps, k, lam) * std::log(w) / (k * k);
}

inline std::vector<double> sample_dirichlet(const std::vector<double>& alpha, RngState& rng) {
  if (alpha.empty()) fail_numeric("sample_dirichlet requires a nonempty alpha");
  std::vector<double> g(alpha.size());
  for (int attempt = 0; attempt < 100; ++attempt) {
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      if (!(alpha[i] > 0)) fail_numeric(strf("dirichlet alpha ", i, " must be positive, got ", alpha[i]));
      g[i] = sample_gamma(alpha[i], 1.0, rng);
      total += g[i];
    }
    if (total > 0) {
      for (double& v : g) v /= total;
      return g;
    }
  }
  // all gamma draws underflowed (vanishingly rare): fall back to uniform
  std::fill(g.begin(), g.end(), 1.0 / static_cast<double>(alpha.size()));
  return g;
}

namespace detail {
// Knuth's product-of-uniforms, fine for small rates
inline long long poisson_small(double rate, RngState& rng) {
  double limit = std::exp(-rate), p = 1.0;
  long long k = 0;
  do { ++k; p *= uniform01(rng); } while (p > limit);
  return k - 1;
}

// Hormann's PTRS transformed rejection for larger rates
inline long long poisson_ptrs(double mu, RngState& rng) {
  double b = 0.931 + 2.53 * std::sqrt(mu);
  double a = -0.059 + 0.02483 * b;
  double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  double v_r = 0.9277 - 3.6224 / (b - 2.0);
  double log_mu = std::log(mu);
  for (;;) {
    double u = uniform01(rng) - 0.5;
    double v = uniform01(rng);
    double us = 0.5 - std::fabs(u);
    double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long long>(kf);
    if (kf < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * log_mu - mu - std::lgamma(kf + 1.0))
      return static_cast<long long>(kf);
  }
}
}  // namespace detail

inline long long sample_poisson(double rate, RngState& rng) {
  if (!(rate >= 0)) fail_numeric(strf("sample_poisson requires rate >= 0, got ", rate));
  if (rate == 0.0) return 0;
  if (rate < 10.0) return detail::poisson_small(rate, rng);
  return detail::poisson_ptrs(rate, rng);
}

}  // namespace rgbn
