#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "rgbn/tlasgr.hpp"

using namespace rgbn;

namespace {

// exact CRT table-count pmf by dynamic programming over customers
std::vector<double> crt_exact_pmf(long long n, double r) {
  std::vector<double> pmf{1.0};
  for (long long i = 1; i <= n; ++i) {
    double q = r / (r + static_cast<double>(i - 1));
    std::vector<double> next(pmf.size() + 1, 0.0);
    for (std::size_t t = 0; t < pmf.size(); ++t) {
      next[t] += pmf[t] * (1.0 - q);
      next[t + 1] += pmf[t] * q;
    }
    pmf = std::move(next);
  }
  return pmf;
}

// independent recomputation of the prior masses the augmentation uses
void prior_masses(const TopicModelParams& p, const ThetaPath& th, int l, int j, int k, bool recurrent,
                  double& p1, double& p2) {
  p1 = p2 = 0.0;
  if (recurrent && j > 0)
    for (int k2 = 0; k2 < p.K[l]; ++k2) p1 += p.Pi[l].at(k, k2) * th.theta[j - 1][l][k2];
  if (l + 1 < p.L())
    for (int k2 = 0; k2 < p.K[l + 1]; ++k2) p2 += p.Phi[l + 1].at(k, k2) * th.theta[j][l + 1][k2];
}

}  // namespace

TEST_CASE("augmentation conserves counts and respects CRT bounds on random instances") {
  auto rng = seed_rng(101);
  for (int inst = 0; inst < 30; ++inst) {
    int L = 1 + static_cast<int>(uniform_index(rng, 3));
    std::vector<int> K;
    for (int l = 0; l < L; ++l) K.push_back(1 + static_cast<int>(uniform_index(rng, 4)));
    int Vc = 2 + static_cast<int>(uniform_index(rng, 7));
    int J = 1 + static_cast<int>(uniform_index(rng, 5));
    double tau0 = 0.5 + uniform01(rng) * 1.5;
    auto p = TopicModelParams::init(Vc, K, tau0, 0.1, 0.1, rng);
    auto th = generate_theta_path(p, J, rng);
    auto d = generate_counts(p, th, rng);
    auto c = augment_counts(p, d, th, rng);

    for (int j = 0; j < J; ++j) {
      std::vector<long long> x_in(d[j].begin(), d[j].end());
      for (int l = 0; l < L; ++l) {
        const Mat& A = c.A[l][j];
        REQUIRE(A.rows == p.rows_of_phi(l));
        for (int r = 0; r < A.rows; ++r) {
          long long rowsum = 0;
          for (int k = 0; k < A.cols; ++k) rowsum += static_cast<long long>(A.at(r, k));
          CHECK(rowsum == x_in[r]);
        }
        for (int k = 0; k < p.K[l]; ++k) {
          CHECK(c.xnext[l][j][k] == c.tcnt[l][j][k] + c.hcnt[l][j][k]);
          long long zsum = 0;
          for (int k2 = 0; k2 < p.K[l]; ++k2) zsum += static_cast<long long>(c.Z[l][j].at(k, k2));
          CHECK(zsum == c.tcnt[l][j][k]);

          long long n = static_cast<long long>(col_sum(A, k));
          if (j + 1 < J) n += static_cast<long long>(col_sum(c.Z[l][j + 1], k));
          double p1, p2;
          prior_masses(p, th, l, j, k, true, p1, p2);
          if (p1 + p2 <= 0.0) {
            CHECK(c.xnext[l][j][k] == 0);
          } else if (n == 0) {
            CHECK(c.xnext[l][j][k] == 0);
          } else {
            CHECK(c.xnext[l][j][k] >= 1);
            CHECK(c.xnext[l][j][k] <= n);
          }
        }
        // first sentence has no temporal parent
        if (j == 0)
          for (int k = 0; k < p.K[l]; ++k) CHECK(c.tcnt[l][0][k] == 0);
        // top layer has no hierarchical parent
        if (l == L - 1)
          for (int k = 0; k < p.K[l]; ++k) CHECK(c.hcnt[l][j][k] == 0);
        x_in = c.hcnt[l][j];
      }
    }
  }
}

TEST_CASE("single-topic augmentation is a deterministic CRT chain") {
  auto rng = seed_rng(102);
  auto p = TopicModelParams::init(2, {1}, 1.0, 0.5, 0.5, rng);
  ThetaPath th;
  th.theta = {{{0.7}}, {{1.3}}, {{0.5}}};
  std::vector<std::vector<long long>> d = {{1, 0}, {1, 0}, {1, 1}};
  auto c = augment_counts(p, d, th, rng);
  for (int j = 0; j < 3; ++j) {
    long long tot = d[j][0] + d[j][1];
    CHECK(static_cast<long long>(c.A[0][j].at(0, 0) + c.A[0][j].at(1, 0)) == tot);
  }
  // all promoted mass is temporal and flows through the single topic
  CHECK(c.xnext[0][0][0] == 0);
  for (int j = 1; j < 3; ++j) {
    CHECK(c.tcnt[0][j][0] == c.xnext[0][j][0]);
    CHECK(static_cast<long long>(c.Z[0][j].at(0, 0)) == c.xnext[0][j][0]);
  }
}

TEST_CASE("chained CRT counts match exact enumeration in total variation") {
  auto rng0 = seed_rng(103);
  auto p = TopicModelParams::init(2, {1}, 1.0, 0.5, 0.5, rng0);
  p.Pi[0].at(0, 0) = 1.0;
  ThetaPath th;
  th.theta = {{{0.7}}, {{1.3}}, {{0.5}}};
  std::vector<std::vector<long long>> d = {{1, 0}, {1, 0}, {1, 1}};

  // exact joint over (x3, x2): x3 ~ CRT(2, 1.3); x2 ~ CRT(1 + x3, 0.7)
  auto pmf3 = crt_exact_pmf(2, 1.0 * 1.3);
  std::map<std::pair<long long, long long>, double> exact;
  for (long long a = 1; a <= 2; ++a) {
    auto pmf2 = crt_exact_pmf(1 + a, 1.0 * 0.7);
    for (long long b = 1; b <= 1 + a; ++b) exact[{a, b}] = pmf3[a] * pmf2[b];
  }

  const int reps = 100000;
  std::map<std::pair<long long, long long>, long long> tally;
  auto rng = seed_rng(104);
  for (int i = 0; i < reps; ++i) {
    auto c = augment_counts(p, d, th, rng);
    tally[{c.xnext[0][2][0], c.xnext[0][1][0]}] += 1;
  }
  double tv = 0.0;
  for (const auto& [state, prob] : exact) {
    double emp = tally.count(state) ? static_cast<double>(tally.at(state)) / reps : 0.0;
    tv += std::fabs(emp - prob);
  }
  for (const auto& [state, cnt] : tally) CHECK(exact.count(state) == 1);
  tv *= 0.5;
  CHECK(tv < 0.02);
}

TEST_CASE("column drift matches the hand-computed value with noise off") {
  Mat m(3, 1);
  m.at(0, 0) = 0.5;
  m.at(1, 0) = 0.3;
  m.at(2, 0) = 0.2;
  auto rng = seed_rng(105);
  sgr_update_column(m, 0, {4.0, 1.0, 0.0}, 2.5, 0.01, 0.05, 4.0, false, rng);
  CHECK(m.at(0, 0) == doctest::Approx(0.5468125).epsilon(1e-12));
  CHECK(m.at(1, 0) == doctest::Approx(0.2843875).epsilon(1e-12));
  CHECK(m.at(2, 0) == doctest::Approx(0.1688).epsilon(1e-12));
}

TEST_CASE("a column proportional to its counts is a fixed point of the drift") {
  Mat m(3, 1);
  m.at(0, 0) = 0.5;
  m.at(1, 0) = 0.3;
  m.at(2, 0) = 0.2;
  auto rng = seed_rng(106);
  // counts_r = 10 phi_r - eta/rho makes the drift vanish identically
  sgr_update_column(m, 0, {4.99, 2.99, 1.99}, 1.0, 0.01, 0.05, 2.0, false, rng);
  CHECK(m.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.at(1, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m.at(2, 0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("step size schedule follows eps0 n^-kappa") {
  SgrSchedule s;
  CHECK(s.eps() == doctest::Approx(0.1).epsilon(1e-15));
  double prev = s.eps();
  for (int i = 0; i < 99; ++i) {
    s.advance();
    CHECK(s.eps() < prev);
    prev = s.eps();
  }
  CHECK(s.n == 100);
  CHECK(s.eps() == doctest::Approx(0.003981071705534973).epsilon(1e-14));
}

TEST_CASE("preconditioner smoothing and floor") {
  CHECK(fim_update(1.0, 5.0) == doctest::Approx(1.4).epsilon(1e-15));
  double P = 1.0;
  for (int i = 0; i < 300; ++i) P = fim_update(P, 1e-9);
  CHECK(P == fim_floor);
}

TEST_CASE("simplex noise has zero sum and the stated covariance") {
  std::vector<double> phi = {0.5, 0.3, 0.2};
  double s = 0.08;
  auto rng = seed_rng(107);
  const int n = 40000;
  std::vector<double> mean(3, 0.0);
  std::vector<std::vector<double>> cov(3, std::vector<double>(3, 0.0));
  for (int i = 0; i < n; ++i) {
    auto z = sgr_noise(phi, s, rng);
    CHECK(std::fabs(z[0] + z[1] + z[2]) < 1e-12);
    for (int a = 0; a < 3; ++a) {
      mean[a] += z[a];
      for (int b = 0; b < 3; ++b) cov[a][b] += z[a] * z[b];
    }
  }
  for (int a = 0; a < 3; ++a) {
    mean[a] /= n;
    CHECK(std::fabs(mean[a]) < 0.005);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double want = s * ((a == b ? phi[a] : 0.0) - phi[a] * phi[b]);
      CHECK(std::fabs(cov[a][b] / n - want) < 0.0035);
    }
}

TEST_CASE("updates keep every column on the simplex across many noisy steps") {
  auto rng = seed_rng(108);
  auto p = TopicModelParams::init(5, {3, 2}, 1.0, 0.01, 0.01, rng);
  auto st = TlasgrState::init(p);
  for (int step = 0; step < 200; ++step) {
    auto agg = make_batch_aux(p);
    for (auto& A : agg.Atil)
      for (auto& x : A.v) x = static_cast<double>(uniform_index(rng, 21));
    for (auto& Z : agg.Ztil)
      for (auto& x : Z.v) x = static_cast<double>(uniform_index(rng, 9));
    tlasgr_step(p, st, agg, 12.5, rng);
    CHECK_NOTHROW(p.validate(1e-9));
  }
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < p.K[l]; ++k) CHECK(st.P_phi[l][k] > fim_floor);
}

TEST_CASE("recurrence off produces no temporal counts and never touches Pi") {
  auto rng = seed_rng(109);
  auto p = TopicModelParams::init(6, {3, 2}, 1.0, 0.1, 0.1, rng);
  auto th = generate_theta_path(p, 4, rng, /*recurrent=*/false);
  auto d = generate_counts(p, th, rng);
  auto c = augment_counts(p, d, th, rng, /*recurrent=*/false);
  for (int l = 0; l < 2; ++l)
    for (int j = 0; j < 4; ++j) {
      for (double z : c.Z[l][j].v) CHECK(z == 0.0);
      for (long long t : c.tcnt[l][j]) CHECK(t == 0);
      if (l == 1)
        for (long long x : c.xnext[l][j]) CHECK(x == 0);
      else
        for (int k = 0; k < p.K[l]; ++k) CHECK(c.hcnt[l][j][k] == c.xnext[l][j][k]);
    }

  auto st = TlasgrState::init(p);
  auto pi_before = p.Pi;
  auto agg = make_batch_aux(p);
  accumulate_aux(agg, c);
  tlasgr_step(p, st, agg, 3.0, rng, /*noise_on=*/true, /*recurrent=*/false);
  for (int l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < p.Pi[l].v.size(); ++i) CHECK(p.Pi[l].v[i] == pi_before[l].v[i]);
}

TEST_CASE("a full update sweep is reproducible from the seed") {
  auto make = [] {
    auto rng = seed_rng(110);
    auto p = TopicModelParams::init(4, {2, 2}, 1.0, 0.05, 0.05, rng);
    auto st = TlasgrState::init(p);
    for (int step = 0; step < 5; ++step) {
      auto th = generate_theta_path(p, 3, rng);
      auto d = generate_counts(p, th, rng);
      auto agg = make_batch_aux(p);
      accumulate_aux(agg, augment_counts(p, d, th, rng));
      tlasgr_step(p, st, agg, 2.0, rng);
    }
    return p;
  };
  auto a = make(), b = make();
  for (int l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < a.Phi[l].v.size(); ++i) CHECK(a.Phi[l].v[i] == b.Phi[l].v[i]);
    for (std::size_t i = 0; i < a.Pi[l].v.size(); ++i) CHECK(a.Pi[l].v[i] == b.Pi[l].v[i]);
  }
}
