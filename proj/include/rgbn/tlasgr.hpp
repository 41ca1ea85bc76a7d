#pragma once

#include <cmath>
#include <vector>

#include "rgbn/common.hpp"
#include "rgbn/randvar.hpp"
#include "rgbn/rng.hpp"
#include "rgbn/topic_model.hpp"

namespace rgbn {

inline double col_sum(const Mat& m, int k) {
  double s = 0.0;
  for (int r = 0; r < m.rows; ++r) s += m.at(r, k);
  return s;
}

// Latent count augmentation for one document.
//   A[l][j]: feature-to-topic assignment counts at layer l+1, sentence j+1
//            (rows are words for l=0, layer-l topics otherwise)
//   Z[l][j]: temporal counts at sentence j+1, row = destination topic at j+1,
//            column = source topic at sentence j
//   xnext[l][j][k]: CRT table counts promoted out of topic k
//   tcnt/hcnt: the temporal/hierarchical halves of xnext
struct AuxCounts {
  std::vector<std::vector<Mat>> A;
  std::vector<std::vector<Mat>> Z;
  std::vector<std::vector<std::vector<long long>>> xnext, tcnt, hcnt;
};

// Backward over sentences, upward over layers. At (l, j) the counts entering
// the layer are the observed words (l=1) or the hierarchical half promoted
// from the layer below; the CRT concentration is tau0 times the total prior
// mass, split between the temporal and hierarchical parents by a binomial.
inline AuxCounts augment_counts(const TopicModelParams& p, const std::vector<std::vector<long long>>& d,
                                const ThetaPath& theta, RngState& rng, bool recurrent = true) {
  const int J = theta.J();
  const int L = p.L();
  require(static_cast<int>(d.size()) == J, errkind::data,
          strf("augment_counts: ", d.size(), " count vectors for ", J, " sentences"));
  AuxCounts c;
  c.A.assign(L, std::vector<Mat>(J));
  c.Z.assign(L, std::vector<Mat>(J));
  c.xnext.assign(L, std::vector<std::vector<long long>>(J));
  c.tcnt.assign(L, std::vector<std::vector<long long>>(J));
  c.hcnt.assign(L, std::vector<std::vector<long long>>(J));

  for (int j = J - 1; j >= 0; --j) {
    std::vector<long long> x_in(d[j].begin(), d[j].end());
    for (int l = 0; l < L; ++l) {
      const int rows = p.rows_of_phi(l);
      const int Kl = p.K[l];
      require(static_cast<int>(x_in.size()) == rows, errkind::data,
              strf("augment_counts: layer ", l + 1, " expects ", rows, " features, got ", x_in.size()));
      Mat A(rows, Kl);
      std::vector<double> w(Kl);
      for (int r = 0; r < rows; ++r) {
        if (x_in[r] == 0) continue;
        if (x_in[r] < 0) fail_data(strf("negative count at layer ", l + 1, ", feature ", r, ", sentence ", j + 1));
        double wsum = 0.0;
        for (int k = 0; k < Kl; ++k) {
          w[k] = p.Phi[l].at(r, k) * theta.theta[j][l][k];
          wsum += w[k];
        }
        if (!(wsum > 0.0))
          fail_numeric(strf("topic assignment weights vanished at layer ", l + 1, ", feature ", r,
                            ", sentence ", j + 1));
        auto split = sample_multinomial_weights(x_in[r], w, rng);
        for (int k = 0; k < Kl; ++k) A.at(r, k) = static_cast<double>(split[k]);
      }

      std::vector<long long> xn(Kl, 0), tc(Kl, 0), hc(Kl, 0);
      Mat Z(Kl, Kl);
      for (int k = 0; k < Kl; ++k) {
        long long n = static_cast<long long>(col_sum(A, k));
        if (j + 1 < J && c.Z[l][j + 1].rows == Kl) n += static_cast<long long>(col_sum(c.Z[l][j + 1], k));
        double p1 = 0.0, p2 = 0.0;
        if (recurrent && j > 0) {
          for (int k2 = 0; k2 < Kl; ++k2) p1 += p.Pi[l].at(k, k2) * theta.theta[j - 1][l][k2];
        }
        if (l + 1 < L) {
          for (int k2 = 0; k2 < p.K[l + 1]; ++k2) p2 += p.Phi[l + 1].at(k, k2) * theta.theta[j][l + 1][k2];
        }
        if (p1 + p2 <= 0.0) continue;  // fixed top prior at the first sentence: nothing to promote
        xn[k] = sample_crt(n, p.tau0 * (p1 + p2), rng);
        long long t = 0;
        if (p1 > 0.0 && xn[k] > 0) t = sample_multinomial_weights(xn[k], {p1, p2}, rng)[0];
        tc[k] = t;
        hc[k] = xn[k] - t;
        if (t > 0) {
          std::vector<double> ws(Kl);
          double wsum = 0.0;
          for (int k2 = 0; k2 < Kl; ++k2) {
            ws[k2] = p.Pi[l].at(k, k2) * theta.theta[j - 1][l][k2];
            wsum += ws[k2];
          }
          if (!(wsum > 0.0))
            fail_numeric(strf("temporal split weights vanished at layer ", l + 1, ", topic ", k,
                              ", sentence ", j + 1));
          auto src = sample_multinomial_weights(t, ws, rng);
          for (int k2 = 0; k2 < Kl; ++k2) Z.at(k, k2) = static_cast<double>(src[k2]);
        }
      }
      c.A[l][j] = std::move(A);
      c.Z[l][j] = std::move(Z);
      c.xnext[l][j] = xn;
      c.tcnt[l][j] = tc;
      c.hcnt[l][j] = std::move(hc);
      x_in = c.hcnt[l][j];
    }
  }
  return c;
}

struct BatchAux {
  std::vector<Mat> Atil, Ztil;
};

inline BatchAux make_batch_aux(const TopicModelParams& p) {
  BatchAux agg;
  for (int l = 0; l < p.L(); ++l) {
    agg.Atil.emplace_back(p.rows_of_phi(l), p.K[l]);
    agg.Ztil.emplace_back(p.K[l], p.K[l]);
  }
  return agg;
}

inline void accumulate_aux(BatchAux& agg, const AuxCounts& c) {
  for (std::size_t l = 0; l < agg.Atil.size(); ++l)
    for (std::size_t j = 0; j < c.A[l].size(); ++j) {
      const Mat& A = c.A[l][j];
      for (std::size_t i = 0; i < A.v.size(); ++i) agg.Atil[l].v[i] += A.v[i];
      const Mat& Z = c.Z[l][j];
      for (std::size_t i = 0; i < Z.v.size(); ++i) agg.Ztil[l].v[i] += Z.v[i];
    }
}

struct SgrSchedule {
  double eps0 = 0.1;
  double kappa = 0.7;
  long long n = 1;
  double eps() const { return eps0 * std::pow(static_cast<double>(n), -kappa); }
  void advance() { ++n; }
};

inline constexpr double fim_floor = 1e-4;

inline double fim_update(double P, double M) { return std::max(0.9 * P + 0.1 * M, fim_floor); }

// zero-sum noise whose covariance is s * (diag(phi) - phi phi^T) exactly
inline std::vector<double> sgr_noise(const std::vector<double>& phi_col, double s, RngState& rng) {
  std::vector<double> u(phi_col.size());
  double usum = 0.0;
  for (std::size_t r = 0; r < u.size(); ++r) {
    u[r] = std::sqrt(phi_col[r]) * normal01(rng);
    usum += u[r];
  }
  std::vector<double> out(u.size());
  double root = std::sqrt(s);
  for (std::size_t r = 0; r < u.size(); ++r) out[r] = root * (u[r] - phi_col[r] * usum);
  return out;
}

// One preconditioned natural-gradient step on a simplex column, followed by
// projection. counts_col holds the raw batch counts for this column; rho
// rescales them to the full corpus.
inline void sgr_update_column(Mat& m, int col, const std::vector<double>& counts_col, double rho,
                              double eta, double eps, double P, bool noise_on, RngState& rng) {
  const int rows = m.rows;
  require(static_cast<int>(counts_col.size()) == rows, errkind::numeric,
          strf("sgr_update_column: ", counts_col.size(), " counts for ", rows, " rows"));
  if (eps == 0.0) return;  // frozen schedule: strict no-op, not even a renormalization
  double colsum = 0.0;
  for (int r = 0; r < rows; ++r) colsum += counts_col[r];
  const double total = rho * colsum + rows * eta;
  std::vector<double> phi(rows);
  for (int r = 0; r < rows; ++r) phi[r] = m.at(r, col);
  std::vector<double> noise(rows, 0.0);
  if (noise_on) noise = sgr_noise(phi, 2.0 * eps / P, rng);
  for (int r = 0; r < rows; ++r) {
    double drift = (eps / P) * ((rho * counts_col[r] + eta) - total * phi[r]);
    m.at(r, col) = phi[r] + drift + noise[r];
  }
  project_column_to_simplex(m, col);
}

struct TlasgrState {
  SgrSchedule sched;
  std::vector<std::vector<double>> P_phi, P_pi;

  static TlasgrState init(const TopicModelParams& p, double eps0 = 0.1, double kappa = 0.7) {
    TlasgrState st;
    st.sched.eps0 = eps0;
    st.sched.kappa = kappa;
    for (int l = 0; l < p.L(); ++l) {
      st.P_phi.emplace_back(p.K[l], 1.0);
      st.P_pi.emplace_back(p.K[l], 1.0);
    }
    return st;
  }
};

// Update every Phi column, then every Pi column (skipped without recurrence),
// with the step size shared across the whole sweep, then advance the schedule.
inline void tlasgr_step(TopicModelParams& p, TlasgrState& st, const BatchAux& agg, double rho,
                        RngState& rng, bool noise_on = true, bool recurrent = true) {
  const double eps = st.sched.eps();
  for (int l = 0; l < p.L(); ++l) {
    const int rows = p.rows_of_phi(l);
    for (int k = 0; k < p.K[l]; ++k) {
      std::vector<double> counts(rows);
      for (int r = 0; r < rows; ++r) counts[r] = agg.Atil[l].at(r, k);
      double colsum = 0.0;
      for (double x : counts) colsum += x;
      double M = rho * colsum + rows * p.eta0;
      st.P_phi[l][k] = fim_update(st.P_phi[l][k], M);
      sgr_update_column(p.Phi[l], k, counts, rho, p.eta0, eps, st.P_phi[l][k], noise_on, rng);
    }
    if (!recurrent) continue;
    for (int k = 0; k < p.K[l]; ++k) {
      std::vector<double> counts(p.K[l]);
      for (int r = 0; r < p.K[l]; ++r) counts[r] = agg.Ztil[l].at(r, k);
      double colsum = 0.0;
      for (double x : counts) colsum += x;
      double M = rho * colsum + p.K[l] * p.eta_pi;
      st.P_pi[l][k] = fim_update(st.P_pi[l][k], M);
      sgr_update_column(p.Pi[l], k, counts, rho, p.eta_pi, eps, st.P_pi[l][k], noise_on, rng);
    }
  }
  st.sched.advance();
}

}  // namespace rgbn
