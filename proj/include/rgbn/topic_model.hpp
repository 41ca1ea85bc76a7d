#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgbn/common.hpp"
#include "rgbn/corpus.hpp"
#include "rgbn/randvar.hpp"
#include "rgbn/rng.hpp"

namespace rgbn {

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

inline std::vector<double> mat_vec(const Mat& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.cols)
    fail_numeric(strf("mat_vec: matrix is ", m.rows, "x", m.cols, ", vector has ", x.size()));
  std::vector<double> y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.v.data() + static_cast<std::size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) fail_numeric(strf("mat_mul: ", a.rows, "x", a.cols, " times ", b.rows, "x", b.cols));
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      double av = a.at(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += av * b.at(k, j);
    }
  return out;
}

inline constexpr double simplex_floor = 1e-10;

// clamp to the floor and renormalize; keeps columns strictly positive
inline void project_column_to_simplex(Mat& m, int col) {
  double total = 0.0;
  for (int r = 0; r < m.rows; ++r) {
    double x = m.at(r, col);
    if (!std::isfinite(x)) fail_numeric(strf("non-finite simplex entry in column ", col));
    x = std::max(x, simplex_floor);
    m.at(r, col) = x;
    total += x;
  }
  for (int r = 0; r < m.rows; ++r) m.at(r, col) /= total;
}

// Global generative parameters: Phi[l] maps layer-(l+1) topics down to layer-l
// features (words at l=0); Pi[l] carries layer-(l+1) topic weights across
// consecutive sentences. Columns of both live on the probability simplex.
struct TopicModelParams {
  int Vc = 0;
  std::vector<int> K;  // K[l] for layers l=1..L at index l-1
  std::vector<Mat> Phi;  // Phi[0]: Vc x K1; Phi[l]: K_l x K_{l+1}
  std::vector<Mat> Pi;   // Pi[l]: K_{l+1} x K_{l+1}
  double tau0 = 1.0;
  double eta0 = 0.01;    // Dirichlet concentration for Phi columns
  double eta_pi = 0.01;  // Dirichlet concentration for Pi columns

  int L() const { return static_cast<int>(K.size()); }
  int rows_of_phi(int l) const { return l == 0 ? Vc : K[l - 1]; }  // l is 0-based layer index

  static TopicModelParams init(int Vc, std::vector<int> K, double tau0, double eta0, double eta_pi,
                               RngState& rng) {
    TopicModelParams p;
    p.Vc = Vc;
    p.K = std::move(K);
    p.tau0 = tau0;
    p.eta0 = eta0;
    p.eta_pi = eta_pi;
    require(Vc > 0 && tau0 > 0 && eta0 > 0 && eta_pi > 0, errkind::config,
            "topic model dimensions and concentrations must be positive");
    for (int l = 0; l < p.L(); ++l) {
      int rows = p.rows_of_phi(l);
      Mat phi(rows, p.K[l]);
      for (int k = 0; k < p.K[l]; ++k) {
        auto col = sample_dirichlet(std::vector<double>(rows, eta0), rng);
        for (int r = 0; r < rows; ++r) phi.at(r, k) = col[r];
        project_column_to_simplex(phi, k);
      }
      p.Phi.push_back(std::move(phi));
      Mat pi(p.K[l], p.K[l]);
      for (int k = 0; k < p.K[l]; ++k) {
        auto col = sample_dirichlet(std::vector<double>(p.K[l], eta_pi), rng);
        for (int r = 0; r < p.K[l]; ++r) pi.at(r, k) = col[r];
        project_column_to_simplex(pi, k);
      }
      p.Pi.push_back(std::move(pi));
    }
    return p;
  }

  void validate(double tol = 1e-9) const {
    auto check_mat = [&](const Mat& m, const char* name, int l) {
      for (int k = 0; k < m.cols; ++k) {
        double total = 0.0;
        for (int r = 0; r < m.rows; ++r) {
          double x = m.at(r, k);
          if (!(x >= 0.0) || !std::isfinite(x))
            fail_numeric(strf(name, "^", l + 1, " column ", k, " has invalid entry ", x));
          total += x;
        }
        if (std::fabs(total - 1.0) > tol)
          fail_numeric(strf(name, "^", l + 1, " column ", k, " sums to ", total));
      }
    };
    for (int l = 0; l < L(); ++l) { check_mat(Phi[l], "Phi", l); check_mat(Pi[l], "Pi", l); }
    require(tau0 > 0, errkind::numeric, "tau0 must be positive");
  }
};

// theta[j][l]: layer-(l+1) topic weights for sentence j+1 (both 0-based here)
struct ThetaPath {
  std::vector<std::vector<std::vector<double>>> theta;
  int J() const { return static_cast<int>(theta.size()); }
};

// Ancestral sampling of the topic-weight chain. Sentence 1 draws the top layer
// from Gam(1, tau0); later sentences add the temporal term Pi theta_{j-1} when
// recurrent is on. With recurrence off every sentence follows the j=1 law.
inline ThetaPath generate_theta_path(const TopicModelParams& p, int J, RngState& rng, bool recurrent = true) {
  if (J < 1) fail_numeric(strf("generate_theta_path requires J >= 1, got ", J));
  const int L = p.L();
  ThetaPath path;
  path.theta.assign(J, std::vector<std::vector<double>>(L));
  for (int j = 0; j < J; ++j) {
    for (int l = L - 1; l >= 0; --l) {
      std::vector<double> shape(p.K[l], 0.0);
      if (l == L - 1) {
        if (recurrent && j > 0) shape = mat_vec(p.Pi[l], path.theta[j - 1][l]);
        else shape.assign(p.K[l], 1.0);  // nu = ones
      } else {
        shape = mat_vec(p.Phi[l + 1], path.theta[j][l + 1]);
        if (recurrent && j > 0) {
          auto temporal = mat_vec(p.Pi[l], path.theta[j - 1][l]);
          for (int k = 0; k < p.K[l]; ++k) shape[k] += temporal[k];
        }
      }
      std::vector<double> th(p.K[l]);
      for (int k = 0; k < p.K[l]; ++k) {
        if (!(shape[k] > 0)) fail_numeric(strf("gamma shape vanished at layer ", l + 1, ", sentence ", j + 1));
        th[k] = sample_gamma(shape[k], p.tau0, rng);
      }
      path.theta[j][l] = std::move(th);
    }
  }
  return path;
}

inline std::vector<std::vector<long long>> generate_counts(const TopicModelParams& p, const ThetaPath& path,
                                                           RngState& rng) {
  std::vector<std::vector<long long>> d(path.J());
  for (int j = 0; j < path.J(); ++j) {
    auto rate = mat_vec(p.Phi[0], path.theta[j][0]);
    d[j].resize(p.Vc);
    for (int v = 0; v < p.Vc; ++v) d[j][v] = sample_poisson(rate[v], rng);
  }
  return d;
}

// sum_v [d_v ln(rate_v) - rate_v - ln(d_v!)], with 0 ln 0 := 0;
// an impossible event (rate 0, count > 0) yields -infinity
inline double poisson_loglik(const std::vector<long long>& d, const std::vector<double>& rate) {
  if (d.size() != rate.size())
    fail_numeric(strf("poisson_loglik: count size ", d.size(), " vs rate size ", rate.size()));
  double ll = 0.0;
  for (std::size_t v = 0; v < d.size(); ++v) {
    if (d[v] < 0) fail_numeric(strf("negative count d[", v, "] = ", d[v]));
    if (!(rate[v] >= 0)) fail_numeric(strf("negative rate[", v, "] = ", rate[v]));
    if (rate[v] == 0.0) {
      if (d[v] > 0) return -std::numeric_limits<double>::infinity();
      continue;  // 0 ln 0 := 0 and the -rate term is 0
    }
    ll += static_cast<double>(d[v]) * std::log(rate[v]) - rate[v] - std::lgamma(static_cast<double>(d[v]) + 1.0);
  }
  return ll;
}

inline double gamma_loglik(const std::vector<double>& theta, const std::vector<double>& shape, double rate) {
  if (theta.size() != shape.size())
    fail_numeric(strf("gamma_loglik: theta size ", theta.size(), " vs shape size ", shape.size()));
  if (!(rate > 0)) fail_numeric(strf("gamma_loglik requires positive rate, got ", rate));
  double ll = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!(theta[i] > 0) || !(shape[i] > 0))
      fail_numeric(strf("gamma_loglik requires positive theta and shape at ", i));
    ll += shape[i] * std::log(rate) - std::lgamma(shape[i]) + (shape[i] - 1.0) * std::log(theta[i]) -
          rate * theta[i];
  }
  return ll;
}

// word-space projection of layer-l topics (1-based l): columns of Phi^1 ... Phi^l
inline Mat project_topics_to_words(const TopicModelParams& p, int l) {
  if (l < 1 || l > p.L()) fail_numeric(strf("layer ", l, " out of range [1,", p.L(), "]"));
  Mat proj = p.Phi[0];
  for (int i = 1; i < l; ++i) proj = mat_mul(proj, p.Phi[i]);
  return proj;
}

// one record per topic: its strongest words, the strong Phi edges to the layer
// below, and the strong Pi edges to the next sentence's topics
inline nlohmann::json export_topic_hierarchy(const TopicModelParams& p, const Vocab& vocab, int top_n,
                                             double weight_threshold) {
  require(vocab.Vc() == p.Vc, errkind::data,
          strf("vocab has ", vocab.Vc(), " topic-model tokens but the model expects ", p.Vc));
  nlohmann::json out = nlohmann::json::array();
  for (int l = 1; l <= p.L(); ++l) {
    Mat proj = project_topics_to_words(p, l);
    for (int k = 0; k < p.K[l - 1]; ++k) {
      nlohmann::json rec;
      rec["layer"] = l;
      rec["topic_id"] = k;
      std::vector<int> idx(p.Vc);
      for (int v = 0; v < p.Vc; ++v) idx[v] = v;
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return proj.at(a, k) > proj.at(b, k); });
      nlohmann::json words = nlohmann::json::array();
      for (int i = 0; i < std::min(top_n, p.Vc); ++i)
        words.push_back({{"word", vocab.tm_tokens[idx[i]]}, {"weight", proj.at(idx[i], k)}});
      rec["top_words"] = words;

      nlohmann::json hier = nlohmann::json::array();
      if (l >= 2) {
        const Mat& phi = p.Phi[l - 1];
        for (int r = 0; r < phi.rows; ++r)
          if (phi.at(r, k) > weight_threshold)
            hier.push_back({{"child_layer", l - 1}, {"child_topic", r}, {"weight", phi.at(r, k)}});
      }
      rec["hierarchical_edges"] = hier;

      nlohmann::json temporal = nlohmann::json::array();
      const Mat& pi = p.Pi[l - 1];
      // edges out of topic k at sentence j-1 into topic r at sentence j
      for (int r = 0; r < pi.rows; ++r)
        if (pi.at(r, k) > weight_threshold)
          temporal.push_back({{"to_topic", r}, {"weight", pi.at(r, k)}});
      rec["temporal_edges"] = temporal;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace rgbn
