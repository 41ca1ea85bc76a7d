#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rgbn/common.hpp"
#include "rgbn/langmodel.hpp"
#include "rgbn/rng.hpp"
#include "rgbn/tensor.hpp"
#include "rgbn/topic_model.hpp"

namespace rgbn {

// Plain RNN encoder layer with softplus heads: one scalar Weibull shape head
// and one vector scale head per layer.
struct EncoderLayer {
  Tensor Ws, Us, bs;  // recurrent, input, bias of the tanh cell
  Tensor Wk, bk;      // 1 x K shape head
  Tensor Wl, bl;      // K x K scale head
};

struct EncoderParams {
  int Vc = 0;
  std::vector<int> K;  // hidden size of encoder layer l equals the topic count K_l
  bool log1p_input = false;
  std::vector<EncoderLayer> layers;

  int L() const { return static_cast<int>(K.size()); }
  int in_size(int l) const { return l == 0 ? Vc : K[l - 1]; }

  static EncoderParams init(int Vc, std::vector<int> K, double scale, bool log1p_input, RngState& rng) {
    EncoderParams e;
    e.Vc = Vc;
    e.K = std::move(K);
    e.log1p_input = log1p_input;
    require(Vc > 0 && !e.K.empty(), errkind::config, "encoder needs a context size and layer sizes");
    auto rand_mat = [&](int r, int c) {
      std::vector<double> v(static_cast<std::size_t>(r) * c);
      for (auto& x : v) x = uniform_range(rng, -scale, scale);
      return make_tensor({r, c}, std::move(v), true);
    };
    for (int l = 0; l < e.L(); ++l) {
      EncoderLayer lay;
      int Kl = e.K[l];
      lay.Ws = rand_mat(Kl, Kl);
      lay.Us = rand_mat(Kl, e.in_size(l));
      lay.bs = leaf({Kl}, 0.0, true);
      lay.Wk = rand_mat(1, Kl);
      lay.bk = leaf({1}, 0.0, true);
      lay.Wl = rand_mat(Kl, Kl);
      lay.bl = leaf({Kl}, 0.0, true);
      e.layers.push_back(std::move(lay));
    }
    return e;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (const auto& l : layers)
      for (const auto& t : {l.Ws, l.Us, l.bs, l.Wk, l.bk, l.Wl, l.bl}) out.push_back(t);
    return out;
  }
};

struct EncodedDoc {
  int J = 0, L = 0;
  // indexed [sentence][layer]
  std::vector<std::vector<Tensor>> h, k, lam;
};

// Upward through layers, forward through sentences. The first layer reads the
// context counts; each layer's state feeds the one above. With recurrence off
// the previous-sentence state is pinned to zero, so each sentence encodes
// independently.
inline EncodedDoc encode_document(const EncoderParams& e, const std::vector<std::vector<double>>& d,
                                  bool recurrent = true) {
  const int J = static_cast<int>(d.size());
  require(J >= 1, errkind::data, "encode_document needs at least one context vector");
  EncodedDoc out;
  out.J = J;
  out.L = e.L();
  out.h.assign(J, {});
  out.k.assign(J, {});
  out.lam.assign(J, {});
  std::vector<Tensor> prev(e.L());
  for (int l = 0; l < e.L(); ++l) prev[l] = constant(std::vector<double>(e.K[l], 0.0));
  for (int j = 0; j < J; ++j) {
    require(static_cast<int>(d[j].size()) == e.Vc, errkind::data,
            strf("context ", j + 1, " has ", d[j].size(), " entries, expected ", e.Vc));
    std::vector<double> din = d[j];
    if (e.log1p_input)
      for (auto& x : din) x = std::log1p(x);
    Tensor below = constant(din);
    for (int l = 0; l < e.L(); ++l) {
      const auto& lay = e.layers[l];
      Tensor pre = add(add(matvec(lay.Ws, recurrent ? prev[l] : constant(std::vector<double>(e.K[l], 0.0))),
                           matvec(lay.Us, below)),
                       lay.bs);
      Tensor hl = tanh_t(pre);
      out.h[j].push_back(hl);
      out.k[j].push_back(softplus(add(matvec(lay.Wk, hl), lay.bk)));
      out.lam[j].push_back(softplus(add(matvec(lay.Wl, hl), lay.bl)));
      prev[l] = hl;
      below = hl;
    }
  }
  return out;
}

inline std::vector<double> draw_eps(int n, RngState& rng) {
  std::vector<double> e(n);
  for (auto& x : e) x = uniform01(rng);
  return e;
}

// theta = lam * (-ln(1-eps))^(1/shape), differentiable in shape and lam.
// shape may be a scalar broadcast across lam or match it elementwise.
inline Tensor weibull_sample(const Tensor& shape_k, const Tensor& lam, const std::vector<double>& eps) {
  require(eps.size() == lam->val.size(), errkind::numeric,
          strf("weibull_sample: ", eps.size(), " noises for ", lam->val.size(), " scales"));
  std::vector<double> c(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    require(eps[i] > 0.0 && eps[i] < 1.0, errkind::numeric, "uniform noise must lie strictly inside (0,1)");
    c[i] = std::log(-std::log1p(-eps[i]));
  }
  return mul(lam, exp_t(divt(constant(c), shape_k)));
}

// KL( Weibull(k, lam) || Gamma(alpha, beta) ), summed over components
inline double kl_weibull_gamma(double k, double lam, double alpha, double beta) {
  if (!(k > 0) || !(lam > 0) || !(alpha > 0) || !(beta > 0))
    fail_numeric(strf("kl_weibull_gamma requires positive parameters, got k=", k, " lam=", lam, " alpha=",
                      alpha, " beta=", beta));
  return euler_gamma * alpha / k - alpha * std::log(lam) + std::log(k) +
         beta * lam * std::exp(std::lgamma(1.0 + 1.0 / k)) - euler_gamma - 1.0 - alpha * std::log(beta) +
         std::lgamma(alpha);
}

inline Tensor kl_weibull_gamma_t(const Tensor& k, const Tensor& lam, const Tensor& alpha, double beta) {
  require(beta > 0, errkind::numeric, "kl_weibull_gamma_t requires a positive rate");
  for (double x : k->val) require(x > 0, errkind::numeric, "kl_weibull_gamma_t: nonpositive shape");
  for (double x : lam->val) require(x > 0, errkind::numeric, "kl_weibull_gamma_t: nonpositive scale");
  for (double x : alpha->val) require(x > 0, errkind::numeric, "kl_weibull_gamma_t: nonpositive prior shape");
  Tensor g = exp_t(lgamma_t(add_scalar(divt(const_scalar(1.0), k), 1.0)));  // Gamma(1 + 1/k)
  Tensor vec = scale(divt(alpha, k), euler_gamma);
  vec = add(vec, neg(mul(alpha, log_t(lam))));
  vec = add(vec, log_t(k));
  vec = add(vec, scale(mul(lam, g), beta));
  vec = add(vec, scale(alpha, -std::log(beta)));
  vec = add(vec, lgamma_t(alpha));
  vec = add_scalar(vec, -euler_gamma - 1.0);
  return sum_t(vec);
}

inline Tensor mat_constant(const Mat& m) {
  return make_tensor({m.rows, m.cols}, m.v, false);
}

// Ladder posterior of the non-recurrent model: top layer is a plain Weibull,
// lower layers add the hierarchical prior shape to the encoder's shape head.
struct LadderSample {
  std::vector<Tensor> theta, shape;  // per layer
};

inline LadderSample ladder_sample_gbn(const TopicModelParams& tp, const EncodedDoc& enc, int j,
                                      const std::vector<std::vector<double>>& eps_j) {
  const int L = enc.L;
  LadderSample out;
  out.theta.resize(L);
  out.shape.resize(L);
  for (int l = L - 1; l >= 0; --l) {
    Tensor shape = enc.k[j][l];
    if (l + 1 < L) shape = add(shape, matvec(mat_constant(tp.Phi[l + 1]), out.theta[l + 1]));
    out.shape[l] = shape;
    out.theta[l] = weibull_sample(shape, enc.lam[j][l], eps_j[l]);
  }
  return out;
}

// sum_v [ d_v ln(rate_v) - rate_v - ln(d_v!) ] as a graph node
inline Tensor poisson_term(const std::vector<double>& d, const Tensor& rate) {
  double lg = 0.0;
  for (double x : d) lg += std::lgamma(x + 1.0);
  return add_scalar(sub(dot(constant(d), log_t(rate)), sum_t(rate)), -lg);
}

struct DocInput {
  std::vector<std::vector<double>> d;     // per sentence: context counts over the topic vocabulary
  std::vector<std::vector<int>> inputs;   // per sentence: LM input ids (begin-of-sentence first)
  std::vector<std::vector<int>> targets;  // per sentence: LM target ids (end-of-sentence last)
};

// one uniform noise vector per sentence and layer
using DocEps = std::vector<std::vector<std::vector<double>>>;

inline DocEps draw_doc_eps(const std::vector<int>& K, int J, RngState& rng) {
  DocEps e(J);
  for (int j = 0; j < J; ++j)
    for (int k : K) e[j].push_back(draw_eps(k, rng));
  return e;
}

struct ElboResult {
  Tensor elbo;  // scalar graph node: poisson + word - kl summed over sentences
  double poisson = 0.0, word = 0.0, kl = 0.0;
  long long tokens = 0;
  std::vector<std::vector<Tensor>> theta;  // sampled topic weights [sentence][layer]
};

// Single-sample reparameterized bound for one document. With recurrence on,
// the posterior is the sentence-recurrent encoder's Weibull and the prior
// shape stacks the hierarchical and temporal terms (both flowing gradients
// through the sampled thetas). With recurrence off, both the encoder and the
// prior drop their temporal parts and the posterior becomes the ladder.
inline ElboResult elbo_document(const TopicModelParams& tp, const LmParams& lm, const EncoderParams& enc,
                                const DocInput& doc, const DocEps& eps,
                                const std::vector<DropoutMasks>* masks, bool recurrent) {
  const int J = static_cast<int>(doc.d.size());
  const int L = tp.L();
  require(J >= 1 && static_cast<int>(doc.inputs.size()) == J && static_cast<int>(doc.targets.size()) == J,
          errkind::data, "elbo_document: sentence arrays must align");
  require(static_cast<int>(eps.size()) == J, errkind::numeric, "elbo_document: one noise set per sentence");

  EncodedDoc ed = encode_document(enc, doc.d, recurrent);
  ElboResult out;
  out.theta.assign(J, {});
  Tensor total;
  for (int j = 0; j < J; ++j) {
    if (recurrent) {
      out.theta[j].resize(L);
      for (int l = 0; l < L; ++l) out.theta[j][l] = weibull_sample(ed.k[j][l], ed.lam[j][l], eps[j][l]);
    } else {
      out.theta[j] = ladder_sample_gbn(tp, ed, j, eps[j]).theta;
    }

    Tensor rate = matvec(mat_constant(tp.Phi[0]), out.theta[j][0]);
    Tensor pois = poisson_term(doc.d[j], rate);
    out.poisson += value(pois);

    auto fw = forward_sentence(lm, out.theta[j], doc.inputs[j], doc.targets[j],
                               masks ? &(*masks)[j] : nullptr);
    out.word += value(fw.total);
    out.tokens += static_cast<long long>(doc.targets[j].size());

    Tensor sentence = add(pois, fw.total);
    for (int l = 0; l < L; ++l) {
      Tensor prior_shape;
      if (l + 1 < L) {
        prior_shape = matvec(mat_constant(tp.Phi[l + 1]), out.theta[j][l + 1]);
        if (recurrent && j > 0)
          prior_shape = add(prior_shape, matvec(mat_constant(tp.Pi[l]), out.theta[j - 1][l]));
      } else if (recurrent && j > 0) {
        prior_shape = matvec(mat_constant(tp.Pi[l]), out.theta[j - 1][l]);
      } else {
        prior_shape = constant(std::vector<double>(tp.K[l], 1.0));  // nu
      }
      Tensor q_shape = recurrent ? ed.k[j][l]
                                 : (l + 1 < L ? add(ed.k[j][l], matvec(mat_constant(tp.Phi[l + 1]),
                                                                       out.theta[j][l + 1]))
                                              : Tensor(ed.k[j][l]));
      Tensor kl = kl_weibull_gamma_t(q_shape, ed.lam[j][l], prior_shape, tp.tau0);
      out.kl += value(kl);
      sentence = sub(sentence, kl);
    }
    total = total ? add(total, sentence) : sentence;
  }
  out.elbo = total;
  if (!std::isfinite(value(out.elbo))) fail_numeric("non-finite evidence bound");
  return out;
}

// Appendix-style single-context ladder encoding, drawing fresh noise.
inline std::vector<Tensor> encode_ladder_gbn(const EncoderParams& enc, const std::vector<double>& d,
                                             const TopicModelParams& tp, RngState& rng) {
  EncodedDoc ed = encode_document(enc, {d}, /*recurrent=*/false);
  std::vector<std::vector<double>> eps;
  for (int k : tp.K) eps.push_back(draw_eps(k, rng));
  return ladder_sample_gbn(tp, ed, 0, eps).theta;
}

inline ThetaPath theta_values(const std::vector<std::vector<Tensor>>& theta) {
  ThetaPath path;
  path.theta.resize(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j)
    for (const auto& t : theta[j]) path.theta[j].push_back(t->val);
  return path;
}

// posterior mean of Weibull(k, lam): lam * Gamma(1 + 1/k)
inline double weibull_mean(double k, double lam) {
  return lam * std::exp(std::lgamma(1.0 + 1.0 / k));
}

inline std::vector<double> weibull_mean(const Tensor& k, const Tensor& lam) {
  std::vector<double> out(lam->val.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double kv = k->val.size() == 1 ? k->val[0] : k->val[i];
    out[i] = weibull_mean(kv, lam->val[i]);
  }
  return out;
}

}  // namespace rgbn
