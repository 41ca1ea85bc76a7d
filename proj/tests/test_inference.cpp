#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rgbn/inference.hpp"

using namespace rgbn;

namespace {

DocInput make_doc(int J, int Vc, int V, int T, RngState& rng) {
  DocInput doc;
  for (int j = 0; j < J; ++j) {
    std::vector<double> d(Vc);
    for (auto& x : d) x = static_cast<double>(uniform_index(rng, 5));
    doc.d.push_back(std::move(d));
    // sequences of length T: inputs [BOS, c_0..c_{T-2}], targets [c_0..c_{T-2}, EOS]
    std::vector<int> content(T - 1);
    for (auto& c : content) c = 4 + static_cast<int>(uniform_index(rng, V - 4));
    std::vector<int> in{1}, tg;
    for (int c : content) {
      in.push_back(c);
      tg.push_back(c);
    }
    tg.push_back(2);
    doc.inputs.push_back(std::move(in));
    doc.targets.push_back(std::move(tg));
  }
  return doc;
}

}  // namespace

TEST_CASE("zero-weight encoder produces ln2 shape and scale heads") {
  auto rng = seed_rng(301);
  auto e = EncoderParams::init(4, {3, 2}, 0.0, false, rng);
  auto ed = encode_document(e, {{1.0, 2.0, 0.0, 3.0}, {0.0, 1.0, 1.0, 0.0}});
  const double ln2 = std::log(2.0);
  for (int j = 0; j < 2; ++j)
    for (int l = 0; l < 2; ++l) {
      CHECK(ed.k[j][l]->val[0] == doctest::Approx(ln2).epsilon(1e-15));
      for (double x : ed.lam[j][l]->val) CHECK(x == doctest::Approx(ln2).epsilon(1e-15));
      for (double x : ed.h[j][l]->val) CHECK(x == 0.0);
    }
}

TEST_CASE("encoding is deterministic and starts from a zero state") {
  auto rng = seed_rng(302);
  auto e = EncoderParams::init(3, {2}, 0.5, false, rng);
  std::vector<std::vector<double>> d = {{1.0, 0.0, 2.0}, {0.0, 3.0, 1.0}};
  auto a = encode_document(e, d);
  auto b = encode_document(e, d);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) CHECK(a.h[j][0]->val[i] == b.h[j][0]->val[i]);

  // first sentence: h = tanh(Us d + bs) since the recurrent input is zero
  const auto& lay = e.layers[0];
  for (int r = 0; r < 2; ++r) {
    double pre = lay.bs->val[r];
    for (int c = 0; c < 3; ++c) pre += lay.Us->val[r * 3 + c] * d[0][c];
    CHECK(a.h[0][0]->val[r] == doctest::Approx(std::tanh(pre)).epsilon(1e-14));
  }
}

TEST_CASE("sentence recurrence feeds forward only when enabled") {
  auto rng = seed_rng(303);
  auto e = EncoderParams::init(3, {2}, 0.5, false, rng);
  std::vector<std::vector<double>> d1 = {{1.0, 0.0, 2.0}, {0.0, 3.0, 1.0}};
  std::vector<std::vector<double>> d2 = {{5.0, 1.0, 0.0}, {0.0, 3.0, 1.0}};
  auto r1 = encode_document(e, d1, true);
  auto r2 = encode_document(e, d2, true);
  bool differs = false;
  for (int i = 0; i < 2; ++i)
    if (r1.h[1][0]->val[i] != r2.h[1][0]->val[i]) differs = true;
  CHECK(differs);

  auto n1 = encode_document(e, d1, false);
  auto n2 = encode_document(e, d2, false);
  for (int i = 0; i < 2; ++i) CHECK(n1.h[1][0]->val[i] == n2.h[1][0]->val[i]);
  // without recurrence, permuting sentences permutes the states
  std::vector<std::vector<double>> perm = {d1[1], d1[0]};
  auto np = encode_document(e, perm, false);
  for (int i = 0; i < 2; ++i) {
    CHECK(np.h[0][0]->val[i] == n1.h[1][0]->val[i]);
    CHECK(np.h[1][0]->val[i] == n1.h[0][0]->val[i]);
  }
}

TEST_CASE("the uniform-to-Weibull transform hits its exact point and mean") {
  Tensor lam = constant({2.0, 0.5});
  Tensor k = constant({1.7});
  double e0 = 1.0 - std::exp(-1.0);
  Tensor th = weibull_sample(k, lam, {e0, e0});
  CHECK(th->val[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(th->val[1] == doctest::Approx(0.5).epsilon(1e-15));

  auto rng = seed_rng(304);
  Tensor k2 = constant({2.0});
  Tensor lam1 = constant({1.0});
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = weibull_sample(k2, lam1, draw_eps(1, rng))->val[0];
    s += x;
    s2 += x * x;
  }
  double mean = s / n;
  double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::fabs(mean - 0.886226925452758) < 3.0 * se);

  CHECK_THROWS_AS(weibull_sample(k2, lam1, {0.0}), error);
  CHECK_THROWS_AS(weibull_sample(k2, lam1, {1.0}), error);
}

TEST_CASE("the sample's scale gradient is the noise transform itself") {
  double e0 = 0.37;
  Tensor lam = make_tensor({2}, {1.3, 0.8}, true);
  Tensor k = constant({2.5});
  auto f = [&]() { return sum_t(weibull_sample(k, lam, {e0, e0})); };
  double rel = grad_check(f, {lam});
  CHECK(rel < 1e-6);
  Tensor th = sum_t(weibull_sample(k, lam, {e0, e0}));
  zero_grads({lam});
  backward(th);
  double want = std::pow(-std::log1p(-e0), 1.0 / 2.5);
  CHECK(lam->grad[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK(lam->grad[1] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("closed-form divergence matches frozen values and stays nonnegative") {
  CHECK(kl_weibull_gamma(2.0, 1.0, 2.0, 1.0) == doctest::Approx(0.5793741060127036).epsilon(1e-13));
  CHECK(kl_weibull_gamma(1.0, 1.0, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  auto rng = seed_rng(305);
  for (int i = 0; i < 1000; ++i) {
    double k = 0.1 + 4.9 * uniform01(rng);
    double lam = 0.1 + 4.9 * uniform01(rng);
    double a = 0.1 + 4.9 * uniform01(rng);
    double b = 0.1 + 4.9 * uniform01(rng);
    CHECK(kl_weibull_gamma(k, lam, a, b) >= -1e-12);
  }
  CHECK_THROWS_AS(kl_weibull_gamma(0.0, 1.0, 1.0, 1.0), error);
  CHECK_THROWS_AS(kl_weibull_gamma(1.0, -1.0, 1.0, 1.0), error);
}

TEST_CASE("graph divergence equals the scalar formula and differentiates cleanly") {
  auto rng = seed_rng(306);
  Tensor k = make_tensor({1}, {1.8}, true);
  Tensor lam = make_tensor({3}, {0.7, 1.2, 2.1}, true);
  Tensor alpha = constant({0.9, 1.5, 0.4});
  double beta = 1.3;
  Tensor klt = kl_weibull_gamma_t(k, lam, alpha, beta);
  double want = 0.0;
  for (int i = 0; i < 3; ++i) want += kl_weibull_gamma(1.8, lam->val[i], alpha->val[i], beta);
  CHECK(value(klt) == doctest::Approx(want).epsilon(1e-13));

  // elementwise vector shape agrees too
  Tensor kv = constant({1.8, 1.8, 1.8});
  CHECK(value(kl_weibull_gamma_t(kv, lam, alpha, beta)) == doctest::Approx(want).epsilon(1e-13));

  auto f = [&]() { return kl_weibull_gamma_t(k, lam, alpha, beta); };
  CHECK(grad_check(f, {lam}) < 1e-6);
  CHECK(grad_check(f, {k}) < 1e-6);
}

TEST_CASE("one-sentence bound is the sum of its three parts") {
  auto rng = seed_rng(307);
  auto tp = TopicModelParams::init(4, {2}, 1.0, 0.3, 0.3, rng);
  auto lm = LmParams::init(7, 3, {3}, {2}, {}, 0.4, rng);
  auto enc = EncoderParams::init(4, {2}, 0.4, false, rng);
  DocInput doc;
  doc.d = {{2.0, 0.0, 1.0, 1.0}};
  doc.inputs = {{1, 5, 6}};
  doc.targets = {{5, 6, 2}};
  auto eps = draw_doc_eps(tp.K, 1, rng);
  auto res = elbo_document(tp, lm, enc, doc, eps, nullptr, true);

  auto ed = encode_document(enc, doc.d, true);
  Tensor th = weibull_sample(ed.k[0][0], ed.lam[0][0], eps[0][0]);
  for (int i = 0; i < 2; ++i) CHECK(th->val[i] == res.theta[0][0]->val[i]);
  auto ratev = mat_vec(tp.Phi[0], th->val);
  double pois = poisson_loglik({2, 0, 1, 1}, ratev);
  auto fw = forward_sentence(lm, {th}, doc.inputs[0], doc.targets[0]);
  double kl = 0.0;
  for (int i = 0; i < 2; ++i)
    kl += kl_weibull_gamma(ed.k[0][0]->val[0], ed.lam[0][0]->val[i], 1.0, tp.tau0);
  CHECK(value(res.elbo) == doctest::Approx(pois + value(fw.total) - kl).epsilon(1e-12));
  CHECK(res.poisson == doctest::Approx(pois).epsilon(1e-12));
  CHECK(res.word == doctest::Approx(value(fw.total)).epsilon(1e-12));
  CHECK(res.kl == doctest::Approx(kl).epsilon(1e-12));
  CHECK(res.tokens == 3);
}

TEST_CASE("the bound never exceeds the quadrature log evidence") {
  auto rng = seed_rng(308);
  auto tp = TopicModelParams::init(1, {1}, 1.0, 0.5, 0.5, rng);
  // a 1x1 simplex column is exactly [1]
  CHECK(tp.Phi[0].at(0, 0) == doctest::Approx(1.0));
  auto lm = LmParams::init(5, 2, {2}, {1}, {}, 0.4, rng);
  auto enc = EncoderParams::init(1, {1}, 0.4, false, rng);
  DocInput doc;
  doc.d = {{3.0}};
  doc.inputs = {{1, 4}};
  doc.targets = {{4, 2}};

  // log Z = log Integral Pois(3; theta) p(y|theta) Gam(theta; 1, 1) dtheta
  auto p_y = [&](double theta) {
    Tensor th = constant({theta});
    auto fw = forward_sentence(lm, {th}, doc.inputs[0], doc.targets[0]);
    return std::exp(value(fw.total));
  };
  auto integrand = [&](double theta) {
    double logp = 3.0 * std::log(theta) - theta - std::lgamma(4.0);  // Poisson(3)
    double logg = -theta;                                            // Gam(1,1)
    return std::exp(logp + logg) * p_y(theta);
  };
  // Simpson's rule on (0, 30]
  const int steps = 3000;
  const double a = 1e-8, b = 30.0, h = (b - a) / steps;
  double acc = integrand(a) + integrand(b);
  for (int i = 1; i < steps; ++i) acc += integrand(a + i * h) * (i % 2 ? 4.0 : 2.0);
  double logZ = std::log(acc * h / 3.0);

  const int n = 1500;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto eps = draw_doc_eps(tp.K, 1, rng);
    double v = value(elbo_document(tp, lm, enc, doc, eps, nullptr, true).elbo);
    s += v;
    s2 += v * v;
  }
  double mean = s / n;
  double se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(mean + 3.0 * se <= logZ + 1e-9);
  CHECK(mean > logZ - 25.0);  // sanity: the bound is not vacuous
}

TEST_CASE("single-layer ladder reduces to the plain posterior") {
  auto rng = seed_rng(309);
  auto tp = TopicModelParams::init(3, {2}, 1.0, 0.4, 0.4, rng);
  auto enc = EncoderParams::init(3, {2}, 0.4, false, rng);
  auto ed = encode_document(enc, {{1.0, 2.0, 0.0}}, false);
  std::vector<std::vector<double>> eps = {{0.3, 0.8}};
  auto lad = ladder_sample_gbn(tp, ed, 0, eps);
  Tensor plain = weibull_sample(ed.k[0][0], ed.lam[0][0], eps[0]);
  for (int i = 0; i < 2; ++i) CHECK(lad.theta[0]->val[i] == plain->val[i]);
}

TEST_CASE("hierarchical shape augmentation strictly increases the Weibull shape") {
  auto rng = seed_rng(310);
  auto tp = TopicModelParams::init(4, {3, 2}, 1.0, 0.4, 0.4, rng);
  auto enc = EncoderParams::init(4, {3, 2}, 0.4, false, rng);
  auto ed = encode_document(enc, {{1.0, 0.0, 2.0, 1.0}}, false);
  std::vector<std::vector<double>> eps = {{0.4, 0.6, 0.2}, {0.7, 0.1}};
  auto lad = ladder_sample_gbn(tp, ed, 0, eps);
  double khead = ed.k[0][0]->val[0];
  for (double s : lad.shape[0]->val) CHECK(s > khead);
  // top layer is unaugmented
  CHECK(lad.shape[1]->val[0] == ed.k[0][1]->val[0]);
}

TEST_CASE("ladder encoding with a fresh seed is reproducible") {
  auto rng1 = seed_rng(311);
  auto tp = TopicModelParams::init(4, {3, 2}, 1.0, 0.4, 0.4, rng1);
  auto enc = EncoderParams::init(4, {3, 2}, 0.4, false, rng1);
  auto ra = seed_rng(42);
  auto rb = seed_rng(42);
  auto ta = encode_ladder_gbn(enc, {1.0, 0.0, 2.0, 1.0}, tp, ra);
  auto tb = encode_ladder_gbn(enc, {1.0, 0.0, 2.0, 1.0}, tp, rb);
  for (int l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < ta[l]->val.size(); ++i) CHECK(ta[l]->val[i] == tb[l]->val[i]);
}

TEST_CASE("with recurrence off the bound never reads the transition matrices") {
  auto rng = seed_rng(312);
  auto tp = TopicModelParams::init(5, {2, 2}, 1.0, 0.3, 0.3, rng);
  auto lm = LmParams::init(8, 3, {3, 2}, {2, 2}, {}, 0.3, rng);
  auto enc = EncoderParams::init(5, {2, 2}, 0.3, false, rng);
  auto doc = make_doc(3, 5, 8, 3, rng);
  auto eps = draw_doc_eps(tp.K, 3, rng);
  double off1 = value(elbo_document(tp, lm, enc, doc, eps, nullptr, false).elbo);
  double on1 = value(elbo_document(tp, lm, enc, doc, eps, nullptr, true).elbo);
  for (auto& pi : tp.Pi)
    for (auto& x : pi.v) x = uniform01(rng);
  double off2 = value(elbo_document(tp, lm, enc, doc, eps, nullptr, false).elbo);
  double on2 = value(elbo_document(tp, lm, enc, doc, eps, nullptr, true).elbo);
  CHECK(off1 == off2);
  CHECK(on1 != on2);
  CHECK(off1 != on1);
}

TEST_CASE("sentence divergence totals are nonnegative") {
  auto rng = seed_rng(313);
  auto tp = TopicModelParams::init(5, {3, 2}, 1.0, 0.3, 0.3, rng);
  auto lm = LmParams::init(9, 3, {3, 2}, {3, 2}, {}, 0.3, rng);
  auto enc = EncoderParams::init(5, {3, 2}, 0.3, false, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto doc = make_doc(2, 5, 9, 3, rng);
    auto eps = draw_doc_eps(tp.K, 2, rng);
    auto res = elbo_document(tp, lm, enc, doc, eps, nullptr, trial % 2 == 0);
    CHECK(res.kl >= -1e-12);
  }
}

TEST_CASE("end-to-end gradients of the negative bound pass finite differences") {
  auto rng = seed_rng(314);
  auto tp = TopicModelParams::init(6, {3, 2}, 1.0, 0.3, 0.3, rng);
  auto lm = LmParams::init(10, 3, {4, 3}, {3, 2}, {}, 0.3, rng);
  auto enc = EncoderParams::init(6, {3, 2}, 0.3, false, rng);
  auto doc = make_doc(2, 6, 10, 3, rng);
  auto eps = draw_doc_eps(tp.K, 2, rng);
  std::vector<DropoutMasks> masks;
  for (int j = 0; j < 2; ++j) masks.push_back(make_dropout_masks(3, lm, 0.4, rng));

  auto leaves = enc.params();
  for (auto& t : lm.params()) leaves.push_back(t);

  // h = 1e-4: at 1e-5 the check is dominated by cancellation noise in f
  // itself (error grows as 1/h), not by gradient bias (which shrinks as h^2)
  SUBCASE("recurrent") {
    auto f = [&]() { return neg(elbo_document(tp, lm, enc, doc, eps, &masks, true).elbo); };
    CHECK(grad_check(f, leaves, 1e-4) < 1e-4);
  }
  SUBCASE("ladder") {
    auto f = [&]() { return neg(elbo_document(tp, lm, enc, doc, eps, &masks, false).elbo); };
    CHECK(grad_check(f, leaves, 1e-4) < 1e-4);
  }
}
