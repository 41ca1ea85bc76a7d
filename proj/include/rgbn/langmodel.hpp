#pragma once

#include <utility>
#include <vector>

#include "rgbn/common.hpp"
#include "rgbn/rng.hpp"
#include "rgbn/tensor.hpp"

namespace rgbn {

// One stacked layer: combined LSTM blocks (input, forget, cell, output) plus
// the GRU-style gate that mixes the hidden state with a topic weight vector.
struct LmLayer {
  Tensor W, U, b;  // LSTM: W maps the layer input, U the previous hidden, blocks ordered [i f g o]
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;
};

struct LmParams {
  int V = 0, E = 0;
  std::vector<int> H;      // LSTM hidden sizes, bottom layer first
  std::vector<int> K;      // topic vector sizes, bottom layer first
  std::vector<int> sigma;  // sigma[l]: which topic layer feeds the gate at LM layer l
  Tensor W_e;              // V x E embeddings
  Tensor W_o, b_o;         // V x sum(H) output projection over the concatenated gate outputs
  std::vector<LmLayer> layers;

  int L() const { return static_cast<int>(H.size()); }
  int in_size(int l) const { return l == 0 ? E : H[l - 1]; }
  int sum_h() const {
    int s = 0;
    for (int h : H) s += h;
    return s;
  }

  static LmParams init(int V, int E, std::vector<int> H, std::vector<int> K, std::vector<int> sigma,
                       double scale, RngState& rng) {
    LmParams p;
    p.V = V;
    p.E = E;
    p.H = std::move(H);
    p.K = std::move(K);
    require(V > 4 && E > 0, errkind::config, "language model needs a vocabulary and embedding size");
    require(p.H.size() == p.K.size() && !p.H.empty(), errkind::config,
            strf("need one topic size per LSTM layer, got ", p.K.size(), " for ", p.H.size()));
    if (sigma.empty()) {
      for (int l = 0; l < p.L(); ++l) sigma.push_back(l);
    }
    require(static_cast<int>(sigma.size()) == p.L(), errkind::config, "sigma must map every layer");
    {
      std::vector<bool> seen(p.L(), false);
      for (int s : sigma) {
        require(s >= 0 && s < p.L() && !seen[s], errkind::config, "sigma must be a permutation");
        seen[s] = true;
      }
    }
    p.sigma = std::move(sigma);

    auto rand_mat = [&](int r, int c) {
      std::vector<double> v(static_cast<std::size_t>(r) * c);
      for (auto& x : v) x = uniform_range(rng, -scale, scale);
      return make_tensor({r, c}, std::move(v), true);
    };
    auto rand_vec_dims = [&](int n, double fill) { return leaf({n}, fill, true); };

    p.W_e = rand_mat(V, E);
    for (int l = 0; l < p.L(); ++l) {
      LmLayer lay;
      int in = p.in_size(l), Hl = p.H[l], Kg = p.K[p.sigma[l]];
      lay.W = rand_mat(4 * Hl, in);
      lay.U = rand_mat(4 * Hl, Hl);
      lay.b = rand_vec_dims(4 * Hl, 0.0);
      for (int i = Hl; i < 2 * Hl; ++i) lay.b->val[i] = 1.0;  // open forget gates at the start
      lay.Wz = rand_mat(Hl, Kg);
      lay.Uz = rand_mat(Hl, Hl);
      lay.bz = rand_vec_dims(Hl, 0.0);
      lay.Wr = rand_mat(Hl, Kg);
      lay.Ur = rand_mat(Hl, Hl);
      lay.br = rand_vec_dims(Hl, 0.0);
      lay.Wh = rand_mat(Hl, Kg);
      lay.Uh = rand_mat(Hl, Hl);
      lay.bh = rand_vec_dims(Hl, 0.0);
      p.layers.push_back(std::move(lay));
    }
    p.W_o = rand_mat(V, p.sum_h());
    p.b_o = rand_vec_dims(V, 0.0);
    return p;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out{W_e};
    for (const auto& l : layers)
      for (const auto& t : {l.W, l.U, l.b, l.Wz, l.Uz, l.bz, l.Wr, l.Ur, l.br, l.Wh, l.Uh, l.bh})
        out.push_back(t);
    out.push_back(W_o);
    out.push_back(b_o);
    return out;
  }
};

struct LmState {
  std::vector<Tensor> h, c;
};

inline LmState lm_init_state(const LmParams& p) {
  LmState st;
  for (int l = 0; l < p.L(); ++l) {
    st.h.push_back(constant(std::vector<double>(p.H[l], 0.0)));
    st.c.push_back(constant(std::vector<double>(p.H[l], 0.0)));
  }
  return st;
}

inline std::pair<Tensor, Tensor> lstm_step(const LmLayer& lay, int Hl, const Tensor& x, const Tensor& h,
                                           const Tensor& c) {
  Tensor pre = add(add(matvec(lay.W, x), matvec(lay.U, h)), lay.b);
  Tensor i = sigmoid(slice(pre, 0, Hl));
  Tensor f = sigmoid(slice(pre, Hl, Hl));
  Tensor g = tanh_t(slice(pre, 2 * Hl, Hl));
  Tensor o = sigmoid(slice(pre, 3 * Hl, Hl));
  Tensor cn = add(mul(f, c), mul(i, g));
  Tensor hn = mul(o, tanh_t(cn));
  return {hn, cn};
}

inline Tensor coupling_gate(const LmLayer& lay, const Tensor& h, const Tensor& theta) {
  Tensor z = sigmoid(add(add(matvec(lay.Wz, theta), matvec(lay.Uz, h)), lay.bz));
  Tensor r = sigmoid(add(add(matvec(lay.Wr, theta), matvec(lay.Ur, h)), lay.br));
  Tensor hh = tanh_t(add(add(matvec(lay.Wh, theta), matvec(lay.Uh, mul(r, h))), lay.bh));
  // a = (1 - z) (.) h + z (.) hh
  return add(sub(h, mul(z, h)), mul(z, hh));
}

// Inverted dropout masks, one per position and layer input. Entries are 0 or
// 1/(1-rate) so evaluation needs no rescaling.
struct DropoutMasks {
  std::vector<std::vector<std::vector<double>>> m;  // [t][l][dim]
};

inline DropoutMasks make_dropout_masks(int T, const LmParams& p, double rate, RngState& rng) {
  require(rate >= 0.0 && rate < 1.0, errkind::config, strf("dropout rate must be in [0,1), got ", rate));
  DropoutMasks d;
  d.m.assign(T, std::vector<std::vector<double>>(p.L()));
  double keep = 1.0 - rate;
  for (int t = 0; t < T; ++t)
    for (int l = 0; l < p.L(); ++l) {
      d.m[t][l].assign(p.in_size(l), 0.0);
      for (auto& x : d.m[t][l]) x = (uniform01(rng) < keep) ? 1.0 / keep : 0.0;
    }
  return d;
}

// Advance every layer on one input token and return the output logits.
// theta_topic is indexed by topic layer; the gate at LM layer l reads
// theta_topic[sigma[l]].
inline Tensor lm_step_logits(const LmParams& p, LmState& st, int token,
                             const std::vector<Tensor>& theta_topic, const DropoutMasks* masks = nullptr,
                             int t = 0) {
  require(token >= 0 && token < p.V, errkind::data, strf("token id ", token, " outside vocabulary of ", p.V));
  require(static_cast<int>(theta_topic.size()) == p.L(), errkind::numeric,
          strf("need ", p.L(), " topic vectors, got ", theta_topic.size()));
  Tensor x = row(p.W_e, token);
  std::vector<Tensor> a_parts;
  for (int l = 0; l < p.L(); ++l) {
    if (masks) x = mul(x, constant(masks->m[t][l]));
    auto [hn, cn] = lstm_step(p.layers[l], p.H[l], x, st.h[l], st.c[l]);
    st.h[l] = hn;
    st.c[l] = cn;
    Tensor a = coupling_gate(p.layers[l], hn, theta_topic[p.sigma[l]]);
    a_parts.push_back(a);
    x = a;
  }
  return add(matvec(p.W_o, concat(a_parts)), p.b_o);
}

struct LmForward {
  std::vector<Tensor> logp;         // per position, log-softmax over the vocabulary
  std::vector<Tensor> target_logp;  // per position, scalar log-probability of the target
  Tensor total;                     // sum of the target log-probabilities
};

inline LmForward forward_sentence(const LmParams& p, const std::vector<Tensor>& theta_topic,
                                  const std::vector<int>& inputs, const std::vector<int>& targets,
                                  const DropoutMasks* masks = nullptr) {
  require(!inputs.empty() && inputs.size() == targets.size(), errkind::data,
          strf("forward_sentence: ", inputs.size(), " inputs vs ", targets.size(), " targets"));
  LmState st = lm_init_state(p);
  LmForward out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor lp = log_softmax_t(lm_step_logits(p, st, inputs[t], theta_topic, masks, static_cast<int>(t)));
    out.target_logp.push_back(pick(lp, targets[t]));
    out.logp.push_back(std::move(lp));
  }
  out.total = sum_t(concat(out.target_logp));
  return out;
}

inline int argmax_index(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Weight-matrix size accounting by layer, excluding embeddings and biases.
// Gates pair the topic size and hidden size of the same layer index; the
// wiring permutation sigma does not enter.
struct ParamCountBreakdown {
  std::vector<long long> lstm_per_layer, gate_per_layer;
  long long lstm = 0, gates = 0;
  long long lm_total() const { return lstm + gates; }
};

inline ParamCountBreakdown param_count(int E, const std::vector<int>& H, const std::vector<int>& K) {
  require(K.empty() || K.size() == H.size(), errkind::config,
          strf("param_count: ", K.size(), " topic sizes for ", H.size(), " layers"));
  ParamCountBreakdown out;
  for (std::size_t l = 0; l < H.size(); ++l) {
    long long in = (l == 0) ? E : H[l - 1];
    long long n = 4LL * (in + H[l]) * H[l];
    out.lstm_per_layer.push_back(n);
    out.lstm += n;
    if (!K.empty()) {
      long long g = 3LL * (static_cast<long long>(K[l]) + H[l]) * H[l];
      out.gate_per_layer.push_back(g);
      out.gates += g;
    }
  }
  return out;
}

}  // namespace rgbn
