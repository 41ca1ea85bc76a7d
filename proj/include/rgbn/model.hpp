#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rgbn/config.hpp"
#include "rgbn/inference.hpp"
#include "rgbn/langmodel.hpp"
#include "rgbn/tlasgr.hpp"
#include "rgbn/topic_model.hpp"

namespace rgbn {

// first-moment/second-moment accumulators, one pair per entry of Model::omega()
struct AdamState {
  long long t = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState init(const std::vector<Tensor>& params) {
    AdamState st;
    for (const auto& p : params) {
      st.m.emplace_back(p->val.size(), 0.0);
      st.v.emplace_back(p->val.size(), 0.0);
    }
    return st;
  }
};

struct Model {
  RunConfig cfg;
  TopicModelParams topic;
  LmParams lm;
  EncoderParams enc;
  TlasgrState mcmc;

  static Model init(const RunConfig& cfg, int V, int Vc, RngState& rng) {
    Model m;
    m.cfg = cfg;
    std::vector<int> sigma(cfg.topic_sizes.size());
    for (std::size_t l = 0; l < sigma.size(); ++l)
      sigma[l] = cfg.flipped ? static_cast<int>(sigma.size()) - 1 - static_cast<int>(l)
                             : static_cast<int>(l);
    m.topic = TopicModelParams::init(Vc, cfg.topic_sizes, cfg.tau0, cfg.eta0, cfg.eta_pi, rng);
    m.lm = LmParams::init(V, cfg.embedding_dim, cfg.lstm_sizes, cfg.topic_sizes, sigma,
                          cfg.init_scale, rng);
    m.enc = EncoderParams::init(Vc, cfg.topic_sizes, cfg.init_scale, cfg.log1p_context, rng);
    m.mcmc = TlasgrState::init(m.topic, cfg.eps0, cfg.kappa);
    return m;
  }

  // the gradient-trained parameter set, in the fixed order the optimizer and
  // checkpoint rely on: encoder tensors first, then language model tensors
  std::vector<Tensor> omega() const {
    std::vector<Tensor> out = enc.params();
    for (const auto& t : lm.params()) out.push_back(t);
    return out;
  }

  std::vector<std::string> omega_names() const {
    std::vector<std::string> names;
    static const char* enc_part[] = {"Ws", "Us", "bs", "Wk", "bk", "Wl", "bl"};
    for (int l = 0; l < enc.L(); ++l)
      for (const char* p : enc_part) names.push_back(strf("encoder.layer", l + 1, ".", p));
    names.push_back("lm.W_e");
    static const char* lm_part[] = {"W", "U", "b", "Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"};
    for (int l = 0; l < lm.L(); ++l)
      for (const char* p : lm_part) names.push_back(strf("lm.layer", l + 1, ".", p));
    names.push_back("lm.W_o");
    names.push_back("lm.b_o");
    return names;
  }
};

namespace detail_ckpt {

inline constexpr char magic[4] = {'R', 'G', 'B', 'N'};
inline constexpr std::uint32_t version = 1;

inline void wr_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void wr_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  wr_bytes(os, b, 4);
}

inline void wr_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  wr_bytes(os, b, 8);
}

inline void wr_f64(std::ostream& os, double v) { wr_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void rd_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) fail_data("checkpoint file is truncated");
}

inline std::uint32_t rd_u32(std::istream& is) {
  unsigned char b[4];
  rd_bytes(is, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t rd_u64(std::istream& is) {
  unsigned char b[8];
  rd_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double rd_f64(std::istream& is) { return std::bit_cast<double>(rd_u64(is)); }

inline void wr_vec(std::ostream& os, const std::vector<double>& v) {
  wr_u64(os, v.size());
  for (double x : v) wr_f64(os, x);
}

inline std::vector<double> rd_vec(std::istream& is) {
  std::uint64_t n = rd_u64(is);
  std::vector<double> v(n);
  for (auto& x : v) x = rd_f64(is);
  return v;
}

inline void wr_mat(std::ostream& os, const Mat& m) {
  wr_u32(os, static_cast<std::uint32_t>(m.rows));
  wr_u32(os, static_cast<std::uint32_t>(m.cols));
  wr_vec(os, m.v);
}

inline Mat rd_mat(std::istream& is) {
  Mat m;
  m.rows = static_cast<int>(rd_u32(is));
  m.cols = static_cast<int>(rd_u32(is));
  m.v = rd_vec(is);
  require(m.v.size() == static_cast<std::size_t>(m.rows) * m.cols, errkind::data,
          "checkpoint matrix size disagrees with its header");
  return m;
}

// tensor payloads replace values in an already-shaped model, so only sizes
// need to agree
inline void rd_into_tensor(std::istream& is, const Tensor& t, const std::string& name) {
  std::vector<double> v = rd_vec(is);
  require(v.size() == t->val.size(), errkind::data,
          strf("checkpoint tensor ", name, " holds ", v.size(), " values, model expects ",
               t->val.size()));
  t->val = std::move(v);
}

}  // namespace detail_ckpt

inline void save_checkpoint(const std::string& path, const Model& m, const AdamState& adam,
                            const RngState& rng) {
  using namespace detail_ckpt;
  std::ofstream os(path, std::ios::binary);
  if (!os) fail_data(strf("cannot write checkpoint: ", path));
  wr_bytes(os, magic, 4);
  wr_u32(os, version);
  wr_u64(os, config_hash(m.cfg));

  wr_u32(os, static_cast<std::uint32_t>(m.lm.V));
  wr_u32(os, static_cast<std::uint32_t>(m.topic.Vc));
  wr_u32(os, static_cast<std::uint32_t>(m.topic.L()));

  for (int l = 0; l < m.topic.L(); ++l) wr_mat(os, m.topic.Phi[l]);
  for (int l = 0; l < m.topic.L(); ++l) wr_mat(os, m.topic.Pi[l]);

  auto params = m.omega();
  wr_u64(os, params.size());
  for (const auto& t : params) wr_vec(os, t->val);

  wr_f64(os, m.mcmc.sched.eps0);
  wr_f64(os, m.mcmc.sched.kappa);
  wr_u64(os, static_cast<std::uint64_t>(m.mcmc.sched.n));
  for (const auto& p : m.mcmc.P_phi) wr_vec(os, p);
  for (const auto& p : m.mcmc.P_pi) wr_vec(os, p);

  wr_u64(os, static_cast<std::uint64_t>(adam.t));
  wr_u64(os, adam.m.size());
  for (const auto& v : adam.m) wr_vec(os, v);
  for (const auto& v : adam.v) wr_vec(os, v);

  wr_u64(os, rng.key);
  wr_u64(os, rng.ctr);
  if (!os) fail_data(strf("write failure on checkpoint: ", path));
}

struct Checkpoint {
  Model model;
  AdamState adam;
  RngState rng;
};

// Rebuilds the model under `cfg` and overwrites every learned value from the
// file. The stored config hash must match: training state is only meaningful
// under the configuration that produced it.
inline Checkpoint load_checkpoint(const std::string& path, const RunConfig& cfg) {
  using namespace detail_ckpt;
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_data(strf("checkpoint file not found: ", path));
  char got[4];
  rd_bytes(is, got, 4);
  require(std::equal(got, got + 4, magic), errkind::data,
          strf(path, " is not a checkpoint file (bad magic)"));
  std::uint32_t ver = rd_u32(is);
  require(ver == version, errkind::data,
          strf("checkpoint ", path, " uses format version ", ver, ", this build reads version ",
               version));
  std::uint64_t hash = rd_u64(is);
  require(hash == config_hash(cfg), errkind::config,
          strf("checkpoint ", path, " was written under a different configuration (hash ",
               hex64(hash), ", current ", hex64(config_hash(cfg)),
               "); rerun with the original config file and flags"));

  int V = static_cast<int>(rd_u32(is));
  int Vc = static_cast<int>(rd_u32(is));
  int L = static_cast<int>(rd_u32(is));
  require(L == static_cast<int>(cfg.topic_sizes.size()), errkind::data,
          strf("checkpoint stores ", L, " layers, config defines ", cfg.topic_sizes.size()));

  Checkpoint ck;
  RngState init_rng = seed_rng(cfg.seed);  // placeholder values, all overwritten below
  ck.model = Model::init(cfg, V, Vc, init_rng);

  for (int l = 0; l < L; ++l) {
    Mat phi = rd_mat(is);
    require(phi.rows == ck.model.topic.Phi[l].rows && phi.cols == ck.model.topic.Phi[l].cols,
            errkind::data, strf("checkpoint topic matrix for layer ", l + 1, " has shape ", phi.rows,
                                "x", phi.cols, ", model expects ", ck.model.topic.Phi[l].rows, "x",
                                ck.model.topic.Phi[l].cols));
    ck.model.topic.Phi[l] = std::move(phi);
  }
  for (int l = 0; l < L; ++l) {
    Mat pi = rd_mat(is);
    require(pi.rows == ck.model.topic.Pi[l].rows && pi.cols == ck.model.topic.Pi[l].cols,
            errkind::data, strf("checkpoint transition matrix for layer ", l + 1, " has bad shape"));
    ck.model.topic.Pi[l] = std::move(pi);
  }

  auto params = ck.model.omega();
  auto names = ck.model.omega_names();
  std::uint64_t np = rd_u64(is);
  require(np == params.size(), errkind::data,
          strf("checkpoint stores ", np, " parameter tensors, model expects ", params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) rd_into_tensor(is, params[i], names[i]);

  ck.model.mcmc.sched.eps0 = rd_f64(is);
  ck.model.mcmc.sched.kappa = rd_f64(is);
  ck.model.mcmc.sched.n = static_cast<long long>(rd_u64(is));
  for (auto& p : ck.model.mcmc.P_phi) {
    std::vector<double> v = rd_vec(is);
    require(v.size() == p.size(), errkind::data, "checkpoint preconditioner size mismatch");
    p = std::move(v);
  }
  for (auto& p : ck.model.mcmc.P_pi) {
    std::vector<double> v = rd_vec(is);
    require(v.size() == p.size(), errkind::data, "checkpoint preconditioner size mismatch");
    p = std::move(v);
  }

  ck.adam.t = static_cast<long long>(rd_u64(is));
  std::uint64_t na = rd_u64(is);
  require(na == params.size(), errkind::data, "checkpoint optimizer state count mismatch");
  ck.adam.m.resize(na);
  ck.adam.v.resize(na);
  for (auto& v : ck.adam.m) v = rd_vec(is);
  for (auto& v : ck.adam.v) v = rd_vec(is);
  for (std::size_t i = 0; i < na; ++i)
    require(ck.adam.m[i].size() == params[i]->val.size() &&
                ck.adam.v[i].size() == params[i]->val.size(),
            errkind::data, strf("checkpoint optimizer state for ", names[i], " has wrong size"));

  ck.rng.key = rd_u64(is);
  ck.rng.ctr = rd_u64(is);
  return ck;
}

}  // namespace rgbn
