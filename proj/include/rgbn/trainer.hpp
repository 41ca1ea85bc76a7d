#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "rgbn/corpus.hpp"
#include "rgbn/inference.hpp"
#include "rgbn/model.hpp"
#include "rgbn/tlasgr.hpp"

namespace rgbn {

inline void adam_update(const std::vector<Tensor>& params, AdamState& st, double lr,
                        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  require(params.size() == st.m.size() && params.size() == st.v.size(), errkind::numeric,
          strf("optimizer state tracks ", st.m.size(), " tensors, update got ", params.size()));
  st.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    p->ensure_grad();
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < p->val.size(); ++k) {
      double g = p->grad[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * g;
      v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
      p->val[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

// sentence rows of a batched document, rebuilt as likelihood-ready sequences:
// inputs get begin-of-sentence prepended, targets get end-of-sentence appended,
// padding never enters either
inline DocInput doc_input_from_batch(const BatchDoc& bd) {
  DocInput di;
  for (std::size_t j = 0; j < bd.sents.size(); ++j) {
    const PaddedSentence& s = bd.sents[j];
    std::vector<int> in, tg;
    in.reserve(s.len + 1);
    tg.reserve(s.len + 1);
    in.push_back(Vocab::bos);
    for (int t = 0; t < s.len; ++t) {
      in.push_back(s.ids[t]);
      tg.push_back(s.ids[t]);
    }
    tg.push_back(Vocab::eos);
    di.inputs.push_back(std::move(in));
    di.targets.push_back(std::move(tg));
    di.d.emplace_back(bd.contexts[j].begin(), bd.contexts[j].end());
  }
  return di;
}

struct StepMetrics {
  long long step = 0;
  double elbo = 0.0, poisson_ll = 0.0, word_ll = 0.0, kl = 0.0;
  double grad_norm = 0.0, eps_n = 0.0;
  long long tokens = 0;
};

inline std::string metrics_csv_header() { return "step,elbo,poisson_ll,word_ll,kl,grad_norm,eps_n"; }

inline std::string metrics_csv_row(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.step << ',' << m.elbo << ',' << m.poisson_ll << ',' << m.word_ll << ',' << m.kl << ','
     << m.grad_norm << ',' << m.eps_n;
  return os.str();
}

// One pass of the hybrid update. Order within the step: draw noise, build the
// bound, gradient step on the encoder and language model, then refresh the
// topic matrices by stochastic-gradient MCMC reusing the very theta samples
// the bound was computed from. `corpus_docs` scales the batch counts up to
// corpus totals for the MCMC side.
inline StepMetrics train_step(Model& model, AdamState& adam, const Batch& batch,
                              long long corpus_docs, RngState& rng) {
  const RunConfig& cfg = model.cfg;
  require(!batch.empty(), errkind::data, "train_step: empty batch");
  require(corpus_docs >= static_cast<long long>(batch.size()), errkind::data,
          "train_step: corpus size smaller than the batch");

  StepMetrics met;
  met.eps_n = model.mcmc.sched.eps();

  auto params = model.omega();
  zero_grads(params);

  // noise first, then one bound per document on this step's samples
  std::vector<Tensor> elbos;
  std::vector<ThetaPath> thetas;
  for (const BatchDoc& bd : batch) {
    DocInput di = doc_input_from_batch(bd);
    const int J = static_cast<int>(di.d.size());
    DocEps eps = draw_doc_eps(model.topic.K, J, rng);
    std::vector<DropoutMasks> masks;
    for (int j = 0; j < J; ++j)
      masks.push_back(make_dropout_masks(static_cast<int>(di.inputs[j].size()), model.lm,
                                         cfg.dropout, rng));
    ElboResult res =
        elbo_document(model.topic, model.lm, model.enc, di, eps, &masks, cfg.recurrent);
    met.elbo += res.elbo->val[0];
    met.poisson_ll += res.poisson;
    met.word_ll += res.word;
    met.kl += res.kl;
    met.tokens += res.tokens;
    elbos.push_back(res.elbo);
    thetas.push_back(theta_values(res.theta));
  }
  require(met.tokens > 0, errkind::data, "train_step: batch has no target tokens");

  Tensor total = elbos[0];
  for (std::size_t i = 1; i < elbos.size(); ++i) total = add(total, elbos[i]);
  Tensor loss = scale(total, -1.0 / static_cast<double>(met.tokens));
  if (!std::isfinite(loss->val[0])) fail_numeric("train_step: loss is non-finite");

  backward(loss);
  auto names = model.omega_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->ensure_grad();
    if (!finite_all(params[i]->grad))
      fail_numeric(strf("train_step: non-finite gradient in ", names[i]));
  }
  met.grad_norm = global_grad_norm(params);
  clip_grads(params, cfg.clip_norm);
  adam_update(params, adam, cfg.learning_rate);
  zero_grads(params);

  // topic-side refresh on the same theta samples
  BatchAux agg = make_batch_aux(model.topic);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AuxCounts aux = augment_counts(model.topic, batch[i].contexts, thetas[i], rng, cfg.recurrent);
    accumulate_aux(agg, aux);
  }
  double rho = static_cast<double>(corpus_docs) / static_cast<double>(batch.size());
  tlasgr_step(model.topic, model.mcmc, agg, rho, rng, true, cfg.recurrent);

  met.elbo /= static_cast<double>(met.tokens);
  met.poisson_ll /= static_cast<double>(met.tokens);
  met.word_ll /= static_cast<double>(met.tokens);
  met.kl /= static_cast<double>(met.tokens);
  return met;
}

// Epoch loop over deterministic shuffles. `epoch_offset` keeps resumed runs
// from replaying the first epoch's batch order.
inline std::vector<StepMetrics> train_loop(Model& model, AdamState& adam,
                                           const std::vector<Document>& docs, const Vocab& vocab,
                                           RngState& rng, std::ostream* metrics_csv = nullptr,
                                           long long start_step = 0, int epoch_offset = 0) {
  const RunConfig& cfg = model.cfg;
  ContextMode mode = cfg.train_context == "preceding" ? ContextMode::preceding
                                                      : ContextMode::leave_one_out;
  if (metrics_csv && start_step == 0) *metrics_csv << metrics_csv_header() << '\n';
  std::vector<StepMetrics> out;
  long long step = start_step;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    std::uint64_t shuffle_seed = cfg.seed + static_cast<std::uint64_t>(ep + epoch_offset);
    auto bs = batches(docs, vocab, cfg.batch_size, cfg.max_sentence_len, mode, shuffle_seed);
    for (const Batch& b : bs) {
      StepMetrics m = train_step(model, adam, b, static_cast<long long>(docs.size()), rng);
      m.step = ++step;
      if (metrics_csv) *metrics_csv << metrics_csv_row(m) << '\n';
      out.push_back(m);
    }
  }
  return out;
}

}  // namespace rgbn
