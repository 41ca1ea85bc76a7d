#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rgbn/corpus.hpp"
#include "rgbn/inference.hpp"
#include "rgbn/model.hpp"

namespace rgbn {

// Posterior topic weights for every sentence of one document, as plain values.
// Recurrent models read each sentence's variational Weibull directly; with
// recurrence off the shape parameter is augmented top-down by the hierarchy
// before taking the mean or drawing, mirroring the training-time posterior.
// mean: lambda * Gamma(1 + 1/k); sample: lambda * (-log(1-u))^(1/k).
inline std::vector<std::vector<std::vector<double>>> eval_theta_values(
    const Model& m, const std::vector<std::vector<double>>& d, bool sample, RngState* rng) {
  require(!sample || rng != nullptr, errkind::numeric, "sampled thetas need a random stream");
  const TopicModelParams& tp = m.topic;
  EncodedDoc ed = encode_document(m.enc, d, m.cfg.recurrent);
  const int J = ed.J, L = ed.L;
  std::vector<std::vector<std::vector<double>>> out(J, std::vector<std::vector<double>>(L));
  for (int j = 0; j < J; ++j) {
    for (int l = L - 1; l >= 0; --l) {
      const double k_head = ed.k[j][l]->val[0];
      const std::vector<double>& lam = ed.lam[j][l]->val;
      const int K = static_cast<int>(lam.size());
      std::vector<double> shape(K, k_head);
      if (!m.cfg.recurrent && l < L - 1) {
        std::vector<double> hier = mat_vec(tp.Phi[l + 1], out[j][l + 1]);
        for (int i = 0; i < K; ++i) shape[i] += hier[i];
      }
      std::vector<double> th(K);
      for (int i = 0; i < K; ++i) {
        if (sample) {
          th[i] = weibull_from_uniform(uniform01(*rng), shape[i], lam[i]);
        } else {
          th[i] = weibull_mean(shape[i], lam[i]);
        }
      }
      out[j][l] = std::move(th);
    }
  }
  return out;
}

inline std::vector<Tensor> theta_tensors(const std::vector<std::vector<double>>& layers) {
  std::vector<Tensor> out;
  for (const auto& v : layers) out.push_back(constant(v));
  return out;
}

struct EvalRow {
  int doc = 0, sentence = 0, position = 0, token = 0;
  double logp = 0.0;
};

struct PplResult {
  double ppl = 0.0;
  double logp_sum = 0.0;
  long long tokens = 0;
};

// exp(-mean target log-probability); thetas come from the encoder run on the
// chosen context mode, dropout stays off
inline PplResult perplexity(const Model& m, const std::vector<Document>& docs, const Vocab& vocab,
                            ContextMode mode, bool count_eos = true, bool sample_theta = false,
                            RngState* rng = nullptr, std::vector<EvalRow>* rows = nullptr) {
  require(!docs.empty(), errkind::data, "perplexity: empty corpus");
  PplResult r;
  for (std::size_t di = 0; di < docs.size(); ++di) {
    const Document& doc = docs[di];
    if (doc.J() == 0) continue;
    std::vector<std::vector<double>> d;
    for (int j = 1; j <= doc.J(); ++j) {
      auto counts = make_context(doc, j, mode, vocab);
      d.emplace_back(counts.begin(), counts.end());
    }
    auto thetas = eval_theta_values(m, d, sample_theta, rng);
    for (int j = 0; j < doc.J(); ++j) {
      std::vector<int> ids = doc.lm[j];
      if (static_cast<int>(ids.size()) > m.cfg.max_sentence_len) ids.resize(m.cfg.max_sentence_len);
      std::vector<int> inputs{Vocab::bos}, targets;
      for (int id : ids) {
        inputs.push_back(id);
        targets.push_back(id);
      }
      targets.push_back(Vocab::eos);
      LmForward fw = forward_sentence(m.lm, theta_tensors(thetas[j]), inputs, targets, nullptr);
      int scored = static_cast<int>(targets.size()) - (count_eos ? 0 : 1);
      for (int t = 0; t < scored; ++t) {
        double lp = fw.target_logp[t]->val[0];
        r.logp_sum += lp;
        ++r.tokens;
        if (rows) rows->push_back({static_cast<int>(di), j, t, targets[t], lp});
      }
    }
  }
  require(r.tokens > 0, errkind::data, "perplexity: no tokens to score");
  r.ppl = std::exp(-r.logp_sum / static_cast<double>(r.tokens));
  return r;
}

inline void token_logprob_csv(const std::vector<EvalRow>& rows, std::ostream& os) {
  os << "doc,sentence,position,token,logp\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.doc << ',' << r.sentence << ',' << r.position << ',' << r.token << ',' << r.logp << '\n';
}

// ---- generation ----

struct TopicSpecEntry {
  int layer = 1;  // 1-based, 1 is the word-facing layer
  int topic = 0;
  double magnitude = 1.0;
};

enum class GenMode { from_noise, single_topic, combination, conditioned };

struct GenerationSpec {
  GenMode mode = GenMode::from_noise;
  std::vector<TopicSpecEntry> topics;
  bool greedy = true;
  double temperature = 1.0;
  int max_len = 30;
};

// "layer:topic[:magnitude]" entries, comma-separated, e.g. "2:5:3.0,1:0"
inline std::vector<TopicSpecEntry> parse_topic_entries(const std::string& s) {
  std::vector<TopicSpecEntry> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    TopicSpecEntry e;
    int fields = 0;
    std::istringstream fs(item);
    std::string part;
    while (std::getline(fs, part, ':')) {
      try {
        std::size_t pos = 0;
        if (fields == 0)
          e.layer = std::stoi(part, &pos);
        else if (fields == 1)
          e.topic = std::stoi(part, &pos);
        else if (fields == 2)
          e.magnitude = std::stod(part, &pos);
        else
          fail_config(strf("topic entry has too many fields: ", item));
        require(pos == part.size(), errkind::config, "");
      } catch (const error&) {
        throw;
      } catch (...) {
        fail_config(strf("cannot parse topic entry '", item, "', expected layer:topic[:magnitude]"));
      }
      ++fields;
    }
    require(fields >= 2, errkind::config,
            strf("topic entry '", item, "' needs at least layer:topic"));
    out.push_back(e);
  }
  require(!out.empty(), errkind::config, "empty topic list");
  return out;
}

// Topic weights for unconditioned generation. from-noise draws the top layer
// from Gam(1, tau0); topic-directed modes place scaled one-hots at their
// layers. Either way layer l then adds a Gam(Phi^{l+1} theta^{l+1}, tau0)
// draw propagated downward, so a directed upper layer still shapes the lower
// ones.
inline std::vector<std::vector<double>> gen_theta(const TopicModelParams& tp,
                                                  const GenerationSpec& spec, RngState& rng) {
  const int L = tp.L();
  std::vector<std::vector<double>> pinned(L);
  for (int l = 0; l < L; ++l) pinned[l].assign(tp.K[l], 0.0);
  if (spec.mode == GenMode::single_topic)
    require(spec.topics.size() == 1, errkind::config, "single-topic generation takes exactly one topic");
  if (spec.mode == GenMode::single_topic || spec.mode == GenMode::combination) {
    require(!spec.topics.empty(), errkind::config, "topic-directed generation needs at least one topic");
    for (const auto& e : spec.topics) {
      require(e.layer >= 1 && e.layer <= L, errkind::config,
              strf("generation topic layer ", e.layer, " outside 1..", L));
      require(e.topic >= 0 && e.topic < tp.K[e.layer - 1], errkind::config,
              strf("topic ", e.topic, " outside layer ", e.layer, "'s 0..", tp.K[e.layer - 1] - 1));
      require(e.magnitude > 0, errkind::config, "topic magnitude must be positive");
      pinned[e.layer - 1][e.topic] += e.magnitude;
    }
  }
  std::vector<std::vector<double>> theta(L);
  for (int l = L - 1; l >= 0; --l) {
    theta[l] = pinned[l];
    if (l == L - 1 && spec.mode == GenMode::from_noise) {
      for (int k = 0; k < tp.K[l]; ++k) theta[l][k] += sample_gamma(1.0, tp.tau0, rng);
    } else if (l < L - 1) {
      std::vector<double> shape = mat_vec(tp.Phi[l + 1], theta[l + 1]);
      for (int k = 0; k < tp.K[l]; ++k)
        if (shape[k] > 0) theta[l][k] += sample_gamma(shape[k], tp.tau0, rng);
    }
  }
  return theta;
}

// Greedy or tempered-softmax decoding from a zero LM state. The returned
// sequence excludes the terminating end-of-sentence id; begin-of-sentence and
// padding ids are suppressed since they never appear as training targets.
inline std::vector<int> decode_sentence(const LmParams& lm, const std::vector<Tensor>& theta,
                                        bool greedy, double temperature, int max_len,
                                        RngState& rng) {
  require(max_len >= 1, errkind::config, "max_len must be positive");
  require(temperature > 0, errkind::config, "temperature must be positive");
  LmState st = lm_init_state(lm);
  int tok = Vocab::bos;
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len) {
    Tensor logits = lm_step_logits(lm, st, tok, theta, nullptr, 0);
    std::vector<double> z = logits->val;
    z[Vocab::bos] = -std::numeric_limits<double>::infinity();
    z[Vocab::pad] = -std::numeric_limits<double>::infinity();
    int next;
    if (greedy) {
      next = argmax_index(z);
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (double x : z) mx = std::max(mx, x);
      std::vector<double> w(z.size());
      double tot = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        w[i] = std::isfinite(z[i]) ? std::exp((z[i] - mx) / temperature) : 0.0;
        tot += w[i];
      }
      double u = uniform01(rng) * tot;
      next = static_cast<int>(z.size()) - 1;
      double acc = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) {
          next = static_cast<int>(i);
          break;
        }
      }
    }
    if (next == Vocab::eos) break;
    out.push_back(next);
    tok = next;
  }
  return out;
}

inline std::vector<int> generate_sentence(const Model& m, const GenerationSpec& spec, RngState& rng) {
  require(spec.mode != GenMode::conditioned, errkind::config,
          "conditioned generation runs through generate_paragraph");
  auto theta = gen_theta(m.topic, spec, rng);
  return decode_sentence(m.lm, theta_tensors(theta), spec.greedy, spec.temperature, spec.max_len, rng);
}

// One sentence per position of the conditioning document: the encoder turns
// the document's context sequence into theta_1..theta_J, each decoded
// independently from a zero LM state.
inline std::vector<std::vector<int>> generate_paragraph(const Model& m, const Document& doc,
                                                        const Vocab& vocab, ContextMode mode,
                                                        const GenerationSpec& spec, bool sample_theta,
                                                        RngState& rng) {
  require(doc.J() >= 1, errkind::data, "generate_paragraph: empty document");
  std::vector<std::vector<double>> d;
  for (int j = 1; j <= doc.J(); ++j) {
    auto counts = make_context(doc, j, mode, vocab);
    d.emplace_back(counts.begin(), counts.end());
  }
  auto thetas = eval_theta_values(m, d, sample_theta, &rng);
  std::vector<std::vector<int>> out;
  for (int j = 0; j < doc.J(); ++j)
    out.push_back(decode_sentence(m.lm, theta_tensors(thetas[j]), spec.greedy, spec.temperature,
                                  spec.max_len, rng));
  return out;
}

// ---- corpus-level BLEU ----

namespace detail_bleu {

inline std::map<std::vector<std::string>, long long> ngram_counts(const std::vector<std::string>& s,
                                                                  int g) {
  std::map<std::vector<std::string>, long long> c;
  for (int i = 0; i + g <= static_cast<int>(s.size()); ++i)
    ++c[std::vector<std::string>(s.begin() + i, s.begin() + i + g)];
  return c;
}

}  // namespace detail_bleu

inline constexpr double bleu_floor = 1e-9;  // smoothing mass for zero-match orders

// Corpus-level BLEU-n: uniform 1/n weights over clipped n-gram precisions and
// a closest-reference-length brevity penalty (ties break toward the shorter
// reference). refs[i] lists the references for candidates[i]. Orders with no
// match anywhere take a documented epsilon numerator so the score stays
// finite on disjoint sets.
inline double bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::vector<std::string>>>& refs, int n) {
  require(n >= 1, errkind::config, strf("bleu order must be positive, got ", n));
  require(!candidates.empty(), errkind::data, "bleu: no candidates");
  require(refs.size() == candidates.size(), errkind::data,
          strf("bleu: ", candidates.size(), " candidates but ", refs.size(), " reference lists"));
  long long c_tot = 0, r_tot = 0;
  std::vector<long long> matched(n + 1, 0), total(n + 1, 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    require(!refs[i].empty(), errkind::data, strf("bleu: candidate ", i, " has no references"));
    const long long clen = static_cast<long long>(cand.size());
    c_tot += clen;
    long long best = static_cast<long long>(refs[i][0].size());
    for (const auto& ref : refs[i]) {
      long long rl = static_cast<long long>(ref.size());
      long long d_new = std::llabs(rl - clen), d_old = std::llabs(best - clen);
      if (d_new < d_old || (d_new == d_old && rl < best)) best = rl;
    }
    r_tot += best;
    for (int g = 1; g <= n; ++g) {
      total[g] += std::max<long long>(0, clen - g + 1);
      auto cg = detail_bleu::ngram_counts(cand, g);
      for (const auto& [gram, count] : cg) {
        long long cap = 0;
        for (const auto& ref : refs[i]) {
          auto rg = detail_bleu::ngram_counts(ref, g);
          auto it = rg.find(gram);
          if (it != rg.end()) cap = std::max(cap, it->second);
        }
        matched[g] += std::min(count, cap);
      }
    }
  }
  if (c_tot == 0) return 0.0;
  double logp = 0.0;
  for (int g = 1; g <= n; ++g) {
    double pg;
    if (total[g] == 0)
      pg = bleu_floor;
    else if (matched[g] > 0)
      pg = static_cast<double>(matched[g]) / static_cast<double>(total[g]);
    else
      pg = bleu_floor / static_cast<double>(total[g]);
    logp += std::log(pg) / n;
  }
  double bp = c_tot >= r_tot ? 1.0 : std::exp(1.0 - static_cast<double>(r_tot) / c_tot);
  return bp * std::exp(logp);
}

// diversity measure: each candidate scored against all the others, averaged
inline double self_bleu(const std::vector<std::vector<std::string>>& candidates, int n) {
  require(candidates.size() >= 2, errkind::data, "self-bleu needs at least two candidates");
  double acc = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::vector<std::vector<std::string>> others;
    for (std::size_t j = 0; j < candidates.size(); ++j)
      if (j != i) others.push_back(candidates[j]);
    acc += bleu({candidates[i]}, {others}, n);
  }
  return acc / static_cast<double>(candidates.size());
}

// ---- hidden-state norm traces ----

struct NormTrace {
  std::vector<std::vector<double>> norms;             // [layer][position]
  std::vector<std::vector<std::vector<double>>> h;    // [position][layer] raw states
};

inline NormTrace norm_trace(const LmParams& lm, const std::vector<Tensor>& theta,
                            const std::vector<int>& inputs) {
  require(!inputs.empty(), errkind::data, "norm_trace: empty input sequence");
  NormTrace tr;
  tr.norms.assign(lm.L(), {});
  LmState st = lm_init_state(lm);
  for (int t = 0; t < static_cast<int>(inputs.size()); ++t) {
    lm_step_logits(lm, st, inputs[t], theta, nullptr, 0);
    std::vector<std::vector<double>> states;
    for (int l = 0; l < lm.L(); ++l) {
      double s = 0.0;
      for (double x : st.h[l]->val) s += x * x;
      tr.norms[l].push_back(std::sqrt(s));
      states.push_back(st.h[l]->val);
    }
    tr.h.push_back(std::move(states));
  }
  return tr;
}

inline void norm_trace_csv(const NormTrace& tr, std::ostream& os) {
  os << "layer,position,norm\n";
  os.precision(17);
  for (std::size_t l = 0; l < tr.norms.size(); ++l)
    for (std::size_t t = 0; t < tr.norms[l].size(); ++t)
      os << (l + 1) << ',' << t << ',' << tr.norms[l][t] << '\n';
}

}  // namespace rgbn
