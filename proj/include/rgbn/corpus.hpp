#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "rgbn/common.hpp"
#include "rgbn/rng.hpp"

namespace rgbn {

using TokenList = std::vector<std::string>;
using RawDocument = std::vector<TokenList>;  // sentences of tokens
using Tokenizer = std::function<TokenList(const std::string&)>;

// lowercases ASCII, splits on whitespace, and breaks ASCII punctuation into
// single-character tokens; bytes >= 0x80 pass through untouched
inline TokenList default_tokenizer(const std::string& line) {
  TokenList out;
  std::string cur;
  auto flush = [&]() { if (!cur.empty()) { out.push_back(cur); cur.clear(); } };
  auto is_word = [](unsigned char c) {
    return std::isalnum(c) || c == '\'' || c == '_' || c >= 0x80;
  };
  for (unsigned char c : line) {
    if (std::isspace(c)) { flush(); continue; }
    if (is_word(c)) { cur += static_cast<char>(std::isupper(c) ? std::tolower(c) : c); continue; }
    flush();
    out.push_back(std::string(1, static_cast<char>(c)));
  }
  flush();
  return out;
}

struct Vocab {
  // special ids live only in the LM vocabulary
  static constexpr int unk = 0, bos = 1, eos = 2, pad = 3;

  std::vector<std::string> lm_tokens;  // size V, includes the 4 specials
  std::vector<std::string> tm_tokens;  // size V_c
  std::vector<long long> lm_counts, tm_counts;
  std::unordered_map<std::string, int> lm_index, tm_index;

  int V() const { return static_cast<int>(lm_tokens.size()); }
  int Vc() const { return static_cast<int>(tm_tokens.size()); }

  int lm_id(const std::string& t) const {
    auto it = lm_index.find(t);
    return it == lm_index.end() ? unk : it->second;
  }
  int tm_id(const std::string& t) const {  // -1 when not in the topic vocabulary
    auto it = tm_index.find(t);
    return it == tm_index.end() ? -1 : it->second;
  }
};

inline std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data(strf("stopword file not found: ", path));
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) words.insert(line);
  }
  return words;
}

// corpus file: documents separated by blank lines, one sentence per line
inline std::vector<RawDocument> read_corpus_file(const std::string& path, const Tokenizer& tok = default_tokenizer) {
  std::ifstream in(path);
  if (!in) fail_data(strf("corpus file not found: ", path));
  std::vector<RawDocument> docs;
  RawDocument cur;
  std::string line;
  auto flush_doc = [&]() { if (!cur.empty()) { docs.push_back(std::move(cur)); cur.clear(); } };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) { flush_doc(); continue; }
    TokenList toks = tok(line);
    if (!toks.empty()) cur.push_back(std::move(toks));
  }
  flush_doc();
  return docs;
}

// LM vocabulary: tokens with count >= min_count, ordered by (count desc, token asc).
// TM vocabulary additionally drops stopwords and the floor(trim_fraction * |eligible|)
// most frequent eligible tokens.
inline Vocab build_vocab(const std::vector<RawDocument>& docs, long long min_count, double trim_fraction,
                         const std::set<std::string>& stopwords) {
  std::map<std::string, long long> counts;
  for (const auto& doc : docs)
    for (const auto& sent : doc)
      for (const auto& tok : sent) ++counts[tok];
  if (counts.empty()) fail_data("empty corpus");

  std::vector<std::pair<std::string, long long>> eligible;
  for (const auto& [tok, c] : counts)
    if (c >= min_count) eligible.emplace_back(tok, c);
  std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocab v;
  v.lm_tokens = {"<unk>", "<s>", "</s>", "<pad>"};
  v.lm_counts = {0, 0, 0, 0};
  for (const auto& [tok, c] : eligible) {
    v.lm_index[tok] = static_cast<int>(v.lm_tokens.size());
    v.lm_tokens.push_back(tok);
    v.lm_counts.push_back(c);
  }
  for (std::size_t i = 0; i < 4; ++i) v.lm_index[v.lm_tokens[i]] = static_cast<int>(i);

  std::size_t n_trim = static_cast<std::size_t>(trim_fraction * static_cast<double>(eligible.size()));
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    if (i < n_trim) continue;
    const auto& [tok, c] = eligible[i];
    if (stopwords.count(tok)) continue;
    v.tm_index[tok] = static_cast<int>(v.tm_tokens.size());
    v.tm_tokens.push_back(tok);
    v.tm_counts.push_back(c);
  }
  return v;
}

struct Document {
  std::vector<std::vector<int>> lm;  // per sentence, LM token ids (unk for OOV)
  std::vector<std::vector<int>> tm;  // per sentence, TM token ids only
  int J() const { return static_cast<int>(lm.size()); }
};

inline Document encode_document(const RawDocument& raw, const Vocab& vocab) {
  Document d;
  for (const auto& sent : raw) {
    if (sent.empty()) continue;
    std::vector<int> lm_ids, tm_ids;
    lm_ids.reserve(sent.size());
    for (const auto& tok : sent) {
      lm_ids.push_back(vocab.lm_id(tok));
      int t = vocab.tm_id(tok);
      if (t >= 0) tm_ids.push_back(t);
    }
    d.lm.push_back(std::move(lm_ids));
    d.tm.push_back(std::move(tm_ids));
  }
  return d;
}

enum class ContextMode { leave_one_out, preceding };

// j is 1-based; leave-one-out counts every sentence but S_j, preceding counts S_1..S_{j-1}
inline std::vector<long long> make_context(const Document& doc, int j, ContextMode mode, const Vocab& vocab) {
  if (j < 1 || j > doc.J()) fail_data(strf("context index ", j, " out of range [1,", doc.J(), "]"));
  std::vector<long long> counts(vocab.Vc(), 0);
  for (int s = 1; s <= doc.J(); ++s) {
    bool include = mode == ContextMode::leave_one_out ? (s != j) : (s < j);
    if (!include) continue;
    for (int t : doc.tm[s - 1]) ++counts[t];
  }
  return counts;
}

struct PaddedSentence {
  std::vector<int> ids;  // length max_sentence_len, <pad> beyond len
  int len = 0;           // real token count; padding is excluded from every likelihood term
};

struct BatchDoc {
  int doc_index = 0;
  std::vector<PaddedSentence> sents;
  std::vector<std::vector<long long>> contexts;  // per sentence, length V_c
};

using Batch = std::vector<BatchDoc>;

inline PaddedSentence pad_truncate(const std::vector<int>& ids, int max_len) {
  PaddedSentence p;
  p.len = std::min<int>(max_len, static_cast<int>(ids.size()));
  p.ids.assign(ids.begin(), ids.begin() + p.len);
  p.ids.resize(max_len, Vocab::pad);
  return p;
}

// deterministic shuffle + split; the short final batch is emitted.
// Truncation applies to the LM token sequence; contexts use full sentences.
inline std::vector<Batch> batches(const std::vector<Document>& docs, const Vocab& vocab, int batch_size,
                                  int max_sentence_len, ContextMode mode, std::uint64_t seed) {
  if (batch_size < 1) fail_config(strf("batch_size must be >= 1, got ", batch_size));
  std::vector<int> order(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) order[i] = static_cast<int>(i);
  RngState rng = seed_rng(seed);
  for (std::size_t i = docs.size(); i > 1; --i) {
    std::size_t k = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(order[i - 1], order[k]);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    std::size_t stop = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < stop; ++i) {
      const Document& d = docs[order[i]];
      BatchDoc bd;
      bd.doc_index = order[i];
      for (int j = 1; j <= d.J(); ++j) {
        bd.sents.push_back(pad_truncate(d.lm[j - 1], max_sentence_len));
        bd.contexts.push_back(make_context(d, j, mode, vocab));
      }
      b.push_back(std::move(bd));
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline void write_vocab_tsv(const Vocab& v, const std::string& lm_path, const std::string& tm_path) {
  std::ofstream lm(lm_path);
  if (!lm) fail_data(strf("cannot write vocab file: ", lm_path));
  for (int i = 0; i < v.V(); ++i) lm << v.lm_tokens[i] << '\t' << i << '\t' << v.lm_counts[i] << '\n';
  std::ofstream tm(tm_path);
  if (!tm) fail_data(strf("cannot write vocab file: ", tm_path));
  for (int i = 0; i < v.Vc(); ++i) tm << v.tm_tokens[i] << '\t' << i << '\t' << v.tm_counts[i] << '\n';
}

inline void read_vocab_side(const std::string& path, std::vector<std::string>& tokens,
                            std::vector<long long>& counts, std::unordered_map<std::string, int>& index) {
  std::ifstream in(path);
  if (!in) fail_data(strf("vocab file not found: ", path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      fail_data(strf("malformed vocab line in ", path, ": ", line));
    std::string tok = line.substr(0, t1);
    int id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    long long count = std::stoll(line.substr(t2 + 1));
    if (id != static_cast<int>(tokens.size()))
      fail_data(strf("vocab ids in ", path, " are not dense: expected ", tokens.size(), ", got ", id));
    tokens.push_back(tok);
    counts.push_back(count);
    index[tok] = id;
  }
}

inline Vocab read_vocab_tsv(const std::string& lm_path, const std::string& tm_path) {
  Vocab v;
  read_vocab_side(lm_path, v.lm_tokens, v.lm_counts, v.lm_index);
  read_vocab_side(tm_path, v.tm_tokens, v.tm_counts, v.tm_index);
  if (v.V() < 4 || v.lm_tokens[0] != "<unk>" || v.lm_tokens[1] != "<s>" || v.lm_tokens[2] != "</s>" ||
      v.lm_tokens[3] != "<pad>")
    fail_data(strf("LM vocab in ", lm_path, " lacks the special tokens in slots 0..3"));
  return v;
}

}  // namespace rgbn
