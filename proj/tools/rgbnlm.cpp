// command-line front end: corpus prep, hybrid training, evaluation, generation
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rgbn/eval.hpp"
#include "rgbn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rgbn;

namespace {

constexpr const char* tool_version = "0.1.0";

struct Cli {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::pair<std::string, std::string>> overrides;
};

RunConfig make_config(const Cli& cli) { return load_config(cli.config_path, cli.overrides); }

void write_manifest(const Cli& cli, const RunConfig& cfg, const std::string& command) {
  json m;
  m["command"] = command;
  m["config_hash"] = hex64(config_hash(cfg));
  m["seed"] = cfg.seed;
  m["version"] = tool_version;
  std::ofstream out(fs::path(cli.out_dir) / "manifest.json");
  if (!out) fail_data(strf("cannot write manifest in ", cli.out_dir));
  out << m.dump(2) << '\n';
}

void ensure_out(const Cli& cli) {
  std::error_code ec;
  fs::create_directories(cli.out_dir, ec);
  if (ec) fail_data(strf("cannot create output directory ", cli.out_dir, ": ", ec.message()));
}

std::string vocab_lm_path(const Cli& cli) { return (fs::path(cli.out_dir) / "vocab_lm.tsv").string(); }
std::string vocab_tm_path(const Cli& cli) { return (fs::path(cli.out_dir) / "vocab_tm.tsv").string(); }
std::string ckpt_path(const Cli& cli) { return (fs::path(cli.out_dir) / "model.ckpt").string(); }

Vocab load_prepped_vocab(const Cli& cli) {
  if (!fs::exists(vocab_lm_path(cli)) || !fs::exists(vocab_tm_path(cli)))
    fail_data(strf("no vocabulary in ", cli.out_dir, "; run prep with the same --out first"));
  return read_vocab_tsv(vocab_lm_path(cli), vocab_tm_path(cli));
}

std::vector<Document> load_docs(const RunConfig& cfg, const Vocab& vocab) {
  require(!cfg.corpus_path.empty(), errkind::config, "data.corpus is not set");
  auto raw = read_corpus_file(cfg.corpus_path);
  std::vector<Document> docs;
  for (const auto& r : raw) docs.push_back(encode_document(r, vocab));
  return docs;
}

GenerationSpec spec_from_config(const RunConfig& cfg) {
  GenerationSpec spec;
  if (cfg.gen_mode == "from-noise")
    spec.mode = GenMode::from_noise;
  else if (cfg.gen_mode == "single-topic")
    spec.mode = GenMode::single_topic;
  else if (cfg.gen_mode == "combination")
    spec.mode = GenMode::combination;
  else
    spec.mode = GenMode::conditioned;
  if (spec.mode == GenMode::single_topic)
    spec.topics = {{cfg.gen_layer, cfg.gen_topic, cfg.gen_magnitude}};
  else if (spec.mode == GenMode::combination)
    spec.topics = parse_topic_entries(cfg.gen_topics);
  spec.greedy = cfg.gen_decode == "greedy";
  spec.temperature = cfg.gen_temperature;
  spec.max_len = cfg.gen_max_len;
  return spec;
}

std::string join_tokens(const std::vector<int>& ids, const Vocab& vocab) {
  std::string text;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) text += ' ';
    text += vocab.lm_tokens[ids[i]];
  }
  return text;
}

json spec_echo(const RunConfig& cfg, const GenerationSpec& spec) {
  json j;
  j["mode"] = cfg.gen_mode;
  j["decode"] = cfg.gen_decode;
  j["temperature"] = spec.temperature;
  j["max_len"] = spec.max_len;
  j["seed"] = cfg.seed;
  if (spec.mode == GenMode::single_topic || spec.mode == GenMode::combination) {
    json topics = json::array();
    for (const auto& e : spec.topics)
      topics.push_back({{"layer", e.layer}, {"topic", e.topic}, {"magnitude", e.magnitude}});
    j["topics"] = topics;
  }
  return j;
}

int run_prep(const Cli& cli) {
  RunConfig cfg = make_config(cli);
  require(!cfg.corpus_path.empty(), errkind::config, "data.corpus is not set");
  ensure_out(cli);
  auto raw = read_corpus_file(cfg.corpus_path);
  std::set<std::string> stop;
  if (!cfg.stopwords_path.empty()) stop = load_stopwords(cfg.stopwords_path);
  Vocab vocab = build_vocab(raw, cfg.min_count, cfg.trim_fraction, stop);
  write_vocab_tsv(vocab, vocab_lm_path(cli), vocab_tm_path(cli));
  long long sentences = 0;
  for (const auto& d : raw) sentences += static_cast<long long>(d.size());
  json stats;
  stats["documents"] = raw.size();
  stats["sentences"] = sentences;
  stats["lm_vocab"] = vocab.V();
  stats["tm_vocab"] = vocab.Vc();
  std::ofstream st(fs::path(cli.out_dir) / "corpus_stats.json");
  st << stats.dump(2) << '\n';
  write_manifest(cli, cfg, "prep");
  std::cout << "prep: " << raw.size() << " documents, " << sentences << " sentences, lm vocab "
            << vocab.V() << ", tm vocab " << vocab.Vc() << "\n";
  return 0;
}

int run_train(const Cli& cli, bool resume) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);
  auto docs = load_docs(cfg, vocab);
  require(!docs.empty(), errkind::data, "training corpus is empty");

  Model model;
  AdamState adam;
  RngState rng;
  long long start_step = 0;
  int epoch_offset = 0;
  long long per_epoch =
      (static_cast<long long>(docs.size()) + cfg.batch_size - 1) / cfg.batch_size;
  if (resume) {
    Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
    model = std::move(ck.model);
    adam = std::move(ck.adam);
    rng = ck.rng;
    start_step = adam.t;
    epoch_offset = static_cast<int>(adam.t / std::max<long long>(1, per_epoch));
  } else {
    rng = seed_rng(cfg.seed);
    model = Model::init(cfg, vocab.V(), vocab.Vc(), rng);
    adam = AdamState::init(model.omega());
  }

  std::ofstream metrics(fs::path(cli.out_dir) / "metrics.csv",
                        resume ? std::ios::app : std::ios::trunc);
  if (!metrics) fail_data(strf("cannot write metrics.csv in ", cli.out_dir));
  auto mets = train_loop(model, adam, docs, vocab, rng, &metrics, start_step, epoch_offset);
  save_checkpoint(ckpt_path(cli), model, adam, rng);
  write_manifest(cli, cfg, "train");
  if (!mets.empty())
    std::cout << "train: " << mets.size() << " steps, final per-token elbo "
              << mets.back().elbo << "\n";
  else
    std::cout << "train: 0 steps (epochs=" << cfg.epochs << "), checkpoint saved\n";
  return 0;
}

int run_eval_ppl(const Cli& cli) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);
  Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
  auto docs = load_docs(cfg, vocab);
  ContextMode mode =
      cfg.eval_context == "preceding" ? ContextMode::preceding : ContextMode::leave_one_out;
  bool sample = cfg.theta_mode == "sample";
  RngState rng = seed_rng(cfg.seed);
  std::vector<EvalRow> rows;
  PplResult r = perplexity(ck.model, docs, vocab, mode, cfg.count_eos, sample,
                           sample ? &rng : nullptr, &rows);
  std::ofstream csv(fs::path(cli.out_dir) / "token_logprobs.csv");
  token_logprob_csv(rows, csv);
  json out;
  out["perplexity"] = r.ppl;
  out["logp_sum"] = r.logp_sum;
  out["tokens"] = r.tokens;
  out["context_mode"] = cfg.eval_context;
  out["count_eos"] = cfg.count_eos;
  out["theta_mode"] = cfg.theta_mode;
  std::ofstream jf(fs::path(cli.out_dir) / "ppl.json");
  jf << out.dump(2) << '\n';
  write_manifest(cli, cfg, "eval-ppl");
  std::cout << "perplexity " << r.ppl << " over " << r.tokens << " tokens\n";
  return 0;
}

std::vector<std::vector<std::string>> read_sentence_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data(strf("sentence file not found: ", path));
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string w;
    while (ls >> w) toks.push_back(w);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

int run_eval_bleu(const Cli& cli, int n, const std::string& references_path,
                  const std::string& candidates_path) {
  RunConfig cfg = make_config(cli);
  require(n >= 1, errkind::config, "--n must be positive");
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);

  std::vector<std::vector<std::string>> cands;
  if (!candidates_path.empty()) {
    cands = read_sentence_lines(candidates_path);
  } else {
    Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
    GenerationSpec spec = spec_from_config(cfg);
    require(spec.mode != GenMode::conditioned, errkind::config,
            "eval-bleu generates unconditioned candidates; use generate for conditioned output");
    RngState rng = seed_rng(cfg.seed);
    for (int i = 0; i < cfg.gen_count; ++i) {
      auto ids = generate_sentence(ck.model, spec, rng);
      std::vector<std::string> toks;
      for (int id : ids) toks.push_back(vocab.lm_tokens[id]);
      cands.push_back(std::move(toks));
    }
  }
  require(!cands.empty(), errkind::data, "no candidate sentences");

  json out;
  out["n"] = n;
  out["candidates"] = cands.size();
  if (!references_path.empty()) {
    auto ref_sents = read_sentence_lines(references_path);
    require(!ref_sents.empty(), errkind::data, "reference file has no sentences");
    std::vector<std::vector<std::vector<std::string>>> refs(cands.size(), ref_sents);
    out["bleu"] = bleu(cands, refs, n);
  }
  if (cands.size() >= 2) out["self_bleu"] = self_bleu(cands, n);
  std::ofstream jf(fs::path(cli.out_dir) / "bleu.json");
  jf << out.dump(2) << '\n';
  write_manifest(cli, cfg, "eval-bleu");
  std::cout << "bleu-" << n << ": ";
  if (out.contains("bleu"))
    std::cout << out["bleu"].get<double>();
  else
    std::cout << "n/a";
  std::cout << "  self-bleu-" << n << ": ";
  if (out.contains("self_bleu"))
    std::cout << out["self_bleu"].get<double>();
  else
    std::cout << "n/a";
  std::cout << "\n";
  return 0;
}

int run_generate(const Cli& cli, int doc_index) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);
  Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
  GenerationSpec spec = spec_from_config(cfg);
  RngState rng = seed_rng(cfg.seed);

  std::ofstream jl(fs::path(cli.out_dir) / "generations.jsonl");
  if (!jl) fail_data(strf("cannot write generations.jsonl in ", cli.out_dir));
  if (spec.mode == GenMode::conditioned) {
    auto docs = load_docs(cfg, vocab);
    require(doc_index >= 0 && doc_index < static_cast<int>(docs.size()), errkind::data,
            strf("--doc-index ", doc_index, " outside corpus of ", docs.size(), " documents"));
    ContextMode mode =
        cfg.eval_context == "preceding" ? ContextMode::preceding : ContextMode::leave_one_out;
    bool sample = cfg.theta_mode == "sample";
    auto para = generate_paragraph(ck.model, docs[doc_index], vocab, mode, spec, sample, rng);
    for (std::size_t j = 0; j < para.size(); ++j) {
      json line = spec_echo(cfg, spec);
      line["doc_index"] = doc_index;
      line["sentence"] = j;
      line["tokens"] = para[j];
      line["text"] = join_tokens(para[j], vocab);
      jl << line.dump() << '\n';
      std::cout << line["text"].get<std::string>() << "\n";
    }
  } else {
    for (int i = 0; i < cfg.gen_count; ++i) {
      auto ids = generate_sentence(ck.model, spec, rng);
      json line = spec_echo(cfg, spec);
      line["index"] = i;
      line["tokens"] = ids;
      line["text"] = join_tokens(ids, vocab);
      jl << line.dump() << '\n';
      std::cout << line["text"].get<std::string>() << "\n";
    }
  }
  write_manifest(cli, cfg, "generate");
  return 0;
}

int run_export_topics(const Cli& cli, int top_n, double threshold) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);
  Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
  json topics = export_topic_hierarchy(ck.model.topic, vocab, top_n, threshold);
  std::ofstream jf(fs::path(cli.out_dir) / "topics.json");
  jf << topics.dump(2) << '\n';
  write_manifest(cli, cfg, "export-topics");
  std::cout << "exported " << topics.size() << " topics\n";
  return 0;
}

int run_trace_norms(const Cli& cli, int doc_index, int sentence_index) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  Vocab vocab = load_prepped_vocab(cli);
  Checkpoint ck = load_checkpoint(ckpt_path(cli), cfg);
  auto docs = load_docs(cfg, vocab);
  require(doc_index >= 0 && doc_index < static_cast<int>(docs.size()), errkind::data,
          strf("--doc-index ", doc_index, " outside corpus of ", docs.size(), " documents"));
  const Document& doc = docs[doc_index];
  require(sentence_index >= 0 && sentence_index < doc.J(), errkind::data,
          strf("--sentence-index ", sentence_index, " outside document of ", doc.J(),
               " sentences"));
  ContextMode mode =
      cfg.eval_context == "preceding" ? ContextMode::preceding : ContextMode::leave_one_out;
  std::vector<std::vector<double>> d;
  for (int j = 1; j <= doc.J(); ++j) {
    auto counts = make_context(doc, j, mode, vocab);
    d.emplace_back(counts.begin(), counts.end());
  }
  auto thetas = eval_theta_values(ck.model, d, false, nullptr);
  std::vector<int> ids = doc.lm[sentence_index];
  if (static_cast<int>(ids.size()) > cfg.max_sentence_len) ids.resize(cfg.max_sentence_len);
  std::vector<int> inputs{Vocab::bos};
  for (int id : ids) inputs.push_back(id);
  NormTrace tr = norm_trace(ck.model.lm, theta_tensors(thetas[sentence_index]), inputs);
  std::ofstream csv(fs::path(cli.out_dir) / "norms.csv");
  norm_trace_csv(tr, csv);
  write_manifest(cli, cfg, "trace-norms");
  std::cout << "traced " << inputs.size() << " positions over " << tr.norms.size() << " layers\n";
  return 0;
}

int run_param_count(const Cli& cli) {
  RunConfig cfg = make_config(cli);
  ensure_out(cli);
  ParamCountBreakdown pc = param_count(cfg.embedding_dim, cfg.lstm_sizes, cfg.topic_sizes);
  long long total = pc.lm_total();
  double millions = static_cast<double>(llround(static_cast<double>(total) / 1e5)) / 10.0;
  json out;
  out["embedding_dim"] = cfg.embedding_dim;
  out["lstm_sizes"] = cfg.lstm_sizes;
  out["topic_sizes"] = cfg.topic_sizes;
  out["lstm_per_layer"] = pc.lstm_per_layer;
  out["gate_per_layer"] = pc.gate_per_layer;
  out["lstm"] = pc.lstm;
  out["gates"] = pc.gates;
  out["total"] = total;
  out["human"] = strf(millions, "M");
  std::ofstream jf(fs::path(cli.out_dir) / "param_count.json");
  jf << out.dump(2) << '\n';
  write_manifest(cli, cfg, "param-count");
  for (std::size_t l = 0; l < pc.lstm_per_layer.size(); ++l)
    std::cout << "layer " << (l + 1) << ": lstm " << pc.lstm_per_layer[l] << ", gate "
              << pc.gate_per_layer[l] << "\n";
  std::cout << "lstm total: " << pc.lstm << "\n";
  std::cout << "gate total: " << pc.gates << "\n";
  std::cout << "lm total: " << total << " (" << millions << "M)\n";
  return 0;
}

void add_common(CLI::App* sub, Cli& cli) {
  sub->add_option("--config", cli.config_path, "config file (key = value with [section] headers)");
  sub->add_option("--out", cli.out_dir, "output directory (default out)");
  sub->add_option_function<std::string>(
      "--seed", [&cli](const std::string& v) { cli.overrides.emplace_back("train.seed", v); },
      "alias for --train.seed");
  for (const auto& key : config_schema())
    sub->add_option_function<std::string>(
        "--" + key.name,
        [&cli, name = key.name](const std::string& v) { cli.overrides.emplace_back(name, v); },
        strf("config key (", key.kind, ")"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recurrent hierarchical topic-guided language model"};
  app.require_subcommand(1);
  Cli cli;

  auto* prep = app.add_subcommand("prep", "build vocabularies from the corpus");
  add_common(prep, cli);

  auto* train = app.add_subcommand("train", "hybrid training loop");
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the checkpoint in --out");
  add_common(train, cli);

  auto* eval_ppl = app.add_subcommand("eval-ppl", "held-out perplexity");
  add_common(eval_ppl, cli);

  auto* eval_bleu = app.add_subcommand("eval-bleu", "corpus bleu and self-bleu");
  int bleu_n = 4;
  std::string references_path, candidates_path;
  eval_bleu->add_option("--n", bleu_n, "n-gram order (default 4)");
  eval_bleu->add_option("--references", references_path,
                        "reference sentences, one whitespace-tokenized line each");
  eval_bleu->add_option("--candidates", candidates_path,
                        "score these sentences instead of generating");
  add_common(eval_bleu, cli);

  auto* generate = app.add_subcommand("generate", "sample sentences or a conditioned paragraph");
  int gen_doc_index = 0;
  generate->add_option("--doc-index", gen_doc_index, "conditioning document (conditioned mode)");
  add_common(generate, cli);

  auto* export_topics = app.add_subcommand("export-topics", "topic hierarchy as json");
  int top_n = 10;
  double threshold = 0.05;
  export_topics->add_option("--top-n", top_n, "words per topic (default 10)");
  export_topics->add_option("--threshold", threshold, "minimum edge weight (default 0.05)");
  add_common(export_topics, cli);

  auto* trace = app.add_subcommand("trace-norms", "hidden-state norms for one sentence");
  int trace_doc = 0, trace_sent = 0;
  trace->add_option("--doc-index", trace_doc, "document index (default 0)");
  trace->add_option("--sentence-index", trace_sent, "sentence index (default 0)");
  add_common(trace, cli);

  auto* pcount = app.add_subcommand("param-count", "language-model parameter accounting");
  add_common(pcount, cli);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (prep->parsed()) return run_prep(cli);
    if (train->parsed()) return run_train(cli, resume);
    if (eval_ppl->parsed()) return run_eval_ppl(cli);
    if (eval_bleu->parsed()) return run_eval_bleu(cli, bleu_n, references_path, candidates_path);
    if (generate->parsed()) return run_generate(cli, gen_doc_index);
    if (export_topics->parsed()) return run_export_topics(cli, top_n, threshold);
    if (trace->parsed()) return run_trace_norms(cli, trace_doc, trace_sent);
    if (pcount->parsed()) return run_param_count(cli);
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
