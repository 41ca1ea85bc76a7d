#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rgbn/common.hpp"

namespace rgbn {

struct RunConfig {
  // data
  std::string corpus_path, stopwords_path;
  int min_count = 10;
  double trim_fraction = 0.001;
  int max_sentence_len = 30;
  // model
  int embedding_dim = 300;
  std::vector<int> lstm_sizes = {600};
  std::vector<int> topic_sizes = {100};
  double tau0 = 1.0, eta0 = 0.01, eta_pi = 0.01;
  bool recurrent = true, flipped = false, log1p_context = false;
  double init_scale = 0.08;
  // train
  int batch_size = 8, epochs = 5;
  double learning_rate = 1e-3, clip_norm = 5.0, dropout = 0.4;
  unsigned long long seed = 1;
  double eps0 = 0.1, kappa = 0.7;
  std::string train_context = "leave_one_out";
  // eval
  std::string eval_context = "preceding";
  bool count_eos = true;
  std::string theta_mode = "mean";
  // generate
  std::string gen_mode = "from-noise";
  int gen_max_len = 30;
  std::string gen_decode = "greedy";
  double gen_temperature = 1.0;
  int gen_layer = 1, gen_topic = 0;
  double gen_magnitude = 1.0;
  std::string gen_topics;  // combination mode: layer:topic[:magnitude] entries, comma-separated
  int gen_count = 1;

  void validate() const {
    require(min_count >= 1, errkind::config, "data.min_count must be at least 1");
    require(trim_fraction >= 0.0 && trim_fraction < 1.0, errkind::config,
            "data.trim_fraction must lie in [0,1)");
    require(max_sentence_len >= 1, errkind::config, "data.max_sentence_len must be positive");
    require(embedding_dim >= 1, errkind::config, "model.embedding_dim must be positive");
    require(!lstm_sizes.empty() && lstm_sizes.size() == topic_sizes.size(), errkind::config,
            strf("model.lstm_sizes and model.topic_sizes must list the same number of layers, got ",
                 lstm_sizes.size(), " and ", topic_sizes.size()));
    for (int h : lstm_sizes) require(h >= 1, errkind::config, "model.lstm_sizes entries must be positive");
    for (int k : topic_sizes) require(k >= 1, errkind::config, "model.topic_sizes entries must be positive");
    require(tau0 > 0 && eta0 > 0 && eta_pi > 0, errkind::config,
            "model.tau0, model.eta0, model.eta_pi must be positive");
    require(init_scale > 0, errkind::config, "model.init_scale must be positive");
    require(batch_size >= 1 && epochs >= 0, errkind::config,
            "train.batch_size must be positive and train.epochs nonnegative");
    require(learning_rate >= 0 && clip_norm > 0, errkind::config,
            "train.learning_rate must be nonnegative and train.clip_norm positive");
    require(dropout >= 0.0 && dropout < 1.0, errkind::config, "train.dropout must lie in [0,1)");
    require(eps0 >= 0 && kappa > 0, errkind::config, "train.eps0 must be nonnegative, train.kappa positive");
    require(train_context == "leave_one_out" || train_context == "preceding", errkind::config,
            strf("train.context_mode must be leave_one_out or preceding, got ", train_context));
    require(eval_context == "leave_one_out" || eval_context == "preceding", errkind::config,
            strf("eval.context_mode must be leave_one_out or preceding, got ", eval_context));
    require(theta_mode == "mean" || theta_mode == "sample", errkind::config,
            strf("eval.theta_mode must be mean or sample, got ", theta_mode));
    require(gen_mode == "from-noise" || gen_mode == "single-topic" || gen_mode == "combination" ||
                gen_mode == "conditioned",
            errkind::config, strf("generate.mode not recognized: ", gen_mode));
    require(gen_decode == "greedy" || gen_decode == "sample", errkind::config,
            strf("generate.decode must be greedy or sample, got ", gen_decode));
    require(gen_max_len >= 1 && gen_count >= 1, errkind::config,
            "generate.max_len and generate.count must be positive");
    require(gen_temperature > 0, errkind::config, "generate.temperature must be positive");
    require(gen_layer >= 1 && gen_layer <= static_cast<int>(topic_sizes.size()), errkind::config,
            strf("generate.layer ", gen_layer, " outside 1..", topic_sizes.size()));
    require(gen_topic >= 0 && gen_topic < topic_sizes[gen_layer - 1], errkind::config,
            strf("generate.topic ", gen_topic, " outside layer ", gen_layer, "'s 0..",
                 topic_sizes[gen_layer - 1] - 1));
    require(gen_magnitude > 0, errkind::config, "generate.magnitude must be positive");
  }
};

namespace detail_config {

inline int to_int(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    require(pos == s.size(), errkind::config, "");
    return v;
  } catch (...) {
    fail_config(strf("config key ", key, " expects an integer, got '", s, "'"));
  }
}

inline double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    require(pos == s.size(), errkind::config, "");
    return v;
  } catch (...) {
    fail_config(strf("config key ", key, " expects a number, got '", s, "'"));
  }
}

inline bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  fail_config(strf("config key ", key, " expects true/false, got '", s, "'"));
}

inline unsigned long long to_u64(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    require(pos == s.size(), errkind::config, "");
    return v;
  } catch (...) {
    fail_config(strf("config key ", key, " expects a nonnegative integer, got '", s, "'"));
  }
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(to_int(key, item));
  require(!out.empty(), errkind::config, strf("config key ", key, " expects a comma-separated list"));
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// round-trip precision so the canonical form (and its hash) sees every digit
inline std::string full(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail_config

// schema: one row per key, shared by the file parser and the flag mirror
struct ConfigKey {
  std::string name;  // "section.key"
  std::string kind;  // int | float | bool | string | int-list | u64
  std::function<void(RunConfig&, const std::string&)> apply;
  std::function<std::string(const RunConfig&)> render;
};

inline const std::vector<ConfigKey>& config_schema() {
  using namespace detail_config;
  static const std::vector<ConfigKey> schema = {
      {"data.corpus", "string", [](RunConfig& c, const std::string& v) { c.corpus_path = v; },
       [](const RunConfig& c) { return c.corpus_path; }},
      {"data.stopwords", "string", [](RunConfig& c, const std::string& v) { c.stopwords_path = v; },
       [](const RunConfig& c) { return c.stopwords_path; }},
      {"data.min_count", "int",
       [](RunConfig& c, const std::string& v) { c.min_count = to_int("data.min_count", v); },
       [](const RunConfig& c) { return strf(c.min_count); }},
      {"data.trim_fraction", "float",
       [](RunConfig& c, const std::string& v) { c.trim_fraction = to_double("data.trim_fraction", v); },
       [](const RunConfig& c) { return detail_config::full(c.trim_fraction); }},
      {"data.max_sentence_len", "int",
       [](RunConfig& c, const std::string& v) { c.max_sentence_len = to_int("data.max_sentence_len", v); },
       [](const RunConfig& c) { return strf(c.max_sentence_len); }},
      {"model.embedding_dim", "int",
       [](RunConfig& c, const std::string& v) { c.embedding_dim = to_int("model.embedding_dim", v); },
       [](const RunConfig& c) { return strf(c.embedding_dim); }},
      {"model.lstm_sizes", "int-list",
       [](RunConfig& c, const std::string& v) { c.lstm_sizes = to_int_list("model.lstm_sizes", v); },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.lstm_sizes.size(); ++i) s += (i ? "," : "") + strf(c.lstm_sizes[i]);
         return s;
       }},
      {"model.topic_sizes", "int-list",
       [](RunConfig& c, const std::string& v) { c.topic_sizes = to_int_list("model.topic_sizes", v); },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.topic_sizes.size(); ++i) s += (i ? "," : "") + strf(c.topic_sizes[i]);
         return s;
       }},
      {"model.tau0", "float", [](RunConfig& c, const std::string& v) { c.tau0 = to_double("model.tau0", v); },
       [](const RunConfig& c) { return detail_config::full(c.tau0); }},
      {"model.eta0", "float", [](RunConfig& c, const std::string& v) { c.eta0 = to_double("model.eta0", v); },
       [](const RunConfig& c) { return detail_config::full(c.eta0); }},
      {"model.eta_pi", "float",
       [](RunConfig& c, const std::string& v) { c.eta_pi = to_double("model.eta_pi", v); },
       [](const RunConfig& c) { return detail_config::full(c.eta_pi); }},
      {"model.recurrent", "bool",
       [](RunConfig& c, const std::string& v) { c.recurrent = to_bool("model.recurrent", v); },
       [](const RunConfig& c) { return c.recurrent ? "true" : "false"; }},
      {"model.flipped", "bool",
       [](RunConfig& c, const std::string& v) { c.flipped = to_bool("model.flipped", v); },
       [](const RunConfig& c) { return c.flipped ? "true" : "false"; }},
      {"model.log1p_context", "bool",
       [](RunConfig& c, const std::string& v) { c.log1p_context = to_bool("model.log1p_context", v); },
       [](const RunConfig& c) { return c.log1p_context ? "true" : "false"; }},
      {"model.init_scale", "float",
       [](RunConfig& c, const std::string& v) { c.init_scale = to_double("model.init_scale", v); },
       [](const RunConfig& c) { return detail_config::full(c.init_scale); }},
      {"train.batch_size", "int",
       [](RunConfig& c, const std::string& v) { c.batch_size = to_int("train.batch_size", v); },
       [](const RunConfig& c) { return strf(c.batch_size); }},
      {"train.epochs", "int",
       [](RunConfig& c, const std::string& v) { c.epochs = to_int("train.epochs", v); },
       [](const RunConfig& c) { return strf(c.epochs); }},
      {"train.learning_rate", "float",
       [](RunConfig& c, const std::string& v) { c.learning_rate = to_double("train.learning_rate", v); },
       [](const RunConfig& c) { return detail_config::full(c.learning_rate); }},
      {"train.clip_norm", "float",
       [](RunConfig& c, const std::string& v) { c.clip_norm = to_double("train.clip_norm", v); },
       [](const RunConfig& c) { return detail_config::full(c.clip_norm); }},
      {"train.dropout", "float",
       [](RunConfig& c, const std::string& v) { c.dropout = to_double("train.dropout", v); },
       [](const RunConfig& c) { return detail_config::full(c.dropout); }},
      {"train.seed", "u64", [](RunConfig& c, const std::string& v) { c.seed = to_u64("train.seed", v); },
       [](const RunConfig& c) { return strf(c.seed); }},
      {"train.eps0", "float", [](RunConfig& c, const std::string& v) { c.eps0 = to_double("train.eps0", v); },
       [](const RunConfig& c) { return detail_config::full(c.eps0); }},
      {"train.kappa", "float",
       [](RunConfig& c, const std::string& v) { c.kappa = to_double("train.kappa", v); },
       [](const RunConfig& c) { return detail_config::full(c.kappa); }},
      {"train.context_mode", "string",
       [](RunConfig& c, const std::string& v) { c.train_context = v; },
       [](const RunConfig& c) { return c.train_context; }},
      {"eval.context_mode", "string", [](RunConfig& c, const std::string& v) { c.eval_context = v; },
       [](const RunConfig& c) { return c.eval_context; }},
      {"eval.count_eos", "bool",
       [](RunConfig& c, const std::string& v) { c.count_eos = to_bool("eval.count_eos", v); },
       [](const RunConfig& c) { return c.count_eos ? "true" : "false"; }},
      {"eval.theta_mode", "string", [](RunConfig& c, const std::string& v) { c.theta_mode = v; },
       [](const RunConfig& c) { return c.theta_mode; }},
      {"generate.mode", "string", [](RunConfig& c, const std::string& v) { c.gen_mode = v; },
       [](const RunConfig& c) { return c.gen_mode; }},
      {"generate.max_len", "int",
       [](RunConfig& c, const std::string& v) { c.gen_max_len = to_int("generate.max_len", v); },
       [](const RunConfig& c) { return strf(c.gen_max_len); }},
      {"generate.decode", "string", [](RunConfig& c, const std::string& v) { c.gen_decode = v; },
       [](const RunConfig& c) { return c.gen_decode; }},
      {"generate.temperature", "float",
       [](RunConfig& c, const std::string& v) { c.gen_temperature = to_double("generate.temperature", v); },
       [](const RunConfig& c) { return detail_config::full(c.gen_temperature); }},
      {"generate.layer", "int",
       [](RunConfig& c, const std::string& v) { c.gen_layer = to_int("generate.layer", v); },
       [](const RunConfig& c) { return strf(c.gen_layer); }},
      {"generate.topic", "int",
       [](RunConfig& c, const std::string& v) { c.gen_topic = to_int("generate.topic", v); },
       [](const RunConfig& c) { return strf(c.gen_topic); }},
      {"generate.magnitude", "float",
       [](RunConfig& c, const std::string& v) { c.gen_magnitude = to_double("generate.magnitude", v); },
       [](const RunConfig& c) { return detail_config::full(c.gen_magnitude); }},
      {"generate.topics", "string", [](RunConfig& c, const std::string& v) { c.gen_topics = v; },
       [](const RunConfig& c) { return c.gen_topics; }},
      {"generate.count", "int",
       [](RunConfig& c, const std::string& v) { c.gen_count = to_int("generate.count", v); },
       [](const RunConfig& c) { return strf(c.gen_count); }},
  };
  return schema;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

// `key = value` lines under [section] headers, '#' comments, flattened to
// section.key pairs in file order
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  using detail_config::trim;
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', errkind::config, strf("config line ", lineno, ": unterminated section"));
      section = trim(line.substr(1, line.size() - 2));
      require(!section.empty(), errkind::config, strf("config line ", lineno, ": empty section name"));
      continue;
    }
    auto eq = line.find('=');
    require(eq != std::string::npos, errkind::config,
            strf("config line ", lineno, ": expected key = value, got '", line, "'"));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    require(!key.empty(), errkind::config, strf("config line ", lineno, ": empty key"));
    out.emplace_back(section.empty() ? key : section + "." + key, val);
  }
  return out;
}

inline void apply_config_pairs(RunConfig& cfg,
                               const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [key, val] : pairs) {
    const ConfigKey* k = find_config_key(key);
    if (!k) fail_config(strf("unknown config key: ", key));
    k->apply(cfg, val);
  }
}

inline RunConfig load_config(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail_config(strf("cannot open config file: ", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_pairs(cfg, parse_config_text(ss.str()));
  }
  apply_config_pairs(cfg, overrides);  // flags win over file keys
  cfg.validate();
  return cfg;
}

// canonical serialization: every key in schema order, one per line
inline std::string config_canonical(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_schema()) out += k.name + "=" + k.render(cfg) + "\n";
  return out;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(config_canonical(cfg)); }

}  // namespace rgbn
