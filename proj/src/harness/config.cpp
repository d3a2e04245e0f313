#include "cone/harness/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cone/error.hpp"

namespace cone::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::vector<Index> parse_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  for (const auto& s : split_list(v)) out.push_back(parse_u64(key, s));
  if (out.empty()) throw ConfigError(key + ": expected at least one layer width");
  return out;
}

std::string join_widths(const std::vector<Index>& v) {
  std::string out;
  for (auto w : v) out += (out.empty() ? "" : ",") + std::to_string(w);
  return out;
}

const char* weighting_name(est::DrWeighting w) {
  switch (w) {
    case est::DrWeighting::IPS: return "ips";
    case est::DrWeighting::SNIPS: return "snips";
    case est::DrWeighting::SNIPSLiteral: return "snips_literal";
  }
  return "?";
}

struct Field {
  const char* key;
  std::function<std::string(const BenchConfig&)> get;
  std::function<void(BenchConfig&, const std::string&)> set;
};

#define DOUBLE_FIELD(KEY, MEMBER)                                                  \
  Field {                                                                          \
    KEY, [](const BenchConfig& c) { return format_double(c.MEMBER); },             \
        [](BenchConfig& c, const std::string& v) { c.MEMBER = parse_double(KEY, v); } \
  }
#define U64_FIELD(KEY, MEMBER)                                                     \
  Field {                                                                          \
    KEY, [](const BenchConfig& c) { return std::to_string(c.MEMBER); },            \
        [](BenchConfig& c, const std::string& v) { c.MEMBER = parse_u64(KEY, v); }  \
  }
#define INT_FIELD(KEY, MEMBER)                                                     \
  Field {                                                                          \
    KEY, [](const BenchConfig& c) { return std::to_string(c.MEMBER); },            \
        [](BenchConfig& c, const std::string& v) { c.MEMBER = parse_int(KEY, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      U64_FIELD("gen.n", gen.n),
      U64_FIELD("gen.n_topics", gen.n_topics),
      U64_FIELD("gen.vocab", gen.vocab),
      U64_FIELD("gen.words_per_doc", gen.words_per_doc),
      DOUBLE_FIELD("gen.avg_degree", gen.avg_degree),
      DOUBLE_FIELD("gen.kappa1", gen.kappa1),
      DOUBLE_FIELD("gen.kappa2", gen.kappa2),
      DOUBLE_FIELD("gen.noise_std", gen.noise_std),
      DOUBLE_FIELD("gen.topic_concentration", gen.topic_concentration),
      DOUBLE_FIELD("gen.word_concentration", gen.word_concentration),

      U64_FIELD("cone.dim", cone.dim),
      U64_FIELD("cone.heads", cone.heads),
      U64_FIELD("cone.layers", cone.layers),
      DOUBLE_FIELD("cone.gamma", cone.gamma),
      DOUBLE_FIELD("cone.zeta", cone.zeta),
      DOUBLE_FIELD("cone.lr", cone.lr),
      INT_FIELD("cone.epochs", cone.epochs),
      INT_FIELD("cone.patience", cone.patience),
      U64_FIELD("cone.critic_hidden", cone.critic_hidden),
      U64_FIELD("cone.outcome_hidden", cone.outcome_hidden),
      DOUBLE_FIELD("cone.leaky_slope", cone.leaky_slope),
      U64_FIELD("cone.seed", cone.seed),

      Field{"outcome.hidden",
            [](const BenchConfig& c) { return join_widths(c.inference.outcome.hidden); },
            [](BenchConfig& c, const std::string& v) {
              c.inference.outcome.hidden = parse_widths("outcome.hidden", v);
            }},
      DOUBLE_FIELD("outcome.lr", inference.outcome.lr),
      INT_FIELD("outcome.epochs", inference.outcome.epochs),
      INT_FIELD("outcome.patience", inference.outcome.patience),
      DOUBLE_FIELD("propensity.l2", inference.propensity.l2),
      DOUBLE_FIELD("propensity.tolerance", inference.propensity.tolerance),
      INT_FIELD("propensity.max_iterations", inference.propensity.max_iterations),
      DOUBLE_FIELD("estimate.clip", inference.clip),
      Field{"estimate.dr_weighting",
            [](const BenchConfig& c) { return std::string(weighting_name(c.inference.weighting)); },
            [](BenchConfig& c, const std::string& v) {
              if (v == "ips") c.inference.weighting = est::DrWeighting::IPS;
              else if (v == "snips") c.inference.weighting = est::DrWeighting::SNIPS;
              else if (v == "snips_literal") c.inference.weighting = est::DrWeighting::SNIPSLiteral;
              else throw ConfigError("estimate.dr_weighting: expected ips, snips or snips_literal");
            }},

      Field{"bench.estimators", [](const BenchConfig& c) { return join(c.estimators); },
            [](BenchConfig& c, const std::string& v) { c.estimators = split_list(v); }},
      U64_FIELD("bench.simulations", simulations),
      U64_FIELD("bench.runs_per_sim", runs_per_sim),
      DOUBLE_FIELD("bench.train_frac", train_frac),
      DOUBLE_FIELD("bench.val_frac", val_frac),
      U64_FIELD("bench.seed", seed),
      U64_FIELD("bench.policy_seed", policy_seed),
      U64_FIELD("bench.split_seed", split_seed),
      U64_FIELD("bench.threads", threads),
      Field{"bench.save_checkpoints",
            [](const BenchConfig& c) { return std::string(c.save_checkpoints ? "true" : "false"); },
            [](BenchConfig& c, const std::string& v) {
              c.save_checkpoints = parse_bool("bench.save_checkpoints", v);
            }},
  };
  return table;
}

#undef DOUBLE_FIELD
#undef U64_FIELD
#undef INT_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ConfigError("format_double: conversion failed");
  return {buf, end};
}

void BenchConfig::validate() const {
  gen.validate();
  cone.validate();
  if (simulations < 1) throw ConfigError("bench.simulations must be >= 1");
  if (runs_per_sim < 1) throw ConfigError("bench.runs_per_sim must be >= 1");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
    throw ConfigError("bench: train and validation fractions must be positive and leave a test part");
  if (threads < 1) throw ConfigError("bench.threads must be >= 1");
  if (estimators.empty()) throw ConfigError("bench.estimators is empty");
  std::set<std::string> seen;
  for (const auto& e : estimators)
    if (!seen.insert(e).second) throw ConfigError("bench.estimators lists '" + e + "' twice");
  if (!(inference.clip > 0.0) || !(inference.clip < 0.5)) throw ConfigError("estimate.clip must be in (0, 0.5)");
  if (inference.outcome.epochs < 1 || inference.outcome.patience < 1)
    throw ConfigError("outcome.epochs and outcome.patience must be >= 1");
  if (!(inference.outcome.lr > 0.0)) throw ConfigError("outcome.lr must be positive");
  if (!(inference.propensity.l2 >= 0.0)) throw ConfigError("propensity.l2 must be >= 0");
  if (inference.propensity.max_iterations < 1) throw ConfigError("propensity.max_iterations must be >= 1");
}

BenchConfig parse_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key.emplace(f.key, &f);

  BenchConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    it->second->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

BenchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const BenchConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string format_config(const BenchConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

void apply_seed_override(BenchConfig& cfg, const char* env_name) {
  const char* v = std::getenv(env_name);
  if (v == nullptr || *v == '\0') return;
  cfg.seed = parse_u64(env_name, trim(v));
}

}  // namespace cone::harness
