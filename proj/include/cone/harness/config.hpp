#pragma once

// Benchmark configuration and its text form.
//
// The file format is one `key = value` per line with dotted section prefixes
// (gen.n, cone.gamma, bench.simulations, ...). `#` starts a comment. Unknown
// keys, duplicate keys and malformed values are all errors.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cone/cone_model.hpp"
#include "cone/datagen.hpp"

namespace cone::harness {

using Index = std::size_t;

struct BenchConfig {
  datagen::GenConfig gen;
  model::ConeConfig cone;
  model::InferenceConfig inference;  // CONE inference and the X-based baselines
  std::vector<std::string> estimators{"IPS-X",  "SNIPS-X", "DM-X",    "OLS1",    "OLS2",
                                      "DR-DM-X", "DR-OLS1", "DR-OLS2", "CONE"};
  Index simulations = 10;
  Index runs_per_sim = 1;
  double train_frac = 0.6;
  double val_frac = 0.2;
  // Simulation k generates data from derive_seed(seed, k); the policy and
  // the split of that simulation come from policy_seed and split_seed.
  std::uint64_t seed = 0;
  std::uint64_t policy_seed = 1;
  std::uint64_t split_seed = 2;
  Index threads = 1;
  bool save_checkpoints = false;

  // Throws ConfigError.
  void validate() const;
};

BenchConfig parse_config(const std::string& text);
BenchConfig load_config(const std::string& path);

// Every key with its current value, in a fixed order. format_config(c)
// parses back to an identical configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const BenchConfig& cfg);
std::string format_config(const BenchConfig& cfg);

// Reads CONE_SEED, if set, into cfg.seed. Throws ConfigError on a malformed value.
void apply_seed_override(BenchConfig& cfg, const char* env_name = "CONE_SEED");

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace cone::harness
