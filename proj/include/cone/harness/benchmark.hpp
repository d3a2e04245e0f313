#pragma once

// Benchmark orchestration: simulations, the estimator registry, and the
// gamma/zeta sweep.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cone/cone_model.hpp"
#include "cone/datagen.hpp"
#include "cone/estimators.hpp"
#include "cone/harness/config.hpp"
#include "cone/harness/report.hpp"
#include "cone/policy.hpp"
#include "cone/splits.hpp"

namespace cone::harness {

// One simulated dataset with its fixed policy and split.
struct Simulation {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  datagen::NetworkedDataset data;
  policy::PolicyMatrix pi;
  Splits splits;
};

std::uint64_t simulation_seed(const BenchConfig& cfg, std::size_t k);
Simulation make_simulation(const BenchConfig& cfg, std::size_t k);

// Everything an estimator may use for one (simulation, run) cell. Baseline
// models on X are fitted lazily and shared between estimators of the cell;
// their seeds depend only on the cell, so the result does not depend on
// which estimator asked first.
class RunContext {
 public:
  RunContext(const Simulation& sim, const BenchConfig& cfg, std::size_t run, std::string checkpoint_dir = {});

  const Simulation& sim() const { return sim_; }
  const BenchConfig& config() const { return cfg_; }
  std::size_t run() const { return run_; }
  std::uint64_t run_seed() const { return run_seed_; }

  const est::PropensityModel& propensity_x();
  const est::OutcomeModel& outcome_x(est::OutcomeVariant v);
  // Trains on first use; saves a checkpoint when a directory was given.
  const model::TrainResult& cone();
  model::ConeConfig cone_config() const;
  model::InferenceConfig inference_config() const;

 private:
  const Simulation& sim_;
  const BenchConfig& cfg_;
  std::size_t run_;
  std::uint64_t run_seed_;
  std::string checkpoint_dir_;
  std::optional<est::PropensityModel> prop_;
  std::map<est::OutcomeVariant, est::OutcomeModel> outcome_;
  std::optional<model::TrainResult> cone_;
};

// Returns tau_hat on the simulation's test indices.
using EstimatorFn = std::function<double(RunContext&)>;

class EstimatorRegistry {
 public:
  // oracle-direct, IPS-X, SNIPS-X, DM-X, OLS1, OLS2, DR-DM-X, DR-OLS1,
  // DR-OLS2, CONE.
  static EstimatorRegistry with_defaults();

  void add(const std::string& name, EstimatorFn fn);  // replaces an existing entry
  bool contains(const std::string& name) const { return fns_.count(name) > 0; }
  const EstimatorFn& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, EstimatorFn> fns_;
};

struct BenchOptions {
  std::shared_ptr<const EstimatorRegistry> registry;  // defaults when null
  std::string checkpoint_dir;                         // used when cfg.save_checkpoints
};

// Estimator failures become Failure entries; other cells are unaffected.
EvalReport run_benchmark(const BenchConfig& cfg, const BenchOptions& opts = {});

// Full factorial of CONE benchmarks, gamma-major. Every cell reuses the
// configuration's simulation seeds.
SweepReport parameter_sweep(const BenchConfig& cfg, std::span<const double> gammas, std::span<const double> zetas,
                            const BenchOptions& opts = {});

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
// exception, if any, is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace cone::harness
