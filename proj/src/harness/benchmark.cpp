#include "cone/harness/benchmark.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "cone/error.hpp"
#include "cone/harness/persist.hpp"
#include "cone/rng.hpp"

namespace cone::harness {

namespace {

// Streams off a simulation seed.
constexpr std::uint64_t kRunStreamBase = 1000;
enum RunStream : std::uint64_t { ConeStream = 1, DmxStream = 2, ConeOutcomeStream = 3 };

std::span<const std::size_t> test_idx(const RunContext& c) { return c.sim().splits.test; }

double dr_with(RunContext& c, est::OutcomeVariant v) {
  const auto& s = c.sim();
  const auto& inf = c.config().inference;
  return est::dr_estimate(s.pi, c.outcome_x(v), c.propensity_x(), s.data.features, s.data.t, s.data.y,
                          test_idx(c), inf.weighting, inf.clip)
      .tau_hat;
}

double direct_with(RunContext& c, est::OutcomeVariant v) {
  const auto& s = c.sim();
  return est::direct_estimate(s.pi, c.outcome_x(v), s.data.features, test_idx(c));
}

}  // namespace

std::uint64_t simulation_seed(const BenchConfig& cfg, std::size_t k) { return derive_seed(cfg.seed, k); }

Simulation make_simulation(const BenchConfig& cfg, std::size_t k) {
  Simulation s;
  s.id = k;
  s.seed = simulation_seed(cfg, k);
  datagen::GenConfig gen = cfg.gen;
  gen.seed = s.seed;
  s.data = datagen::make_dataset(gen);
  const auto pol = policy::sample_policy(s.data.features.cols(), derive_seed(s.seed, cfg.policy_seed));
  s.pi = policy::policy_probs(pol, s.data.features, s.data.graph);
  s.splits = make_splits(s.data.size(), cfg.train_frac, cfg.val_frac, derive_seed(s.seed, cfg.split_seed));
  return s;
}

RunContext::RunContext(const Simulation& sim, const BenchConfig& cfg, std::size_t run, std::string checkpoint_dir)
    : sim_(sim),
      cfg_(cfg),
      run_(run),
      run_seed_(derive_seed(sim.seed, kRunStreamBase + run)),
      checkpoint_dir_(std::move(checkpoint_dir)) {}

const est::PropensityModel& RunContext::propensity_x() {
  if (!prop_) {
    const auto train = est::make_sample(sim_.data.features, sim_.data.t, sim_.data.y, sim_.splits.train);
    prop_ = est::fit_propensity(train.z, train.t, cfg_.inference.propensity);
  }
  return *prop_;
}

const est::OutcomeModel& RunContext::outcome_x(est::OutcomeVariant v) {
  auto it = outcome_.find(v);
  if (it == outcome_.end()) {
    const auto& d = sim_.data;
    const auto train = est::make_sample(d.features, d.t, d.y, sim_.splits.train);
    const auto val = est::make_sample(d.features, d.t, d.y, sim_.splits.val);
    est::OutcomeConfig oc;
    oc.mlp = cfg_.inference.outcome;
    oc.mlp.seed = derive_seed(run_seed_, DmxStream);
    it = outcome_.emplace(v, est::fit_outcome(train, v, oc, &val)).first;
  }
  return it->second;
}

model::ConeConfig RunContext::cone_config() const {
  model::ConeConfig c = cfg_.cone;
  c.seed = derive_seed(derive_seed(run_seed_, ConeStream), cfg_.cone.seed);
  return c;
}

model::InferenceConfig RunContext::inference_config() const {
  model::InferenceConfig inf = cfg_.inference;
  inf.outcome.seed = derive_seed(run_seed_, ConeOutcomeStream);
  return inf;
}

const model::TrainResult& RunContext::cone() {
  if (!cone_) {
    const auto cc = cone_config();
    cone_ = model::train(sim_.data, cc, sim_.splits);
    if (!checkpoint_dir_.empty()) {
      const auto path = std::filesystem::path(checkpoint_dir_) /
                        ("cone_sim" + std::to_string(sim_.id) + "_run" + std::to_string(run_) + ".ckpt");
      save_checkpoint(path.string(), {cc, sim_.data.features.cols(), cone_->params});
    }
  }
  return *cone_;
}

EstimatorRegistry EstimatorRegistry::with_defaults() {
  using V = est::OutcomeVariant;
  EstimatorRegistry r;
  r.add("oracle-direct", [](RunContext& c) {
    const auto& d = c.sim().data;
    Tensor truth(d.size(), 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
      truth(i, 0) = d.truth.y0[i];
      truth(i, 1) = d.truth.y1[i];
    }
    return est::direct_estimate(c.sim().pi, truth, test_idx(c));
  });
  r.add("IPS-X", [](RunContext& c) {
    const auto& s = c.sim();
    return est::ips_estimate(s.pi, c.propensity_x(), s.data.features, s.data.t, s.data.y, test_idx(c),
                             c.config().inference.clip)
        .tau_hat;
  });
  r.add("SNIPS-X", [](RunContext& c) {
    const auto& s = c.sim();
    return est::snips_estimate(s.pi, c.propensity_x(), s.data.features, s.data.t, s.data.y, test_idx(c),
                               c.config().inference.clip)
        .tau_hat;
  });
  r.add("DM-X", [](RunContext& c) { return direct_with(c, V::DMX); });
  r.add("OLS1", [](RunContext& c) { return direct_with(c, V::OLS1); });
  r.add("OLS2", [](RunContext& c) { return direct_with(c, V::OLS2); });
  r.add("DR-DM-X", [](RunContext& c) { return dr_with(c, V::DMX); });
  r.add("DR-OLS1", [](RunContext& c) { return dr_with(c, V::OLS1); });
  r.add("DR-OLS2", [](RunContext& c) { return dr_with(c, V::OLS2); });
  r.add("CONE", [](RunContext& c) {
    const auto& s = c.sim();
    return model::infer_utility(c.cone().reps, s.data, s.pi, s.splits, c.inference_config()).tau_hat;
  });
  return r;
}

void EstimatorRegistry::add(const std::string& name, EstimatorFn fn) {
  if (name.empty() || !fn) throw ConfigError("estimator registry: empty name or function");
  fns_[name] = std::move(fn);
}

const EstimatorFn& EstimatorRegistry::get(const std::string& name) const {
  const auto it = fns_.find(name);
  if (it == fns_.end()) throw ConfigError("unknown estimator '" + name + "'");
  return it->second;
}

std::vector<std::string> EstimatorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : fns_) out.push_back(k);
  return out;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
            next = n;
          }
        }
      });
  }
  if (first) std::rethrow_exception(first);
}

EvalReport run_benchmark(const BenchConfig& cfg, const BenchOptions& opts) {
  cfg.validate();
  const auto registry = opts.registry ? opts.registry : std::make_shared<const EstimatorRegistry>(
                                                           EstimatorRegistry::with_defaults());
  std::vector<const EstimatorFn*> fns;
  for (const auto& name : cfg.estimators) fns.push_back(&registry->get(name));
  const std::string ckpt_dir = cfg.save_checkpoints ? opts.checkpoint_dir : std::string();
  if (!ckpt_dir.empty()) std::filesystem::create_directories(ckpt_dir);

  struct SimResult {
    std::vector<Cell> cells;
    std::vector<Failure> failures;
  };
  std::vector<SimResult> per_sim(cfg.simulations);

  parallel_for(cfg.simulations, cfg.threads, [&](std::size_t k) {
    auto& out = per_sim[k];
    std::optional<Simulation> sim;
    try {
      sim = make_simulation(cfg, k);
    } catch (const Error& e) {
      for (std::size_t r = 0; r < cfg.runs_per_sim; ++r)
        for (const auto& name : cfg.estimators) out.failures.push_back({k, r, name, e.code(), e.what()});
      return;
    }
    for (std::size_t r = 0; r < cfg.runs_per_sim; ++r) {
      RunContext ctx(*sim, cfg, r, ckpt_dir);
      const double tau = policy::true_utility(sim->pi, sim->data.truth.y0, sim->data.truth.y1, sim->splits.test);
      for (std::size_t e = 0; e < fns.size(); ++e) {
        const auto& name = cfg.estimators[e];
        try {
          const double tau_hat = (*fns[e])(ctx);
          if (!std::isfinite(tau_hat)) throw NumericalError("estimate is not finite");
          out.cells.push_back({k, r, name, tau_hat, tau});
        } catch (const Error& ex) {
          out.failures.push_back({k, r, name, ex.code(), ex.what()});
        } catch (const std::exception& ex) {
          out.failures.push_back({k, r, name, "internal", ex.what()});
        }
      }
    }
  });

  EvalReport rep;
  rep.config = config_entries(cfg);
  for (std::size_t k = 0; k < cfg.simulations; ++k) {
    rep.simulation_seeds.push_back(simulation_seed(cfg, k));
    auto& s = per_sim[k];
    rep.cells.insert(rep.cells.end(), s.cells.begin(), s.cells.end());
    rep.failures.insert(rep.failures.end(), s.failures.begin(), s.failures.end());
  }
  rep.aggregates = aggregate(rep.cells);
  return rep;
}

SweepReport parameter_sweep(const BenchConfig& cfg, std::span<const double> gammas, std::span<const double> zetas,
                            const BenchOptions& opts) {
  if (gammas.empty() || zetas.empty()) throw ConfigError("sweep: gamma and zeta grids must be nonempty");
  SweepReport out;
  out.config = config_entries(cfg);
  for (double g : gammas) {
    for (double z : zetas) {
      BenchConfig cell = cfg;
      cell.cone.gamma = g;
      cell.cone.zeta = z;
      cell.estimators = {"CONE"};
      cell.save_checkpoints = false;
      const auto rep = run_benchmark(cell, opts);
      SweepRow row;
      row.gamma = g;
      row.zeta = z;
      if (const auto it = rep.aggregates.find("CONE"); it != rep.aggregates.end()) row.cone = it->second;
      row.failures = rep.failures.size();
      row.simulation_seeds = rep.simulation_seeds;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace cone::harness
