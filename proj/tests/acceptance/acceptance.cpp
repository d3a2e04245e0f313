// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 5        run a subset
//
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "cone/cone_model.hpp"
#include "cone/error.hpp"
#include "cone/estimators.hpp"
#include "cone/harness/benchmark.hpp"
#include "cone/harness/persist.hpp"
#include "cone/harness/report.hpp"
#include "cone/policy.hpp"
#include "cone/rng.hpp"
#include "fd.hpp"

using namespace cone;
using namespace cone::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// Synthetic setting shared by the benchmark criteria: n = 500, 200 words,
// 20 topics, kappa1 = 1, kappa2 = 2, ten simulations.
BenchConfig base_config() {
  BenchConfig c;
  c.gen.n = 500;
  c.gen.vocab = 200;
  c.gen.n_topics = 20;
  c.gen.kappa1 = 1.0;
  c.gen.kappa2 = 2.0;
  c.simulations = 10;
  c.threads = worker_count();
  return c;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Tensor truth_table(const datagen::NetworkedDataset& ds) {
  Tensor t(ds.size(), 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    t(i, 0) = ds.truth.y0[i];
    t(i, 1) = ds.truth.y1[i];
  }
  return t;
}

// 1. CONE beats the outcome-model baselines and is competitive with the
// weighting ones.
Outcome ordering() {
  auto cfg = base_config();
  cfg.estimators = {"CONE", "DM-X", "OLS1", "OLS2", "IPS-X", "SNIPS-X", "DR-DM-X"};
  const auto rep = run_benchmark(cfg);
  if (!rep.failures.empty()) return {false, std::to_string(rep.failures.size()) + " failed cells"};
  auto rmse = [&](const char* n) { return rep.aggregates.at(n).rmse; };
  const double cone = rmse("CONE");
  const double best_w = std::min({rmse("IPS-X"), rmse("SNIPS-X"), rmse("DR-DM-X")});
  const bool pass = cone < rmse("DM-X") && cone < rmse("OLS1") && cone < rmse("OLS2") && cone <= 1.1 * best_w;
  std::string d = "rmse";
  for (const auto& n : cfg.estimators) d += " " + n + "=" + fmt(rmse(n.c_str()));
  return {pass, d};
}

// 2. Stronger network confounding hurts CONE less than DM-X. Each seed group
// is a paired five-simulation benchmark at kappa2 = 1 and kappa2 = 2.
Outcome degradation() {
  constexpr int kGroups = 10;
  int wins = 0;
  std::string d;
  for (int g = 0; g < kGroups; ++g) {
    auto cfg = base_config();
    cfg.simulations = 5;
    cfg.seed = 1000 + static_cast<std::uint64_t>(g);
    cfg.estimators = {"CONE", "DM-X"};
    cfg.gen.kappa2 = 1.0;
    const auto weak = run_benchmark(cfg);
    cfg.gen.kappa2 = 2.0;
    const auto strong = run_benchmark(cfg);
    if (!weak.failures.empty() || !strong.failures.empty()) return {false, "failed cells in group " + std::to_string(g)};
    const double dc = strong.aggregates.at("CONE").rmse - weak.aggregates.at("CONE").rmse;
    const double dd = strong.aggregates.at("DM-X").rmse - weak.aggregates.at("DM-X").rmse;
    wins += dc < dd;
    d += " g" + std::to_string(g) + "(" + fmt(dc, 3) + " vs " + fmt(dd, 3) + ")";
  }
  return {wins >= 7, std::to_string(wins) + "/" + std::to_string(kGroups) + " groups; delta cone vs dm-x:" + d};
}

// 3. Oracle identities and Monte Carlo unbiasedness under true propensities.
Outcome estimator_oracles() {
  double worst_identity = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    datagen::GenConfig g;
    g.seed = 700 + s;
    const auto ds = datagen::make_dataset(g);
    const auto pi = policy::policy_probs(policy::sample_policy(ds.features.cols(), s), ds.features, ds.graph);
    const auto idx = make_splits(ds.size(), 0.6, 0.2, s).test;
    const double tau = policy::true_utility(pi, ds.truth.y0, ds.truth.y1, idx);
    const Tensor truth = truth_table(ds);
    const std::vector<double> prop(ds.size(), 0.5);
    worst_identity = std::max(worst_identity, std::abs(est::direct_estimate(pi, truth, idx) - tau));
    for (auto mode : {est::DrWeighting::IPS, est::DrWeighting::SNIPS})
      worst_identity = std::max(
          worst_identity, std::abs(est::dr_estimate(pi, truth, prop, ds.t, ds.y, idx, mode).tau_hat - tau));
  }

  // Fresh data, policy and treatments per draw; IPS and IPS-weighted DR with
  // the true assignment probabilities. The DR outcome model is a fixed,
  // deliberately wrong bounded function of the features.
  constexpr int kDraws = 200;
  std::vector<double> err_ips, err_dr;
  for (int k = 0; k < kDraws; ++k) {
    datagen::GenConfig g;
    g.n = 200;
    g.vocab = 100;
    g.seed = derive_seed(99, static_cast<std::uint64_t>(k));
    const auto ds = datagen::make_dataset(g);
    const auto pi = policy::policy_probs(policy::sample_policy(ds.features.cols(), g.seed), ds.features, ds.graph);
    const auto idx = all_indices(ds.size());
    const double tau = policy::true_utility(pi, ds.truth.y0, ds.truth.y1, idx);
    const double clip = 1e-9;
    err_ips.push_back(est::ips_estimate(pi, ds.truth.treat_prob, ds.t, ds.y, idx, clip).tau_hat - tau);
    Tensor wrong(ds.size(), 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      wrong(i, 0) = std::tanh(10.0 * ds.features(i, 0)) + 0.3;
      wrong(i, 1) = -0.5 + std::tanh(5.0 * ds.features(i, 1));
    }
    err_dr.push_back(
        est::dr_estimate(pi, wrong, ds.truth.treat_prob, ds.t, ds.y, idx, est::DrWeighting::IPS, clip).tau_hat - tau);
  }
  auto z_score = [](const std::vector<double>& e) {
    const double n = static_cast<double>(e.size());
    const double m = std::accumulate(e.begin(), e.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : e) ss += (v - m) * (v - m);
    return m / std::sqrt(ss / (n - 1) / n);
  };
  const double z_ips = z_score(err_ips), z_dr = z_score(err_dr);
  const bool pass = worst_identity <= 1e-10 && std::abs(z_ips) <= 2.0 && std::abs(z_dr) <= 2.0;
  return {pass, "oracle max |tau_hat - tau| " + fmt(worst_identity, 3) + "; bias/SE over " +
                    std::to_string(kDraws) + " draws: IPS " + fmt(z_ips, 3) + ", DR " + fmt(z_dr, 3)};
}

// 4. Full-loss gradient against central differences on a 10-node instance.
Outcome gradient_check() {
  datagen::GenConfig g;
  g.n = 10;
  g.vocab = 20;
  g.n_topics = 4;
  g.avg_degree = 3.0;
  g.seed = 5;
  const auto ds = datagen::make_dataset(g);
  model::ConeConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.critic_hidden = 8;
  cfg.outcome_hidden = 6;
  cfg.zeta = 0.5;
  const model::ConeNetwork net(cfg, ds.features.cols());
  auto params = net.init_params(17);
  params["ft.c"] = Tensor::scalar(0.2);
  params["X"] = ds.features;
  const auto layout = model::AttentionLayout::from_graph(ds.graph);
  const auto reps = net.representations(ad::input("X", ds.size(), ds.features.cols()), layout);
  const auto train = all_indices(ds.size());
  std::vector<std::size_t> perm = train;
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto loss = model::total_loss(model::outcome_loss(reps.zy, ds.y, train, net.outcome_head()),
                                      model::treatment_loss(reps.zt, ds.t, train),
                                      model::mi_loss(reps.zt, reps.zy, train, perm, net.critic()), cfg.gamma,
                                      cfg.zeta);
  auto names = net.main_param_names();
  const auto critic = net.critic_param_names();
  names.insert(critic.begin(), critic.end());
  const auto analytic = ad::gradient(loss, ad::bind_params(params), names);
  const auto numeric = testing_fd::numeric_gradient(loss, params, names);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& n : names) {
    // The critic's output bias has an exactly zero gradient; the floor keeps
    // FD round-off on it from reading as a relative error of 1.
    const double r = testing_fd::tensor_rel(analytic.at(n), numeric.at(n), 1e-6);
    if (r > worst) worst = r, worst_name = n;
  }
  return {worst < 1e-4, std::to_string(names.size()) + " tensors, worst relative error " + fmt(worst, 3) + " (" +
                            worst_name + ")"};
}

// 5. Donsker-Varadhan bound on correlated and independent Gaussians.
Outcome mi_oracle() {
  constexpr std::size_t n = 2000;
  constexpr double rho = 0.9;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nrm;
  Tensor a(n, 1), b(n, 1), c(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, 0) = nrm(rng);
    b(i, 0) = rho * a(i, 0) + std::sqrt(1 - rho * rho) * nrm(rng);
    c(i, 0) = nrm(rng);
  }
  const double truth = -0.5 * std::log(1 - rho * rho);
  model::MiEstimatorConfig cfg;
  cfg.seed = 1;
  const double dep = model::estimate_mutual_information(a, b, cfg);
  const double ind = model::estimate_mutual_information(a, c, cfg);
  const bool pass = dep >= 0.66 && dep <= 0.87 && std::abs(ind) < 0.05;
  return {pass, "dependent " + fmt(dep) + " nats (closed form " + fmt(truth) + "), independent " + fmt(ind, 3)};
}

// 6. Structural invariants.
Outcome invariants() {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  for (std::uint64_t s = 0; s < 5; ++s) {
    datagen::GenConfig g;
    g.n = 300;
    g.seed = 300 + s;
    const auto ds = datagen::make_dataset(g);
    double sum = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      expect(ds.y[i] == (ds.t[i] ? ds.truth.y1[i] : ds.truth.y0[i]), "factual outcome");
      sum += ds.truth.y0[i] + ds.truth.y1[i];
    }
    const double mean = sum / (2.0 * ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
      ss += (ds.truth.y0[i] - mean) * (ds.truth.y0[i] - mean) + (ds.truth.y1[i] - mean) * (ds.truth.y1[i] - mean);
    expect(std::abs(mean) < 1e-9, "pooled mean");
    expect(std::abs(std::sqrt(ss / (2.0 * ds.size())) - 1.0) < 1e-9, "pooled std");

    const auto pi = policy::policy_probs(policy::sample_policy(ds.features.cols(), s), ds.features, ds.graph);
    for (std::size_t i = 0; i < ds.size(); ++i) expect(std::abs(pi(i, 0) + pi(i, 1) - 1.0) < 1e-12, "policy rows");

    model::ConeConfig cfg;
    const model::ConeNetwork net(cfg, ds.features.cols());
    const auto params = net.init_params(s);
    const auto layout = model::AttentionLayout::from_graph(ds.graph);
    const auto reps = net.representations(ad::input("X", ds.size(), ds.features.cols()), layout);
    ad::Bindings bind = ad::bind_params(params);
    bind.bind("X", ds.features);
    std::vector<ad::Expr> roots = reps.attention_t;
    roots.insert(roots.end(), reps.attention_y.begin(), reps.attention_y.end());
    ad::Evaluation ev(roots, bind);
    const auto& off = layout.segments->offsets;
    for (const auto& r : roots) {
      const Tensor& att = ev.value(r);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        double total = 0.0;
        for (std::size_t e = off[i]; e < off[i + 1]; ++e) {
          expect(att(e, 0) >= 0.0, "attention sign");
          total += att(e, 0);
        }
        expect(std::abs(total - 1.0) < 1e-10, "attention rows");
      }
    }
    expect(encode_dataset(ds) == encode_dataset(datagen::make_dataset(g)), "dataset determinism");
  }

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nrm;
  for (int k = 0; k < 1000; ++k) {
    std::vector<std::pair<double, double>> pairs(1 + rng() % 30);
    for (auto& p : pairs) p = {nrm(rng), nrm(rng)};
    const auto m = est::rmse_mae(pairs);
    expect(m.rmse >= m.mae, "rmse >= mae");
  }

  auto cfg = base_config();
  cfg.gen.n = 120;
  cfg.simulations = 2;
  cfg.cone.epochs = 20;
  cfg.estimators = {"SNIPS-X", "OLS2", "DR-DM-X", "CONE"};
  const auto r1 = run_benchmark(cfg), r2 = run_benchmark(cfg);
  expect(report_json(r1) == report_json(r2) && report_csv(r1.cells) == report_csv(r2.cells), "report determinism");

  std::set<std::string> unique(bad.begin(), bad.end());
  std::string d = unique.empty() ? "all checks hold" : "violated:";
  for (const auto& u : unique) d += " " + u;
  return {unique.empty(), d};
}

// 7. Stability over the 5 x 5 gamma/zeta grid.
Outcome sweep_stability() {
  auto cfg = base_config();
  cfg.estimators = {"CONE"};
  const std::vector<double> grid{1e-6, 1e-4, 1e-2, 1, 100};
  const auto sw = parameter_sweep(cfg, grid, grid);
  std::size_t failures = 0;
  double lo = 1e300, hi = 0.0;
  for (const auto& r : sw.rows) {
    failures += r.failures;
    lo = std::min(lo, r.cone.rmse);
    hi = std::max(hi, r.cone.rmse);
  }
  const double ratio = sw.rmse_ratio();
  return {failures == 0 && ratio <= 3.0, "rmse range [" + fmt(lo) + ", " + fmt(hi) + "], max/min " + fmt(ratio) +
                                             (failures ? ", failed cells " + std::to_string(failures) : "")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ordering vs baselines", ordering},
      {"confounding degradation", degradation},
      {"estimator oracles", estimator_oracles},
      {"gradient correctness", gradient_check},
      {"mutual information oracle", mi_oracle},
      {"structural invariants", invariants},
      {"sweep stability", sweep_stability},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
