// cone: generate datasets, run benchmarks and sweeps, inspect dataset files.
//
// Failures print one JSON object {"error": {"code", "message"}} on stderr and
// exit nonzero: 1 for runtime errors, 2 for usage errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cone/error.hpp"
#include "cone/harness/benchmark.hpp"
#include "cone/harness/config.hpp"
#include "cone/harness/persist.hpp"
#include "cone/harness/report.hpp"

namespace fs = std::filesystem;
using namespace cone;
using namespace cone::harness;

namespace {

void emit_error(const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"code", code}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("io", "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw FormatError("io", "write to '" + path.string() + "' failed");
}

BenchConfig config_from(const std::string& path) {
  BenchConfig cfg = load_config(path);
  apply_seed_override(cfg);
  cfg.validate();
  return cfg;
}

std::vector<double> parse_grid(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
      throw ConfigError(std::string(what) + ": bad value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

int cmd_generate(const std::string& config, const fs::path& out) {
  const auto cfg = config_from(config);
  fs::create_directories(out);
  write_text(out / "config.txt", format_config(cfg));
  for (std::size_t k = 0; k < cfg.simulations; ++k) {
    const auto sim = make_simulation(cfg, k);
    const auto path = out / ("sim_" + std::to_string(k) + ".bin");
    save_dataset(path.string(), sim.data);
    std::cout << path.string() << "\n";
  }
  return 0;
}

int cmd_benchmark(const std::string& config, const fs::path& out) {
  const auto cfg = config_from(config);
  fs::create_directories(out);
  BenchOptions opts;
  opts.checkpoint_dir = (out / "checkpoints").string();
  const auto rep = run_benchmark(cfg, opts);
  write_text(out / "config.txt", format_config(cfg));
  write_text(out / "results.csv", report_csv(rep.cells));
  write_text(out / "summary.json", report_json(rep));
  std::printf("%-14s %6s %12s %12s\n", "estimator", "n", "rmse", "mae");
  for (const auto& [name, a] : rep.aggregates) std::printf("%-14s %6zu %12.6f %12.6f\n", name.c_str(), a.count, a.rmse, a.mae);
  if (!rep.failures.empty()) std::printf("failures: %zu (see summary.json)\n", rep.failures.size());
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& gamma_grid, const std::string& zeta_grid,
              const fs::path& out) {
  const auto cfg = config_from(config);
  const auto gammas = parse_grid(gamma_grid, "gamma grid");
  const auto zetas = parse_grid(zeta_grid, "zeta grid");
  fs::create_directories(out);
  const auto rep = parameter_sweep(cfg, gammas, zetas);
  write_text(out / "config.txt", format_config(cfg));
  write_text(out / "sweep.csv", sweep_csv(rep));
  write_text(out / "sweep.json", sweep_json(rep));
  std::printf("%10s %10s %12s %12s\n", "gamma", "zeta", "rmse", "mae");
  for (const auto& r : rep.rows) std::printf("%10g %10g %12.6f %12.6f\n", r.gamma, r.zeta, r.cone.rmse, r.cone.mae);
  std::printf("max/min rmse: %.4f\n", rep.rmse_ratio());
  return 0;
}

int cmd_inspect(const std::string& dataset) {
  const auto ds = load_dataset(dataset);
  std::size_t treated = 0, y1_wins = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    treated += ds.t[i] == 1;
    y1_wins += ds.truth.y1[i] > ds.truth.y0[i];
  }
  std::printf("instances           %zu\n", ds.size());
  std::printf("edges               %zu\n", ds.graph.num_edges());
  std::printf("features            %zu\n", ds.features.cols());
  std::printf("treated instances   %zu\n", treated);
  std::printf("instances y1 > y0   %zu\n", y1_wins);
  std::printf("kappa1, kappa2      %g, %g\n", ds.config.kappa1, ds.config.kappa2);
  std::printf("seed                %llu\n", static_cast<unsigned long long>(ds.config.seed));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual policy evaluation on networked observational data"};
  app.require_subcommand(1);

  std::string config, out, dataset;
  std::string gamma_grid = "1e-6,1e-4,1e-2,1,100";
  std::string zeta_grid = gamma_grid;

  auto* gen = app.add_subcommand("generate", "Simulate datasets and write them to a directory");
  gen->add_option("--config", config, "Config file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* bench = app.add_subcommand("benchmark", "Run every configured estimator on every simulation");
  bench->add_option("--config", config, "Config file")->required();
  bench->add_option("--out", out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Benchmark CONE over a gamma x zeta grid");
  sweep->add_option("--config", config, "Config file")->required();
  sweep->add_option("--gamma-grid", gamma_grid, "Comma-separated gamma values")->capture_default_str();
  sweep->add_option("--zeta-grid", zeta_grid, "Comma-separated zeta values")->capture_default_str();
  sweep->add_option("--out", out, "Output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "Print summary statistics of a dataset file");
  inspect->add_option("--dataset", dataset, "Dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(config, out);
    if (bench->parsed()) return cmd_benchmark(config, out);
    if (sweep->parsed()) return cmd_sweep(config, gamma_grid, zeta_grid, out);
    if (inspect->parsed()) return cmd_inspect(dataset);
  } catch (const Error& e) {
    emit_error(e.code(), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    emit_error("io", e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 1;
}
