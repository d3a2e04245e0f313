#pragma once

// Benchmark results: raw (simulation, run, estimator, tau_hat, tau) rows and
// per-estimator RMSE/MAE recomputed from them.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cone/estimators.hpp"

namespace cone::harness {

inline constexpr const char* kReportSchema = "cone.eval-report/1";
inline constexpr const char* kSweepSchema = "cone.sweep-report/1";

struct Cell {
  std::size_t simulation = 0;
  std::size_t run = 0;
  std::string estimator;
  double tau_hat = 0.0;
  double tau = 0.0;

  bool operator==(const Cell&) const = default;
};

struct Failure {
  std::size_t simulation = 0;
  std::size_t run = 0;
  std::string estimator;
  std::string code;
  std::string message;

  bool operator==(const Failure&) const = default;
};

struct Aggregate {
  std::size_t count = 0;
  double rmse = 0.0;
  double mae = 0.0;

  bool operator==(const Aggregate&) const = default;
};

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::uint64_t> simulation_seeds;
  std::vector<Cell> cells;  // ordered by (simulation, run, estimator position)
  std::vector<Failure> failures;
  std::map<std::string, Aggregate> aggregates;
};

// Per-estimator RMSE/MAE over the given rows.
std::map<std::string, Aggregate> aggregate(const std::vector<Cell>& cells);

std::string report_csv(const std::vector<Cell>& cells);
std::vector<Cell> parse_report_csv(const std::string& text);
std::string report_json(const EvalReport& r);
// Reads back the structured summary; the rows come from the CSV.
EvalReport parse_report_json(const std::string& text);

struct SweepRow {
  double gamma = 0.0;
  double zeta = 0.0;
  Aggregate cone;
  std::size_t failures = 0;
  std::vector<std::uint64_t> simulation_seeds;
};

struct SweepReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<SweepRow> rows;  // gamma-major
  // max RMSE / min RMSE over rows that produced an estimate.
  double rmse_ratio() const;
};

std::string sweep_csv(const SweepReport& r);
std::string sweep_json(const SweepReport& r);

}  // namespace cone::harness
