#include "cone/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cone/error.hpp"
#include "cone/harness/config.hpp"

namespace cone::harness {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kCsvHeader = "simulation,run,estimator,tau_hat,tau";

Json aggregate_json(const Aggregate& a) { return Json{{"count", a.count}, {"rmse", a.rmse}, {"mae", a.mae}}; }

Json config_json(const std::vector<std::pair<std::string, std::string>>& cfg) {
  Json out = Json::object();
  for (const auto& [k, v] : cfg) out[k] = v;
  return out;
}

template <class T>
T parse_number(const std::string& field, int line) {
  T v{};
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size())
    throw FormatError("format", "report csv line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

}  // namespace

std::map<std::string, Aggregate> aggregate(const std::vector<Cell>& cells) {
  std::map<std::string, std::vector<std::pair<double, double>>> pairs;
  for (const auto& c : cells) pairs[c.estimator].emplace_back(c.tau_hat, c.tau);
  std::map<std::string, Aggregate> out;
  for (const auto& [name, p] : pairs) {
    const auto s = est::rmse_mae(p);
    out[name] = {p.size(), s.rmse, s.mae};
  }
  return out;
}

std::string report_csv(const std::vector<Cell>& cells) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& c : cells) {
    if (c.estimator.find_first_of(",\n\"") != std::string::npos)
      throw FormatError("format", "estimator name '" + c.estimator + "' cannot be written to csv");
    out += std::to_string(c.simulation) + "," + std::to_string(c.run) + "," + c.estimator + "," +
           format_double(c.tau_hat) + "," + format_double(c.tau) + "\n";
  }
  return out;
}

std::vector<Cell> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("format", "report csv: missing header");
  std::vector<Cell> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 5)
      throw FormatError("format", "report csv line " + std::to_string(lineno) + ": expected 5 fields");
    cells.push_back({parse_number<std::size_t>(f[0], lineno), parse_number<std::size_t>(f[1], lineno), f[2],
                     parse_number<double>(f[3], lineno), parse_number<double>(f[4], lineno)});
  }
  return cells;
}

std::string report_json(const EvalReport& r) {
  Json j;
  j["schema"] = kReportSchema;
  j["config"] = config_json(r.config);
  j["simulation_seeds"] = r.simulation_seeds;
  j["rows"] = r.cells.size();
  Json agg = Json::object();
  for (const auto& [name, a] : r.aggregates) agg[name] = aggregate_json(a);
  j["aggregates"] = agg;
  Json fails = Json::array();
  for (const auto& f : r.failures)
    fails.push_back({{"simulation", f.simulation},
                     {"run", f.run},
                     {"estimator", f.estimator},
                     {"code", f.code},
                     {"message", f.message}});
  j["failures"] = fails;
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("format", std::string("report json: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kReportSchema)
    throw FormatError("version", "report json: unsupported schema");
  EvalReport r;
  try {
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.simulation_seeds = j.at("simulation_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& [name, a] : j.at("aggregates").items())
      r.aggregates[name] = {a.at("count").get<std::size_t>(), a.at("rmse").get<double>(), a.at("mae").get<double>()};
    for (const auto& f : j.at("failures"))
      r.failures.push_back({f.at("simulation").get<std::size_t>(), f.at("run").get<std::size_t>(),
                            f.at("estimator").get<std::string>(), f.at("code").get<std::string>(),
                            f.at("message").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("format", std::string("report json: ") + e.what());
  }
  return r;
}

double SweepReport::rmse_ratio() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& row : rows) {
    if (row.cone.count == 0) continue;
    lo = std::min(lo, row.cone.rmse);
    hi = std::max(hi, row.cone.rmse);
  }
  if (hi == 0.0 && lo == std::numeric_limits<double>::infinity())
    return std::numeric_limits<double>::quiet_NaN();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

std::string sweep_csv(const SweepReport& r) {
  std::string out = "gamma,zeta,count,rmse,mae,failures\n";
  for (const auto& row : r.rows)
    out += format_double(row.gamma) + "," + format_double(row.zeta) + "," + std::to_string(row.cone.count) + "," +
           format_double(row.cone.rmse) + "," + format_double(row.cone.mae) + "," + std::to_string(row.failures) +
           "\n";
  return out;
}

std::string sweep_json(const SweepReport& r) {
  Json j;
  j["schema"] = kSweepSchema;
  j["config"] = config_json(r.config);
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    Json cell = aggregate_json(row.cone);
    cell["gamma"] = row.gamma;
    cell["zeta"] = row.zeta;
    cell["failures"] = row.failures;
    cell["simulation_seeds"] = row.simulation_seeds;
    rows.push_back(cell);
  }
  j["cells"] = rows;
  const double ratio = r.rmse_ratio();
  if (std::isfinite(ratio))
    j["rmse_max_over_min"] = ratio;
  else
    j["rmse_max_over_min"] = nullptr;
  return j.dump(2) + "\n";
}

}  // namespace cone::harness
