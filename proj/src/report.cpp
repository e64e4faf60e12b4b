#include "csmc/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "csmc/errors.hpp"

namespace csmc {

void ExperimentReport::add_estimate(std::string name, double value, double stderr_) {
  estimates.push_back({std::move(name), value, stderr_, false});
}

void ExperimentReport::add_exact(std::string name, double value) {
  estimates.push_back({std::move(name), value, 0, true});
}

void ExperimentReport::add_comparator(std::string name, double value) {
  comparators.push_back({std::move(name), value});
}

void ExperimentReport::add_flag(std::string name, bool pass, std::string detail) {
  flags.push_back({std::move(name), pass, std::move(detail)});
}

const EstimateEntry* ExperimentReport::find_estimate(std::string_view name) const {
  for (const auto& e : estimates)
    if (e.name == name) return &e;
  return nullptr;
}

const ComparatorEntry* ExperimentReport::find_comparator(std::string_view name) const {
  for (const auto& c : comparators)
    if (c.name == name) return &c;
  return nullptr;
}

const FlagEntry* ExperimentReport::find_flag(std::string_view name) const {
  for (const auto& f : flags)
    if (f.name == name) return &f;
  return nullptr;
}

bool ExperimentReport::all_pass() const {
  for (const auto& f : flags)
    if (!f.pass) return false;
  return true;
}

nlohmann::ordered_json ExperimentReport::to_json(bool with_timestamp) const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["model"] = model_name;
  j["params"] = params;
  j["seed"] = seed;
  nlohmann::ordered_json est = nlohmann::ordered_json::array();
  for (const auto& e : estimates) {
    nlohmann::ordered_json item;
    item["name"] = e.name;
    item["value"] = e.value;
    if (e.exact)
      item["exact"] = true;
    else
      item["stderr"] = e.stderr_;
    est.push_back(std::move(item));
  }
  j["estimates"] = std::move(est);
  nlohmann::ordered_json cmp = nlohmann::ordered_json::array();
  for (const auto& c : comparators)
    cmp.push_back(nlohmann::ordered_json{{"name", c.name}, {"value", c.value}});
  j["comparators"] = std::move(cmp);
  nlohmann::ordered_json flg = nlohmann::ordered_json::array();
  for (const auto& f : flags) {
    nlohmann::ordered_json item;
    item["name"] = f.name;
    item["pass"] = f.pass;
    if (!f.detail.empty()) item["detail"] = f.detail;
    flg.push_back(std::move(item));
  }
  j["flags"] = std::move(flg);
  if (advisory_flags) j["statistical_flags_advisory"] = true;
  j["version"] = kReportVersion;
  if (with_timestamp) j["timestamp"] = current_timestamp_utc();
  return j;
}

std::string ExperimentReport::summary_line() const {
  std::ostringstream out;
  int passed = 0;
  for (const auto& f : flags) passed += f.pass ? 1 : 0;
  out << kind << " model=" << model_name << " flags " << passed << "/"
      << flags.size() << (all_pass() ? " ok" : " FAIL");
  if (advisory_flags) out << " (advisory)";
  for (const auto& f : flags)
    if (!f.pass) out << " !" << f.name;
  return out.str();
}

std::string current_timestamp_utc() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_report_json(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report file: " + path);
  out << report.to_json().dump(2) << "\n";
}

void write_replicates_csv(const ReplicateTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write csv file: " + path);
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    out << (c ? "," : "") << table.columns[c];
  out << "\n";
  std::ostringstream row;
  row.precision(17);
  for (const auto& r : table.rows) {
    row.str({});
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) row << ",";
      if (!std::isnan(r[c])) {
        if (r[c] == static_cast<double>(static_cast<long long>(r[c])))
          row << static_cast<long long>(r[c]);
        else
          row << r[c];
      }
    }
    out << row.str() << "\n";
  }
}

}  // namespace csmc
