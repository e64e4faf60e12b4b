#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace csmc {

inline constexpr const char* kReportVersion = "0.1.0";

struct EstimateEntry {
  std::string name;
  double value = 0;
  double stderr_ = 0;
  bool exact = false;
};

struct ComparatorEntry {
  std::string name;
  double value = 0;
};

struct FlagEntry {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Raw per-replicate values, written out as CSV on request. NaN cells
// serialize as empty fields.
struct ReplicateTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// Self-contained experiment result: every estimate carries a standard
// error or an exactness marker, comparators come from exact computation,
// and each flag is recomputable from the stored numbers.
struct ExperimentReport {
  std::string kind;
  std::string model_name;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<EstimateEntry> estimates;
  std::vector<ComparatorEntry> comparators;
  std::vector<FlagEntry> flags;
  bool advisory_flags = false;  // replicate counts were scaled down
  ReplicateTable replicates;

  void add_estimate(std::string name, double value, double stderr_);
  void add_exact(std::string name, double value);
  void add_comparator(std::string name, double value);
  void add_flag(std::string name, bool pass, std::string detail = {});

  const EstimateEntry* find_estimate(std::string_view name) const;
  const ComparatorEntry* find_comparator(std::string_view name) const;
  const FlagEntry* find_flag(std::string_view name) const;
  bool all_pass() const;

  // The timestamp is the only field that varies between identical runs;
  // callers that compare reports byte-wise disable it.
  nlohmann::ordered_json to_json(bool with_timestamp = true) const;
  std::string summary_line() const;
};

std::string current_timestamp_utc();

void write_report_json(const ExperimentReport& report, const std::string& path);
void write_replicates_csv(const ReplicateTable& table, const std::string& path);

}  // namespace csmc
