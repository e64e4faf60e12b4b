#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "csmc/report.hpp"

namespace csmc {

// Parsed command line of the experiment runner. The subcommand picks the
// experiment family; model, parameters, test function, and reference path
// come from the JSON config. --seed and --out override the config values.
struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  bool quick = false;
  int threads = 1;
};

// Loads the config, runs the experiment, and writes report.json (plus
// replicates.csv when the run produced per-replicate rows) into the output
// directory. Returns the report it wrote. Throws ConfigError on malformed
// configs; model and experiment errors propagate.
ExperimentReport run_experiment(const CliOptions& opts);

// Command-line entry point. Writes the one-line report summary to out and
// error text to err. Exit status: 0 when every report flag passed, 2 when
// at least one flag failed, 1 on configuration or runtime errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csmc
