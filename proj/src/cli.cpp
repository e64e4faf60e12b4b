#include "csmc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "csmc/diagnostics.hpp"
#include "csmc/errors.hpp"
#include "csmc/model.hpp"
#include "csmc/oracle.hpp"
#include "csmc/rng.hpp"

namespace csmc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void bad_field(const std::string& field, const std::string& what) {
  throw ConfigError("config." + field + ": " + what);
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

std::int64_t get_i64(const json& cfg, const std::string& field,
                     std::optional<std::int64_t> fallback = {}) {
  if (!cfg.contains(field)) {
    if (fallback) return *fallback;
    bad_field(field, "missing");
  }
  const json& v = cfg.at(field);
  if (!v.is_number_integer()) bad_field(field, "expected an integer");
  return v.get<std::int64_t>();
}

int get_int_min(const json& cfg, const std::string& field, int min_value,
                std::optional<std::int64_t> fallback = {}) {
  const std::int64_t v = get_i64(cfg, field, fallback);
  if (v < min_value) bad_field(field, "must be >= " + std::to_string(min_value));
  if (v > std::numeric_limits<int>::max()) bad_field(field, "out of range");
  return static_cast<int>(v);
}

double get_f64(const json& cfg, const std::string& field) {
  if (!cfg.contains(field)) bad_field(field, "missing");
  const json& v = cfg.at(field);
  if (!v.is_number()) bad_field(field, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& cfg, const std::string& field, bool fallback) {
  if (!cfg.contains(field)) return fallback;
  const json& v = cfg.at(field);
  if (!v.is_boolean()) bad_field(field, "expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& cfg, const std::string& field,
                       std::optional<std::string> fallback = {}) {
  if (!cfg.contains(field)) {
    if (fallback) return *fallback;
    bad_field(field, "missing");
  }
  const json& v = cfg.at(field);
  if (!v.is_string()) bad_field(field, "expected a string");
  return v.get<std::string>();
}

std::vector<int> get_int_list(const json& cfg, const std::string& field, int min_value) {
  if (!cfg.contains(field)) bad_field(field, "missing");
  const json& v = cfg.at(field);
  if (!v.is_array() || v.empty()) bad_field(field, "expected a non-empty array");
  std::vector<int> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string elem = field + "[" + std::to_string(i) + "]";
    if (!v[i].is_number_integer()) bad_field(elem, "expected an integer");
    const std::int64_t e = v[i].get<std::int64_t>();
    if (e < min_value) bad_field(elem, "must be >= " + std::to_string(min_value));
    if (e > std::numeric_limits<int>::max()) bad_field(elem, "out of range");
    out.push_back(static_cast<int>(e));
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& rel) {
  fs::path p(rel);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

ModelSpec parse_model_field(const json& cfg, const fs::path& base) {
  if (!cfg.contains("model")) bad_field("model", "missing");
  const json& m = cfg.at("model");
  try {
    if (m.is_string()) return load_model_spec(resolve(base, m.get<std::string>()).string());
    if (m.is_object()) return model_spec_from_json(m);
  } catch (const std::exception& e) {
    bad_field("model", e.what());
  }
  bad_field("model", "expected an object or a file path string");
}

TestFunction parse_f(const json& cfg, const fs::path& base, const HmmModel& model) {
  if (!cfg.contains("f")) bad_field("f", "missing");
  const json& f = cfg.at("f");
  if (!f.is_object()) bad_field("f", "expected an object with a \"type\" field");
  const std::string type = get_string(f, "type");
  const int S = model.num_states();
  const int n = model.horizon();
  if (type == "terminal_indicator") {
    const int state = get_int_min(f, "state", 0);
    if (state >= S) bad_field("f.state", "must be < num_states");
    return TestFunction::terminal_indicator(S, n, state);
  }
  if (type == "coordinate_sum") return TestFunction::coordinate_sum(S, n);
  if (type == "state_count") {
    const int state = get_int_min(f, "state", 0);
    if (state >= S) bad_field("f.state", "must be < num_states");
    return TestFunction::state_count(S, n, state);
  }
  if (type == "constant") return TestFunction::constant(S, n, get_f64(f, "value"));
  if (type == "table") {
    const fs::path path = resolve(base, get_string(f, "path"));
    std::ifstream in(path);
    if (!in) bad_field("f.path", "cannot open " + path.string());
    json t;
    try {
      t = json::parse(in);
    } catch (const json::exception& e) {
      bad_field("f.path", e.what());
    }
    if (!t.is_array()) bad_field("f.path", "expected a JSON array of numbers");
    std::vector<double> values;
    values.reserve(t.size());
    for (const json& e : t) {
      if (!e.is_number()) bad_field("f.path", "expected a JSON array of numbers");
      values.push_back(e.get<double>());
    }
    if (values.size() == static_cast<std::size_t>(S))
      return TestFunction::from_terminal(S, n, std::move(values));
    if (values.size() == path_count(S, n))
      return TestFunction::from_table(S, n, std::move(values));
    bad_field("f.path", "table length must be num_states or num_states^(horizon+1)");
  }
  bad_field("f.type", "unknown type \"" + type + "\"");
}

// Reference (or chain start) path: lexicographically smallest worst-case
// path by default, an exact stationary draw, or explicit states.
Path parse_ref(const json& cfg, const HmmModel& model, const StreamKey& key) {
  if (!cfg.contains("ref")) return adversarial_reference(model);
  const json& r = cfg.at("ref");
  if (r.is_string()) {
    const std::string s = r.get<std::string>();
    if (s == "adversarial") return adversarial_reference(model);
    if (s == "pi_sample") {
      const ExactMeasures meas = exact_measures(model);
      PathSampler sampler(meas.pi);
      RandomStream rng(derive(key, "ref"));
      return sampler(rng);
    }
    bad_field("ref", "expected \"adversarial\", \"pi_sample\", or a state array");
  }
  if (!r.is_array()) bad_field("ref", "expected a string keyword or a state array");
  if (static_cast<int>(r.size()) != model.horizon() + 1)
    bad_field("ref", "path length must be horizon + 1");
  Path path;
  path.states.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const std::string elem = "ref[" + std::to_string(i) + "]";
    if (!r[i].is_number_integer()) bad_field(elem, "expected an integer");
    const std::int64_t s = r[i].get<std::int64_t>();
    if (s < 0 || s >= model.num_states()) bad_field(elem, "state out of range");
    path.states.push_back(static_cast<int>(s));
  }
  return path;
}

const char* canonical_kind(const std::string& subcommand) {
  if (subcommand == "validate") return "oracle-validate";
  if (subcommand == "bias") return "kernel-bias";
  if (subcommand == "ergodicity") return "ergodicity";
  if (subcommand == "scan") return "stability-scan";
  if (subcommand == "clt") return "clt";
  if (subcommand == "diag") return "diagnostics";
  throw ConfigError("unknown subcommand: " + subcommand);
}

std::int64_t effective_R(const json& cfg, bool quick) {
  const std::int64_t r = get_i64(cfg, "R");
  if (r < 1) bad_field("R", "must be >= 1");
  return quick ? std::max<std::int64_t>(r / 100, 100) : r;
}

ExperimentReport dispatch(const CliOptions& opts, const json& cfg, const fs::path& base) {
  const StreamKey key = seed_derive(opts.seed, {std::string_view(opts.subcommand)});
  const std::string& sub = opts.subcommand;

  if (sub == "validate") {
    return oracle_validate(build_model(parse_model_field(cfg, base)));
  }

  if (sub == "bias") {
    const HmmModel model = build_model(parse_model_field(cfg, base));
    const TestFunction f = parse_f(cfg, base, model);
    const Path ref = parse_ref(cfg, model, key);
    const std::int64_t R = effective_R(cfg, opts.quick);
    if (cfg.contains("N_list")) {
      const std::vector<int> Ns = get_int_list(cfg, "N_list", 1);
      return kernel_bias_scan(model, ref, f, Ns, R, key, opts.threads);
    }
    return kernel_bias(model, ref, f, get_int_min(cfg, "N", 1), R, key, opts.threads);
  }

  if (sub == "ergodicity") {
    const HmmModel model = build_model(parse_model_field(cfg, base));
    const Path init = parse_ref(cfg, model, key);
    const int N = get_int_min(cfg, "N", 1);
    const int m_max = get_int_min(cfg, "m_max", 1);
    return ergodicity_tv(model, init, N, m_max, effective_R(cfg, opts.quick), key,
                         opts.threads);
  }

  if (sub == "scan") {
    StabilityScanConfig sc;
    sc.base = parse_model_field(cfg, base);
    sc.n_list = get_int_list(cfg, "n_list", 1);
    sc.C = cfg.contains("C") ? get_f64(cfg, "C") : 0.0;
    if (sc.C < 0) bad_field("C", "must be >= 0");
    sc.fixed_N = cfg.contains("fixed_N") ? get_int_min(cfg, "fixed_N", 2) : 0;
    if (sc.C == 0 && sc.fixed_N == 0) bad_field("C", "need C > 0 or fixed_N >= 2");
    sc.f_state = get_int_min(cfg, "f_state", 0, 1);
    if (sc.f_state >= sc.base.num_states) bad_field("f_state", "must be < num_states");
    return stability_scan(sc, effective_R(cfg, opts.quick), key, opts.threads);
  }

  if (sub == "clt") {
    const HmmModel model = build_model(parse_model_field(cfg, base));
    const TestFunction f = parse_f(cfg, base, model);
    const std::vector<int> Ns = cfg.contains("N_list")
                                    ? get_int_list(cfg, "N_list", 1)
                                    : std::vector<int>{get_int_min(cfg, "N", 1)};
    const bool conditional = get_bool(cfg, "conditional", true);
    return clt_experiment(model, f, Ns, effective_R(cfg, opts.quick), key, conditional,
                          opts.threads);
  }

  if (sub == "diag") {
    const HmmModel model = build_model(parse_model_field(cfg, base));
    const std::string mode = get_string(cfg, "diag", std::string("bound-terms"));
    const int N = get_int_min(cfg, "N", 1);
    const std::int64_t R = effective_R(cfg, opts.quick);
    if (mode == "invariance") return invariance_check(model, N, R, key, opts.threads);
    const Path ref = parse_ref(cfg, model, key);
    if (mode == "bound-terms")
      return bound_terms_report(model, ref, N, R, key, opts.threads);
    if (mode == "z-scaling") {
      const int k = get_int_min(cfg, "k", 0);
      if (k > model.horizon()) bad_field("k", "must be <= horizon");
      return z_scaling(model, ref, k, N, R, key, opts.threads);
    }
    bad_field("diag", "unknown mode \"" + mode + "\"");
  }

  throw ConfigError("unknown subcommand: " + sub);
}

std::uint64_t seed_from_config(const json& cfg) {
  const json& v = cfg.at("seed");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const std::int64_t s = v.get<std::int64_t>();
    if (s < 0) bad_field("seed", "must be >= 0");
    return static_cast<std::uint64_t>(s);
  }
  bad_field("seed", "expected an integer");
}

}  // namespace

ExperimentReport run_experiment(const CliOptions& opts) {
  const json cfg = load_config(opts.config_path);
  if (!cfg.is_object()) throw ConfigError("config: top level must be an object");
  if (cfg.contains("kind")) {
    const std::string kind = get_string(cfg, "kind");
    if (kind != canonical_kind(opts.subcommand))
      bad_field("kind", "\"" + kind + "\" does not match subcommand \"" +
                            opts.subcommand + "\"");
  }

  CliOptions eff = opts;
  if (!opts.seed_given && cfg.contains("seed")) eff.seed = seed_from_config(cfg);
  if (eff.out_dir.empty()) eff.out_dir = get_string(cfg, "out_dir", std::string("."));

  const fs::path base = fs::path(opts.config_path).parent_path();
  ExperimentReport report = dispatch(eff, cfg, base);
  report.seed = eff.seed;
  // --quick shrinks replicate counts, so statistical pass/fail flags carry
  // reduced evidence; validate is deterministic and stays authoritative.
  if (opts.quick && opts.subcommand != "validate") report.advisory_flags = true;

  fs::create_directories(eff.out_dir);
  const fs::path dir(eff.out_dir);
  write_report_json(report, (dir / "report.json").string());
  if (!report.replicates.rows.empty())
    write_replicates_csv(report.replicates, (dir / "replicates.csv").string());
  return report;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliOptions opts;
  std::uint64_t seed = 0;

  CLI::App app{"finite-state particle system experiment runner"};
  app.require_subcommand(1);
  app.add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config)");
  app.add_option("--out", opts.out_dir, "output directory (overrides config)");
  app.add_flag("--quick", opts.quick,
               "divide replicate counts by 100; statistical flags become advisory");
  app.add_option("--threads", opts.threads, "worker threads")->check(CLI::Range(1, 1024));

  app.add_subcommand("validate", "deterministic oracle self-checks")->fallthrough();
  app.add_subcommand("bias", "one-step kernel bias vs the exact target")->fallthrough();
  app.add_subcommand("ergodicity", "m-step total variation decay")->fallthrough();
  app.add_subcommand("scan", "horizon scan with particle count tied to horizon")
      ->fallthrough();
  app.add_subcommand("clt", "replicate distribution of the rescaled estimator error")
      ->fallthrough();
  app.add_subcommand("diag", "reference weight share / selection ratio diagnostics")
      ->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  opts.subcommand = app.get_subcommands().front()->get_name();
  opts.seed = seed;
  opts.seed_given = seed_opt->count() > 0;

  try {
    const ExperimentReport report = run_experiment(opts);
    out << report.summary_line() << "\n";
    return report.all_pass() ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace csmc
