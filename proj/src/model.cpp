#include "csmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csmc/oracle.hpp"

namespace csmc {

namespace {

constexpr double kStochasticTol = 1e-9;
constexpr std::size_t kMaxPathTable = 100'000'000;

void normalize_in_place(std::vector<double>& row) {
  const double total = std::accumulate(row.begin(), row.end(), 0.0);
  for (double& v : row) v /= total;
}

}  // namespace

std::size_t path_count(int num_states, int horizon) {
  std::size_t out = 1;
  const auto s = static_cast<std::size_t>(num_states);
  for (int k = 0; k <= horizon; ++k) {
    if (out > std::numeric_limits<std::size_t>::max() / s)
      throw TooLargeError("path_count: state space too large to enumerate");
    out *= s;
  }
  return out;
}

std::size_t path_index(int num_states, std::span<const int> states) {
  std::size_t idx = 0;
  for (int s : states) {
    if (s < 0 || s >= num_states)
      throw IndexOutOfRangeError("path_index: state out of range");
    idx = idx * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s);
  }
  return idx;
}

Path path_at(int num_states, int horizon, std::size_t index) {
  if (index >= path_count(num_states, horizon))
    throw IndexOutOfRangeError("path_at: index out of range");
  Path path(std::vector<int>(static_cast<std::size_t>(horizon) + 1));
  for (int k = horizon; k >= 0; --k) {
    path[k] = static_cast<int>(index % static_cast<std::size_t>(num_states));
    index /= static_cast<std::size_t>(num_states);
  }
  return path;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  try {
    spec.name = j.value("name", std::string{});
    spec.num_states = j.at("num_states").get<int>();
    spec.horizon = j.at("horizon").get<int>();
    spec.m0 = j.at("m0").get<std::vector<double>>();
    spec.q = j.at("q").get<std::vector<std::vector<double>>>();
    const nlohmann::json& pot = j.at("potentials");
    if (pot.is_object()) {
      spec.potentials = {pot.at("constant").get<std::vector<double>>()};
      spec.constant_potentials = true;
    } else {
      spec.potentials = pot.get<std::vector<std::vector<double>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return spec;
}

nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  if (!spec.name.empty()) j["name"] = spec.name;
  j["num_states"] = spec.num_states;
  j["horizon"] = spec.horizon;
  j["m0"] = spec.m0;
  j["q"] = spec.q;
  if (spec.constant_potentials)
    j["potentials"] = nlohmann::ordered_json{{"constant", spec.potentials.at(0)}};
  else
    j["potentials"] = spec.potentials;
  return j;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse model file " + path + ": " + e.what());
  }
  return model_spec_from_json(j);
}

HmmModel build_model(const ModelSpec& spec) {
  if (spec.num_states < 1)
    throw DimensionMismatchError("model: num_states must be >= 1");
  if (spec.horizon < 0)
    throw DimensionMismatchError("model: horizon must be >= 0");
  const auto s = static_cast<std::size_t>(spec.num_states);
  const auto rows = static_cast<std::size_t>(spec.horizon) + 1;

  if (spec.m0.size() != s)
    throw DimensionMismatchError("model: m0 must have num_states entries");
  for (double v : spec.m0)
    if (!(v >= 0) || !std::isfinite(v))
      throw NonStochasticError("model: m0 entries must be finite and >= 0");
  {
    const double total = std::accumulate(spec.m0.begin(), spec.m0.end(), 0.0);
    if (std::abs(total - 1) > kStochasticTol)
      throw NonStochasticError("model: m0 must sum to 1");
  }

  if (spec.q.size() != s)
    throw DimensionMismatchError("model: q must have num_states rows");
  for (std::size_t r = 0; r < s; ++r) {
    if (spec.q[r].size() != s)
      throw DimensionMismatchError("model: q rows must have num_states entries");
    double total = 0;
    for (double v : spec.q[r]) {
      if (!(v >= 0) || !std::isfinite(v))
        throw NonStochasticError("model: q entries must be finite and >= 0");
      total += v;
    }
    if (std::abs(total - 1) > kStochasticTol) {
      std::ostringstream msg;
      msg << "model: q row " << r << " must sum to 1";
      throw NonStochasticError(msg.str());
    }
  }

  std::vector<std::vector<double>> potentials;
  if (spec.constant_potentials) {
    if (spec.potentials.size() != 1)
      throw DimensionMismatchError("model: constant potentials need exactly one row");
    potentials.assign(rows, spec.potentials[0]);
  } else {
    if (spec.potentials.size() != rows)
      throw DimensionMismatchError("model: potentials must have horizon+1 rows");
    potentials = spec.potentials;
  }
  for (std::size_t t = 0; t < rows; ++t) {
    if (potentials[t].size() != s)
      throw DimensionMismatchError("model: potential rows must have num_states entries");
    double vmax = 0;
    for (double v : potentials[t]) {
      if (!(v >= 0) || !std::isfinite(v))
        throw NegativePotentialError("model: potentials must be finite and >= 0");
      vmax = std::max(vmax, v);
    }
    if (vmax == 0) {
      std::ostringstream msg;
      msg << "model: potential row " << t << " is identically zero";
      throw DegeneratePotentialError(msg.str());
    }
  }

  HmmModel model;
  model.name_ = spec.name;
  model.num_states_ = spec.num_states;
  model.horizon_ = spec.horizon;

  model.m0_ = spec.m0;
  normalize_in_place(model.m0_);
  model.m0_cdf_.resize(s);
  std::partial_sum(model.m0_.begin(), model.m0_.end(), model.m0_cdf_.begin());

  model.q_.resize(s * s);
  model.q_cdf_.resize(s * s);
  for (std::size_t r = 0; r < s; ++r) {
    std::vector<double> row = spec.q[r];
    normalize_in_place(row);
    std::copy(row.begin(), row.end(), model.q_.begin() + static_cast<std::ptrdiff_t>(r * s));
    std::partial_sum(row.begin(), row.end(),
                     model.q_cdf_.begin() + static_cast<std::ptrdiff_t>(r * s));
  }

  model.potentials_ = std::move(potentials);
  return model;
}

MixingConstants check_assumptions(const HmmModel& model) {
  MixingConstants out;
  const int n = model.horizon();
  for (int t = 0; t <= n; ++t)
    for (double v : model.potentials(t)) out.a = std::max(out.a, v);
  if (out.a == 0)
    throw DegeneratePotentialError("assumptions: all potentials are zero");
  if (n == 0) return out;

  const BackwardTable back = backward_tables(model);
  out.g_lower = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    double mn = std::numeric_limits<double>::infinity(), mx = 0;
    for (double v : back.p_future[static_cast<std::size_t>(k)]) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mn == 0) {
      std::ostringstream msg;
      msg << "assumptions: future mass vanishes from some state at time " << k;
      throw DegeneratePotentialError(msg.str());
    }
    out.g_lower = std::min(out.g_lower, mn / mx);
  }

  double mass_min = std::numeric_limits<double>::infinity();
  for (int t = 0; t < n; ++t) {
    for (int x = 0; x < model.num_states(); ++x) {
      double mass = 0;
      for (int y = 0; y < model.num_states(); ++y)
        mass += model.transition(x, y) * model.potential(t + 1, y);
      mass_min = std::min(mass_min, mass);
    }
  }
  if (mass_min == 0)
    throw DegeneratePotentialError(
        "assumptions: one-step reweighted transition mass vanishes");
  out.c = 1 / mass_min;
  return out;
}

TestFunction::TestFunction(int num_states, int horizon, std::vector<double> table,
                           std::vector<double> terminal)
    : num_states_(num_states),
      horizon_(horizon),
      table_(std::move(table)),
      terminal_(std::move(terminal)) {
  for (double v : table_) sup_norm_ = std::max(sup_norm_, std::abs(v));
}

TestFunction TestFunction::terminal_indicator(int num_states, int horizon, int state) {
  if (state < 0 || state >= num_states)
    throw IndexOutOfRangeError("terminal_indicator: state out of range");
  std::vector<double> terminal(static_cast<std::size_t>(num_states), 0.0);
  terminal[static_cast<std::size_t>(state)] = 1;
  return from_terminal(num_states, horizon, std::move(terminal));
}

TestFunction TestFunction::coordinate_sum(int num_states, int horizon) {
  const std::size_t count = path_count(num_states, horizon);
  if (count > kMaxPathTable)
    throw TooLargeError("coordinate_sum: path table too large");
  std::vector<double> table(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Path p = path_at(num_states, horizon, i);
    table[i] = std::accumulate(p.states.begin(), p.states.end(), 0.0);
  }
  return TestFunction(num_states, horizon, std::move(table), {});
}

TestFunction TestFunction::state_count(int num_states, int horizon, int state) {
  if (state < 0 || state >= num_states)
    throw IndexOutOfRangeError("state_count: state out of range");
  const std::size_t count = path_count(num_states, horizon);
  if (count > kMaxPathTable)
    throw TooLargeError("state_count: path table too large");
  std::vector<double> table(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Path p = path_at(num_states, horizon, i);
    table[i] = static_cast<double>(
        std::count(p.states.begin(), p.states.end(), state));
  }
  return TestFunction(num_states, horizon, std::move(table), {});
}

TestFunction TestFunction::constant(int num_states, int horizon, double value) {
  return from_terminal(num_states, horizon,
                       std::vector<double>(static_cast<std::size_t>(num_states), value));
}

TestFunction TestFunction::from_table(int num_states, int horizon,
                                      std::vector<double> values) {
  if (values.size() != path_count(num_states, horizon))
    throw DimensionMismatchError("from_table: need one value per path");
  return TestFunction(num_states, horizon, std::move(values), {});
}

TestFunction TestFunction::from_terminal(int num_states, int horizon,
                                         std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(num_states))
    throw DimensionMismatchError("from_terminal: need one value per state");
  const std::size_t count = path_count(num_states, horizon);
  if (count > kMaxPathTable)
    throw TooLargeError("from_terminal: path table too large");
  std::vector<double> table(count);
  for (std::size_t i = 0; i < count; ++i)
    table[i] = values[i % static_cast<std::size_t>(num_states)];
  return TestFunction(num_states, horizon, std::move(table), std::move(values));
}

}  // namespace csmc
