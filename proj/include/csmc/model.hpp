#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "csmc/errors.hpp"
#include "csmc/rng.hpp"

namespace csmc {

// A state trajectory x_{0:n}.
struct Path {
  std::vector<int> states;

  Path() = default;
  explicit Path(std::vector<int> s) : states(std::move(s)) {}
  Path(std::initializer_list<int> s) : states(s) {}

  int length() const { return static_cast<int>(states.size()); }
  int horizon() const { return static_cast<int>(states.size()) - 1; }
  int operator[](int k) const { return states[static_cast<std::size_t>(k)]; }
  int& operator[](int k) { return states[static_cast<std::size_t>(k)]; }

  friend bool operator==(const Path&, const Path&) = default;
};

// Paths of a fixed horizon enumerate lexicographically in (x_0,...,x_n),
// x_0 most significant.
std::size_t path_count(int num_states, int horizon);
std::size_t path_index(int num_states, std::span<const int> states);
Path path_at(int num_states, int horizon, std::size_t index);

// Raw model description as read from a spec file; validated by build_model.
struct ModelSpec {
  std::string name;
  int num_states = 0;
  int horizon = 0;
  std::vector<double> m0;
  std::vector<std::vector<double>> q;
  // Either horizon+1 rows, or a single row with constant_potentials set,
  // which broadcasts that row over every time step.
  std::vector<std::vector<double>> potentials;
  bool constant_potentials = false;
};

ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json model_spec_to_json(const ModelSpec& spec);
ModelSpec load_model_spec(const std::string& path);

// Finite-state hidden Markov model: initial law m0, one row-stochastic
// transition matrix q shared by all steps, and per-time nonnegative
// potentials G_0..G_n. Immutable after construction and safe to share
// across threads.
class HmmModel {
 public:
  int num_states() const { return num_states_; }
  int horizon() const { return horizon_; }
  const std::string& name() const { return name_; }

  const std::vector<double>& initial() const { return m0_; }
  double initial(int s) const { return m0_[static_cast<std::size_t>(s)]; }

  double transition(int from, int to) const {
    return q_[static_cast<std::size_t>(from) * num_states_ + to];
  }
  std::span<const double> transition_row(int from) const {
    return {q_.data() + static_cast<std::size_t>(from) * num_states_,
            static_cast<std::size_t>(num_states_)};
  }

  std::span<const double> potentials(int t) const {
    return {potentials_[static_cast<std::size_t>(t)].data(),
            static_cast<std::size_t>(num_states_)};
  }
  double potential(int t, int s) const {
    return potentials_[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
  }

  int sample_initial(RandomStream& rng) const {
    return static_cast<int>(pick_from_cdf(m0_cdf_, rng.next_unit()));
  }
  int sample_transition(int from, RandomStream& rng) const {
    const std::span<const double> row{
        q_cdf_.data() + static_cast<std::size_t>(from) * num_states_,
        static_cast<std::size_t>(num_states_)};
    return static_cast<int>(pick_from_cdf(row, rng.next_unit()));
  }

 private:
  friend HmmModel build_model(const ModelSpec& spec);
  HmmModel() = default;

  std::string name_;
  int num_states_ = 0;
  int horizon_ = 0;
  std::vector<double> m0_, m0_cdf_;
  std::vector<double> q_, q_cdf_;  // row-major num_states x num_states
  std::vector<std::vector<double>> potentials_;
};

// Validates a spec and returns the model. Input sums may be off by up to
// 1e-9; rows are renormalized to exact unit mass internally.
HmmModel build_model(const ModelSpec& spec);

// Constants of the mixing assumptions: a bounds the potentials from above,
// g_lower bounds min/max ratios of the backward p functions from below,
// and 1/c bounds the one-step potential-weighted transition mass from
// below. For horizon 0 the latter two default to 1.
struct MixingConstants {
  double a = 0;
  double g_lower = 1;
  double c = 1;

  // The combination a * c / g_lower that bounds every realized tau term.
  double acg() const { return a * c / g_lower; }
};

// Computes (a, g_lower, c) exactly from the model's backward tables.
// Throws DegeneratePotentialError when a required minimum is zero.
MixingConstants check_assumptions(const HmmModel& model);

// A real function of whole paths, stored as a full table in path
// enumeration order. Functions that factor through the terminal state
// additionally keep a state-indexed view for O(1) evaluation.
class TestFunction {
 public:
  static TestFunction terminal_indicator(int num_states, int horizon, int state);
  static TestFunction coordinate_sum(int num_states, int horizon);
  static TestFunction state_count(int num_states, int horizon, int state);
  static TestFunction constant(int num_states, int horizon, double value);
  static TestFunction from_table(int num_states, int horizon, std::vector<double> values);
  static TestFunction from_terminal(int num_states, int horizon, std::vector<double> values);

  double operator()(const Path& path) const {
    if (!terminal_.empty())
      return terminal_[static_cast<std::size_t>(path.states.back())];
    return table_[path_index(num_states_, path.states)];
  }
  double at_index(std::size_t index) const { return table_[index]; }

  const std::vector<double>& table() const { return table_; }
  bool terminal_only() const { return !terminal_.empty(); }
  std::span<const double> terminal_values() const { return terminal_; }
  double sup_norm() const { return sup_norm_; }
  int num_states() const { return num_states_; }
  int horizon() const { return horizon_; }

 private:
  TestFunction(int num_states, int horizon, std::vector<double> table,
               std::vector<double> terminal);

  int num_states_ = 0;
  int horizon_ = 0;
  std::vector<double> table_;
  std::vector<double> terminal_;
  double sup_norm_ = 0;
};

}  // namespace csmc
