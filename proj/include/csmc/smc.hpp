#pragma once

#include <span>
#include <utility>
#include <vector>

#include "csmc/model.hpp"
#include "csmc/rng.hpp"

namespace csmc {

// A realized particle system. Slot 0 is reserved for the reference path
// in conditional mode; unconditional systems keep it at -1 with ancestor
// 0. Storage is time-major: row k holds the N+1 slots at time k.
struct ParticleSystem {
  int num_particles = 0;  // N, slots 1..N
  int horizon = 0;
  bool conditional = false;
  std::vector<int> states;     // (horizon+1) x (N+1)
  std::vector<int> ancestors;  // horizon x (N+1), ancestor of slot i at time k+1

  int state(int k, int i) const {
    return states[static_cast<std::size_t>(k) * (num_particles + 1) +
                  static_cast<std::size_t>(i)];
  }
  int ancestor(int k, int i) const {
    return ancestors[static_cast<std::size_t>(k) * (num_particles + 1) +
                     static_cast<std::size_t>(i)];
  }
  std::span<const int> row(int k) const {
    return {states.data() + static_cast<std::size_t>(k) * (num_particles + 1),
            static_cast<std::size_t>(num_particles) + 1};
  }
};

// Weighted paths; eta_hat and friends.
struct EmpiricalMeasure {
  std::vector<std::pair<Path, double>> atoms;
  bool normalized = false;
};

// count i.i.d. draws from the normalized weight vector, by inverse CDF
// over the cumulative sums in index order. Weights are max-rescaled
// before accumulation.
std::vector<int> multinomial_sample(std::span<const double> weights, int count,
                                    RandomStream& rng);

// G_k evaluated at each particle state (raw, unnormalized).
std::vector<double> bg_weights(const HmmModel& model, int k,
                               std::span<const int> particle_states);

// Standard multinomial-resampling SMC with N particles in slots 1..N.
// Resampling happens at every step. Sub-streams are derived from the key
// per role and time so runs are bit-reproducible.
ParticleSystem run_smc(const HmmModel& model, int N, const StreamKey& key);

// Backward ancestry trace of slot i: B_n = i, B_k = ancestor of B_{k+1}.
Path trace_ancestry(const ParticleSystem& system, int i);
void trace_into(const ParticleSystem& system, int i, Path& out);

// Uniform empirical measure over the traced paths of slots 1..N.
EmpiricalMeasure traced_measure(const ParticleSystem& system);

double empirical_estimate(const EmpiricalMeasure& measure, const TestFunction& f);

// Mean of f over the traced paths of slots 1..N without materializing
// the measure. Terminal-only f shortcuts to the last state row.
double traced_mean(const ParticleSystem& system, const TestFunction& f);

}  // namespace csmc
