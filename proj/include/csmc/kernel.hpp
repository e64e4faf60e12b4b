#pragma once

#include <optional>

#include "csmc/smc.hpp"

namespace csmc {

// Selection weights over N+1 slots with the reference in slot 0:
// w[0] = G_k(ref_state), w[i] = G_k(particle_states[i-1]). Raw values;
// normalizing over all N+1 gives the conditional selection law.
std::vector<double> perturbed_bg_weights(const HmmModel& model, int k,
                                         std::span<const int> particle_states,
                                         int ref_state);

// Conditional particle system: slot 0 pinned to ref_path, slots 1..N
// initialized from m0 and propagated through selection over all N+1
// slots with the perturbed weights.
ParticleSystem run_conditional_system(const HmmModel& model, const Path& ref_path,
                                      int N, const StreamKey& key);

// Uniform measure over the traced paths of slots 1..N of a conditional
// system.
EmpiricalMeasure eta_hat(const ParticleSystem& system);

// One draw from the path-space kernel: the conditional system plus a
// final selection over the N+1 terminal weights.
struct KernelDraw {
  Path output;
  int selected_index = 0;  // 0 means the reference path survived
  std::optional<ParticleSystem> system;
};

KernelDraw kernel_step(const HmmModel& model, const Path& ref_path, int N,
                       const StreamKey& key, bool retain_system = false);

// steps iterations of kernel_step, each conditioning on the previous
// output. Step t draws from the sub-stream keyed by t, so a chain can be
// restarted from any step given the path there.
std::vector<Path> kernel_chain(const HmmModel& model, const Path& init_path,
                               int N, int steps, const StreamKey& key);

}  // namespace csmc
