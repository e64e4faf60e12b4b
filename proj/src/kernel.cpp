#include "csmc/kernel.hpp"

#include <stdexcept>

namespace csmc {

std::vector<double> perturbed_bg_weights(const HmmModel& model, int k,
                                         std::span<const int> particle_states,
                                         int ref_state) {
  if (ref_state < 0 || ref_state >= model.num_states())
    throw IndexOutOfRangeError("perturbed_bg_weights: reference state out of range");
  std::vector<double> w(particle_states.size() + 1);
  w[0] = model.potential(k, ref_state);
  double wmax = w[0];
  for (std::size_t j = 0; j < particle_states.size(); ++j) {
    w[j + 1] = model.potential(k, particle_states[j]);
    wmax = std::max(wmax, w[j + 1]);
  }
  if (wmax <= 0)
    throw ZeroWeightVectorError(
        "perturbed_bg_weights: potential vanishes on reference and every particle");
  return w;
}

namespace {

void check_ref(const HmmModel& model, const Path& ref_path) {
  if (ref_path.length() != model.horizon() + 1)
    throw DimensionMismatchError("conditional system: reference path length mismatch");
  for (int s : ref_path.states)
    if (s < 0 || s >= model.num_states())
      throw IndexOutOfRangeError("conditional system: reference state out of range");
}

}  // namespace

ParticleSystem run_conditional_system(const HmmModel& model, const Path& ref_path,
                                      int N, const StreamKey& key) {
  if (N < 1) throw std::invalid_argument("run_conditional_system: need N >= 1");
  check_ref(model, ref_path);
  const int n = model.horizon();
  ParticleSystem sys;
  sys.num_particles = N;
  sys.horizon = n;
  sys.conditional = true;
  sys.states.assign(static_cast<std::size_t>(n + 1) * (N + 1), -1);
  sys.ancestors.assign(static_cast<std::size_t>(n) * (N + 1), 0);
  for (int k = 0; k <= n; ++k)
    sys.states[static_cast<std::size_t>(k) * (N + 1)] = ref_path[k];

  {
    RandomStream init(derive(key, "init"));
    for (int i = 1; i <= N; ++i)
      sys.states[static_cast<std::size_t>(i)] = model.sample_initial(init);
  }
  for (int k = 1; k <= n; ++k) {
    const std::span<const int> prev{
        sys.states.data() + static_cast<std::size_t>(k - 1) * (N + 1) + 1,
        static_cast<std::size_t>(N)};
    const std::vector<double> w =
        perturbed_bg_weights(model, k - 1, prev, ref_path[k - 1]);
    RandomStream sel(derive(key, "select", k));
    const std::vector<int> anc = multinomial_sample(w, N, sel);
    RandomStream prop(derive(key, "prop", k));
    for (int i = 1; i <= N; ++i) {
      const int a = anc[static_cast<std::size_t>(i - 1)];  // already a slot index
      sys.ancestors[static_cast<std::size_t>(k - 1) * (N + 1) +
                    static_cast<std::size_t>(i)] = a;
      sys.states[static_cast<std::size_t>(k) * (N + 1) + static_cast<std::size_t>(i)] =
          model.sample_transition(sys.state(k - 1, a), prop);
    }
  }
  return sys;
}

EmpiricalMeasure eta_hat(const ParticleSystem& system) {
  if (!system.conditional)
    throw std::invalid_argument("eta_hat: conditional system required");
  return traced_measure(system);
}

KernelDraw kernel_step(const HmmModel& model, const Path& ref_path, int N,
                       const StreamKey& key, bool retain_system) {
  ParticleSystem sys = run_conditional_system(model, ref_path, N, key);
  const int n = model.horizon();
  const std::span<const int> last{
      sys.states.data() + static_cast<std::size_t>(n) * (N + 1) + 1,
      static_cast<std::size_t>(N)};
  const std::vector<double> w = perturbed_bg_weights(model, n, last, ref_path[n]);
  RandomStream pick(derive(key, "pick"));
  KernelDraw draw;
  draw.selected_index = multinomial_sample(w, 1, pick)[0];
  draw.output = trace_ancestry(sys, draw.selected_index);
  if (retain_system) draw.system = std::move(sys);
  return draw;
}

std::vector<Path> kernel_chain(const HmmModel& model, const Path& init_path,
                               int N, int steps, const StreamKey& key) {
  if (steps < 1) throw std::invalid_argument("kernel_chain: need steps >= 1");
  std::vector<Path> out;
  out.reserve(static_cast<std::size_t>(steps));
  const Path* cur = &init_path;
  for (int t = 0; t < steps; ++t) {
    KernelDraw draw = kernel_step(model, *cur, N, derive(key, t));
    out.push_back(std::move(draw.output));
    cur = &out.back();
  }
  return out;
}

}  // namespace csmc
