#include "csmc/smc.hpp"

#include <algorithm>
#include <stdexcept>

namespace csmc {

std::vector<int> multinomial_sample(std::span<const double> weights, int count,
                                    RandomStream& rng) {
  if (count < 1) throw std::invalid_argument("multinomial_sample: count must be >= 1");
  double wmax = 0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("multinomial_sample: negative weight");
    wmax = std::max(wmax, w);
  }
  if (wmax <= 0)
    throw ZeroWeightVectorError("multinomial_sample: all weights are zero");
  std::vector<double> cdf(weights.size());
  double acc = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    acc += weights[j] / wmax;
    cdf[j] = acc;
  }
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int d = 0; d < count; ++d)
    out[static_cast<std::size_t>(d)] =
        static_cast<int>(pick_from_cdf(cdf, rng.next_unit()));
  return out;
}

std::vector<double> bg_weights(const HmmModel& model, int k,
                               std::span<const int> particle_states) {
  std::vector<double> w(particle_states.size());
  double wmax = 0;
  for (std::size_t j = 0; j < particle_states.size(); ++j) {
    w[j] = model.potential(k, particle_states[j]);
    wmax = std::max(wmax, w[j]);
  }
  if (wmax <= 0)
    throw ZeroWeightVectorError("bg_weights: potential vanishes on every particle");
  return w;
}

ParticleSystem run_smc(const HmmModel& model, int N, const StreamKey& key) {
  if (N < 1) throw std::invalid_argument("run_smc: need N >= 1");
  const int n = model.horizon();
  ParticleSystem sys;
  sys.num_particles = N;
  sys.horizon = n;
  sys.conditional = false;
  sys.states.assign(static_cast<std::size_t>(n + 1) * (N + 1), -1);
  sys.ancestors.assign(static_cast<std::size_t>(n) * (N + 1), 0);

  {
    RandomStream init(derive(key, "init"));
    for (int i = 1; i <= N; ++i)
      sys.states[static_cast<std::size_t>(i)] = model.sample_initial(init);
  }
  for (int k = 1; k <= n; ++k) {
    const std::span<const int> prev{
        sys.states.data() + static_cast<std::size_t>(k - 1) * (N + 1) + 1,
        static_cast<std::size_t>(N)};
    const std::vector<double> w = bg_weights(model, k - 1, prev);
    RandomStream sel(derive(key, "select", k));
    const std::vector<int> anc = multinomial_sample(w, N, sel);
    RandomStream prop(derive(key, "prop", k));
    for (int i = 1; i <= N; ++i) {
      const int a = anc[static_cast<std::size_t>(i - 1)] + 1;  // slots 1..N
      sys.ancestors[static_cast<std::size_t>(k - 1) * (N + 1) +
                    static_cast<std::size_t>(i)] = a;
      sys.states[static_cast<std::size_t>(k) * (N + 1) + static_cast<std::size_t>(i)] =
          model.sample_transition(sys.state(k - 1, a), prop);
    }
  }
  return sys;
}

void trace_into(const ParticleSystem& system, int i, Path& out) {
  if (i < 0 || i > system.num_particles ||
      (!system.conditional && i == 0))
    throw IndexOutOfRangeError("trace_ancestry: slot out of range");
  const int n = system.horizon;
  out.states.resize(static_cast<std::size_t>(n) + 1);
  int b = i;
  for (int k = n;; --k) {
    out.states[static_cast<std::size_t>(k)] = system.state(k, b);
    if (k == 0) break;
    b = system.ancestor(k - 1, b);
  }
}

Path trace_ancestry(const ParticleSystem& system, int i) {
  Path out;
  trace_into(system, i, out);
  return out;
}

EmpiricalMeasure traced_measure(const ParticleSystem& system) {
  const int N = system.num_particles;
  EmpiricalMeasure measure;
  measure.atoms.reserve(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i)
    measure.atoms.emplace_back(trace_ancestry(system, i), 1.0 / N);
  measure.normalized = true;
  return measure;
}

double empirical_estimate(const EmpiricalMeasure& measure, const TestFunction& f) {
  if (!measure.normalized)
    throw std::invalid_argument("empirical_estimate: measure not normalized");
  double acc = 0;
  for (const auto& [path, weight] : measure.atoms) acc += weight * f(path);
  return acc;
}

double traced_mean(const ParticleSystem& system, const TestFunction& f) {
  const int N = system.num_particles;
  const int n = system.horizon;
  if (f.terminal_only()) {
    const std::span<const double> term = f.terminal_values();
    double acc = 0;
    for (int i = 1; i <= N; ++i)
      acc += term[static_cast<std::size_t>(system.state(n, i))];
    return acc / N;
  }
  Path buf;
  double acc = 0;
  for (int i = 1; i <= N; ++i) {
    trace_into(system, i, buf);
    acc += f(buf);
  }
  return acc / N;
}

}  // namespace csmc
