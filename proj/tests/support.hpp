#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "csmc/model.hpp"
#include "csmc/rng.hpp"

// Shared fixtures plus brute-force cross-checks. Everything here sums over
// paths directly and shares no recursion with the library, so agreement is
// evidence, not tautology.
namespace csmc_test {

inline csmc::ModelSpec two_state_spec(int horizon) {
  csmc::ModelSpec spec;
  spec.name = "two_state";
  spec.num_states = 2;
  spec.horizon = horizon;
  spec.m0 = {0.5, 0.5};
  spec.q = {{0.9, 0.1}, {0.2, 0.8}};
  spec.potentials = {{0.5, 2.0}};
  spec.constant_potentials = true;
  return spec;
}

inline csmc::HmmModel two_state_model(int horizon) {
  return csmc::build_model(two_state_spec(horizon));
}

// 2..4 states, horizon 0..6, strictly positive rows.
inline csmc::ModelSpec random_model_spec(csmc::RandomStream& rng) {
  csmc::ModelSpec spec;
  spec.name = "random";
  spec.num_states = 2 + static_cast<int>(rng.next_u64() % 3);
  spec.horizon = static_cast<int>(rng.next_u64() % 7);
  auto positive_row = [&](int len, double lo, double hi) {
    std::vector<double> row(static_cast<std::size_t>(len));
    for (double& v : row) v = lo + (hi - lo) * rng.next_unit();
    return row;
  };
  auto normalize = [](std::vector<double> row) {
    double total = 0;
    for (double v : row) total += v;
    for (double& v : row) v /= total;
    return row;
  };
  spec.m0 = normalize(positive_row(spec.num_states, 0.1, 1.1));
  for (int x = 0; x < spec.num_states; ++x)
    spec.q.push_back(normalize(positive_row(spec.num_states, 0.1, 1.1)));
  for (int k = 0; k <= spec.horizon; ++k)
    spec.potentials.push_back(positive_row(spec.num_states, 0.1, 2.1));
  return spec;
}

// Unnormalized weight of the prefix x_{0:k}: m0 and transitions up to k,
// potentials strictly before k.
inline double brute_prefix_weight(const csmc::HmmModel& m, const csmc::Path& p, int k) {
  double w = m.initial()[static_cast<std::size_t>(p[0])];
  for (int j = 1; j <= k; ++j)
    w *= m.transition_row(p[j - 1])[static_cast<std::size_t>(p[j])];
  for (int j = 0; j < k; ++j) w *= m.potential(j, p[j]);
  return w;
}

inline std::vector<double> brute_prefix_weights(const csmc::HmmModel& m, int k) {
  const std::size_t count = csmc::path_count(m.num_states(), k);
  std::vector<double> w(count);
  for (std::size_t idx = 0; idx < count; ++idx)
    w[idx] = brute_prefix_weight(m, csmc::path_at(m.num_states(), k, idx), k);
  return w;
}

inline double brute_eta_mass(const csmc::HmmModel& m, int k) {
  double total = 0;
  for (double w : brute_prefix_weights(m, k)) total += w;
  return total;
}

// Marginal of the k-th time-step law (potentials before k applied).
inline std::vector<double> brute_eta_marginal(const csmc::HmmModel& m, int k) {
  const int S = m.num_states();
  std::vector<double> marg(static_cast<std::size_t>(S), 0.0);
  const std::vector<double> w = brute_prefix_weights(m, k);
  double total = 0;
  for (std::size_t idx = 0; idx < w.size(); ++idx) {
    marg[static_cast<std::size_t>(csmc::path_at(S, k, idx)[k])] += w[idx];
    total += w[idx];
  }
  for (double& v : marg) v /= total;
  return marg;
}

// Terminal path law: every potential applied, normalized over full paths.
inline std::vector<double> brute_pi_table(const csmc::HmmModel& m) {
  const int n = m.horizon();
  std::vector<double> w = brute_prefix_weights(m, n);
  double total = 0;
  for (std::size_t idx = 0; idx < w.size(); ++idx) {
    w[idx] *= m.potential(n, csmc::path_at(m.num_states(), n, idx)[n]);
    total += w[idx];
  }
  for (double& v : w) v /= total;
  return w;
}

inline double brute_pi_mass(const csmc::HmmModel& m) {
  const int n = m.horizon();
  const std::vector<double> w = brute_prefix_weights(m, n);
  double total = 0;
  for (std::size_t idx = 0; idx < w.size(); ++idx)
    total += w[idx] * m.potential(n, csmc::path_at(m.num_states(), n, idx)[n]);
  return total;
}

// Sum over completions x_{k+1:n} from x_k = x of every potential from k on
// and every transition along the way.
inline double brute_terminal_weight(const csmc::HmmModel& m, int k, int x) {
  const int n = m.horizon();
  if (k == n) return m.potential(n, x);
  const int suffix_len = n - k;
  const std::size_t count = csmc::path_count(m.num_states(), suffix_len - 1);
  double total = 0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const csmc::Path suffix = csmc::path_at(m.num_states(), suffix_len - 1, idx);
    double w = m.potential(k, x) *
               m.transition_row(x)[static_cast<std::size_t>(suffix[0])];
    for (int j = 0; j < suffix_len; ++j) {
      w *= m.potential(k + 1 + j, suffix[j]);
      if (j + 1 < suffix_len)
        w *= m.transition_row(suffix[j])[static_cast<std::size_t>(suffix[j + 1])];
    }
    total += w;
  }
  return total;
}

// Asymptotic variance by direct summation: prefix laws and suffix sums are
// enumerated term by term.
inline double brute_clt_variance(const csmc::HmmModel& m, const csmc::TestFunction& f) {
  const int S = m.num_states();
  const int n = m.horizon();

  // The fluctuation sum applies to f centered at its terminal-law mean, so
  // the variance of a constant is exactly zero.
  double ef = 0;
  {
    std::vector<double> eta = brute_prefix_weights(m, n);
    double mass = 0;
    for (double w : eta) mass += w;
    const std::size_t count = csmc::path_count(S, n);
    for (std::size_t idx = 0; idx < count; ++idx)
      ef += eta[idx] / mass * f(csmc::path_at(S, n, idx));
  }

  // suffix_value(k, prefix, use_f): sum over x_{k+1:n} of
  // prod_{j=k}^{n-1} G_j(x_j) q(x_j, x_{j+1}) times centered f at the full
  // path (or times 1), with no potential at time n.
  auto suffix_value = [&](int k, const csmc::Path& prefix, bool use_f) {
    if (k == n) return use_f ? f(prefix) - ef : 1.0;
    const int suffix_len = n - k;
    const std::size_t count = csmc::path_count(S, suffix_len - 1);
    double total = 0;
    csmc::Path full = prefix;
    full.states.resize(static_cast<std::size_t>(n) + 1);
    for (std::size_t idx = 0; idx < count; ++idx) {
      const csmc::Path suffix = csmc::path_at(S, suffix_len - 1, idx);
      for (int j = 0; j < suffix_len; ++j) full[k + 1 + j] = suffix[j];
      double w = 1;
      for (int j = k; j < n; ++j)
        w *= m.potential(j, full[j]) *
             m.transition_row(full[j])[static_cast<std::size_t>(full[j + 1])];
      total += w * (use_f ? f(full) - ef : 1.0);
    }
    return total;
  };

  double sigma2 = 0;
  for (int k = 0; k <= n; ++k) {
    std::vector<double> eta = brute_prefix_weights(m, k);
    double mass = 0;
    for (double w : eta) mass += w;
    for (double& w : eta) w /= mass;

    double mean_f = 0;
    double mean_one = 0;
    const std::size_t count = csmc::path_count(S, k);
    std::vector<double> tf(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
      const csmc::Path prefix = csmc::path_at(S, k, idx);
      tf[idx] = suffix_value(k, prefix, true);
      mean_f += eta[idx] * tf[idx];
      mean_one += eta[idx] * suffix_value(k, prefix, false);
    }
    double term = 0;
    for (std::size_t idx = 0; idx < count; ++idx)
      term += eta[idx] * (tf[idx] - mean_f) * (tf[idx] - mean_f);
    sigma2 += (k == n) ? term : term / (mean_one * mean_one);
  }
  return sigma2;
}

}  // namespace csmc_test
