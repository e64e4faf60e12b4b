#pragma once

#include <cstdint>
#include <vector>

#include "csmc/model.hpp"
#include "csmc/rng.hpp"

namespace csmc {

// One real value per path of a fixed horizon, in path enumeration order.
struct PathTable {
  int num_states = 0;
  int horizon = 0;
  std::vector<double> values;

  double at(std::size_t index) const { return values[index]; }
  double operator()(const Path& path) const {
    return values[path_index(num_states, path.states)];
  }
  double mass() const;
  // Distribution of coordinate X_k obtained by summing values over the
  // other coordinates.
  std::vector<double> marginal(int k) const;
};

// The intermediate laws eta[k] for k = 0..n and the terminal target pi,
// all exact. eta_mass[k] is the unnormalized mass of eta_k (so
// eta_mass[0] = 1); pi_mass is the mass of eta_n reweighted by the
// final potential.
struct ExactMeasures {
  std::vector<PathTable> eta;
  PathTable pi;
  std::vector<double> eta_mass;
  double pi_mass = 0;
};

// Exact path enumeration of eta_0..eta_n and pi. Enumeration is capped
// at 10^7 paths (TooLargeError); an all-zero weight table raises
// ZeroNormalizerError.
ExactMeasures exact_measures(const HmmModel& model);

// X_k-marginal of eta_k by the forward state recursion, independent of
// path enumeration. Used to cross-check exact_measures.
std::vector<double> forward_marginal(const HmmModel& model, int k);

// Backward tables over states:
//   q_terminal[k][x] = expected product of potentials G_k..G_n along the
//                      chain started at X_k = x  (so q_terminal[n] = G_n),
//   p_future[k][x]   = the same product taken over G_{k+1}..G_n, with the
//                      convention p_future[n] = 1.
// They satisfy q_terminal[k] = G_k * p_future[k] elementwise and the
// one-step recursion p_future[k](x) = sum_x' q(x'|x) G_{k+1}(x') p_future[k+1](x').
struct BackwardTable {
  std::vector<std::vector<double>> q_terminal;
  std::vector<std::vector<double>> p_future;
};

BackwardTable backward_tables(const HmmModel& model);

// Analytic upper bound on |E f(kernel output) - pi(f)| for f with
// 0 <= f <= 1, in terms of the mixing constants (a, c, g_lower), the
// horizon n >= 1 and the particle count N >= 2:
//   (2(n+1)r - 1)/(N - 1 + 2r) + n r^2 / N      with r = a c / g_lower.
// Exposed with raw constants so hypothetical values can be scanned.
double bias_bound(int n, std::int64_t N, double a, double c, double g_lower);

// Asymptotic variance of sqrt(N) * (eta_hat_n(f) - eta_n(f)):
//   eta_n((f - eta_n f)^2)
//     + sum_{k<n} eta_k( (Q_{k,n}(f) - eta_k(Q_{k,n}f))^2 ) / eta_k(Q_{k,n}1)^2
// computed by exact enumeration. Path-dependent f uses prefix tables;
// terminal-only f a state recursion; small cases evaluate both and
// require exact agreement.
double clt_variance(const HmmModel& model, const TestFunction& f);

// max f - min f over all paths.
double osc(const TestFunction& f);

// Exact transition matrix of the path-space kernel for N particles,
// obtained by exhaustive enumeration of every particle state, ancestor
// and selection outcome with its probability. Row/column indices are
// path enumeration indices.
struct PathKernel {
  int num_states = 0;
  int horizon = 0;
  std::int64_t particles = 0;
  std::vector<double> matrix;  // row-major, dim x dim

  std::size_t dim() const { return path_count(num_states, horizon); }
  double at(std::size_t row, std::size_t col) const {
    return matrix[row * dim() + col];
  }
};

PathKernel exact_kernel(const HmmModel& model, std::int64_t N);

// max_row |sum_col K(row,col) - 1|
double row_sum_error(const PathKernel& kernel);
// max_col |sum_row pi(row) K(row,col) - pi(col)|
double invariance_residual(const PathKernel& kernel, const PathTable& pi);

// Inverse-CDF sampling of whole paths from a PathTable distribution.
class PathSampler {
 public:
  explicit PathSampler(const PathTable& table);
  Path operator()(RandomStream& rng) const;

 private:
  int num_states_ = 0;
  int horizon_ = 0;
  std::vector<double> cdf_;
};

}  // namespace csmc
