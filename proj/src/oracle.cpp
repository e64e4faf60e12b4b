#include "csmc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csmc {

namespace {

constexpr std::size_t kEnumCap = 10'000'000;

}  // namespace

double PathTable::mass() const {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

std::vector<double> PathTable::marginal(int k) const {
  if (k < 0 || k > horizon)
    throw IndexOutOfRangeError("marginal: coordinate out of range");
  std::vector<double> out(static_cast<std::size_t>(num_states), 0.0);
  std::size_t stride = 1;
  for (int j = k; j < horizon; ++j) stride *= static_cast<std::size_t>(num_states);
  for (std::size_t i = 0; i < values.size(); ++i)
    out[(i / stride) % static_cast<std::size_t>(num_states)] += values[i];
  return out;
}

ExactMeasures exact_measures(const HmmModel& model) {
  const int n = model.horizon();
  const int S = model.num_states();
  if (path_count(S, n) > kEnumCap)
    throw TooLargeError("exact_measures: enumeration cap exceeded");

  ExactMeasures out;
  out.eta.reserve(static_cast<std::size_t>(n) + 1);
  out.eta_mass.reserve(static_cast<std::size_t>(n) + 1);

  // Unnormalized weights over prefixes x_{0:k}, grown one step at a time:
  // w_{k+1}(x_{0:k}, x') = w_k(x_{0:k}) G_k(x_k) q(x'|x_k).
  std::vector<double> w(model.initial().begin(), model.initial().end());
  for (int k = 0;; ++k) {
    const double mass = std::accumulate(w.begin(), w.end(), 0.0);
    if (mass <= 0)
      throw ZeroNormalizerError("exact_measures: all path weights are zero");
    PathTable table{S, k, w};
    for (double& v : table.values) v /= mass;
    out.eta.push_back(std::move(table));
    out.eta_mass.push_back(mass);
    if (k == n) break;

    std::vector<double> next(w.size() * static_cast<std::size_t>(S), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const int xk = static_cast<int>(i % static_cast<std::size_t>(S));
      const double base = w[i] * model.potential(k, xk);
      if (base == 0) continue;
      for (int x = 0; x < S; ++x)
        next[i * static_cast<std::size_t>(S) + static_cast<std::size_t>(x)] =
            base * model.transition(xk, x);
    }
    w = std::move(next);
  }

  out.pi.num_states = S;
  out.pi.horizon = n;
  out.pi.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    out.pi.values[i] =
        w[i] * model.potential(n, static_cast<int>(i % static_cast<std::size_t>(S)));
  out.pi_mass = std::accumulate(out.pi.values.begin(), out.pi.values.end(), 0.0);
  if (out.pi_mass <= 0)
    throw ZeroNormalizerError("exact_measures: terminal reweighting kills all mass");
  for (double& v : out.pi.values) v /= out.pi_mass;
  return out;
}

std::vector<double> forward_marginal(const HmmModel& model, int k) {
  if (k < 0 || k > model.horizon())
    throw IndexOutOfRangeError("forward_marginal: time out of range");
  const int S = model.num_states();
  std::vector<double> mu(model.initial().begin(), model.initial().end());
  for (int j = 1; j <= k; ++j) {
    std::vector<double> next(static_cast<std::size_t>(S), 0.0);
    for (int xp = 0; xp < S; ++xp) {
      const double base = mu[static_cast<std::size_t>(xp)] * model.potential(j - 1, xp);
      if (base == 0) continue;
      for (int x = 0; x < S; ++x)
        next[static_cast<std::size_t>(x)] += base * model.transition(xp, x);
    }
    const double mass = std::accumulate(next.begin(), next.end(), 0.0);
    if (mass <= 0)
      throw ZeroNormalizerError("forward_marginal: recursion mass vanished");
    for (double& v : next) v /= mass;
    mu = std::move(next);
  }
  return mu;
}

BackwardTable backward_tables(const HmmModel& model) {
  const int n = model.horizon();
  const int S = model.num_states();
  BackwardTable bt;
  bt.p_future.assign(static_cast<std::size_t>(n) + 1,
                     std::vector<double>(static_cast<std::size_t>(S), 1.0));
  bt.q_terminal.assign(static_cast<std::size_t>(n) + 1,
                       std::vector<double>(static_cast<std::size_t>(S), 0.0));
  for (int k = n - 1; k >= 0; --k) {
    for (int x = 0; x < S; ++x) {
      double acc = 0;
      for (int y = 0; y < S; ++y)
        acc += model.transition(x, y) * model.potential(k + 1, y) *
               bt.p_future[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(y)];
      bt.p_future[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] = acc;
    }
  }
  for (int k = 0; k <= n; ++k)
    for (int x = 0; x < S; ++x)
      bt.q_terminal[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] =
          model.potential(k, x) *
          bt.p_future[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
  return bt;
}

double bias_bound(int n, std::int64_t N, double a, double c, double g_lower) {
  if (n < 1) throw std::invalid_argument("bias_bound: horizon must be >= 1");
  if (N < 2) throw std::invalid_argument("bias_bound: need at least 2 particles");
  if (!(a > 0) || !(c > 0) || !(g_lower > 0))
    throw std::invalid_argument("bias_bound: constants must be positive");
  const double r = a * c / g_lower;
  const double nn = static_cast<double>(n);
  const double NN = static_cast<double>(N);
  return (2 * (nn + 1) * r - 1) / (NN - 1 + 2 * r) + nn * r * r / NN;
}

namespace {

// v_j(x) = expectation of h(X_n) * prod_{t=j..n-1} G_t(X_t) given X_j = x.
// Backward state recursion; v_n = h, no terminal potential.
std::vector<std::vector<double>> terminal_q_tables(const HmmModel& model,
                                                   std::span<const double> h) {
  const int n = model.horizon();
  const int S = model.num_states();
  std::vector<std::vector<double>> v(static_cast<std::size_t>(n) + 1);
  v[static_cast<std::size_t>(n)].assign(h.begin(), h.end());
  for (int j = n - 1; j >= 0; --j) {
    v[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(S));
    for (int x = 0; x < S; ++x) {
      double acc = 0;
      for (int y = 0; y < S; ++y)
        acc += model.transition(x, y) *
               v[static_cast<std::size_t>(j) + 1][static_cast<std::size_t>(y)];
      v[static_cast<std::size_t>(j)][static_cast<std::size_t>(x)] =
          model.potential(j, x) * acc;
    }
  }
  return v;
}

// T_j over prefixes x_{0:j}: T_n = f table, T_j(x_{0:j}) = G_j(x_j) *
// sum_x' q(x'|x_j) T_{j+1}(x_{0:j}, x').
std::vector<std::vector<double>> prefix_q_tables(const HmmModel& model,
                                                 std::span<const double> f_table) {
  const int n = model.horizon();
  const int S = model.num_states();
  std::vector<std::vector<double>> t(static_cast<std::size_t>(n) + 1);
  t[static_cast<std::size_t>(n)].assign(f_table.begin(), f_table.end());
  for (int j = n - 1; j >= 0; --j) {
    const std::vector<double>& up = t[static_cast<std::size_t>(j) + 1];
    std::vector<double>& cur = t[static_cast<std::size_t>(j)];
    cur.resize(up.size() / static_cast<std::size_t>(S));
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const int xj = static_cast<int>(i % static_cast<std::size_t>(S));
      double acc = 0;
      for (int x = 0; x < S; ++x)
        acc += model.transition(xj, x) *
               up[i * static_cast<std::size_t>(S) + static_cast<std::size_t>(x)];
      cur[i] = model.potential(j, xj) * acc;
    }
  }
  return t;
}

double clt_variance_prefix(const HmmModel& model, const TestFunction& f,
                           const ExactMeasures& meas) {
  const int n = model.horizon();
  const std::vector<double>& etan = meas.eta[static_cast<std::size_t>(n)].values;
  double ef = 0;
  for (std::size_t i = 0; i < etan.size(); ++i) ef += etan[i] * f.at_index(i);

  // The fluctuation terms apply to the centered function. Shifting before
  // building the tables keeps each level's local mean at zero, which is what
  // makes the variance vanish on constants.
  std::vector<double> shifted(etan.size());
  for (std::size_t i = 0; i < etan.size(); ++i) shifted[i] = f.at_index(i) - ef;
  const auto t = prefix_q_tables(model, shifted);
  const std::vector<double> ones(static_cast<std::size_t>(model.num_states()), 1.0);
  const auto u = terminal_q_tables(model, ones);

  double total = 0;
  for (std::size_t i = 0; i < etan.size(); ++i)
    total += etan[i] * shifted[i] * shifted[i];

  for (int k = 0; k < n; ++k) {
    const std::vector<double>& etak = meas.eta[static_cast<std::size_t>(k)].values;
    const std::vector<double>& tk = t[static_cast<std::size_t>(k)];
    double d = 0, m = 0;
    for (std::size_t i = 0; i < etak.size(); ++i) {
      d += etak[i] * u[static_cast<std::size_t>(k)]
                      [i % static_cast<std::size_t>(model.num_states())];
      m += etak[i] * tk[i];
    }
    double acc = 0;
    for (std::size_t i = 0; i < etak.size(); ++i)
      acc += etak[i] * (tk[i] - m) * (tk[i] - m);
    total += acc / (d * d);
  }
  return total;
}

double clt_variance_terminal(const HmmModel& model, const TestFunction& f,
                             const ExactMeasures& meas) {
  const int n = model.horizon();
  const int S = model.num_states();
  const std::vector<double> margn = meas.eta[static_cast<std::size_t>(n)].marginal(n);
  double ef = 0;
  for (int x = 0; x < S; ++x)
    ef += margn[static_cast<std::size_t>(x)] * f.terminal_values()[static_cast<std::size_t>(x)];

  std::vector<double> shifted(static_cast<std::size_t>(S));
  for (int x = 0; x < S; ++x)
    shifted[static_cast<std::size_t>(x)] =
        f.terminal_values()[static_cast<std::size_t>(x)] - ef;
  const auto v = terminal_q_tables(model, shifted);
  const std::vector<double> ones(static_cast<std::size_t>(S), 1.0);
  const auto u = terminal_q_tables(model, ones);

  double total = 0;
  for (int x = 0; x < S; ++x) {
    const double d = shifted[static_cast<std::size_t>(x)];
    total += margn[static_cast<std::size_t>(x)] * d * d;
  }

  for (int k = 0; k < n; ++k) {
    const std::vector<double> marg = meas.eta[static_cast<std::size_t>(k)].marginal(k);
    double d = 0, m = 0;
    for (int x = 0; x < S; ++x) {
      d += marg[static_cast<std::size_t>(x)] * u[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
      m += marg[static_cast<std::size_t>(x)] * v[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)];
    }
    double acc = 0;
    for (int x = 0; x < S; ++x) {
      const double dev = v[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] - m;
      acc += marg[static_cast<std::size_t>(x)] * dev * dev;
    }
    total += acc / (d * d);
  }
  return total;
}

}  // namespace

double clt_variance(const HmmModel& model, const TestFunction& f) {
  const ExactMeasures meas = exact_measures(model);
  if (!f.terminal_only()) return clt_variance_prefix(model, f, meas);
  const double fast = clt_variance_terminal(model, f, meas);
  if (path_count(model.num_states(), model.horizon()) <= 4096) {
    const double slow = clt_variance_prefix(model, f, meas);
    if (std::abs(fast - slow) > 1e-12 * std::max(1.0, std::abs(slow)))
      throw Error("clt_variance: state and prefix routes disagree");
  }
  return fast;
}

double osc(const TestFunction& f) {
  const auto& table = f.table();
  const auto [mn, mx] = std::minmax_element(table.begin(), table.end());
  return *mx - *mn;
}

namespace {

// Depth-first enumeration of every realization of the conditional system
// for one reference path. traces[i] is the traced path of slot i up to
// the current time; its last element is slot i's current state.
class KernelRowBuilder {
 public:
  KernelRowBuilder(const HmmModel& model, std::int64_t N, const Path& ref,
                   double* row)
      : model_(model), n_(model.horizon()), s_(model.num_states()),
        num_(static_cast<int>(N)), ref_(ref), row_(row) {}

  void run() {
    std::vector<Path> traces(static_cast<std::size_t>(num_) + 1);
    traces[0] = Path{{ref_[0]}};
    enum_initial(0, 1.0, traces);
  }

 private:
  void enum_initial(int i, double p, std::vector<Path>& traces) {
    if (i == num_) {
      step(0, p, traces);
      return;
    }
    for (int x = 0; x < s_; ++x) {
      const double px = p * model_.initial(x);
      if (px == 0) continue;
      traces[static_cast<std::size_t>(i) + 1] = Path{{x}};
      enum_initial(i + 1, px, traces);
    }
  }

  void step(int k, double p, const std::vector<Path>& traces) {
    std::vector<double> w(static_cast<std::size_t>(num_) + 1);
    double norm = 0;
    for (int i = 0; i <= num_; ++i) {
      w[static_cast<std::size_t>(i)] =
          model_.potential(k, traces[static_cast<std::size_t>(i)].states.back());
      norm += w[static_cast<std::size_t>(i)];
    }
    if (norm == 0)
      throw ZeroWeightVectorError(
          "exact_kernel: selection weights all zero on a reachable branch");
    for (double& v : w) v /= norm;

    if (k == n_) {
      for (int i = 0; i <= num_; ++i) {
        if (w[static_cast<std::size_t>(i)] == 0) continue;
        const std::size_t col =
            path_index(s_, traces[static_cast<std::size_t>(i)].states);
        row_[col] += p * w[static_cast<std::size_t>(i)];
      }
      return;
    }

    std::vector<Path> next(static_cast<std::size_t>(num_) + 1);
    next[0] = traces[0];
    next[0].states.push_back(ref_[k + 1]);
    extend(k, 0, p, traces, next, w);
  }

  // Slot-by-slot choice of (ancestor, new state) at time k+1.
  void extend(int k, int i, double p, const std::vector<Path>& traces,
              std::vector<Path>& next, const std::vector<double>& w) {
    if (i == num_) {
      step(k + 1, p, next);
      return;
    }
    for (int a = 0; a <= num_; ++a) {
      const double wa = w[static_cast<std::size_t>(a)];
      if (wa == 0) continue;
      const int from = traces[static_cast<std::size_t>(a)].states.back();
      for (int x = 0; x < s_; ++x) {
        const double q = model_.transition(from, x);
        if (q == 0) continue;
        next[static_cast<std::size_t>(i) + 1] = traces[static_cast<std::size_t>(a)];
        next[static_cast<std::size_t>(i) + 1].states.push_back(x);
        extend(k, i + 1, p * wa * q, traces, next, w);
      }
    }
  }

  const HmmModel& model_;
  int n_, s_, num_;
  const Path& ref_;
  double* row_;
};

}  // namespace

PathKernel exact_kernel(const HmmModel& model, std::int64_t N) {
  if (N < 1) throw std::invalid_argument("exact_kernel: need N >= 1");
  const int n = model.horizon();
  const int S = model.num_states();
  const double log_outcomes =
      static_cast<double>(N) * (n + 1) * std::log(static_cast<double>(S)) +
      (static_cast<double>(N) * n + 1) * std::log(static_cast<double>(N) + 1);
  if (log_outcomes > std::log(1e7))
    throw TooLargeError("exact_kernel: outcome space too large");

  PathKernel kernel{S, n, N, {}};
  const std::size_t dim = kernel.dim();
  kernel.matrix.assign(dim * dim, 0.0);
  for (std::size_t row = 0; row < dim; ++row) {
    const Path ref = path_at(S, n, row);
    KernelRowBuilder builder(model, N, ref, kernel.matrix.data() + row * dim);
    builder.run();
  }
  return kernel;
}

double row_sum_error(const PathKernel& kernel) {
  const std::size_t dim = kernel.dim();
  double worst = 0;
  for (std::size_t r = 0; r < dim; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < dim; ++c) total += kernel.at(r, c);
    worst = std::max(worst, std::abs(total - 1));
  }
  return worst;
}

double invariance_residual(const PathKernel& kernel, const PathTable& pi) {
  const std::size_t dim = kernel.dim();
  if (pi.values.size() != dim)
    throw DimensionMismatchError("invariance_residual: table size mismatch");
  double worst = 0;
  for (std::size_t c = 0; c < dim; ++c) {
    double acc = 0;
    for (std::size_t r = 0; r < dim; ++r) acc += pi.at(r) * kernel.at(r, c);
    worst = std::max(worst, std::abs(acc - pi.at(c)));
  }
  return worst;
}

PathSampler::PathSampler(const PathTable& table)
    : num_states_(table.num_states), horizon_(table.horizon) {
  if (table.values.empty())
    throw ZeroWeightVectorError("PathSampler: empty table");
  cdf_.resize(table.values.size());
  std::partial_sum(table.values.begin(), table.values.end(), cdf_.begin());
  if (!(cdf_.back() > 0))
    throw ZeroWeightVectorError("PathSampler: table has no mass");
}

Path PathSampler::operator()(RandomStream& rng) const {
  const std::size_t idx = pick_from_cdf(cdf_, rng.next_unit());
  return path_at(num_states_, horizon_, idx);
}

}  // namespace csmc
