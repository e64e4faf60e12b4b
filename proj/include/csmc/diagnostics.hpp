#pragma once

#include <cstdint>
#include <span>

#include "csmc/kernel.hpp"
#include "csmc/oracle.hpp"
#include "csmc/report.hpp"
#include "csmc/stats.hpp"

namespace csmc {

// Realized weight share of the reference particle at time k:
//   G_k(ref) / (sum_{i=1..N} G_k(X^i_k) + G_k(ref)).
// Averaging over replicate systems estimates its expectation.
double estimate_Z(const ParticleSystem& system, const HmmModel& model, int k);

struct TauGamma {
  double tau = 0;
  double gamma = 0;
};

// The two per-step terms of the telescopic bias decomposition, for
// k in 1..n:
//   tau   = sup-to-predictive ratio of the backward function Q_{k,n}(G_n)
//           under the selection-weighted one-step predictive at time k-1,
//   gamma = the reference particle's share of backward mass at time k-1,
//           with the particles' mean weighted N times.
// The predictive expectation is exact given the time-(k-1) states; no
// extra sampling noise enters.
TauGamma estimate_tau_gamma(const ParticleSystem& system, const HmmModel& model,
                            const BackwardTable& backward, int k);

// Low-weight reference path: per coordinate the smallest-index state
// minimizing G_k among states with G_k > 0.
Path adversarial_reference(const HmmModel& model);

struct BoundTermEstimates {
  std::int64_t replicates = 0;
  int num_particles = 0;
  std::vector<MeanStderr> z;      // k = 0..n
  std::vector<MeanStderr> tau;    // entry j holds k = j+1
  std::vector<MeanStderr> gamma;  // entry j holds k = j+1
  double tau_max = 0;             // max realized tau over all replicates
  MeanStderr tau_sq_sum_over_N;   // per-replicate sum_k tau_k^2 / N
  // Per-replicate Z_n + sum_k gamma_k: the part of the telescopic bound
  // that involves no unspecified universal constant.
  MeanStderr perturbation_partial_sum;
};

BoundTermEstimates estimate_bound_terms(const HmmModel& model, const Path& ref_path,
                                        int N, std::int64_t replicates,
                                        const StreamKey& key, int threads = 1);

// Wraps estimate_bound_terms in a report with the envelope flags:
// every realized tau <= a c / g_lower (hard), replicate-mean gamma and
// terminal-Z below (2r-1)/(N-1+2r) within 3 standard errors.
ExperimentReport bound_terms_report(const HmmModel& model, const Path& ref_path,
                                    int N, std::int64_t replicates,
                                    const StreamKey& key, int threads = 1);

// Doubling experiment for the reference weight share at a fixed time k:
// runs N and 2N and checks the estimate ratio against 2.
ExperimentReport z_scaling(const HmmModel& model, const Path& ref_path, int k,
                           int N, std::int64_t replicates, const StreamKey& key,
                           int threads = 1);

// One-step bias of the path kernel against the exact target:
// (1/R) sum_r f(output_r) - pi(f), with the analytic envelope comparator.
ExperimentReport kernel_bias(const HmmModel& model, const Path& ref_path,
                             const TestFunction& f, int N, std::int64_t replicates,
                             const StreamKey& key, int threads = 1);

// kernel_bias across a particle-count schedule plus decay flags
// (per-N envelope, noise-tolerant monotonicity, log-log slope -1 +- 0.3).
ExperimentReport kernel_bias_scan(const HmmModel& model, const Path& ref_path,
                                  const TestFunction& f, std::span<const int> N_list,
                                  std::int64_t replicates, const StreamKey& key,
                                  int threads = 1);

// m-step total variation distance to pi from R independent chains.
ExperimentReport ergodicity_tv(const HmmModel& model, const Path& init_path,
                               int N, int m_max, std::int64_t replicates,
                               const StreamKey& key, int threads = 1);

// Horizon scan with the particle count tied to the horizon. The scaled
// section uses N = round(C(n+1)) + 1 when C > 0; the fixed section uses
// N = fixed_N when fixed_N > 0 and demonstrates the contrast.
struct StabilityScanConfig {
  ModelSpec base;            // potentials broadcast to every horizon
  std::vector<int> n_list;
  double C = 0;
  int fixed_N = 0;
  int f_state = 1;           // f_n = indicator of terminal state f_state
};

ExperimentReport stability_scan(const StabilityScanConfig& cfg,
                                std::int64_t replicates, const StreamKey& key,
                                int threads = 1);

// Replicate distribution of sqrt(N) (eta_hat(f) - eta_n(f)) for each N,
// conditional (fixed adversarial reference) or standard SMC. Flags check
// the empirical variance against the exact asymptotic variance and
// normality at the largest N.
ExperimentReport clt_experiment(const HmmModel& model, const TestFunction& f,
                                std::span<const int> N_list, std::int64_t replicates,
                                const StreamKey& key, bool conditional,
                                int threads = 1);

// One kernel step started from an exact pi draw per replicate; chi-square
// of the output path distribution against pi.
ExperimentReport invariance_check(const HmmModel& model, int N,
                                  std::int64_t replicates, const StreamKey& key,
                                  int threads = 1);

// Deterministic oracle self-checks: enumeration vs recursion marginals,
// the backward recursion residual, and cross-time mass consistency.
ExperimentReport oracle_validate(const HmmModel& model);

}  // namespace csmc
