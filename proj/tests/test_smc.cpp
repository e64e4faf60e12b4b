#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "csmc/errors.hpp"
#include "csmc/oracle.hpp"
#include "csmc/smc.hpp"
#include "csmc/stats.hpp"
#include "support.hpp"

using namespace csmc;

TEST_CASE("multinomial sampling respects point masses and rejects bad input") {
  RandomStream rng(seed_derive(41, {"multi"}));
  const std::array<double, 3> point = {0.0, 5.0, 0.0};
  for (int idx : multinomial_sample(point, 100, rng)) CHECK(idx == 1);

  const std::array<double, 3> neg = {1.0, -0.5, 1.0};
  CHECK_THROWS_AS(multinomial_sample(neg, 10, rng), std::invalid_argument);
  const std::array<double, 3> zeros = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(multinomial_sample(zeros, 10, rng), ZeroWeightVectorError);
  const std::array<double, 2> ok = {1.0, 1.0};
  CHECK_THROWS_AS(multinomial_sample(ok, 0, rng), std::invalid_argument);
}

TEST_CASE("multinomial sampling matches 1:3 odds") {
  RandomStream rng(seed_derive(42, {"odds"}));
  const std::array<double, 2> weights = {1.0, 3.0};
  std::vector<std::int64_t> counts(2, 0);
  for (int idx : multinomial_sample(weights, 20000, rng)) ++counts[idx];
  const std::array<double, 2> probs = {0.25, 0.75};
  CHECK(chi_square_gof(counts, probs).p_value > 1e-3);
}

TEST_CASE("selection weights are the raw potentials at the particle states") {
  const HmmModel model = csmc_test::two_state_model(1);
  const std::array<int, 3> states = {0, 1, 1};
  const std::vector<double> w = bg_weights(model, 0, states);
  CHECK(w == std::vector<double>{0.5, 2.0, 2.0});
  // Normalized selection shares.
  const double total = 4.5;
  CHECK(w[0] / total == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(w[1] / total == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
}

TEST_CASE("plain run fills slots 1..N and leaves slot 0 idle") {
  const HmmModel model = csmc_test::two_state_model(2);
  const ParticleSystem sys = run_smc(model, 50, seed_derive(43));
  CHECK(sys.num_particles == 50);
  CHECK(sys.horizon == 2);
  CHECK_FALSE(sys.conditional);
  for (int k = 0; k <= 2; ++k) {
    CHECK(sys.state(k, 0) == -1);
    for (int i = 1; i <= 50; ++i) {
      CHECK(sys.state(k, i) >= 0);
      CHECK(sys.state(k, i) < 2);
    }
  }
  for (int k = 0; k < 2; ++k)
    for (int i = 1; i <= 50; ++i) {
      CHECK(sys.ancestor(k, i) >= 1);
      CHECK(sys.ancestor(k, i) <= 50);
    }
}

TEST_CASE("ancestry trace follows the stored ancestor rows") {
  const HmmModel model = csmc_test::two_state_model(3);
  const ParticleSystem sys = run_smc(model, 20, seed_derive(44));
  for (int i = 1; i <= 20; ++i) {
    const Path p = trace_ancestry(sys, i);
    CHECK(p.length() == 4);
    // Walk backwards by hand.
    int slot = i;
    CHECK(p[3] == sys.state(3, slot));
    for (int k = 2; k >= 0; --k) {
      slot = sys.ancestor(k, slot);
      CHECK(p[k] == sys.state(k, slot));
    }
  }
}

TEST_CASE("traced mean equals the estimate through the traced measure") {
  const HmmModel model = csmc_test::two_state_model(2);
  const ParticleSystem sys = run_smc(model, 64, seed_derive(45));
  const TestFunction f = TestFunction::coordinate_sum(2, 2);
  const EmpiricalMeasure em = traced_measure(sys);
  CHECK(em.atoms.size() == 64);
  CHECK(traced_mean(sys, f) == doctest::Approx(empirical_estimate(em, f)).epsilon(1e-13));
}

TEST_CASE("terminal estimate lands near the exact value") {
  const HmmModel model = csmc_test::two_state_model(1);
  const ParticleSystem sys = run_smc(model, 10000, seed_derive(46, {"est"}));
  const TestFunction f = TestFunction::terminal_indicator(2, 1, 1);
  // 0.66 with a 3 sigma window using the asymptotic variance 0.274576.
  CHECK(std::abs(traced_mean(sys, f) - 0.66) < 3 * std::sqrt(0.274576 / 10000.0));
}

TEST_CASE("unit potentials reduce to the prior chain") {
  ModelSpec spec = csmc_test::two_state_spec(2);
  spec.potentials = {{1.0, 1.0}};
  const HmmModel model = build_model(spec);
  const ParticleSystem sys = run_smc(model, 20000, seed_derive(47, {"prior"}));
  const TestFunction f = TestFunction::terminal_indicator(2, 2, 1);
  // Prior terminal marginal: m0 q^2 = (0.585, 0.415).
  const double sigma = std::sqrt(clt_variance(model, f) / 20000.0);
  CHECK(std::abs(traced_mean(sys, f) - 0.415) < 4 * sigma);
}

TEST_CASE("estimator error shrinks like the square root of the particle count") {
  const HmmModel model = csmc_test::two_state_model(1);
  const TestFunction f = TestFunction::terminal_indicator(2, 1, 1);
  const std::array<double, 3> Ns = {100, 1000, 10000};
  std::array<double, 3> rmse = {0, 0, 0};
  const StreamKey root = seed_derive(48, {"slope"});
  for (std::size_t j = 0; j < Ns.size(); ++j) {
    double sq = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
      const ParticleSystem sys =
          run_smc(model, static_cast<int>(Ns[j]), derive(root, static_cast<int>(j), rep));
      const double err = traced_mean(sys, f) - 0.66;
      sq += err * err;
    }
    rmse[j] = std::sqrt(sq / reps);
  }
  const double slope = log_log_slope(Ns, rmse);
  CHECK(slope > -0.65);
  CHECK(slope < -0.35);
}
