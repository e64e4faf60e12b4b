#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <vector>

#include "csmc/errors.hpp"
#include "csmc/model.hpp"
#include "csmc/rng.hpp"
#include "support.hpp"

using namespace csmc;

TEST_CASE("path indexing is lexicographic with the first coordinate most significant") {
  CHECK(path_count(2, 3) == 16);
  CHECK(path_count(3, 0) == 3);
  CHECK(path_at(2, 1, 0) == Path{0, 0});
  CHECK(path_at(2, 1, 1) == Path{0, 1});
  CHECK(path_at(2, 1, 2) == Path{1, 0});
  CHECK(path_at(2, 1, 3) == Path{1, 1});
  for (std::size_t idx = 0; idx < path_count(3, 2); ++idx) {
    const Path p = path_at(3, 2, idx);
    CHECK(path_index(3, p.states) == idx);
  }
}

TEST_CASE("model spec json round trip") {
  const ModelSpec spec = csmc_test::two_state_spec(2);
  const ModelSpec back = model_spec_from_json(model_spec_to_json(spec));
  CHECK(back.name == spec.name);
  CHECK(back.num_states == spec.num_states);
  CHECK(back.horizon == spec.horizon);
  CHECK(back.m0 == spec.m0);
  CHECK(back.q == spec.q);
  CHECK(back.potentials == spec.potentials);
  CHECK(back.constant_potentials == spec.constant_potentials);
}

TEST_CASE("model spec loads from a file") {
  const std::string path = "test_model_spec_tmp.json";
  {
    std::ofstream out(path);
    out << model_spec_to_json(csmc_test::two_state_spec(1)).dump(2);
  }
  const ModelSpec spec = load_model_spec(path);
  CHECK(spec.num_states == 2);
  CHECK(spec.horizon == 1);
  std::remove(path.c_str());
}

TEST_CASE("spec validation rejects malformed inputs") {
  ModelSpec bad = csmc_test::two_state_spec(1);
  bad.q[0] = {0.9, 0.2};
  CHECK_THROWS_AS(build_model(bad), NonStochasticError);

  bad = csmc_test::two_state_spec(1);
  bad.m0 = {0.5, 0.6};
  CHECK_THROWS_AS(build_model(bad), NonStochasticError);

  bad = csmc_test::two_state_spec(1);
  bad.potentials = {{0.5, -1.0}};
  CHECK_THROWS_AS(build_model(bad), NegativePotentialError);

  bad = csmc_test::two_state_spec(1);
  bad.potentials = {{0.0, 0.0}};
  CHECK_THROWS_AS(build_model(bad), DegeneratePotentialError);

  bad = csmc_test::two_state_spec(1);
  bad.m0 = {1.0};
  CHECK_THROWS_AS(build_model(bad), DimensionMismatchError);

  bad = csmc_test::two_state_spec(1);
  bad.constant_potentials = false;  // now expects horizon+1 rows, has 1 != 2
  CHECK_THROWS_AS(build_model(bad), DimensionMismatchError);
}

TEST_CASE("constant potentials broadcast bitwise") {
  const HmmModel broadcast = csmc_test::two_state_model(3);
  ModelSpec expanded = csmc_test::two_state_spec(3);
  expanded.constant_potentials = false;
  expanded.potentials = std::vector<std::vector<double>>(4, {0.5, 2.0});
  const HmmModel explicit_model = build_model(expanded);
  for (int k = 0; k <= 3; ++k)
    for (int x = 0; x < 2; ++x)
      CHECK(broadcast.potential(k, x) == explicit_model.potential(k, x));
}

TEST_CASE("mixing constants of the two-state model") {
  const MixingConstants mc = check_assumptions(csmc_test::two_state_model(2));
  CHECK(mc.a == doctest::Approx(2.0).epsilon(1e-15));
  // Worst one-step selection mass: state 0 with 0.9*0.5 + 0.1*2 = 0.65.
  CHECK(mc.c == doctest::Approx(1.0 / 0.65).epsilon(1e-13));
  // Backward functions two steps out: (0.6325, 2.785), ratio 0.6325/2.785.
  CHECK(mc.g_lower == doctest::Approx(0.6325 / 2.785).epsilon(1e-13));
  CHECK(mc.acg() == doctest::Approx(2.0 * (1.0 / 0.65) / (0.6325 / 2.785)).epsilon(1e-13));

  // Horizon 0 has no transitions to mix over.
  const MixingConstants mc0 = check_assumptions(csmc_test::two_state_model(0));
  CHECK(mc0.a == doctest::Approx(2.0));
  CHECK(mc0.c == doctest::Approx(1.0));
  CHECK(mc0.g_lower == doctest::Approx(1.0));
}

TEST_CASE("initial and transition sampling match the model law") {
  const HmmModel model = csmc_test::two_state_model(1);
  RandomStream rng(seed_derive(31, {"sample"}));
  int ones = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) ones += model.sample_initial(rng);
  // 0.5 +- 4 sigma with sigma = sqrt(0.25/20000).
  CHECK(std::abs(ones / static_cast<double>(draws) - 0.5) < 4 * std::sqrt(0.25 / draws));

  int stay = 0;
  for (int i = 0; i < draws; ++i) stay += (model.sample_transition(0, rng) == 0);
  CHECK(std::abs(stay / static_cast<double>(draws) - 0.9) <
        4 * std::sqrt(0.9 * 0.1 / draws));
}

TEST_CASE("test functions evaluate and expose their tables") {
  const TestFunction ind = TestFunction::terminal_indicator(2, 2, 1);
  CHECK(ind(Path{0, 0, 1}) == 1.0);
  CHECK(ind(Path{0, 1, 0}) == 0.0);
  CHECK(ind.terminal_only());
  CHECK(ind.sup_norm() == 1.0);

  const TestFunction sum = TestFunction::coordinate_sum(2, 2);
  CHECK(sum(Path{1, 0, 1}) == 2.0);
  CHECK(sum.sup_norm() == 3.0);

  const TestFunction count = TestFunction::state_count(3, 2, 0);
  CHECK(count(Path{0, 2, 0}) == 2.0);
  CHECK(count(Path{1, 2, 1}) == 0.0);
  CHECK(count.sup_norm() == 3.0);
  CHECK_THROWS_AS(TestFunction::state_count(2, 2, 2), IndexOutOfRangeError);

  const TestFunction c = TestFunction::constant(3, 1, 2.5);
  CHECK(c(Path{2, 0}) == 2.5);

  const TestFunction tab = TestFunction::from_table(2, 1, {0.0, 1.0, 2.0, 3.0});
  for (std::size_t idx = 0; idx < 4; ++idx) {
    CHECK(tab.at_index(idx) == static_cast<double>(idx));
    CHECK(tab(path_at(2, 1, idx)) == static_cast<double>(idx));
  }

  // A terminal table broadcasts over the prefix coordinates.
  const TestFunction term = TestFunction::from_terminal(2, 1, {5.0, 7.0});
  CHECK(term(Path{0, 0}) == 5.0);
  CHECK(term(Path{1, 1}) == 7.0);
  CHECK(term(Path{1, 0}) == 5.0);
}

TEST_CASE("randomized specs build and expose consistent dimensions") {
  RandomStream rng(seed_derive(77, {"models"}));
  for (int rep = 0; rep < 20; ++rep) {
    const ModelSpec spec = csmc_test::random_model_spec(rng);
    const HmmModel model = build_model(spec);
    CHECK(model.num_states() == spec.num_states);
    CHECK(model.horizon() == spec.horizon);
    double mass = 0;
    for (int x = 0; x < model.num_states(); ++x) mass += model.initial(x);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    for (int x = 0; x < model.num_states(); ++x) {
      double row = 0;
      for (int y = 0; y < model.num_states(); ++y) row += model.transition(x, y);
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_NOTHROW(check_assumptions(model));
  }
}
