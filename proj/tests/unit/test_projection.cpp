#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "spheat/projection.hpp"

using namespace spheat;

namespace {

struct Case {
  SpaceTimeGrid grid;
  ControlRegion region;
};

std::vector<Case> grids() {
  return {
      {testing::coarse_grid(), testing::coarse_region()},
      {build_grid(0, 1, 1.5, 15, equidistant_times(1.5, 24)), {0.3, 0.72, 0.2, 1.31}},
      {SpaceTimeGrid(0, 1, {0.1, 0.25, 0.33, 0.6, 0.8}, {0.0, 0.2, 0.5, 0.55, 1.0, 1.5}),
       {0.2, 0.7, 0.3, 1.2}},
  };
}

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("hat functions") {
  const SpaceTimeGrid g = testing::coarse_grid();
  CHECK(hat_space(g, 1, 0.5) == 1.0);
  CHECK(hat_space(g, 1, 0.375) == 0.5);
  CHECK(hat_space(g, 0, 0.0) == 0.0);
  CHECK(hat_time(g, 0, 0.0) == 1.0);
  CHECK(hat_time(g, 12, 1.5) == 1.0);
  CHECK(hat_time(g, 3, 0.4375) == 0.5);
  for (double t = 0; t <= 1.5; t += 0.01) {
    double s = 0;
    for (std::size_t k = 0; k <= 12; ++k) s += hat_time(g, k, t);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("space projection identities") {
  std::mt19937 rng(42);
  for (const Case& c : grids()) {
    const IndexSets s = control_index_sets(c.grid, c.region);
    std::uniform_real_distribution<double> ux(c.region.x_lo, c.region.x_hi), uw(-2, 2);
    std::uniform_int_distribution<int> na(1, 6);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<SpaceAtom> atoms(static_cast<std::size_t>(na(rng)));
      for (auto& a : atoms) a = {ux(rng), uw(rng)};
      const Vector up = upsilon_h(c.grid, s, atoms);
      REQUIRE(up.size() == static_cast<Eigen::Index>(s.nodes.size()));
      // pairing with a random discrete test function
      const Vector coef = testing::random_vector(rng, up.size());
      const double lhs = pair(atoms, [&](double x) { return eval_space(c.grid, s, coef, x); });
      CHECK(std::abs(lhs - up.dot(coef)) <= 1e-12);
      // pairing with the interpolant of a smooth f
      auto f = [](double x) { return std::cos(3 * x) + x * x; };
      const Vector pf = pi_h(c.grid, s, f);
      const double l2 = pair(atoms, [&](double x) { return eval_space(c.grid, s, pf, x); });
      CHECK(std::abs(l2 - up.dot(pf)) <= 1e-12);
      CHECK(up.cwiseAbs().sum() <= total_variation(atoms) + 1e-12);
    }
  }
}

TEST_CASE("space-time projection identities") {
  std::mt19937 rng(7);
  for (const Case& c : grids()) {
    const IndexSets s = control_index_sets(c.grid, c.region);
    std::uniform_real_distribution<double> ux(c.region.x_lo, c.region.x_hi),
        ut(c.region.t_lo, c.region.t_hi), uw(-2, 2);
    std::uniform_int_distribution<int> na(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<SpaceTimeAtom> atoms(static_cast<std::size_t>(na(rng)));
      for (auto& a : atoms) a = {ux(rng), ut(rng), uw(rng)};
      const Vector up = upsilon_sigma(c.grid, s, atoms);
      REQUIRE(up.size() == static_cast<Eigen::Index>(s.points.size()));
      const Vector coef = testing::random_vector(rng, up.size());
      const double lhs =
          pair(atoms, [&](double x, double t) { return eval_spacetime(c.grid, s, coef, x, t); });
      CHECK(std::abs(lhs - up.dot(coef)) <= 1e-12);
      auto f = [](double x, double t) { return std::sin(2 * x + t) - t * x; };
      const Vector pf = pi_sigma(c.grid, s, f);
      const double l2 =
          pair(atoms, [&](double x, double t) { return eval_spacetime(c.grid, s, pf, x, t); });
      CHECK(std::abs(l2 - up.dot(pf)) <= 1e-12);
      CHECK(up.cwiseAbs().sum() <= total_variation(atoms) + 1e-12);
    }
  }
}

TEST_CASE("projection is the identity on grid atoms") {
  const SpaceTimeGrid g = testing::coarse_grid();
  const IndexSets s = control_index_sets(g, testing::coarse_region());
  const std::vector<SpaceTimeAtom> atoms{{0.5, 0.5, 1.25}, {0.25, 1.0, -0.5}};
  const Vector up = upsilon_sigma(g, s, atoms);
  CHECK(up.cwiseAbs().sum() == doctest::Approx(1.75));
  const std::vector<SpaceAtom> a0{{0.75, 2.0}};
  CHECK(upsilon_h(g, s, a0).cwiseAbs().sum() == doctest::Approx(2.0));
}

}
