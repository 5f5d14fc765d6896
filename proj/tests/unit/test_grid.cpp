#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "helpers.hpp"
#include "spheat/fem.hpp"
#include "spheat/grid.hpp"

using namespace spheat;

TEST_SUITE("grid") {

TEST_CASE("coarse equidistant grid") {
  const SpaceTimeGrid g = testing::coarse_grid();
  REQUIRE(g.num_nodes() == 3);
  CHECK(g.node(0) == 0.25);
  CHECK(g.node(1) == 0.5);
  CHECK(g.node(2) == 0.75);
  REQUIRE(g.num_steps() == 12);
  for (std::size_t k = 1; k <= 12; ++k) CHECK(g.step(k) == 0.125);
  CHECK(g.mesh_size() == 0.25);
  CHECK(g.final_time() == 1.5);
  CHECK(g.num_spacetime() == 36);
  CHECK(g.is_dyadic());
}

TEST_CASE("single node, single step") {
  const SpaceTimeGrid g = build_grid(0, 1, 1, 1, {0.0, 1.0});
  REQUIRE(g.num_nodes() == 1);
  CHECK(g.node(0) == 0.5);
  CHECK(g.num_steps() == 1);
  CHECK(g.step(1) == 1.0);
}

TEST_CASE("fine grid arithmetic") {
  const SpaceTimeGrid g = build_grid(0, 1, 1.5, 255, equidistant_times(1.5, 768));
  CHECK(g.mesh_size() == doctest::Approx(1.0 / 256).epsilon(1e-14));
  CHECK(g.max_step() == doctest::Approx(1.0 / 512).epsilon(1e-14));
  const SpaceTimeGrid c = build_coupled_grid(0, 1, 1.5, 255, Coupling::kTauHalfH);
  CHECK(c.num_steps() == 768);
  const SpaceTimeGrid c2 = build_coupled_grid(0, 1, 1.5, 7, Coupling::kTauHalfHSquared);
  CHECK(c2.num_steps() == 192);
  CHECK(c2.max_step() == 1.0 / 128);
}

TEST_CASE("invalid input") {
  CHECK_THROWS_AS(build_grid(0, 1, 1, 0, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(0, 1, 1, 3, {0.0, 0.6, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(0, 1, 1, 3, {0.0, 0.5, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS(build_coupled_grid(0, 1, 1.3, 3, Coupling::kTauHalfH));
  CHECK_THROWS(parse_coupling("tau=h"));
}

TEST_CASE("coarse index sets") {
  const SpaceTimeGrid g = testing::coarse_grid();
  const IndexSets s = control_index_sets(g, testing::coarse_region());
  CHECK(s.nodes == std::vector<std::size_t>{0, 1, 2});
  // {1,2,3} x {2..10}, time-major
  REQUIRE(s.points.size() == 27);
  std::size_t i = 0;
  for (std::size_t k = 2; k <= 10; ++k) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(s.points[i] == IndexSets::Point{j, k});
      ++i;
    }
  }
  // I_3 = (1/4,3/8] .. I_10 = (9/8,5/4]
  CHECK(s.intervals == std::vector<std::size_t>{3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(s.space_tol == 0);
  CHECK(s.time_tol == 0);
}

TEST_CASE("membership is exhaustive and exact") {
  const SpaceTimeGrid g = build_grid(0, 1, 1.5, 15, equidistant_times(1.5, 48));
  const ControlRegion r{0.25, 0.75, 0.25, 1.25};
  const IndexSets s = control_index_sets(g, r);
  for (std::size_t k = 0; k <= g.num_steps(); ++k) {
    for (std::size_t j = 0; j < g.num_nodes(); ++j) {
      const bool inside = g.node(j) >= r.x_lo && g.node(j) <= r.x_hi && g.time(k) >= r.t_lo &&
                          g.time(k) <= r.t_hi;
      const bool listed = std::find(s.points.begin(), s.points.end(),
                                    IndexSets::Point{j, k}) != s.points.end();
      CHECK(inside == listed);
    }
  }
  for (const auto& p : s.points) {
    CHECK(std::find(s.nodes.begin(), s.nodes.end(), p.j) != s.nodes.end());
  }
  for (std::size_t k = 1; k <= g.num_steps(); ++k) {
    const bool inside = g.time(k - 1) >= r.t_lo && g.time(k) <= r.t_hi;
    const bool listed = std::find(s.intervals.begin(), s.intervals.end(), k) != s.intervals.end();
    CHECK(inside == listed);
  }
}

TEST_CASE("non-dyadic grid uses a small tolerance") {
  const SpaceTimeGrid g = build_grid(0, 1, 1, 2, equidistant_times(1, 3));
  CHECK_FALSE(g.is_dyadic());
  const IndexSets s = control_index_sets(g, {1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0});
  CHECK(s.nodes.size() == 2);
  CHECK(s.points.size() == 4);
  CHECK(s.space_tol > 0);
}

TEST_CASE("single candidate node") {
  const SpaceTimeGrid g = build_grid(0, 1, 1, 1, equidistant_times(1, 4));
  const IndexSets s = control_index_sets(g, {0.1, 0.9, 0.1, 0.9});
  CHECK(s.nodes == std::vector<std::size_t>{0});
}

TEST_CASE("too coarse grids are reported") {
  const SpaceTimeGrid g = testing::coarse_grid();
  CHECK_THROWS_AS(control_index_sets(g, {0.3, 0.45, 0.25, 1.25}), GridTooCoarseError);
  // t_k = 11/8 is a sigma site but no interval fits in [1.3, 1.4]
  const ControlRegion late{0.25, 0.75, 1.3, 1.4};
  const IndexSets s = control_index_sets(g, late);
  CHECK(s.intervals.empty());
  CHECK_FALSE(s.points.empty());
  CHECK_NOTHROW(assemble_vd_system(g, late));
  CHECK_THROWS_AS(assemble_dg_system(g, late), GridTooCoarseError);
}

TEST_CASE("region must be relatively compact") {
  const SpaceTimeGrid g = testing::coarse_grid();
  CHECK_THROWS(ControlRegion{0.0, 0.75, 0.25, 1.25}.validate(g));
  CHECK_THROWS(ControlRegion{0.25, 0.75, 0.25, 1.5}.validate(g));
  CHECK_THROWS(ControlRegion{0.75, 0.25, 0.25, 1.25}.validate(g));
  CHECK_NOTHROW(testing::coarse_region().validate(g));
}

TEST_CASE("intervals partition (0,T)") {
  const SpaceTimeGrid g = build_grid(0, 1, 1.5, 3, {0.0, 0.1, 0.35, 0.9, 1.5});
  CHECK(g.interval_of(0.1) == 1);
  CHECK(g.interval_of(0.1000001) == 2);
  CHECK(g.interval_of(1e-12) == 1);
  CHECK(g.interval_of(1.4999) == 4);
  CHECK_THROWS(g.interval_of(0.0));
  CHECK_THROWS(g.interval_of(1.5));
  for (double t = 0.01; t < 1.5; t += 0.01) {
    const std::size_t k = g.interval_of(t);
    CHECK(t > g.time(k - 1));
    CHECK(t <= g.time(k));
  }
}

TEST_CASE("construction is deterministic") {
  const SpaceTimeGrid a = build_coupled_grid(0, 1, 1.5, 31, Coupling::kTauHalfH);
  const SpaceTimeGrid b = build_coupled_grid(0, 1, 1.5, 31, Coupling::kTauHalfH);
  CHECK(std::equal(a.nodes().begin(), a.nodes().end(), b.nodes().begin()));
  CHECK(std::equal(a.time_points().begin(), a.time_points().end(), b.time_points().begin()));
}

}
