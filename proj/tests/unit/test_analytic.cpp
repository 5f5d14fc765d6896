#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "helpers.hpp"
#include "spheat/analytic.hpp"

using namespace spheat;
using std::numbers::pi;

namespace {

// Direct partial sum, no truncation logic.
double series(double x0, double t0, double x, double t, int terms) {
  if (t <= t0) return 0.0;
  double s = 0;
  for (int n = 1; n <= terms; ++n) {
    s += 2.0 * std::sin(n * pi * x0) * std::sin(n * pi * x) * std::exp(-n * n * pi * pi * (t - t0));
  }
  return s;
}

}  // namespace

TEST_SUITE("analytic") {

TEST_CASE("Fourier solution against a direct partial sum") {
  const PointSource src{};
  for (double t : {0.51, 0.6, 0.9, 1.4}) {
    for (double x : {0.1, 0.33, 0.5, 0.87}) {
      const double ref = series(0.5, 0.5, x, t, 400);
      CHECK(std::abs(fourier_heat_dirac(src, x, t) - ref) <= 1e-13 * std::max(1.0, std::abs(ref)));
    }
  }
  const PointSource off{0.3, 0.2, 2.5};
  CHECK(fourier_heat_dirac(off, 0.7, 0.4) ==
        doctest::Approx(2.5 * series(0.3, 0.2, 0.7, 0.4, 400)).epsilon(1e-13));
}

TEST_CASE("one-term limit for late times") {
  const PointSource src{};
  const double t = 1.5, x = 0.37;
  const double one = 2.0 * std::sin(pi * x) * std::exp(-pi * pi * (t - 0.5));
  CHECK(std::abs(fourier_heat_dirac(src, x, t) - one) <= 1e-14 * one + 1e-300);
}

TEST_CASE("causality and decay") {
  const PointSource src{};
  CHECK(fourier_heat_dirac(src, 0.5, 0.2) == 0.0);
  CHECK(fourier_heat_dirac(src, 0.5, 0.5) == 0.0);
  auto mass = [&](double t) {
    const int n = 2000;
    double s = 0;
    for (int i = 0; i < n; ++i) s += fourier_heat_dirac(src, (i + 0.5) / n, t) / n;
    return s;
  };
  double prev = mass(0.52);
  for (double t = 0.6; t < 1.5; t += 0.1) {
    const double m = mass(t);
    CHECK(m < prev);
    CHECK(m > 0);
    prev = m;
  }
}

TEST_CASE("tail bound") {
  for (double dt : {1e-3, 1e-2, 0.1}) {
    const std::size_t n = fourier_terms_needed(dt);
    CHECK(fourier_tail_bound(n, dt) <= kFourierTailTol);
    CHECK(fourier_tail_bound(n - 1, dt) > kFourierTailTol);
    double direct = 0;
    for (std::size_t m = n + 1; m < n + 2000; ++m) direct += 2.0 * std::exp(-double(m * m) * pi * pi * dt);
    CHECK(direct <= fourier_tail_bound(n, dt));
  }
}

TEST_CASE("midpoint sampling") {
  const SpaceTimeGrid g = build_grid(0, 1, 1.5, 7, {0.0, 0.1, 0.45, 0.5, 0.9, 1.5});
  auto lin = [](double x, double t) { return x * x + 3.0 * t - 1.0; };
  const DesiredState d = sample_desired_state(g, lin);
  CHECK(d.num_nodes == 7);
  CHECK(d.num_steps == 5);
  for (std::size_t k = 1; k <= 5; ++k) {
    for (std::size_t j = 0; j < 7; ++j) {
      // interval average of a field linear in t
      const double avg = g.node(j) * g.node(j) + 1.5 * (g.time(k - 1) + g.time(k)) - 1.0;
      CHECK(d.at(j, k) == doctest::Approx(avg).epsilon(1e-15));
    }
  }
  auto bad = [](double x, double t) {
    return t > 1 && x > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  CHECK_THROWS_AS(sample_desired_state(g, bad), NonFiniteSampleError);
}

TEST_CASE("Fourier sampler matches pointwise evaluation") {
  const SpaceTimeGrid g = testing::coarse_grid();
  const PointSource src{};
  const DesiredState d = sample_fourier_state(g, src);
  for (std::size_t k = 1; k <= g.num_steps(); ++k) {
    for (std::size_t j = 0; j < g.num_nodes(); ++j) {
      const double ref = fourier_heat_dirac(src, g.node(j), g.midpoint(k), 100000);
      CHECK(std::abs(d.at(j, k) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
  // midpoints 1/16 .. 7/16 precede the source
  for (std::size_t k = 1; k <= 4; ++k) CHECK(d.at(1, k) == 0.0);
  CHECK(d.at(1, 5) > 0.0);
  CHECK(effective_fourier_terms(g, src, 1) >= fourier_terms_needed(1.0 / 16));
}

TEST_CASE("manufactured adjoint") {
  const double ab = 0.25;
  CHECK(manufactured_adjoint(ab, 0.5, 0.5).first == doctest::Approx(-ab).epsilon(1e-15));
  for (double x = 0.0; x <= 1.0; x += 0.05) {
    for (double t = 0.0; t <= 1.5; t += 0.05) {
      if (std::abs(x - 0.5) < 1e-9 && std::abs(t - 0.5) < 1e-9) continue;
      const double w = manufactured_adjoint(ab, x, t).first;
      CHECK(std::abs(w) < ab);
      CHECK(w <= 0.0);
    }
  }
  const double d = 1e-4;
  for (double x : {0.13, 0.5, 0.71}) {
    for (double t : {0.2, 0.77, 1.3}) {
      auto w = [&](double xx, double tt) { return manufactured_adjoint(ab, xx, tt).first; };
      const double wt = (w(x, t + d) - w(x, t - d)) / (2 * d);
      const double wxx = (w(x + d, t) - 2 * w(x, t) + w(x - d, t)) / (d * d);
      CHECK(std::abs(manufactured_adjoint(ab, x, t).second - (-wt - wxx)) <= 1e-6);
    }
  }
}

TEST_CASE("manufactured desired state") {
  const SpaceTimeGrid g = testing::coarse_grid();
  const PointSource src{};
  const DesiredState yt = sample_fourier_state(g, src);
  const DesiredState yd = manufactured_desired_state(g, 0.25, src, 4.0);
  for (std::size_t k = 1; k <= g.num_steps(); ++k) {
    for (std::size_t j = 0; j < g.num_nodes(); ++j) {
      const double lw = manufactured_adjoint(0.25, g.node(j), g.midpoint(k)).second;
      CHECK(yd.at(j, k) == doctest::Approx(yt.at(j, k) - lw * lw * lw).epsilon(1e-13));
    }
  }
}

}
