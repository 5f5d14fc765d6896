#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "oracle.hpp"
#include "spheat/newton.hpp"

using namespace spheat;

namespace {

PredualIterate unstack(const PredualIterate& shape, const Vector& v) {
  PredualIterate it = shape;
  Eigen::Index o = 0;
  for (Vector* b : {&it.w, &it.lambda1, &it.lambda2, &it.lambda3, &it.lambda4}) {
    *b = v.segment(o, b->size());
    o += b->size();
  }
  return it;
}

}  // namespace

TEST_SUITE("newton") {

TEST_CASE("objective gradient by finite differences") {
  std::mt19937 rng(1);
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = testing::coarse_system(sc);
    const Vector yd = testing::coarse_desired(s.grid);
    const Vector w = testing::random_vector(rng, static_cast<Eigen::Index>(s.num_unknowns()), -0.3, 0.3);
    const Vector g = objective_gradient(s, yd, w);
    const double d = 1e-6;
    for (Eigen::Index i = 0; i < w.size(); i += 5) {
      Vector wp = w, wm = w;
      wp[i] += d;
      wm[i] -= d;
      const double fd = (objective(s, yd, wp) - objective(s, yd, wm)) / (2 * d);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("generalized Jacobian by finite differences") {
  std::mt19937 rng(9);
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = testing::coarse_system(sc);
    const Vector yd = testing::coarse_desired(s.grid);
    const Bounds b{0.2, 0.15};
    PredualIterate it = PredualIterate::zero(s, true);
    it.w = testing::random_vector(rng, it.w.size(), -0.4, 0.4);
    for (Vector* l : {&it.lambda1, &it.lambda2, &it.lambda3, &it.lambda4}) {
      *l = testing::random_vector(rng, l->size(), 0.0, 0.3);
    }
    for (double kappa : {0.5, 1.0, 2.0}) {
      const auto jac = testing::dense(generalized_jacobian(s, yd, it, b, kappa));
      const Vector x = stack(it);
      const double d = 1e-6;
      for (Eigen::Index c = 0; c < x.size(); ++c) {
        Vector xp = x, xm = x;
        xp[c] += d;
        xm[c] -= d;
        const Vector fp = stack(kkt_residual(s, yd, unstack(it, xp), b, kappa));
        const Vector fm = stack(kkt_residual(s, yd, unstack(it, xm), b, kappa));
        const Vector fd = (fp - fm) / (2 * d);
        const double scale = std::max(1.0, jac.col(c).cwiseAbs().maxCoeff());
        CHECK((fd - jac.col(c)).cwiseAbs().maxCoeff() <= 1e-4 * scale);
      }
    }
  }
}

TEST_CASE("inactive multiplier rows read minus identity") {
  const DiscreteSystem s = testing::coarse_system(Scheme::kVariational);
  const Vector yd = testing::coarse_desired(s.grid);
  PredualIterate it = PredualIterate::zero(s, false);
  const auto jac = testing::dense(generalized_jacobian(s, yd, it, {1.0, std::nullopt}, 1.0));
  const auto n = static_cast<Eigen::Index>(s.num_unknowns());
  const auto m = static_cast<Eigen::Index>(2 * s.sigma_sites.size());
  REQUIRE(jac.rows() == n + m);
  CHECK((jac.block(n, n, m, m) + Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(jac.block(n, 0, m, n).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kappa = 1 gives a symmetric Jacobian when all bounds are active") {
  const DiscreteSystem s = testing::coarse_system(Scheme::kVariational);
  const Vector yd = testing::coarse_desired(s.grid);
  PredualIterate it = PredualIterate::zero(s, false);
  for (std::size_t i = 0; i < s.sigma_sites.size(); ++i) {
    it.w[s.sigma_sites[i].position] = (i % 2 == 0) ? 0.3 : -0.3;
    (i % 2 == 0 ? it.lambda1 : it.lambda2)[static_cast<Eigen::Index>(i)] = 0.1;
  }
  // lower rows of sites with w = 0.3 are inactive; drop them from the comparison
  const auto jac = testing::dense(generalized_jacobian(s, yd, it, {0.2, std::nullopt}, 1.0));
  const auto n = static_cast<Eigen::Index>(s.num_unknowns());
  const auto ns = static_cast<Eigen::Index>(s.sigma_sites.size());
  CHECK((jac.topLeftCorner(n, n) - jac.topLeftCorner(n, n).transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < ns; ++i) {
    const Eigen::Index row = n + (i % 2 == 0 ? i : ns + i);
    const auto pos = static_cast<Eigen::Index>(s.sigma_sites[static_cast<std::size_t>(i)].position);
    CHECK(jac(row, pos) == jac(pos, row));
    CHECK(jac(row, row) == 0.0);
  }
}

TEST_CASE("Newton update solves the linearized system") {
  std::mt19937 rng(4);
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = testing::coarse_system(sc);
    const Vector yd = testing::coarse_desired(s.grid);
    for (const Bounds b : {Bounds{0.05, std::nullopt}, Bounds{0.05, 0.04}}) {
      PredualIterate it = PredualIterate::zero(s, b.beta.has_value());
      it.w = testing::random_vector(rng, it.w.size(), -0.1, 0.1);
      it.lambda1 = testing::random_vector(rng, it.lambda1.size(), 0.0, 0.05);
      SolverConfig cfg;
      for (double reg : {0.0, 1e-3}) {
        const PredualIterate nx = newton_update(s, yd, it, b, cfg, reg);
        const auto jac = generalized_jacobian(s, yd, it, b, cfg.kappa, reg);
        const Vector f = stack(kkt_residual(s, yd, it, b, cfg.kappa));
        const Vector lin = jac * (stack(nx) - stack(it)) + f;
        CHECK(lin.cwiseAbs().maxCoeff() <= 1e-8 * (1 + f.cwiseAbs().maxCoeff()));
        // multipliers of inactive rows vanish
        for (std::size_t i = 0; i < s.sigma_sites.size(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const double wv = it.w[s.sigma_sites[i].position];
          if (it.lambda1[ii] + cfg.kappa * (wv - b.alpha) < 0) CHECK(nx.lambda1[ii] == 0.0);
          if (it.lambda2[ii] + cfg.kappa * (-wv - b.alpha) < 0) CHECK(nx.lambda2[ii] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("zero desired state") {
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = testing::coarse_system(sc);
    const Vector yd = Vector::Zero(static_cast<Eigen::Index>(s.num_unknowns()));
    const SolveResult r = newton_solve(s, yd, {0.3, std::nullopt}, SolverConfig{});
    CHECK(r.iterations <= 1);
    CHECK(r.iterate.w.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("large alpha returns the unconstrained minimizer") {
  const DiscreteSystem s = testing::coarse_system(Scheme::kVariational);
  const Vector yd = testing::coarse_desired(s.grid);
  const Vector w0 = unconstrained_minimizer(s, yd);
  CHECK(objective_gradient(s, yd, w0).cwiseAbs().maxCoeff() <= 1e-10);
  const auto th = zero_control_thresholds(s, yd);
  const SolveResult r = newton_solve(s, yd, {1.01 * th.first, std::nullopt}, SolverConfig{});
  CHECK((r.iterate.w - w0).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(r.iterate.lambda1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.iterate.lambda2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projected gradient oracle on a tiny instance") {
  std::mt19937 rng(2024);
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = assemble_system(sc, testing::tiny_grid(), testing::tiny_region());
    for (int trial = 0; trial < 3; ++trial) {
      const Vector yd = testing::smooth_desired(s.grid, rng);
      const Vector w0 = unconstrained_minimizer(s, yd);
      std::vector<double> mags;
      for (const auto& site : s.sigma_sites) mags.push_back(std::abs(w0[site.position]));
      std::sort(mags.rbegin(), mags.rend());
      const double alpha = 0.5 * (mags[1] + mags[2]);
      const Bounds b{alpha, std::nullopt};
      const SolveResult r = newton_solve(s, yd, b, SolverConfig{});
      std::size_t active = 0;
      for (const auto& site : s.sigma_sites) {
        if (std::abs(r.iterate.w[site.position]) >= alpha - 1e-9) ++active;
      }
      CHECK(active >= 1);
      CHECK(active <= 3);
      const Vector ref = testing::projected_gradient(s, yd, alpha);
      CHECK((r.iterate.w - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("KKT diagnostics and kappa independence") {
  const Bounds b{0.05, std::nullopt};
  for (Scheme sc : {Scheme::kVariational, Scheme::kDiscontinuousGalerkin}) {
    const DiscreteSystem s = testing::coarse_system(sc);
    const Vector yd = testing::coarse_desired(s.grid);
    std::vector<Vector> ws;
    for (double kappa : {0.5, 1.0, 2.0}) {
      SolverConfig cfg;
      cfg.kappa = kappa;
      const SolveResult r = newton_solve(s, yd, b, cfg);
      const KktDiagnostics d = kkt_diagnostics(s, r.iterate, b);
      CHECK(d.max_violation <= 1e-9);
      CHECK(d.min_multiplier >= 0.0);
      CHECK(d.max_complementarity <= 1e-8 * (1 + b.alpha));
      ws.push_back(r.iterate.w);
    }
    CHECK((ws[0] - ws[1]).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((ws[2] - ws[1]).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("invalid configuration") {
  SolverConfig c;
  c.kappa = 0;
  CHECK_THROWS(c.validate());
  SolverConfig d;
  d.min_step = 2;
  CHECK_THROWS(d.validate());
  const DiscreteSystem s = testing::coarse_system(Scheme::kVariational);
  const Vector yd = testing::coarse_desired(s.grid);
  CHECK_THROWS(objective(s, Vector::Zero(3), yd));
}

}
