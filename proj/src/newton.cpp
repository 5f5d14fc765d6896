#include "spheat/newton.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>

namespace spheat {

namespace {

constexpr double kCurvatureFloor = DBL_MIN * 1e10;

// |z|^e, with the default exponent pair kept off std::pow (hot loops).
double abs_pow(double z, double e) {
  if (e == 2.0) return z * z;
  return std::pow(std::abs(z), e);
}

double phi(double z, double p) { return abs_pow(z, p - 2.0) * z; }

double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void require_consistent(const DiscreteSystem& sys, const PredualIterate& it,
                        const Bounds& bounds) {
  const auto ns = static_cast<Eigen::Index>(sys.sigma_sites.size());
  const auto nh = static_cast<Eigen::Index>(sys.initial_sites.size());
  if (static_cast<std::size_t>(it.w.size()) != sys.num_unknowns()) {
    throw std::invalid_argument("iterate dimension does not match the system");
  }
  if (it.lambda1.size() != ns || it.lambda2.size() != ns) {
    throw std::invalid_argument("multiplier dimension does not match the sigma sites");
  }
  const Eigen::Index want = bounds.beta ? nh : 0;
  if (it.lambda3.size() != want || it.lambda4.size() != want) {
    throw std::invalid_argument("initial-time multipliers do not match the beta setting");
  }
}

// z and s = |z|^{p-2} z + y_d.
struct Density {
  Vector z;
  Vector s;
};

Density density(const DiscreteSystem& sys, const Vector& yd, const Vector& w) {
  Density d;
  d.z = adjoint_density(sys, w);
  const double p = sys.exponents.p;
  d.s = d.z.unaryExpr([p](double v) { return phi(v, p); }) + yd;
  return d;
}

// Per-constraint active-set classification shared by residual, Jacobian and
// Newton step. kind: 0 inactive, 1 upper bound, 2 lower bound.
struct Activity {
  std::vector<int> sigma;
  std::vector<int> initial;
};

int classify(double l_up, double l_lo, double w, double bound, double kappa) {
  const double g1 = l_up + kappa * (w - bound);
  const double g2 = l_lo + kappa * (-w - bound);
  const bool a1 = g1 >= 0;  // tie-break: derivative branch at g = 0
  const bool a2 = g2 >= 0;
  if (a1 && a2) return g1 >= g2 ? 1 : 2;
  if (a1) return 1;
  if (a2) return 2;
  return 0;
}

Activity activity(const DiscreteSystem& sys, const PredualIterate& it, const Bounds& bounds,
                  double kappa) {
  Activity act;
  const Vector ws = sys.restrict_sigma(it.w);
  act.sigma.resize(sys.sigma_sites.size());
  for (std::size_t i = 0; i < act.sigma.size(); ++i) {
    act.sigma[i] = classify(it.lambda1[i], it.lambda2[i], ws[i], bounds.alpha, kappa);
  }
  if (bounds.beta) {
    const Vector w0 = sys.restrict_initial(it.w);
    act.initial.resize(sys.initial_sites.size());
    for (std::size_t i = 0; i < act.initial.size(); ++i) {
      act.initial[i] = classify(it.lambda3[i], it.lambda4[i], w0[i], *bounds.beta, kappa);
    }
  }
  return act;
}

Vector ncp(const Vector& lambda, const Vector& gap, double kappa) {
  return (lambda + kappa * gap).cwiseMax(0.0) - lambda;
}

KktResidual residual_from(const DiscreteSystem& sys, const Density& d, const PredualIterate& it,
                          const Bounds& bounds, double kappa) {
  KktResidual r;
  r.grad_w = sys.op.apply(d.s);
  sys.scatter_sigma_add(it.lambda1 - it.lambda2, r.grad_w);
  const Vector ws = sys.restrict_sigma(it.w);
  const Vector ones = Vector::Ones(ws.size());
  r.n1 = ncp(it.lambda1, ws - bounds.alpha * ones, kappa);
  r.n2 = ncp(it.lambda2, -ws - bounds.alpha * ones, kappa);
  double sq = r.n1.squaredNorm() + r.n2.squaredNorm();
  if (bounds.beta) {
    sys.scatter_initial_add(it.lambda3 - it.lambda4, r.grad_w);
    const Vector w0 = sys.restrict_initial(it.w);
    const Vector ones0 = Vector::Ones(w0.size());
    r.n3 = ncp(it.lambda3, w0 - *bounds.beta * ones0, kappa);
    r.n4 = ncp(it.lambda4, -w0 - *bounds.beta * ones0, kappa);
    sq += r.n3.squaredNorm() + r.n4.squaredNorm();
  }
  sq += r.grad_w.squaredNorm();
  r.norm = std::sqrt(sq);
  return r;
}

// Diagonal curvature in the density variable divided by the lumped weights.
Vector curvature(const DiscreteSystem& sys, const Vector& z, double reg) {
  const double p = sys.exponents.p;
  Vector dy(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double c = (p - 1.0) * abs_pow(z[i], p - 2.0) + reg;
    dy[i] = std::max(c, kCurvatureFloor) / sys.weights[i];
  }
  return dy;
}

SparseMatrix hessian(const DiscreteSystem& sys, const Vector& dy) {
  const SparseMatrix lt = sys.op.to_sparse();
  SparseMatrix h = lt * dy.asDiagonal() * SparseMatrix(lt.transpose());
  h.makeCompressed();
  return h;
}

struct ActiveRow {
  std::size_t position;
  double target;
  int kind;  // 1..4 as the multiplier index
  std::size_t index;
};

std::vector<ActiveRow> active_rows(const DiscreteSystem& sys, const Activity& act,
                                   const Bounds& bounds) {
  std::vector<ActiveRow> rows;
  for (std::size_t i = 0; i < act.sigma.size(); ++i) {
    if (act.sigma[i] == 0) continue;
    const double t = act.sigma[i] == 1 ? bounds.alpha : -bounds.alpha;
    rows.push_back({sys.sigma_sites[i].position, t, act.sigma[i], i});
  }
  for (std::size_t i = 0; i < act.initial.size(); ++i) {
    if (act.initial[i] == 0) continue;
    const double t = act.initial[i] == 1 ? *bounds.beta : -*bounds.beta;
    rows.push_back({sys.initial_sites[i].position, t, act.initial[i] + 2, i});
  }
  return rows;
}

// Accumulates G^T D^{-1} G block by block, all columns in one forward sweep.
// Past the last source block the columns only diffuse, so they are
// recompressed to their numerical range every few blocks and the sweep
// continues on the reduced basis (G_b = W_b R).
Eigen::MatrixXd capacitance(const DiscreteSystem& sys, const std::vector<ActiveRow>& rows,
                            const Vector& dy_inv, std::size_t first) {
  const std::size_t nb = sys.block_size();
  const std::size_t blocks = sys.op.num_blocks();
  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto n = static_cast<Eigen::Index>(nb);
  std::size_t last = first;
  for (const auto& r : rows) last = std::max(last, r.position / nb);

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd prev = w;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(m, m);  // R
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);        // sum of W^T D^{-1} W
  auto flush = [&] {
    c.noalias() += basis.transpose() * acc * basis;
    acc.setZero();
  };

  for (std::size_t r = first; r < blocks; ++r) {
    std::swap(prev, w);
    w.setZero();
    if (r <= last) {
      for (Eigen::Index q = 0; q < m; ++q) {
        const std::size_t pos = rows[static_cast<std::size_t>(q)].position;
        if (pos / nb == r) w(static_cast<Eigen::Index>(pos % nb), q) = 1.0;
      }
    }
    sys.op.forward_step(r, r > first ? prev.data() : nullptr, w.data(),
                        static_cast<std::size_t>(w.cols()));
    const auto d = dy_inv.segment(static_cast<Eigen::Index>(r * nb), n).asDiagonal();
    acc.noalias() += w.transpose() * (d * w);

    if (r >= last && (r - last) % 16 == 0 && w.cols() > 1) {
      flush();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vector& sv = svd.singularValues();
      Eigen::Index k = 0;
      while (k < sv.size() && sv[k] > 1e-14 * sv[0]) ++k;
      if (k == 0) break;
      if (k < w.cols()) {
        basis = (svd.matrixV().leftCols(k).transpose() * basis).eval();
        w = svd.matrixU().leftCols(k) * sv.head(k).asDiagonal();
        prev.resize(n, k);
        acc = Eigen::MatrixXd::Zero(k, k);
      }
    }
  }
  flush();
  return c;
}

struct Step {
  Vector dw;
  PredualIterate target;  // new multipliers (w field unused)
};

// Solves the Newton system: H dw + E mu = -grad K, E^T (w + dw) = targets.
Step newton_step(const DiscreteSystem& sys, const Density& d, const PredualIterate& it,
                 const Bounds& bounds, const Activity& act, double reg, double lin_tol,
                 const SolverConfig& cfg) {
  const std::size_t n = sys.num_unknowns();
  const std::size_t nb = sys.block_size();
  const Vector dy = curvature(sys, d.z, reg);
  const Vector dy_inv = dy.cwiseInverse();
  const auto rows = active_rows(sys, act, bounds);
  const std::size_t m = rows.size();

  Vector v0 = -sys.op.solve_adjoint(dy_inv.cwiseProduct(d.s));
  Vector dw;
  Vector mu(static_cast<Eigen::Index>(m));

  if (m == 0) {
    dw = std::move(v0);
  } else if (n <= cfg.direct_max_unknowns && m > cfg.capacitance_max_active) {
    // Condensed sparse solve with the active coordinates fixed.
    const SparseMatrix h = hessian(sys, dy);
    std::vector<long> free_index(n, 0);
    Vector fixed_dw = Vector::Zero(static_cast<Eigen::Index>(n));
    for (const auto& r : rows) {
      free_index[r.position] = -1;
      fixed_dw[r.position] = r.target - it.w[r.position];
    }
    long nf = 0;
    for (auto& f : free_index) f = f < 0 ? -1 : nf++;

    const Vector grad = sys.op.apply(d.s);
    Vector rhs = -grad - h * fixed_dw;
    Vector rhs_f(nf);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(h.nonZeros()));
    for (int k = 0; k < h.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator e(h, k); e; ++e) {
        const long fr = free_index[e.row()];
        const long fc = free_index[e.col()];
        if (fr >= 0 && fc >= 0) trip.emplace_back(fr, fc, e.value());
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (free_index[i] >= 0) rhs_f[free_index[i]] = rhs[static_cast<Eigen::Index>(i)];
    }
    SparseMatrix hff(nf, nf);
    hff.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(hff);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("condensed Newton matrix is singular");
    const Vector xf = ldlt.solve(rhs_f);
    dw = fixed_dw;
    for (std::size_t i = 0; i < n; ++i) {
      if (free_index[i] >= 0) dw[static_cast<Eigen::Index>(i)] = xf[free_index[i]];
    }
    const Vector res = -(grad + h * dw);
    for (std::size_t q = 0; q < m; ++q) mu[static_cast<Eigen::Index>(q)] = res[rows[q].position];
  } else {
    // Capacitance matrix C = E^T H^{-1} E = G^T D^{-1} G with G = L^{-1} E.
    std::size_t first = std::numeric_limits<std::size_t>::max();
    for (const auto& r : rows) first = std::min(first, r.position / nb);
    Eigen::MatrixXd c = capacitance(sys, rows, dy_inv, first);
    c = 0.5 * (c + c.transpose()).eval();
    Vector rhs(static_cast<Eigen::Index>(m));
    for (std::size_t q = 0; q < m; ++q) {
      rhs[static_cast<Eigen::Index>(q)] = it.w[rows[q].position] + v0[rows[q].position] - rows[q].target;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("capacitance matrix is singular");
    mu = ldlt.solve(rhs);
    auto h_inv_e = [&](const Vector& coef) {
      Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
      for (std::size_t q = 0; q < m; ++q) e[rows[q].position] += coef[static_cast<Eigen::Index>(q)];
      Vector x = sys.op.solve_from(e, first);
      x.array() *= dy_inv.array();
      return Vector(sys.op.solve_adjoint(x));
    };
    dw = v0 - h_inv_e(mu);
    // Pin the active coordinates to their targets.
    for (const auto& r : rows) dw[r.position] = r.target - it.w[r.position];

    // v0 and H^{-1} E mu are huge and cancel where the curvature is tiny, so
    // refine against the residual of H dw + E mu = -grad (forward products only).
    const Vector grad = sys.op.apply(d.s);
    auto residual = [&](const Vector& x, const Vector& coef) {
      Vector r = -grad - sys.op.apply(dy.cwiseProduct(sys.op.apply_adjoint(x)));
      for (std::size_t q = 0; q < m; ++q) r[rows[q].position] -= coef[static_cast<Eigen::Index>(q)];
      return r;
    };
    Vector res = residual(dw, mu);
    double rn = res.norm();
    for (int pass = 0; pass < 4 && rn > lin_tol; ++pass) {
      const Vector dv = sys.op.solve_adjoint(dy_inv.cwiseProduct(sys.op.solve(res)));
      Vector rr(static_cast<Eigen::Index>(m));
      for (std::size_t q = 0; q < m; ++q) rr[static_cast<Eigen::Index>(q)] = dv[rows[q].position];
      const Vector dmu = ldlt.solve(rr);
      Vector cand = dw + dv - h_inv_e(dmu);
      for (const auto& r : rows) cand[r.position] = r.target - it.w[r.position];
      const Vector cmu = mu + dmu;
      Vector cres = residual(cand, cmu);
      const double cn = cres.norm();
      if (!(cn < 0.5 * rn)) break;
      dw = std::move(cand);
      mu = cmu;
      res = std::move(cres);
      rn = cn;
    }
  }

  Step st;
  st.dw = std::move(dw);
  st.target.lambda1 = Vector::Zero(it.lambda1.size());
  st.target.lambda2 = Vector::Zero(it.lambda2.size());
  st.target.lambda3 = Vector::Zero(it.lambda3.size());
  st.target.lambda4 = Vector::Zero(it.lambda4.size());
  for (std::size_t q = 0; q < m; ++q) {
    const double v = mu[static_cast<Eigen::Index>(q)];
    const auto i = static_cast<Eigen::Index>(rows[q].index);
    switch (rows[q].kind) {
      case 1: st.target.lambda1[i] = v; break;
      case 2: st.target.lambda2[i] = -v; break;
      case 3: st.target.lambda3[i] = v; break;
      case 4: st.target.lambda4[i] = -v; break;
    }
  }
  return st;
}

PredualIterate blend(const PredualIterate& it, const Step& st, double t) {
  PredualIterate out;
  out.w = it.w + t * st.dw;
  out.lambda1 = it.lambda1 + t * (st.target.lambda1 - it.lambda1);
  out.lambda2 = it.lambda2 + t * (st.target.lambda2 - it.lambda2);
  out.lambda3 = it.lambda3 + t * (st.target.lambda3 - it.lambda3);
  out.lambda4 = it.lambda4 + t * (st.target.lambda4 - it.lambda4);
  return out;
}

// Keeps at most `limit` newly violated constraints (zero multiplier) in the
// step, the most violated first. The rest stay on the inactive branch.
std::size_t limit_admission(const DiscreteSystem& sys, const PredualIterate& it,
                            const Bounds& bounds, std::size_t limit, Activity& act) {
  if (limit == 0) return 0;
  const Vector ws = sys.restrict_sigma(it.w);
  std::vector<std::pair<double, std::size_t>> fresh;
  for (std::size_t i = 0; i < act.sigma.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (act.sigma[i] == 1 && it.lambda1[k] == 0.0) fresh.emplace_back(ws[k] - bounds.alpha, i);
    if (act.sigma[i] == 2 && it.lambda2[k] == 0.0) fresh.emplace_back(-ws[k] - bounds.alpha, i);
  }
  if (fresh.size() <= limit) return 0;
  std::nth_element(fresh.begin(), fresh.begin() + static_cast<long>(limit), fresh.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t q = limit; q < fresh.size(); ++q) act.sigma[fresh[q].second] = 0;
  return fresh.size() - limit;
}

void count_active(const Activity& act, IterationRecord& rec) {
  for (int a : act.sigma) {
    rec.active_upper += a == 1;
    rec.active_lower += a == 2;
  }
  for (int a : act.initial) {
    rec.active_initial_upper += a == 1;
    rec.active_initial_lower += a == 2;
  }
}

}  // namespace

PredualIterate PredualIterate::zero(const DiscreteSystem& sys, bool with_initial) {
  const auto ns = static_cast<Eigen::Index>(sys.sigma_sites.size());
  const auto nh = with_initial ? static_cast<Eigen::Index>(sys.initial_sites.size()) : 0;
  return {Vector::Zero(static_cast<Eigen::Index>(sys.num_unknowns())), Vector::Zero(ns),
          Vector::Zero(ns), Vector::Zero(nh), Vector::Zero(nh)};
}

void SolverConfig::validate() const {
  if (!(kappa > 0)) throw std::invalid_argument("kappa must be positive");
  if (!(newton_tol > 0) || !(feas_tol > 0) || !(step_tol > 0)) {
    throw std::invalid_argument("solver tolerances must be positive");
  }
  if (!(reg_coeff >= 0)) throw std::invalid_argument("reg_coeff must be nonnegative");
  if (max_iter == 0) throw std::invalid_argument("max_iter must be positive");
  if (!(min_step > 0 && min_step <= 1)) throw std::invalid_argument("min_step must lie in (0,1]");
}

Vector adjoint_density(const DiscreteSystem& sys, const Vector& w) {
  return sys.op.apply_adjoint(w).cwiseQuotient(sys.weights);
}

double objective(const DiscreteSystem& sys, const Vector& yd, const Vector& w) {
  if (yd.size() != w.size()) throw std::invalid_argument("desired state dimension mismatch");
  const Vector z = adjoint_density(sys, w);
  const double p = sys.exponents.p;
  double k = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    k += (std::pow(std::abs(z[i]), p) / p + z[i] * yd[i]) * sys.weights[i];
  }
  return k;
}

Vector objective_gradient(const DiscreteSystem& sys, const Vector& yd, const Vector& w) {
  return sys.op.apply(density(sys, yd, w).s);
}

KktResidual kkt_residual(const DiscreteSystem& sys, const Vector& yd, const PredualIterate& it,
                         const Bounds& bounds, double kappa) {
  require_consistent(sys, it, bounds);
  return residual_from(sys, density(sys, yd, it.w), it, bounds, kappa);
}

Vector stack(const KktResidual& r) {
  Vector v(r.grad_w.size() + r.n1.size() + r.n2.size() + r.n3.size() + r.n4.size());
  v << r.grad_w, r.n1, r.n2, r.n3, r.n4;
  return v;
}

Vector stack(const PredualIterate& it) {
  Vector v(it.w.size() + it.lambda1.size() + it.lambda2.size() + it.lambda3.size() +
           it.lambda4.size());
  v << it.w, it.lambda1, it.lambda2, it.lambda3, it.lambda4;
  return v;
}

SparseMatrix generalized_jacobian(const DiscreteSystem& sys, const Vector& yd,
                                  const PredualIterate& it, const Bounds& bounds, double kappa,
                                  double reg) {
  require_consistent(sys, it, bounds);
  const Density d = density(sys, yd, it.w);
  const SparseMatrix h = hessian(sys, curvature(sys, d.z, reg));
  const auto n = static_cast<Eigen::Index>(sys.num_unknowns());
  const auto ns = static_cast<Eigen::Index>(sys.sigma_sites.size());
  const Eigen::Index nh = it.lambda3.size();
  const Eigen::Index o1 = n, o2 = n + ns, o3 = n + 2 * ns, o4 = n + 2 * ns + nh;
  const Eigen::Index total = o4 + nh;
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < h.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator e(h, k); e; ++e) trip.emplace_back(e.row(), e.col(), e.value());
  }
  // Branches follow classify(): a bound row is active iff its g >= 0.
  auto add_block = [&](Eigen::Index o_up, Eigen::Index o_lo,
                       const std::vector<ConstraintSite>& sites, const Vector& l_up,
                       const Vector& l_lo, double bound) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const auto pos = static_cast<Eigen::Index>(sites[i].position);
      const auto ii = static_cast<Eigen::Index>(i);
      trip.emplace_back(pos, o_up + ii, 1.0);
      trip.emplace_back(pos, o_lo + ii, -1.0);
      const double wv = it.w[pos];
      if (l_up[ii] + kappa * (wv - bound) >= 0) trip.emplace_back(o_up + ii, pos, kappa);
      else trip.emplace_back(o_up + ii, o_up + ii, -1.0);
      if (l_lo[ii] + kappa * (-wv - bound) >= 0) trip.emplace_back(o_lo + ii, pos, -kappa);
      else trip.emplace_back(o_lo + ii, o_lo + ii, -1.0);
    }
  };
  add_block(o1, o2, sys.sigma_sites, it.lambda1, it.lambda2, bounds.alpha);
  if (bounds.beta) add_block(o3, o4, sys.initial_sites, it.lambda3, it.lambda4, *bounds.beta);
  SparseMatrix jac(total, total);
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

Vector unconstrained_minimizer(const DiscreteSystem& sys, const Vector& yd) {
  const double e = 1.0 / (sys.exponents.p - 1.0);
  const Vector z = yd.unaryExpr([e](double v) { return -std::copysign(std::pow(std::abs(v), e), v); });
  return sys.op.solve_adjoint(z.cwiseProduct(sys.weights));
}

std::pair<double, double> zero_control_thresholds(const DiscreteSystem& sys, const Vector& yd) {
  const Vector w = unconstrained_minimizer(sys, yd);
  return {max_abs(sys.restrict_sigma(w)), max_abs(sys.restrict_initial(w))};
}

SolveResult newton_solve(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                         const SolverConfig& config,
                         const std::optional<PredualIterate>& warm_start) {
  config.validate();
  if (!(bounds.alpha > 0)) {
    throw std::invalid_argument("alpha must be positive; alpha = 0 has a closed-form solution");
  }
  if (bounds.beta && !(*bounds.beta > 0)) throw std::invalid_argument("beta must be positive");
  if (static_cast<std::size_t>(yd.size()) != sys.num_unknowns()) {
    throw std::invalid_argument("desired state dimension mismatch");
  }

  SolveResult out;
  out.residual_scale = 1.0 + sys.op.apply(yd).norm();
  PredualIterate it = warm_start ? *warm_start : PredualIterate::zero(sys, bounds.beta.has_value());
  require_consistent(sys, it, bounds);

  Density d = density(sys, yd, it.w);
  KktResidual res = residual_from(sys, d, it, bounds, config.kappa);
  const double tol = config.newton_tol * out.residual_scale;
  double last_update = res.norm == 0 ? 0.0 : std::numeric_limits<double>::infinity();

  SolveResult best;
  best.iterate = it;
  best.residual = res.norm;
  best.residual_scale = out.residual_scale;

  for (std::size_t iter = 0;; ++iter) {
    IterationRecord rec;
    rec.iter = iter;
    rec.residual = res.norm;
    Activity act = activity(sys, it, bounds, config.kappa);
    rec.deferred = limit_admission(sys, it, bounds, config.max_new_active, act);
    count_active(act, rec);

    if (res.norm <= tol && last_update <= config.step_tol * (1.0 + max_abs(it.w))) {
      rec.step = 0;
      out.log.push_back(rec);
      out.iterate = std::move(it);
      out.iterations = iter;
      out.residual = res.norm;
      return out;
    }
    if (iter >= config.max_iter) {
      out.log.push_back(rec);
      best.log = out.log;
      best.iterations = iter;
      throw SolverError("Newton iteration did not converge within max_iter", std::move(best));
    }

    Step st;
    try {
      // inexact Newton: the linear residual only has to beat 1e-3 min(1,|F|) |F|
      st = newton_step(sys, d, it, bounds, act,
                       config.reg_coeff * res.norm / out.residual_scale,
                       1e-3 * std::min(1.0, res.norm) * res.norm, config);
    } catch (const std::runtime_error& e) {
      out.log.push_back(rec);
      // the residual is already converged; only the step test was pending
      if (res.norm <= tol) {
        out.log.back().step = 0;
        out.iterate = std::move(it);
        out.iterations = iter;
        out.residual = res.norm;
        return out;
      }
      best.log = out.log;
      best.iterations = iter;
      throw SolverError(e.what(), std::move(best));
    }
    rec.update = max_abs(st.dw);

    double t = 1.0;
    PredualIterate trial = blend(it, st, t);
    Density dt = density(sys, yd, trial.w);
    KktResidual rt = residual_from(sys, dt, trial, bounds, config.kappa);
    if (config.globalize) {
      while (!(rt.norm <= (1.0 - 1e-4 * t) * res.norm)) {
        t *= 0.5;
        if (t < config.min_step) {
          rec.line_search_failed = true;
          // nothing left to gain at round-off level
          if (res.norm <= tol) {
            rec.step = 0;
            out.log.push_back(rec);
            out.iterate = std::move(it);
            out.iterations = iter;
            out.residual = res.norm;
            return out;
          }
          t = 1.0;
          trial = blend(it, st, t);
          dt = density(sys, yd, trial.w);
          rt = residual_from(sys, dt, trial, bounds, config.kappa);
          break;
        }
        trial = blend(it, st, t);
        dt = density(sys, yd, trial.w);
        rt = residual_from(sys, dt, trial, bounds, config.kappa);
      }
    }
    rec.step = t;
    out.log.push_back(rec);
    if (config.on_iteration) config.on_iteration(rec);
    last_update = t * rec.update;
    it = std::move(trial);
    d = std::move(dt);
    res = std::move(rt);
    if (res.norm < best.residual) {
      best.iterate = it;
      best.residual = res.norm;
    }
  }
}

PredualIterate newton_update(const DiscreteSystem& sys, const Vector& yd, const PredualIterate& it,
                             const Bounds& bounds, const SolverConfig& config, double reg) {
  require_consistent(sys, it, bounds);
  const Density d = density(sys, yd, it.w);
  Activity act = activity(sys, it, bounds, config.kappa);
  limit_admission(sys, it, bounds, config.max_new_active, act);
  return blend(it, newton_step(sys, d, it, bounds, act, reg, 0.0, config), 1.0);
}

KktDiagnostics kkt_diagnostics(const DiscreteSystem& sys, const PredualIterate& it,
                               const Bounds& bounds) {
  KktDiagnostics diag;
  double min_l = std::numeric_limits<double>::infinity();
  auto scan = [&](const Vector& wv, const Vector& up, const Vector& lo, double bound) {
    for (Eigen::Index i = 0; i < wv.size(); ++i) {
      diag.max_violation = std::max(diag.max_violation, std::abs(wv[i]) - bound);
      min_l = std::min({min_l, up[i], lo[i]});
      diag.max_complementarity = std::max({diag.max_complementarity,
                                           std::abs(up[i] * (wv[i] - bound)),
                                           std::abs(lo[i] * (-wv[i] - bound))});
    }
  };
  diag.max_violation = -std::numeric_limits<double>::infinity();
  scan(sys.restrict_sigma(it.w), it.lambda1, it.lambda2, bounds.alpha);
  if (bounds.beta) scan(sys.restrict_initial(it.w), it.lambda3, it.lambda4, *bounds.beta);
  diag.min_multiplier = std::isfinite(min_l) ? min_l : 0.0;
  return diag;
}

}  // namespace spheat
