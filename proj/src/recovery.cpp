#include "spheat/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spheat {

namespace {

double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

MeasureControl read_off(const DiscreteSystem& sys, const Vector& r, const RecoveryOptions& opt) {
  MeasureControl c;
  c.scheme = sys.scheme;
  c.coefficients = sys.restrict_sigma(r);
  if (opt.with_initial) c.initial_coefficients = sys.restrict_initial(r);

  Vector off = r;
  for (const auto& s : sys.sigma_sites) off[s.position] = 0.0;
  if (opt.with_initial) {
    for (const auto& s : sys.initial_sites) off[s.position] = 0.0;
  }
  c.off_index_residual = max_abs(off);
  const double scale = 1.0 + max_abs(r);

  if (opt.check_residual && c.off_index_residual > opt.residual_tol * scale) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(off.size()));
    for (Eigen::Index i = 0; i < off.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    const std::size_t shown = std::min<std::size_t>(5, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(shown), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return std::abs(off[a]) > std::abs(off[b]); });
    std::ostringstream os;
    os << "recovery residual outside the control index sets exceeds tolerance; worst (node,block,value):";
    const auto nb = static_cast<Eigen::Index>(sys.block_size());
    for (std::size_t i = 0; i < shown; ++i) {
      os << " (" << idx[i] % nb + 1 << "," << idx[i] / nb << "," << off[idx[i]] << ")";
    }
    throw RecoveryError(os.str());
  }

  const double drop = opt.drop_tol * scale;
  const auto& g = sys.grid;
  for (std::size_t i = 0; i < sys.sigma_sites.size(); ++i) {
    const double v = c.coefficients[static_cast<Eigen::Index>(i)];
    if (std::abs(v) <= drop) continue;
    const auto& s = sys.sigma_sites[i];
    Atom a;
    a.node = s.node;
    a.time = s.time;
    a.x = g.node(s.node);
    a.weight = v;
    if (sys.scheme == Scheme::kVariational) {
      a.t = g.time(s.time);
      a.t_begin = a.t;
      a.density = v;
    } else {
      a.t = g.time(s.time);
      a.t_begin = g.time(s.time - 1);
      a.density = v / g.step(s.time);
    }
    c.atoms.push_back(a);
  }
  for (Eigen::Index i = 0; i < c.initial_coefficients.size(); ++i) {
    const double v = c.initial_coefficients[i];
    if (std::abs(v) <= drop) continue;
    const auto& s = sys.initial_sites[static_cast<std::size_t>(i)];
    c.initial_atoms.push_back({s.node, g.node(s.node), v});
  }
  return c;
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_rule(int n, std::vector<double>& x, std::vector<double>& w) {
  switch (n) {
    case 1: x = {0.0}; w = {2.0}; return;
    case 2: {
      const double a = 1.0 / std::sqrt(3.0);
      x = {-a, a};
      w = {1.0, 1.0};
      return;
    }
    case 3: {
      const double a = std::sqrt(0.6);
      x = {-a, 0.0, a};
      w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      return;
    }
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      x = {-b, -a, a, b};
      w = {wb, wa, wa, wb};
      return;
    }
    case 5: {
      const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
      const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
      x = {-b, -a, 0.0, a, b};
      w = {wb, wa, 128.0 / 225.0, wa, wb};
      return;
    }
    default:
      throw std::invalid_argument("Gauss rule supports 1 to 5 points");
  }
}

}  // namespace

MeasureControl recover_control(const DiscreteSystem& sys, const Vector& yd, const Vector& w,
                               const RecoveryOptions& options) {
  return read_off(sys, objective_gradient(sys, yd, w), options);
}

MeasureControl closed_form_zero_alpha(const DiscreteSystem& sys, const Vector& yd,
                                      bool with_initial) {
  RecoveryOptions opt;
  opt.check_residual = false;
  opt.with_initial = with_initial;
  return read_off(sys, sys.op.apply(yd), opt);
}

double measure_norm(const MeasureControl& control) {
  return control.coefficients.lpNorm<1>() + control.initial_coefficients.lpNorm<1>();
}

StateSolution solve_state(const DiscreteSystem& sys, const MeasureControl& control) {
  if (static_cast<std::size_t>(control.coefficients.size()) != sys.sigma_sites.size()) {
    throw std::invalid_argument("control does not match the system's index sets");
  }
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(sys.num_unknowns()));
  sys.scatter_sigma_add(control.coefficients, rhs);
  StateSolution s;
  if (control.initial_coefficients.size() > 0) {
    sys.scatter_initial_add(control.initial_coefficients, rhs);
    if (sys.scheme == Scheme::kDiscontinuousGalerkin) {
      Vector u0 = Vector::Zero(static_cast<Eigen::Index>(sys.block_size()));
      for (std::size_t i = 0; i < sys.initial_sites.size(); ++i) {
        u0[static_cast<Eigen::Index>(sys.initial_sites[i].node)] =
            control.initial_coefficients[static_cast<Eigen::Index>(i)];
      }
      TridiagCholesky(sys.mass).solve_in_place(u0.data());
      s.y0 = std::move(u0);
    }
  } else if (sys.scheme == Scheme::kDiscontinuousGalerkin) {
    s.y0 = Vector::Zero(static_cast<Eigen::Index>(sys.block_size()));
  }
  s.y = sys.op.solve(rhs);
  return s;
}

double tracking_error(const DiscreteSystem& sys, const Vector& y, const Vector& yd, double q) {
  if (y.size() != yd.size() || y.size() != sys.weights.size()) {
    throw std::invalid_argument("state dimension mismatch");
  }
  double s = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    s += std::pow(std::abs(y[i] - yd[i]), q) * sys.weights[i];
  }
  return std::pow(s, 1.0 / q);
}

double tracking_error_quadrature(const DiscreteSystem& sys, const Vector& y,
                                 const std::function<double(double, double)>& field, double q,
                                 int points) {
  std::vector<double> gx, gw;
  gauss_rule(points, gx, gw);
  const auto& g = sys.grid;
  const std::size_t nh = g.num_nodes();
  const auto len = g.element_lengths();
  double s = 0;
  for (std::size_t k = 1; k <= g.num_steps(); ++k) {
    const double t0 = g.time(k - 1);
    const double tau = g.step(k);
    const double* yk = y.data() + (k - 1) * nh;
    for (std::size_t e = 0; e <= nh; ++e) {
      const double xl = e == 0 ? g.a() : g.node(e - 1);
      const double yl = e == 0 ? 0.0 : yk[e - 1];
      const double yr = e == nh ? 0.0 : yk[e];
      for (std::size_t a = 0; a < gx.size(); ++a) {
        const double xi = 0.5 * (gx[a] + 1.0);
        const double x = xl + xi * len[e];
        const double yh = (1.0 - xi) * yl + xi * yr;
        for (std::size_t b = 0; b < gx.size(); ++b) {
          const double t = t0 + 0.5 * (gx[b] + 1.0) * tau;
          s += 0.25 * gw[a] * gw[b] * len[e] * tau * std::pow(std::abs(yh - field(x, t)), q);
        }
      }
    }
  }
  return std::pow(s, 1.0 / q);
}

SupportSets support_from_adjoint(const DiscreteSystem& sys, const Vector& w, const Bounds& bounds,
                                 std::optional<double> tol) {
  SupportSets out;
  const double ta = tol ? *tol : 1e-6 * bounds.alpha;
  const Vector ws = sys.restrict_sigma(w);
  for (Eigen::Index i = 0; i < ws.size(); ++i) {
    if (ws[i] <= -bounds.alpha + ta) out.positive.push_back(static_cast<std::size_t>(i));
    else if (ws[i] >= bounds.alpha - ta) out.negative.push_back(static_cast<std::size_t>(i));
  }
  if (bounds.beta) {
    const double tb = tol ? *tol : 1e-6 * *bounds.beta;
    const Vector w0 = sys.restrict_initial(w);
    for (Eigen::Index i = 0; i < w0.size(); ++i) {
      if (w0[i] <= -*bounds.beta + tb) out.initial_positive.push_back(static_cast<std::size_t>(i));
      else if (w0[i] >= *bounds.beta - tb) out.initial_negative.push_back(static_cast<std::size_t>(i));
    }
  }
  return out;
}

double primal_objective(const DiscreteSystem& sys, const Vector& yd, const MeasureControl& control,
                        const Bounds& bounds) {
  const double q = sys.exponents.q;
  const StateSolution st = solve_state(sys, control);
  const double e = tracking_error(sys, st.y, yd, q);
  double j = std::pow(e, q) / q + bounds.alpha * control.coefficients.lpNorm<1>();
  if (bounds.beta) j += *bounds.beta * control.initial_coefficients.lpNorm<1>();
  return j;
}

double optimality_pairing(const DiscreteSystem& sys, const Vector& w,
                          const MeasureControl& control, const Bounds& bounds) {
  double s = sys.restrict_sigma(w).dot(control.coefficients) +
             bounds.alpha * control.coefficients.lpNorm<1>();
  if (bounds.beta && control.initial_coefficients.size() > 0) {
    s += sys.restrict_initial(w).dot(control.initial_coefficients) +
         *bounds.beta * control.initial_coefficients.lpNorm<1>();
  }
  return s;
}

RunReport make_report(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                      const SolveResult& solve, const RecoveryOptions& options) {
  RecoveryOptions opt = options;
  opt.with_initial = bounds.beta.has_value();
  RunReport rep;
  rep.scheme = sys.scheme;
  rep.alpha = bounds.alpha;
  rep.beta = bounds.beta;
  rep.control = recover_control(sys, yd, solve.iterate.w, opt);
  rep.measure_norm = measure_norm(rep.control);
  const StateSolution st = solve_state(sys, rep.control);
  rep.tracking_error = tracking_error(sys, st.y, yd, sys.exponents.q);
  rep.primal = primal_objective(sys, yd, rep.control, bounds);
  rep.predual = objective(sys, yd, solve.iterate.w);
  rep.duality_gap = rep.primal + rep.predual;
  rep.iterations = solve.iterations;
  rep.residual = solve.residual;
  rep.off_index_residual = rep.control.off_index_residual;
  rep.kkt = kkt_diagnostics(sys, solve.iterate, bounds);
  return rep;
}

RunReport make_zero_alpha_report(const DiscreteSystem& sys, const Vector& yd, bool with_initial) {
  RunReport rep;
  rep.scheme = sys.scheme;
  rep.alpha = 0;
  if (with_initial) rep.beta = 0.0;
  rep.closed_form = true;
  rep.control = closed_form_zero_alpha(sys, yd, with_initial);
  rep.measure_norm = measure_norm(rep.control);
  const StateSolution st = solve_state(sys, rep.control);
  rep.tracking_error = tracking_error(sys, st.y, yd, sys.exponents.q);
  Bounds b;
  b.alpha = 0;
  if (with_initial) b.beta = 0.0;
  rep.primal = primal_objective(sys, yd, rep.control, b);
  rep.predual = 0;
  rep.duality_gap = rep.primal;
  rep.off_index_residual = rep.control.off_index_residual;
  return rep;
}

}  // namespace spheat
