#include "spheat/fem.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace spheat {

void SymTridiag::apply(const double* in, double* out) const {
  const Eigen::Index n = size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = diag[i] * in[i];
    if (i > 0) v += off[i - 1] * in[i - 1];
    if (i + 1 < n) v += off[i] * in[i + 1];
    out[i] = v;
  }
}

void SymTridiag::apply_add(double s, const double* in, double* out) const {
  const Eigen::Index n = size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = diag[i] * in[i];
    if (i > 0) v += off[i - 1] * in[i - 1];
    if (i + 1 < n) v += off[i] * in[i + 1];
    out[i] += s * v;
  }
}

SparseMatrix SymTridiag::to_sparse() const {
  const Eigen::Index n = size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    trip.emplace_back(i, i, diag[i]);
    if (i + 1 < n && off[i] != 0.0) {
      trip.emplace_back(i, i + 1, off[i]);
      trip.emplace_back(i + 1, i, off[i]);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

SymTridiag combine(double alpha, const SymTridiag& A, double beta, const SymTridiag& B) {
  return {alpha * A.diag + beta * B.diag, alpha * A.off + beta * B.off};
}

TridiagCholesky::TridiagCholesky(const SymTridiag& T) : d_(T.size()), l_(T.off.size()) {
  const Eigen::Index n = T.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    double piv = T.diag[i];
    if (i > 0) piv -= l_[i - 1] * l_[i - 1];
    if (!(piv > 0.0)) throw std::runtime_error("tridiagonal block is not positive definite");
    d_[i] = std::sqrt(piv);
    if (i + 1 < n) l_[i] = T.off[i] / d_[i];
  }
}

void TridiagCholesky::solve_in_place(double* x) const {
  const Eigen::Index n = d_.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) x[i] -= l_[i - 1] * x[i - 1];
    x[i] /= d_[i];
  }
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (i + 1 < n) x[i] -= l_[i] * x[i + 1];
    x[i] /= d_[i];
  }
}

SymTridiag mass_tridiag(const SpaceTimeGrid& grid) {
  const auto len = grid.element_lengths();
  const std::size_t n = grid.num_nodes();
  SymTridiag m{Vector(n), Vector(n > 0 ? n - 1 : 0)};
  for (std::size_t j = 0; j < n; ++j) {
    m.diag[j] = (len[j] + len[j + 1]) / 3.0;
    if (j + 1 < n) m.off[j] = len[j + 1] / 6.0;
  }
  return m;
}

SymTridiag stiffness_tridiag(const SpaceTimeGrid& grid) {
  const auto len = grid.element_lengths();
  const std::size_t n = grid.num_nodes();
  SymTridiag a{Vector(n), Vector(n > 0 ? n - 1 : 0)};
  for (std::size_t j = 0; j < n; ++j) {
    a.diag[j] = 1.0 / len[j] + 1.0 / len[j + 1];
    if (j + 1 < n) a.off[j] = -1.0 / len[j + 1];
  }
  return a;
}

SparseMatrix assemble_mass(const SpaceTimeGrid& grid) { return mass_tridiag(grid).to_sparse(); }

SparseMatrix assemble_stiffness(const SpaceTimeGrid& grid) {
  return stiffness_tridiag(grid).to_sparse();
}

Vector lumped_weights(const SpaceTimeGrid& grid) {
  const auto len = grid.element_lengths();
  Vector w(grid.num_nodes());
  for (std::size_t j = 0; j < grid.num_nodes(); ++j) w[j] = 0.5 * (len[j] + len[j + 1]);
  return w;
}

BlockBidiagonal::BlockBidiagonal(SymTridiag mass, SymTridiag stiffness,
                                 std::vector<double> diag_coef, std::vector<double> sub_mass,
                                 std::vector<double> sub_stiff)
    : mass_(std::move(mass)),
      stiffness_(std::move(stiffness)),
      diag_coef_(std::move(diag_coef)),
      sub_mass_(std::move(sub_mass)),
      sub_stiff_(std::move(sub_stiff)) {
  if (diag_coef_.empty()) throw std::invalid_argument("block operator needs at least one block");
  if (sub_mass_.size() != diag_coef_.size() || sub_stiff_.size() != diag_coef_.size()) {
    throw std::invalid_argument("block coefficient lists differ in length");
  }
  std::map<double, std::size_t> seen;
  factor_index_.resize(diag_coef_.size());
  for (std::size_t r = 0; r < diag_coef_.size(); ++r) {
    auto [it, fresh] = seen.try_emplace(diag_coef_[r], factors_.size());
    if (fresh) {
      factors_.push_back(
          std::make_shared<const TridiagCholesky>(combine(1.0, mass_, diag_coef_[r], stiffness_)));
    }
    factor_index_[r] = it->second;
  }
}

const TridiagCholesky& BlockBidiagonal::factor(std::size_t r) const {
  return *factors_[factor_index_[r]];
}

namespace {

void check_size(const Vector& v, std::size_t n) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw std::invalid_argument("vector length does not match the space-time operator");
  }
}

}  // namespace

Vector BlockBidiagonal::apply(const Vector& y) const {
  check_size(y, size());
  const std::size_t n = block_size();
  Vector out(y.size());
  for (std::size_t r = 0; r < num_blocks(); ++r) {
    double* o = out.data() + r * n;
    const double* yr = y.data() + r * n;
    mass_.apply(yr, o);
    stiffness_.apply_add(diag_coef_[r], yr, o);
    if (r > 0) {
      mass_.apply_add(sub_mass_[r], yr - n, o);
      stiffness_.apply_add(sub_stiff_[r], yr - n, o);
    }
  }
  return out;
}

Vector BlockBidiagonal::apply_adjoint(const Vector& w) const {
  check_size(w, size());
  const std::size_t n = block_size();
  Vector out(w.size());
  for (std::size_t c = 0; c < num_blocks(); ++c) {
    double* o = out.data() + c * n;
    const double* wc = w.data() + c * n;
    mass_.apply(wc, o);
    stiffness_.apply_add(diag_coef_[c], wc, o);
    if (c + 1 < num_blocks()) {
      mass_.apply_add(sub_mass_[c + 1], wc + n, o);
      stiffness_.apply_add(sub_stiff_[c + 1], wc + n, o);
    }
  }
  return out;
}

Vector BlockBidiagonal::solve(const Vector& b) const { return solve_from(b, 0); }

Vector BlockBidiagonal::solve_from(const Vector& b, std::size_t first_block) const {
  check_size(b, size());
  const std::size_t n = block_size();
  Vector x = Vector::Zero(b.size());
  for (std::size_t r = first_block; r < num_blocks(); ++r) {
    double* xr = x.data() + r * n;
    std::copy_n(b.data() + r * n, n, xr);
    if (r > first_block) {
      mass_.apply_add(-sub_mass_[r], xr - n, xr);
      stiffness_.apply_add(-sub_stiff_[r], xr - n, xr);
    }
    factor(r).solve_in_place(xr);
  }
  return x;
}

void BlockBidiagonal::forward_step(std::size_t r, const double* prev, double* x,
                                   std::size_t cols) const {
  const std::size_t n = block_size();
  const TridiagCholesky& f = factor(r);
  for (std::size_t c = 0; c < cols; ++c) {
    double* xc = x + c * n;
    if (r > 0 && prev != nullptr) {
      mass_.apply_add(-sub_mass_[r], prev + c * n, xc);
      stiffness_.apply_add(-sub_stiff_[r], prev + c * n, xc);
    }
    f.solve_in_place(xc);
  }
}

Vector BlockBidiagonal::solve_adjoint(const Vector& b) const { return solve_adjoint_until(b, 0); }

Vector BlockBidiagonal::solve_adjoint_until(const Vector& b, std::size_t last_block) const {
  check_size(b, size());
  const std::size_t n = block_size();
  Vector x = Vector::Zero(b.size());
  for (std::size_t c = num_blocks(); c-- > last_block;) {
    double* xc = x.data() + c * n;
    std::copy_n(b.data() + c * n, n, xc);
    if (c + 1 < num_blocks()) {
      mass_.apply_add(-sub_mass_[c + 1], xc + n, xc);
      stiffness_.apply_add(-sub_stiff_[c + 1], xc + n, xc);
    }
    factor(c).solve_in_place(xc);
  }
  return x;
}

SymTridiag BlockBidiagonal::diagonal_block(std::size_t r) const {
  return combine(1.0, mass_, diag_coef_.at(r), stiffness_);
}

SymTridiag BlockBidiagonal::sub_block(std::size_t r) const {
  if (r == 0 || r >= num_blocks()) throw std::out_of_range("no sub-diagonal block in row");
  return combine(sub_mass_[r], mass_, sub_stiff_[r], stiffness_);
}

namespace {

void append_block(std::vector<Eigen::Triplet<double>>& trip, const SymTridiag& blk,
                  Eigen::Index row0, Eigen::Index col0) {
  const Eigen::Index n = blk.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (blk.diag[i] != 0.0) trip.emplace_back(row0 + i, col0 + i, blk.diag[i]);
    if (i + 1 < n && blk.off[i] != 0.0) {
      trip.emplace_back(row0 + i, col0 + i + 1, blk.off[i]);
      trip.emplace_back(row0 + i + 1, col0 + i, blk.off[i]);
    }
  }
}

}  // namespace

SparseMatrix BlockBidiagonal::to_sparse() const {
  const auto n = static_cast<Eigen::Index>(block_size());
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < num_blocks(); ++r) {
    const auto row0 = static_cast<Eigen::Index>(r) * n;
    append_block(trip, diagonal_block(r), row0, row0);
    if (r > 0) append_block(trip, sub_block(r), row0, row0 - n);
  }
  SparseMatrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

std::string to_string(Scheme s) { return s == Scheme::kVariational ? "vd" : "dg"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "vd" || s == "VD") return Scheme::kVariational;
  if (s == "dg" || s == "DG") return Scheme::kDiscontinuousGalerkin;
  throw std::invalid_argument("unknown scheme '" + s + "' (expected vd or dg)");
}

Exponents Exponents::from_q(double q) {
  // d = 1: min(2, 1 + 2/d) = 2.
  if (!(q > 1.0 && q <= 2.0)) throw std::invalid_argument("q must lie in (1, 2]");
  return {q, q / (q - 1.0)};
}

SparseMatrix DiscreteSystem::state_matrix() const {
  if (scheme == Scheme::kVariational) return op.to_sparse();
  // DG: prepend the initial row [M, 0, ...] and restore the coupling -M of the
  // first interval to y_0.
  const auto n = static_cast<Eigen::Index>(block_size());
  const SparseMatrix red = op.to_sparse();
  std::vector<Eigen::Triplet<double>> trip;
  append_block(trip, mass, 0, 0);
  append_block(trip, combine(-1.0, mass, 0.0, stiffness), n, 0);
  for (int k = 0; k < red.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(red, k); it; ++it) {
      trip.emplace_back(it.row() + n, it.col() + n, it.value());
    }
  }
  const Eigen::Index total = red.rows() + n;
  SparseMatrix m(total, total);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Vector DiscreteSystem::restrict_sigma(const Vector& w) const {
  Vector out(static_cast<Eigen::Index>(sigma_sites.size()));
  for (std::size_t i = 0; i < sigma_sites.size(); ++i) out[i] = w[sigma_sites[i].position];
  return out;
}

Vector DiscreteSystem::restrict_initial(const Vector& w) const {
  Vector out(static_cast<Eigen::Index>(initial_sites.size()));
  for (std::size_t i = 0; i < initial_sites.size(); ++i) out[i] = w[initial_sites[i].position];
  return out;
}

void DiscreteSystem::scatter_sigma_add(const Vector& values, Vector& out) const {
  for (std::size_t i = 0; i < sigma_sites.size(); ++i) out[sigma_sites[i].position] += values[i];
}

void DiscreteSystem::scatter_initial_add(const Vector& values, Vector& out) const {
  for (std::size_t i = 0; i < initial_sites.size(); ++i) {
    out[initial_sites[i].position] += values[i];
  }
}

double DiscreteSystem::adjoint_time(std::size_t r) const {
  return scheme == Scheme::kVariational ? grid.time(r) : grid.time(r + 1);
}

namespace {

Vector spacetime_weights(const SpaceTimeGrid& grid, const Vector& omega) {
  const std::size_t n = grid.num_nodes();
  Vector wt(static_cast<Eigen::Index>(grid.num_spacetime()));
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    wt.segment(static_cast<Eigen::Index>((k - 1) * n), static_cast<Eigen::Index>(n)) =
        omega * grid.step(k);
  }
  return wt;
}

}  // namespace

DiscreteSystem assemble_vd_system(const SpaceTimeGrid& grid, const ControlRegion& region,
                                  Exponents exponents) {
  IndexSets sets = control_index_sets(grid, region);
  const std::size_t nt = grid.num_steps();
  const std::size_t n = grid.num_nodes();
  std::vector<double> diag(nt), sub_m(nt, -1.0), sub_a(nt, 0.0);
  for (std::size_t r = 0; r < nt; ++r) {
    diag[r] = 0.5 * grid.step(r + 1);
    if (r > 0) sub_a[r] = 0.5 * grid.step(r);
  }
  sub_m[0] = 0.0;
  SymTridiag m = mass_tridiag(grid);
  SymTridiag a = stiffness_tridiag(grid);
  Vector omega = lumped_weights(grid);
  Vector wt = spacetime_weights(grid, omega);
  BlockBidiagonal op(m, a, std::move(diag), std::move(sub_m), std::move(sub_a));

  std::vector<ConstraintSite> sigma;
  for (const auto& p : sets.points) {
    // t_lo > 0 and t_hi < T, so k lies in 1..Ntau-1.
    sigma.push_back({p.k * n + p.j, p.j, p.k});
  }
  std::vector<ConstraintSite> init;
  for (std::size_t j : sets.nodes) init.push_back({j, j, 0});

  return DiscreteSystem{Scheme::kVariational, grid,        region,           std::move(sets),
                        exponents,            std::move(m), std::move(a),    std::move(omega),
                        std::move(wt),        std::move(op), std::move(sigma), std::move(init)};
}

DiscreteSystem assemble_dg_system(const SpaceTimeGrid& grid, const ControlRegion& region,
                                  Exponents exponents) {
  IndexSets sets = control_index_sets(grid, region);
  if (sets.intervals.empty()) {
    throw GridTooCoarseError("grid too coarse for control region: no time interval inside I_c");
  }
  const std::size_t nt = grid.num_steps();
  const std::size_t n = grid.num_nodes();
  std::vector<double> diag(nt), sub_m(nt, -1.0), sub_a(nt, 0.0);
  for (std::size_t r = 0; r < nt; ++r) diag[r] = grid.step(r + 1);
  sub_m[0] = 0.0;
  SymTridiag m = mass_tridiag(grid);
  SymTridiag a = stiffness_tridiag(grid);
  Vector omega = lumped_weights(grid);
  Vector wt = spacetime_weights(grid, omega);
  BlockBidiagonal op(m, a, std::move(diag), std::move(sub_m), std::move(sub_a));

  std::vector<ConstraintSite> sigma;
  for (std::size_t k : sets.intervals) {
    for (std::size_t j : sets.nodes) sigma.push_back({(k - 1) * n + j, j, k});
  }
  // The initial value enters the first retained row; its test coefficient is
  // the one of interval I_1.
  std::vector<ConstraintSite> init;
  for (std::size_t j : sets.nodes) init.push_back({j, j, 0});

  return DiscreteSystem{Scheme::kDiscontinuousGalerkin, grid,  region, std::move(sets),
                        exponents,        std::move(m), std::move(a),   std::move(omega),
                        std::move(wt),    std::move(op), std::move(sigma), std::move(init)};
}

DiscreteSystem assemble_system(Scheme scheme, const SpaceTimeGrid& grid,
                               const ControlRegion& region, Exponents exponents) {
  return scheme == Scheme::kVariational ? assemble_vd_system(grid, region, exponents)
                                        : assemble_dg_system(grid, region, exponents);
}

void write_matrix_market(std::ostream& os, const SparseMatrix& m) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  os.precision(17);
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
}

}  // namespace spheat
