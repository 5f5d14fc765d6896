#include "spheat/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spheat {

namespace {

void require_increasing(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) {
      std::ostringstream os;
      os << what << " must be strictly increasing (entry " << i << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

// v * 2^40 integral and |v| < 2^12: exact in double with room for sums.
bool dyadic(double v) {
  if (!std::isfinite(v) || std::abs(v) >= 4096.0) return false;
  const double scaled = std::ldexp(v, 40);
  return scaled == std::trunc(scaled);
}

}  // namespace

SpaceTimeGrid::SpaceTimeGrid(double a, double b, std::vector<double> interior_nodes,
                             std::vector<double> time_points)
    : a_(a), b_(b), x_(std::move(interior_nodes)), t_(std::move(time_points)) {
  if (!(b_ > a_)) throw std::invalid_argument("spatial bounds require a < b");
  if (x_.empty()) throw std::invalid_argument("grid needs at least one interior node");
  if (t_.size() < 2) throw std::invalid_argument("grid needs at least one time step");
  require_increasing(x_, "interior nodes");
  require_increasing(t_, "time points");
  if (!(x_.front() > a_) || !(x_.back() < b_)) {
    throw std::invalid_argument("interior nodes must lie strictly inside (a,b)");
  }
  if (t_.front() != 0.0) throw std::invalid_argument("time points must start at 0");
}

std::vector<double> SpaceTimeGrid::element_lengths() const {
  std::vector<double> len(x_.size() + 1);
  double prev = a_;
  for (std::size_t j = 0; j < x_.size(); ++j) {
    len[j] = x_[j] - prev;
    prev = x_[j];
  }
  len.back() = b_ - prev;
  return len;
}

double SpaceTimeGrid::mesh_size() const {
  const auto len = element_lengths();
  return *std::max_element(len.begin(), len.end());
}

double SpaceTimeGrid::max_step() const {
  double tau = 0;
  for (std::size_t k = 1; k < t_.size(); ++k) tau = std::max(tau, step(k));
  return tau;
}

std::size_t SpaceTimeGrid::interval_of(double t) const {
  if (!(t > 0.0) || !(t < final_time())) {
    throw std::out_of_range("time outside the open interval (0,T)");
  }
  // First k with t <= t_k; I_k = (t_{k-1}, t_k].
  const auto it = std::lower_bound(t_.begin() + 1, t_.end(), t);
  return static_cast<std::size_t>(it - t_.begin());
}

bool SpaceTimeGrid::is_dyadic() const {
  if (!dyadic(a_) || !dyadic(b_)) return false;
  return std::all_of(x_.begin(), x_.end(), dyadic) && std::all_of(t_.begin(), t_.end(), dyadic);
}

std::vector<double> equidistant_times(double T, std::size_t num_steps) {
  if (num_steps == 0) throw std::invalid_argument("need at least one time step");
  if (!(T > 0)) throw std::invalid_argument("final time must be positive");
  std::vector<double> t(num_steps + 1);
  for (std::size_t k = 0; k <= num_steps; ++k) {
    t[k] = T * static_cast<double>(k) / static_cast<double>(num_steps);
  }
  t.back() = T;
  return t;
}

SpaceTimeGrid build_grid(double a, double b, double T, std::size_t num_nodes,
                         std::vector<double> time_points) {
  if (num_nodes == 0) throw std::invalid_argument("N_h must be at least 1");
  if (time_points.empty() || time_points.back() != T) {
    throw std::invalid_argument("time points must end at T");
  }
  std::vector<double> x(num_nodes);
  const double n1 = static_cast<double>(num_nodes + 1);
  for (std::size_t j = 0; j < num_nodes; ++j) {
    x[j] = a + (b - a) * static_cast<double>(j + 1) / n1;
  }
  return SpaceTimeGrid(a, b, std::move(x), std::move(time_points));
}

Coupling parse_coupling(const std::string& s) {
  if (s == "tau=h/2") return Coupling::kTauHalfH;
  if (s == "tau=h^2/2") return Coupling::kTauHalfHSquared;
  if (s == "explicit") return Coupling::kExplicit;
  throw std::invalid_argument("unknown coupling '" + s + "'");
}

std::string to_string(Coupling c) {
  switch (c) {
    case Coupling::kTauHalfH:
      return "tau=h/2";
    case Coupling::kTauHalfHSquared:
      return "tau=h^2/2";
    case Coupling::kExplicit:
      return "explicit";
  }
  return "explicit";
}

SpaceTimeGrid build_coupled_grid(double a, double b, double T, std::size_t num_nodes,
                                 Coupling coupling) {
  if (coupling == Coupling::kExplicit) {
    throw std::invalid_argument("explicit coupling needs an explicit time grid");
  }
  const double h = (b - a) / static_cast<double>(num_nodes + 1);
  const double tau = coupling == Coupling::kTauHalfH ? h / 2 : h * h / 2;
  const double steps = T / tau;
  const double rounded = std::round(steps);
  if (rounded < 1 || std::abs(steps - rounded) > 1e-9 * rounded) {
    throw std::invalid_argument("T is not an integer multiple of the coupled time step");
  }
  return build_grid(a, b, T, num_nodes,
                    equidistant_times(T, static_cast<std::size_t>(rounded)));
}

void ControlRegion::validate(const SpaceTimeGrid& grid) const {
  if (!(grid.a() < x_lo && x_lo < x_hi && x_hi < grid.b())) {
    throw std::invalid_argument("control region needs a < x_lo < x_hi < b");
  }
  if (!(0.0 < t_lo && t_lo < t_hi && t_hi < grid.final_time())) {
    throw std::invalid_argument("control region needs 0 < t_lo < t_hi < T");
  }
}

IndexSets control_index_sets(const SpaceTimeGrid& grid, const ControlRegion& region) {
  region.validate(grid);
  IndexSets sets;
  const bool exact = grid.is_dyadic() && dyadic(region.x_lo) && dyadic(region.x_hi) &&
                     dyadic(region.t_lo) && dyadic(region.t_hi);
  sets.space_tol = exact ? 0.0 : 1e-12 * (grid.b() - grid.a());
  sets.time_tol = exact ? 0.0 : 1e-12 * grid.final_time();

  for (std::size_t j = 0; j < grid.num_nodes(); ++j) {
    const double x = grid.node(j);
    if (x >= region.x_lo - sets.space_tol && x <= region.x_hi + sets.space_tol) {
      sets.nodes.push_back(j);
    }
  }
  for (std::size_t k = 0; k <= grid.num_steps(); ++k) {
    const double t = grid.time(k);
    if (t >= region.t_lo - sets.time_tol && t <= region.t_hi + sets.time_tol) {
      for (std::size_t j : sets.nodes) sets.points.push_back({j, k});
    }
  }
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    if (grid.time(k - 1) >= region.t_lo - sets.time_tol &&
        grid.time(k) <= region.t_hi + sets.time_tol) {
      sets.intervals.push_back(k);
    }
  }
  if (sets.nodes.empty() || sets.points.empty()) {
    throw GridTooCoarseError("grid too coarse for control region: no grid node in the closed region");
  }
  return sets;
}

}  // namespace spheat
