#include "spheat/projection.hpp"

#include <cmath>

namespace spheat {

namespace {

double hat(double left, double centre, double right, double s) {
  if (s <= left || s >= right) return s == centre ? 1.0 : 0.0;
  if (s <= centre) return (s - left) / (centre - left);
  return (right - s) / (right - centre);
}

}  // namespace

double hat_space(const SpaceTimeGrid& grid, std::size_t j, double x) {
  const double left = j == 0 ? grid.a() : grid.node(j - 1);
  const double right = j + 1 == grid.num_nodes() ? grid.b() : grid.node(j + 1);
  return hat(left, grid.node(j), right, x);
}

double hat_time(const SpaceTimeGrid& grid, std::size_t k, double t) {
  const double c = grid.time(k);
  if (k == 0) {
    if (t < 0 || t >= grid.time(1)) return 0.0;
    return (grid.time(1) - t) / grid.step(1);
  }
  if (k == grid.num_steps()) {
    if (t <= grid.time(k - 1) || t > c) return 0.0;
    return (t - grid.time(k - 1)) / grid.step(k);
  }
  return hat(grid.time(k - 1), c, grid.time(k + 1), t);
}

Vector upsilon_h(const SpaceTimeGrid& grid, const IndexSets& sets,
                 const std::vector<SpaceAtom>& atoms) {
  Vector c = Vector::Zero(static_cast<Eigen::Index>(sets.nodes.size()));
  for (std::size_t i = 0; i < sets.nodes.size(); ++i) {
    for (const auto& a : atoms) c[i] += a.weight * hat_space(grid, sets.nodes[i], a.x);
  }
  return c;
}

Vector upsilon_sigma(const SpaceTimeGrid& grid, const IndexSets& sets,
                     const std::vector<SpaceTimeAtom>& atoms) {
  Vector c = Vector::Zero(static_cast<Eigen::Index>(sets.points.size()));
  for (std::size_t i = 0; i < sets.points.size(); ++i) {
    const auto [j, k] = sets.points[i];
    for (const auto& a : atoms) {
      c[i] += a.weight * hat_space(grid, j, a.x) * hat_time(grid, k, a.t);
    }
  }
  return c;
}

Vector pi_h(const SpaceTimeGrid& grid, const IndexSets& sets,
            const std::function<double(double)>& f) {
  Vector v(static_cast<Eigen::Index>(sets.nodes.size()));
  for (std::size_t i = 0; i < sets.nodes.size(); ++i) v[i] = f(grid.node(sets.nodes[i]));
  return v;
}

Vector pi_sigma(const SpaceTimeGrid& grid, const IndexSets& sets,
                const std::function<double(double, double)>& f) {
  Vector v(static_cast<Eigen::Index>(sets.points.size()));
  for (std::size_t i = 0; i < sets.points.size(); ++i) {
    v[i] = f(grid.node(sets.points[i].j), grid.time(sets.points[i].k));
  }
  return v;
}

double eval_space(const SpaceTimeGrid& grid, const IndexSets& sets, const Vector& coef,
                  double x) {
  double s = 0;
  for (std::size_t i = 0; i < sets.nodes.size(); ++i) {
    s += coef[i] * hat_space(grid, sets.nodes[i], x);
  }
  return s;
}

double eval_spacetime(const SpaceTimeGrid& grid, const IndexSets& sets, const Vector& coef,
                      double x, double t) {
  double s = 0;
  for (std::size_t i = 0; i < sets.points.size(); ++i) {
    const auto [j, k] = sets.points[i];
    s += coef[i] * hat_space(grid, j, x) * hat_time(grid, k, t);
  }
  return s;
}

double pair(const std::vector<SpaceAtom>& atoms, const std::function<double(double)>& f) {
  double s = 0;
  for (const auto& a : atoms) s += a.weight * f(a.x);
  return s;
}

double pair(const std::vector<SpaceTimeAtom>& atoms,
            const std::function<double(double, double)>& f) {
  double s = 0;
  for (const auto& a : atoms) s += a.weight * f(a.x, a.t);
  return s;
}

double total_variation(const std::vector<SpaceAtom>& atoms) {
  double s = 0;
  for (const auto& a : atoms) s += std::abs(a.weight);
  return s;
}

double total_variation(const std::vector<SpaceTimeAtom>& atoms) {
  double s = 0;
  for (const auto& a : atoms) s += std::abs(a.weight);
  return s;
}

}  // namespace spheat
