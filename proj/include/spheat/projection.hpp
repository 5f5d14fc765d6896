#pragma once

#include <functional>
#include <vector>

#include "spheat/fem.hpp"

namespace spheat {

struct SpaceAtom {
  double x;
  double weight;
};

struct SpaceTimeAtom {
  double x;
  double t;
  double weight;
};

/// Nodal hat function e_{x_j} (0-based interior node j), zero at a and b.
double hat_space(const SpaceTimeGrid& grid, std::size_t j, double x);
/// Temporal hat function e_{t_k}, k = 0..Ntau (half hats at both ends).
double hat_time(const SpaceTimeGrid& grid, std::size_t k, double t);

/// Upsilon_h u0: coefficients over I_h (order of IndexSets::nodes).
Vector upsilon_h(const SpaceTimeGrid& grid, const IndexSets& sets,
                 const std::vector<SpaceAtom>& atoms);
/// Upsilon_sigma u: coefficients over I_sigma (order of IndexSets::points).
Vector upsilon_sigma(const SpaceTimeGrid& grid, const IndexSets& sets,
                     const std::vector<SpaceTimeAtom>& atoms);

/// Pi_h f: nodal values f(x_j) over I_h.
Vector pi_h(const SpaceTimeGrid& grid, const IndexSets& sets,
            const std::function<double(double)>& f);
/// Pi_sigma f: values f(x_j, t_k) over I_sigma.
Vector pi_sigma(const SpaceTimeGrid& grid, const IndexSets& sets,
                const std::function<double(double, double)>& f);

/// Evaluates v_h = sum over I_h of coef_i e_{x_j}.
double eval_space(const SpaceTimeGrid& grid, const IndexSets& sets, const Vector& coef, double x);
/// Evaluates v_sigma = sum over I_sigma of coef_i e_{x_j} (x) e_{t_k}.
double eval_spacetime(const SpaceTimeGrid& grid, const IndexSets& sets, const Vector& coef,
                      double x, double t);

/// <u, f> for an atomic measure.
double pair(const std::vector<SpaceAtom>& atoms, const std::function<double(double)>& f);
double pair(const std::vector<SpaceTimeAtom>& atoms,
            const std::function<double(double, double)>& f);

double total_variation(const std::vector<SpaceAtom>& atoms);
double total_variation(const std::vector<SpaceTimeAtom>& atoms);

}  // namespace spheat
