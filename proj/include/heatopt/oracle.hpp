#pragma once

#include <vector>

#include "heatopt/domain.hpp"
#include "heatopt/energy.hpp"
#include "heatopt/field.hpp"

namespace heatopt {

// Minimizer for a disk D of radius a with constant lower obstacle c in the
// plane: u = c on [0, a], c ln(b/r) / ln(b/a) on [a, b], 0 beyond, where
// pi (b^2 - a^2) = mu. Among radial competitors with exterior volume mu the
// energy 2 pi c^2 / ln(b/a) is decreasing in b, so the support is as large as
// the volume allows.
struct RadialSolution {
  double a = 1.0;
  double b = 2.0;
  double c = 1.0;
  double mu = 0.0;

  double u(double r) const;
  double slope(double r) const;  // |u'(r)|
  double energy() const;
  double volume() const;
  double lambda() const;         // |u'(b^-)|
  // Largest gradient, attained at r = a.
  double max_slope() const { return slope(a); }
};

RadialSolution radial_solution(double a, double c, double mu);

Field sample_radial(const RadialSolution& s, const Grid& g);

// Linear profile c (1 - x/d)^+ across a flat face.
struct SlabSolution {
  double c = 1.0;
  double d = 1.0;

  double u(double x) const;
  double lambda() const { return c / d; }
  double energy_per_length() const { return c * c / d; }
};

SlabSolution slab_solution(double c, double d);

struct BruteForceResult {
  double energy = 0.0;         // global minimum of the sharp penalized functional
  Field u;
  Mask positive;               // positivity set of the minimizer (Omega_R nodes)
  double volume = 0.0;
  long patterns = 0;
  int ties = 0;                // other positivity sets attaining the minimum
  bool order_invariant = true; // forward and reverse enumeration agree
};

// Exhaustive minimization on a 1D grid: every subset S of the Omega_R nodes is
// tried, u = 0 on Omega_R \ S, u = phi_value on D, and u on S minimizes the
// Dirichlet energy (one tridiagonal solve per run of S).
BruteForceResult brute_force_1d(const DomainMasks& masks, double phi_value,
                                const PenaltyParams& p);

// Convenience layout with h = 1: one D node, n_omega Omega_R nodes to its
// right (or split evenly on both sides), mu = mu_cells.
BruteForceResult brute_force_1d(int n_omega, double phi_value, double mu_cells,
                                const PenaltyParams& p, bool two_sided = false);

// Double-obstacle problem on a 1D chain of interior nodes with Dirichlet end
// values, solved by enumerating every assignment of nodes to {free, lower,
// upper} and keeping the feasible one of least energy.
struct ChainObstacleResult {
  std::vector<double> u;
  double energy = 0.0;
  long feasible = 0;
};

ChainObstacleResult enumerate_obstacle_1d(const std::vector<double>& lower,
                                          const std::vector<double>& upper, double left,
                                          double right, double h);

}  // namespace heatopt
