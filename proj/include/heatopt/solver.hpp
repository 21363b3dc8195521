#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heatopt/domain.hpp"
#include "heatopt/energy.hpp"
#include "heatopt/field.hpp"

namespace heatopt {

enum class StepRule {
  kCoordinate,    // projected nonlinear SOR with exact per-node minimization
  kFixed,         // projected gradient, constant step
  kBacktracking,  // projected gradient, Armijo backtracking
};

struct SolveParams {
  StepRule step_rule = StepRule::kCoordinate;
  int max_iters = 20000;         // sweeps (or gradient steps) per stage
  double tol = 1e-13;            // relative objective decrease, final stage
  double update_tol = 1e-11;     // max nodal change relative to sup phi, final stage
  double stage_tol = 1e-9;       // same two tolerances for intermediate stages
  double stage_update_tol = 1e-7;
  std::vector<double> tau_schedule;  // empty: sup phi * 2^-k, k = 3..12
  bool exact_stage = true;       // finish with the sharp positivity indicator
  double kink_smoothing = 0.5;   // 0 disables the blended penalty in tau stages
  double omega = 0.0;            // SOR factor; 0 picks one from the grid
  double step = 0.0;             // gradient step; 0 means h^2/16 (fixed) or h^2/4 (initial trial)
  double armijo = 1e-4;
  int refine_max_nodes = 200;    // support search when |Omega_R| has at most this many nodes
  std::uint64_t seed = 0;
  double init_noise = 0.0;       // relative amplitude of seeded noise on the initial support
  bool record_history = true;

  void validate() const;
};

struct HistoryEntry {
  int iteration = 0;
  int stage = 0;
  double tau = 0.0;        // 0 in the sharp stage
  double dirichlet = 0.0;
  double objective = 0.0;  // functional minimized in this stage
  double penalized = 0.0;  // dirichlet + f_eps(positivity volume)
  double volume = 0.0;     // positivity volume
};

struct SolveResult {
  Field u;
  double energy = 0.0;             // Dirichlet energy
  double penalized_energy = 0.0;
  double exterior_volume = 0.0;
  int iterations = 0;
  int stages = 0;
  bool converged = false;
  std::vector<HistoryEntry> history;
  // Largest relative excursion outside [0, sup phi] over all recorded iterates.
  double max_bound_violation = 0.0;
  // Largest within-stage objective increase between consecutive iterates,
  // relative to max(1, |objective|). Zero for a monotone run.
  double max_objective_increase = 0.0;
  double m_probe = 0.0;            // penalized energy of the initializer
  int support_moves = 0;           // accepted moves of the support search
};

// Clamp into [phi, psi] on D, [0, sup phi] on Omega_R, zero outside B_R.
Field project_admissible(const Field& u, const DomainMasks& masks, const ObstaclePair& obstacles);

// Comparison function used to start the solver: obstacle solution in D, then
// a harmonic fill of the floor(mu / h^d) Omega_R nodes closest to D. Node
// distance to D is measured to the nearest D node, so no analytic shape is needed.
Field initial_field(const DomainMasks& masks, const ObstaclePair& obstacles, double mu);

SolveResult solve_penalized(const DomainMasks& masks, const ObstaclePair& obstacles,
                            const PenaltyParams& p,
                            const SolveParams& sp, const std::optional<Field>& warm_start = {});

struct ObstacleSolveOptions {
  double omega = 0.0;    // 0 picks one from the region extent
  double tol = 1e-13;    // max nodal change relative to the data scale
  int max_sweeps = 500000;
};

struct ObstacleSolveResult {
  Field u;
  double residual = 0.0;  // max |Delta_h u| over non-coincidence region nodes
  int sweeps = 0;
  bool converged = false;
};

// Projected SOR for min E(u) subject to lower <= u <= upper on `region`,
// u = boundary off the region. Region entries of `boundary` are the initial guess.
ObstacleSolveResult solve_double_obstacle(const Mask& region, const Field& lower,
                                          const Field& upper, const Field& boundary,
                                          const ObstacleSolveOptions& opt = {});

// Discrete harmonic function on `region` with Dirichlet data `boundary` elsewhere.
// Every connected component of the region must touch a non-region node.
ObstacleSolveResult harmonic_extension(const Mask& region, const Field& boundary,
                                       const ObstacleSolveOptions& opt = {});

struct ExtendedObstacles {
  Mask region;   // D nodes plus the collar
  Mask collar;   // Omega_R nodes at distance < delta from D
  Field phi;
  Field psi;
};

// Harmonic continuation of the obstacles across a collar of width delta, with
// data phi (resp. psi) on D and u_current beyond the collar. Throws when
// u_current <= pos_threshold somewhere on the collar.
ExtendedObstacles extend_obstacles(const DomainSpec& spec, const DomainMasks& masks,
                                   const ObstaclePair& obstacles, const Field& u_current,
                                   double delta, double pos_threshold);

}  // namespace heatopt
