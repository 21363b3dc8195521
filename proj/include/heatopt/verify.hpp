#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "heatopt/domain.hpp"
#include "heatopt/energy.hpp"
#include "heatopt/field.hpp"
#include "heatopt/solver.hpp"

namespace heatopt {

struct CheckRecord {
  std::string name;
  std::string anchor;   // the property being tested, in words
  double value = 0.0;   // the measured quantity compared against threshold
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
  std::vector<std::pair<std::string, double>> extra;

  // Throws when `key` is absent.
  double get(const std::string& key) const;
};

struct PropertyReport {
  std::vector<CheckRecord> checks;
  bool pass() const;
  std::string table() const;
};

// -1e-8 sup phi <= u <= (1 + 1e-8) sup phi at every node.
CheckRecord check_max_principle(const Field& u, double sup_phi);

// max |Delta_h u| over positive Omega_R nodes whose radius-2 stencil diamond is
// positive, and min Delta_h u over interior Omega_R nodes, both against
// rel_tol * sup phi.
CheckRecord check_harmonicity(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                              double sup_phi, double rel_tol = 1e-4);

// volume <= mu + m_probe * eps.
CheckRecord check_volume_bound(double volume, const PenaltyParams& p, double m_probe);

struct SweepRow {
  double eps = 0.0;
  double volume = 0.0;
  double energy = 0.0;
  double penalized_energy = 0.0;
  double lambda_mean = 0.0;
  double lambda_cv = 0.0;
  double support_radius = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<double> eps0;   // largest eps whose volume is within tolerance
  bool holds_below_eps0 = false;
  // max / min of lambda_mean over rows that have a free boundary; the sweep
  // counts lambda as bounded when this stays at or below 3.
  double lambda_ratio = 0.0;
  bool lambda_bounded = false;
  double volume_tol = 0.01;     // relative to mu
  bool aborted = false;         // a solve did not converge; rows so far are kept
  std::string message;
};

// Throws unless eps_list is non-empty, strictly decreasing and inside (0, 1).
void validate_eps_list(const std::vector<double>& eps_list);

// One solve at p.eps, summarized as a sweep row. The field goes to *u_out when given.
SweepRow sweep_point(const DomainMasks& masks, const ObstaclePair& obstacles,
                     const PenaltyParams& p, const SolveParams& sp,
                     const std::optional<Field>& warm_start = {}, Field* u_out = nullptr);

// Fills eps0, holds_below_eps0 and the lambda fields from the rows (ordered by decreasing eps).
void summarize_sweep(SweepResult& sweep, double mu);

// One solve per eps (strictly decreasing, in (0, 1)), each warm-started from the previous.
SweepResult epsilon_sweep(const DomainMasks& masks, const ObstaclePair& obstacles,
                          const std::vector<double>& eps_list, const PenaltyParams& p,
                          const SolveParams& sp, double volume_tol = 0.01);

// Largest nodal gradient magnitude from forward differences.
double max_gradient(const Field& u);

// Resolutions must number at least three with (n_k - 1) dividing (n_{k+1} - 1).
// Passes when max_grads.back() / max_grads[size - 2] <= ratio_tol.
CheckRecord check_lipschitz_refinement(const std::vector<int>& resolutions,
                                       const std::vector<double>& max_grads,
                                       double ratio_tol = 1.1);

// A flat piece of the boundary of D: x0 on it, unit normal pointing out of D,
// and the distance from x0 to the nearest end of the piece.
struct FlatFace {
  Vec2 x0 = Vec2::Zero();
  Vec2 normal = Vec2(1.0, 0.0);
  double half_length = 0.0;
};

struct SideExponent {
  double alpha = 0.0;
  bool saturated = false;  // gradient constant on the window up to round-off
  int samples = 0;
  Vec2 reference_gradient = Vec2::Zero();
};

struct FlatExponentResult {
  SideExponent inner;  // D side
  SideExponent outer;
  CheckRecord record;
};

// Fitted one-sided Hoelder exponent of grad u at x0. On each side the limit
// gradient at x0 is extrapolated from a fit g0 + C d^beta along the normal
// ray, then alpha is the least-squares slope of log|grad u - g0| against
// log|x - x0| over nodes in the cone |tangential| <= normal distance, up to
// `window`. Only nodes whose central-difference stencil stays on the side
// (and, on the outer side, inside {u > pos_threshold}) are used.
FlatExponentResult check_flat_boundary_exponent(const Field& u, const FlatFace& face, double window,
                                                const PenaltyParams& p, double floor = 0.4);

// Discrete Euler-Lagrange identity on interior D nodes (all four neighbors in
// D). Nodes are split into coincidence classes with tolerance
// max(10 h^2 max|Delta obstacle|, 1e-9 sup phi); the residual is the
// h^d-weighted L1 sum of |Delta_h u - rhs| with rhs = Delta phi, Delta psi or 0.
CheckRecord check_euler_lagrange(const Field& u, const ObstaclePair& obstacles,
                                 const DomainMasks& masks, double solver_tol = 1e-8);

// The check battery applied to one converged solve.
PropertyReport verify_solution(const DomainMasks& masks, const ObstaclePair& obstacles,
                               const PenaltyParams& p, const SolveResult& result);

}  // namespace heatopt
