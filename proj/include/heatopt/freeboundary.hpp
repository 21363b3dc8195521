#pragma once

#include <limits>
#include <vector>

#include "heatopt/domain.hpp"
#include "heatopt/energy.hpp"
#include "heatopt/field.hpp"

namespace heatopt {

struct ContourChain {
  std::vector<Vec2> points;
  std::vector<Vec2> normals;  // unit, pointing out of {u > 0}
  bool closed = false;
};

struct FreeBoundary {
  enum class Status {
    kOk,
    kEmpty,           // u <= threshold on every Omega_R node
    kReachesOuter,    // the positive phase touches the nodes beyond B_R
  };
  Status status = Status::kOk;
  std::vector<ContourChain> chains;
  double length = 0.0;

  std::size_t sample_count() const;
};

const char* status_name(FreeBoundary::Status s);

// Marching squares at level pos_threshold over cells whose four corners lie in
// Omega_R. Saddle cells are split by the sign of the cell average. 2D only.
FreeBoundary extract_free_boundary(const Field& u, const DomainMasks& masks,
                                   const PenaltyParams& p);

struct LambdaEstimate {
  std::vector<Vec2> points;
  std::vector<double> values;
  double mean = 0.0;
  double cv = 0.0;   // standard deviation / mean
  int skipped = 0;   // samples whose positive phase is thinner than 6h
};

// One-sided normal derivative at each contour sample: quadratic extrapolation
// to the contour of u sampled at offsets 2h, 4h, 6h along the inward normal.
// Throws when the boundary has no samples.
LambdaEstimate estimate_lambda(const Field& u, const FreeBoundary& fb, const PenaltyParams& p);

// Largest distance to the origin over nodes with u > pos_threshold; 0 if none.
double support_radius(const Field& u, const PenaltyParams& p);

struct ClearanceResult {
  bool pass = true;
  double min_value = std::numeric_limits<double>::infinity();  // over the collar
  Index worst = -1;
  Index collar_nodes = 0;
};

// u > pos_threshold on every Omega_R node within delta of D.
ClearanceResult clearance_check(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                                double delta);

struct NondegeneracyViolation {
  Vec2 center;
  double radius = 0.0;
  double average = 0.0;  // circle average of u
  double inner_max = 0.0;
};

struct NondegeneracyResult {
  std::vector<NondegeneracyViolation> violations;
  // Largest C for which no sampled ball violates: min over balls with positive
  // values in B_{r/2} of average / (sqrt(eps) r). Infinite when no ball qualifies.
  double critical_constant = std::numeric_limits<double>::infinity();
  Index balls = 0;
};

// Balls B_r(x0) inside Omega_R, r in {4h, 8h, 16h}, centers on every `stride`-th node.
NondegeneracyResult nondegeneracy_scan(const Field& u, const DomainMasks& masks,
                                       const PenaltyParams& p, double c_probe, int stride = 2);

struct DensityResult {
  double min_ratio = 1.0;
  Vec2 worst_center = Vec2::Zero();
  double worst_radius = 0.0;
  Index balls = 0;
};

// Node-count fraction of B_r(center) where u > pos_threshold.
double density_ratio(const Field& u, const PenaltyParams& p, const Vec2& center, double radius);

// Minimum density ratio over balls centered at positive Omega_R nodes with
// B_r inside Omega_R, for r in {4h, 8h, 16h}.
DensityResult density_scan(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                           int stride = 2);

}  // namespace heatopt
