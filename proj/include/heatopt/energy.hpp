#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "heatopt/domain.hpp"
#include "heatopt/error.hpp"
#include "heatopt/field.hpp"

namespace heatopt {

struct PenaltyParams {
  double eps = 0.05;
  double mu = 1.0;
  double tau = 1e-3;            // ramp width of the smoothed positivity indicator
  double pos_threshold = 1e-8;  // u > pos_threshold counts as positive

  void validate() const {
    if (!(eps > 0.0 && eps < 1.0)) throw Error("eps must lie in (0, 1)");
    if (!(mu > 0.0)) throw Error("mu must be positive");
    if (!(tau > 0.0)) throw Error("tau must be positive");
    if (!(pos_threshold >= 0.0)) throw Error("pos_threshold must be non-negative");
  }
};

// Piecewise-linear volume penalty: slope eps below mu, 1/eps above.
template <typename Scalar>
Scalar f_eps(Scalar t, const PenaltyParams& p) {
  const Scalar d = t - Scalar(p.mu);
  return d <= Scalar(0) ? Scalar(p.eps) * d : d / Scalar(p.eps);
}

// Left derivative at the kink.
inline double f_eps_slope(double t, const PenaltyParams& p) {
  return t <= p.mu ? p.eps : 1.0 / p.eps;
}

// f_eps with the kink at mu replaced by a quadratic on [mu - sigma, mu + sigma].
// sigma = 0 gives f_eps exactly. The blend is C^1 and convex.
inline double f_eps_blend(double t, const PenaltyParams& p, double sigma) {
  if (sigma <= 0.0 || t <= p.mu - sigma || t >= p.mu + sigma) return f_eps(t, p);
  const double s = t - p.mu + sigma;
  return p.eps * (t - p.mu) + (1.0 / p.eps - p.eps) * s * s / (4.0 * sigma);
}

inline double f_eps_blend_slope(double t, const PenaltyParams& p, double sigma) {
  if (sigma <= 0.0 || t <= p.mu - sigma || t >= p.mu + sigma) return f_eps_slope(t, p);
  return p.eps + (1.0 / p.eps - p.eps) * (t - p.mu + sigma) / (2.0 * sigma);
}

// Clipped linear ramp H_tau(s) = clamp(s / tau, 0, 1) and its derivative,
// taken as 0 at both kinks (one-sided at s = 0).
template <typename Scalar>
Scalar ramp(Scalar s, double tau) {
  return std::clamp(s / Scalar(tau), Scalar(0), Scalar(1));
}

template <typename Scalar>
Scalar ramp_slope(Scalar s, double tau) {
  return (s > Scalar(0) && s < Scalar(tau)) ? Scalar(1.0 / tau) : Scalar(0);
}

// Five-point (three-point in 1D) Laplacian; off-grid neighbors are absent,
// which makes -2 h^d * laplacian the exact gradient of dirichlet_energy.
template <typename Scalar>
ScalarField<Scalar> laplacian(const ScalarField<Scalar>& u) {
  const Grid& g = u.grid;
  ScalarField<Scalar> out(g);
  const Scalar inv_h2 = Scalar(1) / Scalar(g.h * g.h);
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    const int n = g.neighbors(k, nb);
    Scalar acc(0);
    for (int t = 0; t < n; ++t) acc += u[nb[t]] - u[k];
    out[k] = acc * inv_h2;
  }
  return out;
}

template <typename Scalar>
Scalar laplacian_at(const ScalarField<Scalar>& u, Index k) {
  std::array<Index, 4> nb{};
  const int n = u.grid.neighbors(k, nb);
  Scalar acc(0);
  for (int t = 0; t < n; ++t) acc += u[nb[t]] - u[k];
  return acc / Scalar(u.grid.h * u.grid.h);
}

// Sum over grid edges of |forward difference|^2 times h^d.
template <typename Scalar>
Scalar dirichlet_energy(const ScalarField<Scalar>& u) {
  const Grid& g = u.grid;
  Scalar acc(0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const Scalar d = u(i + 1, j) - u(i, j);
      acc += d * d;
    }
  }
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Scalar d = u(i, j + 1) - u(i, j);
      acc += d * d;
    }
  }
  return acc * Scalar(g.dim() == 1 ? 1.0 / g.h : 1.0);
}

template <typename Scalar>
Scalar positivity_volume(const ScalarField<Scalar>& u, const DomainMasks& masks,
                         const PenaltyParams& p) {
  Index count = 0;
  for (Index k = 0; k < u.size(); ++k) {
    if (masks.in_omega(k) && u[k] > Scalar(p.pos_threshold)) ++count;
  }
  return Scalar(static_cast<double>(count) * masks.grid.cell_volume());
}

template <typename Scalar>
Scalar smoothed_volume(const ScalarField<Scalar>& u, const DomainMasks& masks,
                       const PenaltyParams& p) {
  Scalar acc(0);
  for (Index k = 0; k < u.size(); ++k) {
    if (masks.in_omega(k)) acc += ramp(u[k], p.tau);
  }
  return acc * Scalar(masks.grid.cell_volume());
}

struct PenalizedEnergy {
  double dirichlet = 0.0;
  double volume = 0.0;           // positivity volume
  double value = 0.0;            // dirichlet + f_eps(volume)
  double smoothed_volume = 0.0;
  double smoothed_value = 0.0;   // dirichlet + f_eps(smoothed_volume)
};

template <typename Scalar>
PenalizedEnergy penalized_energy(const ScalarField<Scalar>& u, const DomainMasks& masks,
                                 const PenaltyParams& p) {
  PenalizedEnergy e;
  e.dirichlet = static_cast<double>(dirichlet_energy(u));
  e.volume = static_cast<double>(positivity_volume(u, masks, p));
  e.value = e.dirichlet + f_eps(e.volume, p);
  e.smoothed_volume = static_cast<double>(smoothed_volume(u, masks, p));
  e.smoothed_value = e.dirichlet + f_eps(e.smoothed_volume, p);
  return e;
}

// Negative L2 gradient (inner product sum a*b*h^d) of
//   dirichlet_energy(u) + f(smoothed_volume(u)),
// with f = f_eps when sigma == 0 and the blended penalty otherwise.
// Vanishes outside B_R.
template <typename Scalar>
ScalarField<Scalar> descent_direction(const ScalarField<Scalar>& u, const DomainMasks& masks,
                                      const PenaltyParams& p, double sigma = 0.0) {
  const double vol = static_cast<double>(smoothed_volume(u, masks, p));
  const Scalar slope = Scalar(f_eps_blend_slope(vol, p, sigma));
  ScalarField<Scalar> d = laplacian(u);
  for (Index k = 0; k < d.size(); ++k) {
    if (masks.outside(k)) {
      d[k] = Scalar(0);
    } else if (masks.in_omega(k)) {
      d[k] = Scalar(2) * d[k] - slope * ramp_slope(u[k], p.tau);
    } else {
      d[k] = Scalar(2) * d[k];
    }
  }
  return d;
}

}  // namespace heatopt
