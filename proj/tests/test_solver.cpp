#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "heatopt/error.hpp"
#include "heatopt/oracle.hpp"
#include "heatopt/solver.hpp"

using namespace heatopt;

constexpr double kInf = std::numeric_limits<double>::infinity();

namespace {

// D pinned at `value` (phi == psi on D), with band data that keeps phi < psi there.
ObstaclePair pinned_obstacles(const DomainMasks& m, double value) {
  ObstaclePair obs;
  obs.descriptor = ObstacleDescriptor::constant(value, value + 1.0);
  obs.phi = Field(m.grid);
  obs.psi = Field(m.grid);
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (m.in_d(k) || m.kind[k] == NodeKind::kBand) {
      obs.phi[k] = value;
      obs.psi[k] = m.in_d(k) ? value : value + 1.0;
    }
  }
  obs.sup_phi = value;
  return obs;
}

Grid unit_square(int n) {
  Grid g;
  g.nx = g.ny = n;
  g.h = 1.0 / (n - 1);
  return g;
}

Mask interior(const Grid& g) {
  Mask m(static_cast<std::size_t>(g.size()), 0);
  for (int j = 1; j + 1 < g.ny; ++j)
    for (int i = 1; i + 1 < g.nx; ++i) m[g.index(i, j)] = 1;
  return m;
}

void check_invariants(const SolveResult& r, const DomainMasks& m, const ObstaclePair& obs) {
  CHECK(r.max_bound_violation == 0.0);
  CHECK(r.max_objective_increase <= 1e-13);
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (m.in_d(k)) {
      CHECK(r.u[k] >= obs.phi[k]);
      CHECK(r.u[k] <= obs.psi[k]);
    } else if (m.in_omega(k)) {
      CHECK(r.u[k] >= 0.0);
    } else {
      CHECK(r.u[k] == 0.0);
    }
    CHECK(r.u[k] <= obs.sup_phi);
  }
}

}  // namespace

TEST_CASE("projection onto the admissible set") {
  const auto spec = DomainSpec::disk(1.0, 3.0, 2.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 33));
  const auto obs = make_obstacles(ObstacleDescriptor::constant(1.0, 2.0), m);
  const Field low = project_admissible(Field(m.grid, -1.0), m, obs);
  const Field high = project_admissible(Field(m.grid, 2.0 * obs.sup_phi), m, obs);
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (m.in_d(k)) {
      CHECK(low[k] == 1.0);
      CHECK(high[k] == 2.0);
    } else if (m.in_omega(k)) {
      CHECK(low[k] == 0.0);
      CHECK(high[k] == obs.sup_phi);
    } else {
      CHECK(high[k] == 0.0);
    }
  }
  const Field again = project_admissible(high, m, obs);
  CHECK((again.values == high.values).all());
}

TEST_CASE("double obstacle solver: pinned, inactive and tent cases") {
  const Grid g = unit_square(17);
  const Mask in = interior(g);

  Field c(g, 0.7);
  const auto pinned = solve_double_obstacle(in, Field(g, 0.7), Field(g, 0.7), c);
  CHECK((pinned.u.values - 0.7).abs().maxCoeff() == 0.0);

  Field data(g);
  for (Index k = 0; k < g.size(); ++k) data[k] = in[k] ? 0.0 : g.node(k).x();
  const auto lin = solve_double_obstacle(in, Field(g, -1e6), Field(g, 1e6), data);
  CHECK(lin.converged);
  for (Index k = 0; k < g.size(); ++k) CHECK(std::abs(lin.u[k] - g.node(k).x()) < 1e-10);
  CHECK(lin.residual < 1e-7);

  CHECK_THROWS_AS(solve_double_obstacle(in, Field(g, 1.0), Field(g, 0.0), data), Error);

  // 1D tent lower obstacle on [0, 1] with 12 interior nodes, zero ends.
  Grid line;
  line.nx = 14;
  line.ny = 1;
  line.h = 1.0 / 13.0;
  Mask chain(14, 1);
  chain[0] = chain[13] = 0;
  Field lo(line, -1e6), hi(line, 1e6);
  std::vector<double> lo_v, hi_v;
  for (int i = 1; i <= 12; ++i) {
    const double x = i * line.h;
    lo[i] = 0.6 - 1.5 * std::abs(x - 0.45);
    lo_v.push_back(lo[i]);
    hi_v.push_back(1e6);
  }
  const auto tent = solve_double_obstacle(chain, lo, hi, Field(line));
  const auto ref = enumerate_obstacle_1d(lo_v, hi_v, 0.0, 0.0, line.h);
  CHECK(std::abs(dirichlet_energy(tent.u) - ref.energy) < 1e-10);
  for (int i = 1; i <= 12; ++i) CHECK(std::abs(tent.u[i] - ref.u[i - 1]) < 1e-10);
}

TEST_CASE("harmonic extension: constants, linear data, annulus, disconnected region") {
  const Grid g = unit_square(21);
  const Mask in = interior(g);
  const auto c = harmonic_extension(in, Field(g, 2.5));
  CHECK((c.u.values - 2.5).abs().maxCoeff() < 1e-12);

  Field data(g);
  for (Index k = 0; k < g.size(); ++k) data[k] = in[k] ? 0.0 : g.node(k).x();
  const auto lin = harmonic_extension(in, data);
  for (Index k = 0; k < g.size(); ++k) CHECK(std::abs(lin.u[k] - g.node(k).x()) < 1e-6);

  // Annulus 1 < r < 2 at h = 0.01. Boundary data are the exact values at the
  // staircase nodes, so the discrete solution approximates ln(2/r)/ln 2.
  Grid a;
  a.h = 0.01;
  a.nx = a.ny = 2 * 205 + 1;
  a.origin = Vec2(-2.05, -2.05);
  Mask ring(static_cast<std::size_t>(a.size()), 0);
  Field bd(a);
  for (Index k = 0; k < a.size(); ++k) {
    const double r = a.node(k).norm();
    ring[k] = r > 1.0 && r < 2.0;
    bd[k] = ring[k] ? 0.5 : std::log(2.0 / std::max(r, 0.5)) / std::log(2.0);
  }
  const auto ann = harmonic_extension(ring, bd);
  CHECK(ann.converged);
  const double s = 1.0;  // r = sqrt(2)
  CHECK(std::abs(interpolate(ann.u, Vec2(s, s)) - 0.5) < 1e-3);
  // Discrete maximum principle.
  double lo = 1e9, hi = -1e9, blo = 1e9, bhi = -1e9;
  for (Index k = 0; k < a.size(); ++k) {
    if (ring[k]) {
      lo = std::min(lo, ann.u[k]);
      hi = std::max(hi, ann.u[k]);
    } else if (a.node(k).norm() > 0.9 && a.node(k).norm() < 2.1) {
      blo = std::min(blo, bd[k]);
      bhi = std::max(bhi, bd[k]);
    }
  }
  CHECK(lo >= blo - 1e-12);
  CHECK(hi <= bhi + 1e-12);

  Mask all(static_cast<std::size_t>(g.size()), 1);
  CHECK_THROWS_AS(harmonic_extension(all, data), Error);
}

TEST_CASE("1D solves match the exhaustive oracle") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Layout1D layout;
    const int n = 4 + static_cast<int>(rng() % 9);
    layout.n_left = static_cast<int>(rng() % (n + 1));
    layout.n_right = n - layout.n_left;
    layout.n_d = 1 + static_cast<int>(rng() % 3);
    layout.h = 0.5 + U(rng);
    const DomainMasks m = rasterize_1d(layout);
    const double phi = 0.5 + U(rng);
    PenaltyParams p;
    p.eps = 0.05 + 0.6 * U(rng);
    p.mu = layout.h * (1.0 + U(rng) * (n - 1));
    p.pos_threshold = 1e-8 * phi;
    const auto obs = pinned_obstacles(m, phi);
    const auto bf = brute_force_1d(m, phi, p);
    const auto r = solve_penalized(m, obs, p, SolveParams{});
    CAPTURE(trial);
    CHECK(std::abs(r.penalized_energy - bf.energy) < 1e-8);
    check_invariants(r, m, obs);
  }
}

TEST_CASE("small 2D solve keeps the admissibility and descent invariants") {
  const auto spec = DomainSpec::disk(1.0, 3.0, 3.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 41));
  const auto obs = make_obstacles(ObstacleDescriptor::paraboloid(0.8, 1.3, 0.3, 1.0), m);
  PenaltyParams p;
  p.eps = 0.1;
  p.mu = 3.0;
  p.pos_threshold = 1e-8 * obs.sup_phi;
  const auto r = solve_penalized(m, obs, p, SolveParams{});
  CHECK(r.converged);
  check_invariants(r, m, obs);
  CHECK(r.penalized_energy <= r.m_probe + 1e-12);
  CHECK(std::abs(r.exterior_volume - p.mu) < 0.05 * p.mu);
}

TEST_CASE("projected gradient variants descend monotonically") {
  const auto spec = DomainSpec::disk(1.0, 2.5, 2.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 25));
  const auto obs = make_obstacles(ObstacleDescriptor::constant(1.0, 2.0), m);
  PenaltyParams p;
  p.eps = 0.2;
  p.mu = 2.0;
  for (StepRule rule : {StepRule::kFixed, StepRule::kBacktracking}) {
    SolveParams sp;
    sp.step_rule = rule;
    sp.tau_schedule = {0.25, 0.125};
    sp.max_iters = 3000;
    sp.stage_tol = sp.tol = 1e-10;
    sp.stage_update_tol = sp.update_tol = 1e-8;
    const auto r = solve_penalized(m, obs, p, sp);
    check_invariants(r, m, obs);
    CHECK(r.history.size() > 2);
  }
}

TEST_CASE("setup errors") {
  const auto spec = DomainSpec::disk(1.0, 3.0, 2.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 25));
  const auto obs = make_obstacles(ObstacleDescriptor::constant(1.0, 2.0), m);
  PenaltyParams p;
  p.mu = 2.0;
  SolveParams sp;
  sp.tau_schedule = {0.1, 0.2};
  CHECK_THROWS_AS(solve_penalized(m, obs, p, sp), Error);
  p.eps = 1.5;
  CHECK_THROWS_AS(solve_penalized(m, obs, p, SolveParams{}), Error);
  const auto tight = DomainSpec::disk(1.0, 3.0, std::numbers::pi * 8.0 - 0.01);
  CHECK_THROWS_AS(rasterize(tight, build_grid(tight, 25)), Error);
}

TEST_CASE("obstacle extension across a collar around the radial solve") {
  const double mu = 3.0 * std::numbers::pi;
  const auto spec = DomainSpec::disk(1.0, 4.0, mu);
  const DomainMasks m = rasterize(spec, build_grid(spec, 97));
  const auto obs = make_obstacles(ObstacleDescriptor::constant(1.0, 2.0), m);
  PenaltyParams p;
  p.eps = 0.05;
  p.mu = mu;
  const auto r = solve_penalized(m, obs, p, SolveParams{});
  const double delta = 0.25;
  const auto ext = extend_obstacles(spec, m, obs, r.u, delta, p.pos_threshold);

  const auto exact = radial_solution(1.0, 1.0, mu);
  const double h = m.grid.h;
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (!ext.region[k]) continue;
    CHECK(ext.phi[k] <= r.u[k] + 1e-9);
    CHECK(ext.psi[k] >= r.u[k] - 1e-9);
    CHECK(ext.psi[k] >= ext.phi[k] - 1e-12);
    if (ext.collar[k]) {
      // u is harmonic on the collar with the same data as phi_eps beyond it,
      // so both follow the radial profile there.
      CHECK(std::abs(ext.phi[k] - exact.u(m.grid.node(k).norm())) < 4.0 * h);
    }
  }

  // The double-obstacle problem on the enlarged set reproduces u.
  Field lo(m.grid, -kInf), hi(m.grid, kInf), data = r.u;
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (ext.region[k]) {
      lo[k] = ext.phi[k];
      hi[k] = std::min(ext.psi[k], obs.sup_phi);
      data[k] = 0.5 * (lo[k] + hi[k]);
    }
  }
  const auto again = solve_double_obstacle(ext.region, lo, hi, data);
  CHECK((again.u.values - r.u.values).abs().maxCoeff() < 1e-8);

  CHECK_THROWS_WITH_AS(extend_obstacles(spec, m, obs, Field(m.grid), delta, p.pos_threshold),
                       doctest::Contains("clearance violated"), Error);
}
