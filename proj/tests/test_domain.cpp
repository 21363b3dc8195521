#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "heatopt/domain.hpp"
#include "heatopt/error.hpp"

using namespace heatopt;

TEST_CASE("build_grid spacing covers the ball with a two-cell margin") {
  const auto spec = DomainSpec::disk(1.0, 4.0, 1.0);
  const Grid g = build_grid(spec, 129);
  CHECK(g.h == doctest::Approx(8.0 / 124.0));
  CHECK(g.x(0) == doctest::Approx(-4.0 - 2.0 * g.h));
  CHECK(g.x(g.nx - 1) == doctest::Approx(4.0 + 2.0 * g.h));
  CHECK_THROWS_WITH_AS(build_grid(spec, 2), "grid too coarse", Error);
}

TEST_CASE("grids with a shared spacing align across radii") {
  const auto s4 = DomainSpec::disk(1.0, 4.0, 1.0);
  const auto s6 = DomainSpec::disk(1.0, 6.0, 1.0);
  const double h = 1.0 / 16.0;
  const Grid a = build_grid_with_spacing(s4, h);
  const Grid b = build_grid_with_spacing(s6, h);
  const double shift = (a.origin.x() - b.origin.x()) / h;
  CHECK(std::abs(shift - std::round(shift)) < 1e-9);
}

TEST_CASE("masks partition the grid and the band touches D") {
  const auto spec = DomainSpec::rect(Vec2(-1, -1), Vec2(1, 1), 4.0, 3.0);
  const Grid g = build_grid(spec, 65);
  const DomainMasks m = rasterize(spec, g);
  Index total = 0;
  for (auto kind : {NodeKind::kInsideD, NodeKind::kBand, NodeKind::kOmega, NodeKind::kOutside})
    total += m.count(kind);
  CHECK(total == g.size());
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    bool touches = false;
    const int n = g.neighbors(k, nb);
    for (int t = 0; t < n; ++t) touches = touches || m.in_d(nb[t]);
    if (m.kind[k] == NodeKind::kBand) CHECK(touches);
    if (m.kind[k] == NodeKind::kOmega) CHECK_FALSE(touches);
  }
}

TEST_CASE("rasterized rectangle area converges to the exact area") {
  const auto spec = DomainSpec::rect(Vec2(-1.03, -0.97), Vec2(0.99, 1.01), 4.0, 3.0);
  for (int n : {65, 129, 257}) {
    const DomainMasks m = rasterize(spec, build_grid(spec, n));
    const double exact = spec.exact_area();
    // Node counting over a box is accurate to one strip of cells per side.
    CHECK(std::abs(m.d_measure - exact) <= 4.0 * 2.0 * m.grid.h + 1e-12);
  }
  const DomainMasks fine = rasterize(spec, build_grid(spec, 513));
  CHECK(std::abs(fine.d_measure - spec.exact_area()) < 0.05);
}

TEST_CASE("annulus measure at h = 0.05 within 2 percent") {
  const auto spec = DomainSpec::disk(1.0, 4.0, 3.0);
  const DomainMasks m = rasterize(spec, build_grid_with_spacing(spec, 0.05));
  const double exact = std::numbers::pi * 15.0;
  CHECK(std::abs(m.omega_measure - exact) / exact < 0.02);
}

TEST_CASE("too large a target volume is rejected") {
  const auto spec = DomainSpec::disk(1.0, 4.0, 50.0);
  CHECK_THROWS_WITH_AS(rasterize(spec, build_grid_with_spacing(spec, 0.05)),
                       "insufficient exterior volume", Error);
}

TEST_CASE("1D disk gives two exterior intervals") {
  const auto spec = DomainSpec::disk(1.0, 4.0, 1.0);
  const Grid g = build_grid_with_spacing(spec, 0.25, 1);
  const DomainMasks m = rasterize(spec, g);
  int runs = 0;
  bool prev = false;
  for (Index k = 0; k < g.size(); ++k) {
    const bool cur = m.in_omega(k);
    if (cur && !prev) ++runs;
    prev = cur;
    if (cur) {
      const double x = std::abs(g.node(k).x());
      CHECK(x > 1.0);
      CHECK(x < 4.0);
    }
  }
  CHECK(runs == 2);
}

TEST_CASE("obstacle presets and their validation") {
  const auto spec = DomainSpec::disk(1.0, 4.0, 3.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 65));

  const ObstaclePair c = make_obstacles(ObstacleDescriptor::constant(1.0, 2.0), m);
  for (Index k = 0; k < m.grid.size(); ++k) {
    if (m.in_d(k)) {
      CHECK(c.phi[k] == 1.0);
      CHECK(c.psi[k] == 2.0);
    }
  }
  CHECK(c.sup_phi == 1.0);

  CHECK_THROWS_AS(make_obstacles(ObstacleDescriptor::constant(1.0, 1.0), m), Error);
  CHECK_THROWS_AS(make_obstacles(ObstacleDescriptor::constant(-1.0, 1.0), m), Error);
  CHECK_THROWS_AS(make_obstacles(ObstacleDescriptor::constant(2.0, 1.0), m), Error);

  const ObstaclePair t = make_obstacles(ObstacleDescriptor::touching(1.0, 0.5, 0.5, 1.0), m);
  for (Index k = 0; k < m.grid.size(); ++k) {
    const double r = m.grid.node(k).norm();
    if (m.in_d(k) && r <= 0.5) CHECK(t.phi[k] == t.psi[k]);
    if (m.kind[k] == NodeKind::kBand) CHECK(t.phi[k] < t.psi[k]);
  }

  const auto para = ObstacleDescriptor::paraboloid(0.5, 1.5, 0.5, 1.0);
  CHECK(para.laplacian_phi(Vec2(0.3, 0.2)) == doctest::Approx(-2.0));
  const ObstaclePair p = make_obstacles(para, m);
  CHECK(p.sup_phi == doctest::Approx(1.0));
}

TEST_CASE("touching preset Laplacian matches finite differences") {
  const auto d = ObstacleDescriptor::touching(1.0, 0.5, 0.4, 1.0);
  const Vec2 x(0.55, 0.3);
  const double e = 1e-4;
  const double fd = (d.psi(x + Vec2(e, 0)) + d.psi(x - Vec2(e, 0)) + d.psi(x + Vec2(0, e)) +
                     d.psi(x - Vec2(0, e)) - 4.0 * d.psi(x)) / (e * e);
  CHECK(d.laplacian_psi(x) == doctest::Approx(fd).epsilon(1e-4));
}
