#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "heatopt/error.hpp"
#include "heatopt/freeboundary.hpp"
#include "heatopt/oracle.hpp"

using namespace heatopt;

namespace {

struct RadialCase {
  DomainSpec spec;
  DomainMasks masks;
  RadialSolution exact;
  Field u;
};

RadialCase radial_case(int resolution) {
  RadialCase rc;
  rc.spec = DomainSpec::disk(1.0, 4.0, 3.0 * std::numbers::pi);
  rc.masks = rasterize(rc.spec, build_grid(rc.spec, resolution));
  rc.exact = radial_solution(1.0, 1.0, rc.spec.mu);
  rc.u = sample_radial(rc.exact, rc.masks.grid);
  return rc;
}

// Area of the intersection of disks of radii a and b whose centers are d apart.
double lens_area(double a, double b, double d) {
  const double t1 = a * a * std::acos((d * d + a * a - b * b) / (2.0 * d * a));
  const double t2 = b * b * std::acos((d * d + b * b - a * a) / (2.0 * d * b));
  const double t3 = 0.5 * std::sqrt((-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b));
  return t1 + t2 - t3;
}

}  // namespace

TEST_CASE("radial contour: one closed chain, circumference and lambda") {
  const auto rc = radial_case(257);
  PenaltyParams p;
  const auto fb = extract_free_boundary(rc.u, rc.masks, p);
  CHECK(fb.status == FreeBoundary::Status::kOk);
  REQUIRE(fb.chains.size() == 1);
  CHECK(fb.chains[0].closed);
  CHECK(std::abs(fb.length - 4.0 * std::numbers::pi) < 0.02 * 4.0 * std::numbers::pi);
  for (std::size_t t = 0; t < fb.chains[0].points.size(); ++t) {
    const Vec2& x = fb.chains[0].points[t];
    const Vec2& n = fb.chains[0].normals[t];
    CHECK(std::abs(n.norm() - 1.0) < 1e-12);
    CHECK(n.dot(x.normalized()) > 0.99);
    CHECK(rc.masks.in_omega(rc.masks.grid.index(
        static_cast<int>(std::lround((x.x() - rc.masks.grid.origin.x()) / rc.masks.grid.h)),
        static_cast<int>(std::lround((x.y() - rc.masks.grid.origin.y()) / rc.masks.grid.h)))));
  }
  const auto lam = estimate_lambda(rc.u, fb, p);
  CHECK(lam.skipped == 0);
  CHECK(std::abs(lam.mean - rc.exact.lambda()) < 0.02 * rc.exact.lambda());
  CHECK(lam.cv <= 0.05);
}

TEST_CASE("contour length converges under refinement") {
  double prev = 1e9;
  for (int n : {65, 129, 257}) {
    const auto rc = radial_case(n);
    const double err = std::abs(extract_free_boundary(rc.u, rc.masks, PenaltyParams{}).length -
                                4.0 * std::numbers::pi);
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("slab profile gives lambda = c/d") {
  const auto spec = DomainSpec::rect(Vec2(-3.0, -1.0), Vec2(-2.0, 1.0), 4.0, 1.0);
  const DomainMasks m = rasterize(spec, build_grid(spec, 161));
  const auto slab = slab_solution(1.0, 0.5);
  Field u(m.grid);
  for (Index k = 0; k < m.grid.size(); ++k)
    if (!m.outside(k)) u[k] = slab.u(m.grid.node(k).x() - 0.1);
  PenaltyParams p;
  const auto fb = extract_free_boundary(u, m, p);
  const auto lam = estimate_lambda(u, fb, p);
  int checked = 0;
  for (std::size_t t = 0; t < lam.points.size(); ++t) {
    if (std::abs(lam.points[t].y()) > 3.0) continue;
    CHECK(std::abs(lam.values[t] - slab.lambda()) < 1e-9);
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("degenerate boundaries") {
  const auto rc = radial_case(65);
  PenaltyParams p;
  const Field zero(rc.masks.grid);
  const auto fb = extract_free_boundary(zero, rc.masks, p);
  CHECK(fb.status == FreeBoundary::Status::kEmpty);
  CHECK_THROWS_WITH_AS(estimate_lambda(zero, fb, p), "no free boundary", Error);

  Field full(rc.masks.grid);
  for (Index k = 0; k < full.size(); ++k)
    if (!rc.masks.outside(k)) full[k] = 1.0;
  CHECK(extract_free_boundary(full, rc.masks, p).status == FreeBoundary::Status::kReachesOuter);
}

TEST_CASE("two bubbles give two chains") {
  const auto rc = radial_case(129);
  Field u(rc.masks.grid);
  for (Index k = 0; k < u.size(); ++k) {
    const Vec2 x = rc.masks.grid.node(k);
    for (const Vec2 c : {Vec2(2.5, 0.0), Vec2(-2.5, 0.0)})
      u[k] = std::max(u[k], 0.5 - (x - c).norm());
  }
  const auto fb = extract_free_boundary(u, rc.masks, PenaltyParams{});
  REQUIRE(fb.chains.size() == 2);
  for (const auto& c : fb.chains) CHECK(c.closed);
  CHECK(std::abs(fb.length - 2.0 * std::numbers::pi) < 0.05);
}

TEST_CASE("support radius") {
  const auto rc = radial_case(257);
  PenaltyParams p;
  CHECK(support_radius(Field(rc.masks.grid), p) == 0.0);
  CHECK(std::abs(support_radius(rc.u, p) - 2.0) <= rc.masks.grid.h);

  Field spike(rc.masks.grid);
  const Grid& g = rc.masks.grid;
  const int i = static_cast<int>(std::lround((3.7 - g.origin.x()) / g.h));
  const int j = static_cast<int>(std::lround(-g.origin.y() / g.h));
  spike(i, j) = 1.0;
  CHECK(support_radius(spike, p) == doctest::Approx(g.node(g.index(i, j)).norm()));
  CHECK(std::abs(support_radius(spike, p) - 3.7) <= g.h);

  // Monotone under pointwise increase.
  Field bigger = rc.u;
  for (Index k = 0; k < bigger.size(); ++k)
    if (rc.masks.in_omega(k) && g.node(k).norm() < 2.5) bigger[k] += 0.01;
  CHECK(support_radius(bigger, p) >= support_radius(rc.u, p));
}

TEST_CASE("clearance collar") {
  const auto rc = radial_case(129);
  PenaltyParams p;
  const auto ok = clearance_check(rc.u, rc.masks, p, 0.2);
  CHECK(ok.pass);
  CHECK(ok.collar_nodes > 0);
  CHECK(ok.min_value > 0.5);
  const auto zero = clearance_check(Field(rc.masks.grid), rc.masks, p, 0.2);
  CHECK_FALSE(zero.pass);
  CHECK(zero.min_value == 0.0);
  CHECK_FALSE(clearance_check(rc.u, rc.masks, p, 1.2).pass);
}

TEST_CASE("nondegeneracy scan") {
  const auto rc = radial_case(129);
  PenaltyParams p;
  p.eps = 0.05;
  const auto zero = nondegeneracy_scan(Field(rc.masks.grid), rc.masks, p, 1.0);
  CHECK(zero.violations.empty());
  CHECK(zero.balls > 0);
  CHECK(std::isinf(zero.critical_constant));

  const auto radial = nondegeneracy_scan(rc.u, rc.masks, p, 0.01);
  CHECK(radial.violations.empty());
  CHECK(radial.critical_constant > 0.01);

  const Grid& g = rc.masks.grid;
  Field bump(g);
  const Index k = g.index(g.nx / 2 + static_cast<int>(std::lround(2.8 / g.h)), g.ny / 2);
  REQUIRE(rc.masks.in_omega(k));
  bump[k] = std::sqrt(p.eps) * g.h;
  const auto found = nondegeneracy_scan(bump, rc.masks, p, 1.0, 1);
  CHECK_FALSE(found.violations.empty());
  CHECK(found.critical_constant < 1.0);
}

TEST_CASE("density scan") {
  const auto rc = radial_case(129);
  PenaltyParams p;
  Field full(rc.masks.grid);
  for (Index k = 0; k < full.size(); ++k)
    if (rc.masks.in_omega(k)) full[k] = 1.0;
  const auto all = density_scan(full, rc.masks, p);
  CHECK(all.balls > 0);
  CHECK(all.min_ratio == 1.0);

  CHECK(density_ratio(rc.u, p, Vec2(1.5, 0.0), 0.25) == 1.0);
  CHECK(density_ratio(rc.u, p, Vec2(0.0, -1.5), 0.25) == 1.0);

  // Ball centered on the free boundary: fraction inside the disk of radius b.
  const auto fine = radial_case(801);
  const double rho = 0.25;
  const double exact = lens_area(2.0, rho, 2.0) / (std::numbers::pi * rho * rho);
  const double ratio = density_ratio(fine.u, p, Vec2(2.0, 0.0), rho);
  CHECK(ratio > 0.0);
  CHECK(ratio < 1.0);
  CHECK(std::abs(ratio - exact) < 0.03);

  const auto scan = density_scan(rc.u, rc.masks, p);
  CHECK(scan.min_ratio > 0.0);
  CHECK(scan.min_ratio < 0.6);
}
