// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Reference values (closed forms, eps0 rule, R comparison) are computed here
// rather than taken from the library.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "heatopt/domain.hpp"
#include "heatopt/freeboundary.hpp"
#include "heatopt/oracle.hpp"
#include "heatopt/solver.hpp"
#include "heatopt/verify.hpp"

using namespace heatopt;

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Problem {
  DomainSpec spec;
  DomainMasks masks;
  ObstaclePair obs;
  PenaltyParams p;
};

Problem make_problem(const DomainSpec& spec, const Grid& g, const ObstacleDescriptor& desc,
                     double eps = 0.05) {
  Problem pb{spec, rasterize(spec, g), {}, {}};
  pb.obs = make_obstacles(desc, pb.masks);
  pb.p.mu = spec.mu;
  pb.p.eps = eps;
  pb.p.pos_threshold = 1e-8 * pb.obs.sup_phi;
  return pb;
}

DomainSpec golden_disk(double R = 4.0) { return DomainSpec::disk(1.0, R, 3.0 * kPi); }
DomainSpec rounded_square() {
  return DomainSpec::rect(Vec2(-1.0, -1.0), Vec2(1.0, 1.0), 4.0, 3.0 * kPi, 0.25);
}
DomainSpec flat_rect() { return DomainSpec::rect(Vec2(-1.0, -2.0), Vec2(1.0, 2.0), 3.5, 12.0); }
const ObstacleDescriptor kConstant = ObstacleDescriptor::constant(1.0, 2.0);
const ObstacleDescriptor kTent = ObstacleDescriptor::tent(1.0, 1.5, 0.3, 1.0);

// Every solve of the run passes through here; criteria 4, 5 and 10 read the tally.
struct Tally {
  int solves = 0;
  int converged = 0;
  double worst_bound = 0.0;          // relative to sup phi
  std::string worst_bound_at;
  double worst_increase = 0.0;       // relative objective increase
  std::string worst_increase_at;
  double worst_harmonic = 0.0;       // relative to sup phi, converged solves only
  std::string worst_harmonic_at;
  bool harmonic_ok = true;
};
Tally tally;

SolveResult tracked(const std::string& label, const Problem& pb, const SolveParams& sp = {},
                    const std::optional<Field>& warm = {}) {
  SolveResult r = solve_penalized(pb.masks, pb.obs, pb.p, sp, warm);
  ++tally.solves;
  if (r.max_bound_violation > tally.worst_bound) {
    tally.worst_bound = r.max_bound_violation;
    tally.worst_bound_at = label;
  }
  if (r.max_objective_increase > tally.worst_increase) {
    tally.worst_increase = r.max_objective_increase;
    tally.worst_increase_at = label;
  }
  if (r.converged) {
    ++tally.converged;
    const auto c = check_harmonicity(r.u, pb.masks, pb.p, pb.obs.sup_phi);
    const double rel = c.value / pb.obs.sup_phi;
    if (rel > tally.worst_harmonic) {
      tally.worst_harmonic = rel;
      tally.worst_harmonic_at = label;
    }
    tally.harmonic_ok = tally.harmonic_ok && c.pass;
  }
  return r;
}

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s  criterion %2d  %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
}

// Runs a criterion body, turning an exception into a FAIL line.
void criterion(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto [pass, detail] = body();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(id, title, pass, detail + fmt(" [%.1fs]", s));
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

std::optional<SolveResult> golden_257;
std::optional<Problem> golden_257_problem;

}  // namespace

int main() {
  std::printf("acceptance run\n");

  criterion(1, "radial golden case", [] {
    const DomainSpec spec = golden_disk();
    golden_257_problem = make_problem(spec, build_grid(spec, 257), kConstant);
    const Problem& pb = *golden_257_problem;
    golden_257 = tracked("radial 257", pb);
    const SolveResult& r = *golden_257;
    // u = c ln(b/r)/ln(b/a) with a = 1, c = 1 and pi (b^2 - a^2) = mu, so b = 2.
    const double E = 2.0 * kPi / std::log(2.0), V = 3.0 * kPi, lam = 1.0 / (2.0 * std::log(2.0));
    const auto fb = extract_free_boundary(r.u, pb.masks, pb.p);
    const auto le = estimate_lambda(r.u, fb, pb.p);
    const double eE = std::abs(r.energy - E) / E, eV = std::abs(r.exterior_volume - V) / V,
                 eL = std::abs(le.mean - lam) / lam;
    const bool pass = r.converged && eE <= 0.03 && eV <= 0.03 && eL <= 0.08 && le.cv <= 0.10;
    return std::pair{pass, fmt("E=%.5f (ref %.5f, %.2f%%), V=%.5f (ref %.5f, %.3f%%), lambda=%.4f "
                               "(ref %.4f, %.2f%%), cv=%.3f, converged=%d",
                               r.energy, E, 100 * eE, r.exterior_volume, V, 100 * eV, le.mean,
                               lam, 100 * eL, le.cv, int(r.converged))};
  });

  criterion(2, "brute-force equivalence in 1D", [] {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int sizes[] = {12, 10, 7, 9, 5, 11, 6, 12};
    double worst = 0.0;
    int n_inst = 0;
    for (int n : sizes) {
      Layout1D layout;
      layout.n_left = static_cast<int>(rng() % (n + 1));
      layout.n_right = n - layout.n_left;
      layout.n_d = 1 + static_cast<int>(rng() % 3);
      layout.h = 1.0;
      Problem pb;
      pb.masks = rasterize_1d(layout);
      const double phi = 0.5 + U(rng);
      pb.p.eps = 0.05 + 0.6 * U(rng);
      pb.p.mu = 1.0 + U(rng) * (n - 1);
      pb.p.pos_threshold = 1e-8 * phi;
      // D pinned at phi; band values keep phi < psi there.
      pb.obs.descriptor = ObstacleDescriptor::constant(phi, phi + 1.0);
      pb.obs.phi = Field(pb.masks.grid);
      pb.obs.psi = Field(pb.masks.grid);
      for (Index k = 0; k < pb.masks.grid.size(); ++k) {
        if (pb.masks.in_d(k) || pb.masks.kind[k] == NodeKind::kBand) {
          pb.obs.phi[k] = phi;
          pb.obs.psi[k] = pb.masks.in_d(k) ? phi : phi + 1.0;
        }
      }
      pb.obs.sup_phi = phi;
      const auto bf = brute_force_1d(pb.masks, phi, pb.p);
      const auto r = tracked(fmt("1D instance %d", n_inst), pb);
      worst = std::max(worst, std::abs(r.penalized_energy - bf.energy));
      ++n_inst;
    }
    return std::pair{worst <= 1e-8,
                     fmt("%d instances with 5..12 Omega cells, max |J - J_bf| = %.2e", n_inst, worst)};
  });

  criterion(3, "volume recovery under the eps sweep", [] {
    const DomainSpec spec = golden_disk();
    const Problem base = make_problem(spec, build_grid(spec, 129), kConstant);
    const std::vector<double> eps_list{0.5, 0.2, 0.1, 0.05, 0.02};
    std::vector<double> rel;
    SweepResult lib;
    lib.volume_tol = 0.01;
    std::optional<Field> warm;
    bool all_converged = true;
    for (double eps : eps_list) {
      Problem pb = base;
      pb.p.eps = eps;
      const auto r = tracked(fmt("sweep eps=%g", eps), pb, {}, warm);
      all_converged = all_converged && r.converged;
      rel.push_back(std::abs(r.exterior_volume - spec.mu) / spec.mu);
      SweepRow row;
      row.eps = eps;
      row.volume = r.exterior_volume;
      const auto fb = extract_free_boundary(r.u, pb.masks, pb.p);
      if (fb.sample_count() > 0) row.lambda_mean = estimate_lambda(r.u, fb, pb.p).mean;
      lib.rows.push_back(row);
      warm = r.u;
    }
    // eps0: the largest listed eps from which every smaller listed eps is within 1%.
    std::optional<double> eps0;
    for (std::size_t i = eps_list.size(); i-- > 0;) {
      if (rel[i] > 0.01) break;
      eps0 = eps_list[i];
    }
    summarize_sweep(lib, spec.mu);
    const bool agree = lib.eps0 == eps0 && (!eps0 || lib.holds_below_eps0);
    std::string vols;
    for (std::size_t i = 0; i < rel.size(); ++i) vols += fmt("%s%g:%.3f%%", i ? " " : "", eps_list[i], 100 * rel[i]);
    return std::pair{eps0.has_value() && agree && all_converged,
                     fmt("eps0=%s, library eps0 %s, |V-mu|/mu by eps {%s}; lambda max/min %.3f "
                         "(tracked, bounded by 3: %s)",
                         eps0 ? fmt("%g", *eps0).c_str() : "none", agree ? "agrees" : "DISAGREES",
                         vols.c_str(), lib.lambda_ratio, lib.lambda_bounded ? "yes" : "no")};
  });

  criterion(6, "support independent of R", [] {
    const double h = 8.0 / 124.0;  // the 129-node spacing at R = 4
    const Problem a = make_problem(golden_disk(4.0), build_grid_with_spacing(golden_disk(4.0), h), kConstant);
    const Problem b = make_problem(golden_disk(6.0), build_grid_with_spacing(golden_disk(6.0), h), kConstant);
    // Both grids must put a node at the same place for the comparison to be like for like.
    const double shift = std::remainder(a.masks.grid.origin.x() - b.masks.grid.origin.x(), h);
    const auto ra = tracked("R=4", a), rb = tracked("R=6", b);
    const double sa = support_radius(ra.u, a.p), sb = support_radius(rb.u, b.p);
    const double dE = std::abs(ra.energy - rb.energy) / ra.energy;
    const double solver_tol = 1e-8;
    const bool pass = std::abs(shift) < 1e-12 && ra.converged && rb.converged && dE <= solver_tol &&
                      std::abs(sa - sb) <= 2.0 * h;
    return std::pair{pass, fmt("h=%.5f, E(4)=%.10f, E(6)=%.10f, rel diff %.1e (tol %.0e), support "
                               "%.4f vs %.4f (|diff| %.2e, tol 2h=%.4f)",
                               h, ra.energy, rb.energy, dE, solver_tol, sa, sb, std::abs(sa - sb),
                               2.0 * h)};
  });

  criterion(7, "Euler-Lagrange identity on the paraboloid case", [] {
    const DomainSpec spec = DomainSpec::disk(1.0, 2.0, 1.5);
    const auto desc = ObstacleDescriptor::paraboloid(1.0, 1.3, -0.5, 1.0);
    std::string detail;
    bool pass = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double h : {1.0 / 64.0, 1.0 / 128.0}) {
      const Problem pb = make_problem(spec, build_grid_with_spacing(spec, h), desc);
      const auto r = tracked(fmt("paraboloid h=1/%g", 1.0 / h), pb);
      const auto c = check_euler_lagrange(r.u, pb.obs, pb.masks);
      const bool active = c.get("nodes_upper") > 0 && c.get("nodes_free") > 0;
      pass = pass && r.converged && c.pass && active && c.value < prev;
      detail += fmt("%sh=1/%g: L1 %.4f (threshold %.4f, upper-contact nodes %.0f)", detail.empty() ? "" : "; ",
                    1.0 / h, c.value, c.threshold, c.get("nodes_upper"));
      prev = c.value;
    }
    return std::pair{pass, detail + (pass ? ", shrinking" : "")};
  });

  criterion(8, "Lipschitz stability under refinement", [] {
    struct Case {
      const char* name;
      DomainSpec spec;
      ObstacleDescriptor desc;
    };
    const Case cases[] = {{"radial", golden_disk(), kConstant},
                          {"rounded rectangle", rounded_square(), kConstant},
                          {"tent obstacle", golden_disk(), kTent}};
    const std::vector<int> res{65, 129, 257};
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
      std::vector<double> grads;
      for (int n : res) {
        if (n == 257 && std::string(c.name) == "radial") {
          grads.push_back(max_gradient(golden_257->u));
          continue;
        }
        const Problem pb = make_problem(c.spec, build_grid(c.spec, n), c.desc);
        const auto r = tracked(fmt("%s %d", c.name, n), pb);
        pass = pass && r.converged;
        grads.push_back(max_gradient(r.u));
      }
      const auto rec = check_lipschitz_refinement(res, grads, 1.1);
      pass = pass && rec.pass;
      detail += fmt("%s%s: max|grad| %.3f, %.3f, %.3f, final ratio %.3f", detail.empty() ? "" : "; ",
                    c.name, grads[0], grads[1], grads[2], rec.value);
    }
    return std::pair{pass, detail};
  });

  criterion(9, "flat-boundary exponent", [] {
    const DomainSpec spec = flat_rect();
    const Problem pb = make_problem(spec, build_grid(spec, 257), kConstant);
    const auto r = tracked("rectangle 257", pb);
    const FlatFace face{Vec2(1.0, 0.0), Vec2(1.0, 0.0), 2.0};
    const auto fe = check_flat_boundary_exponent(r.u, face, 0.4, pb.p);
    auto side = [](const SideExponent& s) {
      return s.saturated ? std::string("saturated") : fmt("%.3f", s.alpha);
    };
    const bool solved = r.converged && fe.record.pass;

    Field cal(pb.masks.grid);
    for (Index k = 0; k < cal.size(); ++k)
      cal[k] = std::pow(std::abs(pb.masks.grid.node(k).x() - 1.0), 1.5);
    const auto fc = check_flat_boundary_exponent(cal, face, 0.4, pb.p);
    const bool calibrated = !fc.inner.saturated && !fc.outer.saturated && fc.inner.alpha >= 0.45 &&
                            fc.inner.alpha <= 0.55 && fc.outer.alpha >= 0.45 && fc.outer.alpha <= 0.55;
    return std::pair{solved && calibrated,
                     fmt("solve: inner %s, outer %s (floor 0.4); calibration |x_n|^1.5: inner %.3f, "
                         "outer %.3f (band [0.45, 0.55])",
                         side(fe.inner).c_str(), side(fe.outer).c_str(), fc.inner.alpha, fc.outer.alpha)};
  });

  // The tally now covers every solve above.
  report(4, "maximum principle at every iterate", tally.worst_bound <= 1e-8,
         fmt("%d solves, worst relative excursion %.2e%s%s (tol 1e-8)", tally.solves, tally.worst_bound,
             tally.worst_bound_at.empty() ? "" : " in ", tally.worst_bound_at.c_str()));
  report(5, "harmonicity of the positive phase", tally.harmonic_ok && tally.converged > 0,
         fmt("%d converged solves, worst residual %.2e sup phi in %s (tol 1e-4)", tally.converged,
             tally.worst_harmonic, tally.worst_harmonic_at.c_str()));
  report(10, "descent monotonicity", tally.worst_increase <= 1e-12,
         fmt("%d solves, worst within-stage relative increase %.2e%s%s (round-off tol 1e-12)",
             tally.solves, tally.worst_increase, tally.worst_increase_at.empty() ? "" : " in ",
             tally.worst_increase_at.c_str()));

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
