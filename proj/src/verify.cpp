#include "heatopt/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "heatopt/error.hpp"
#include "heatopt/freeboundary.hpp"

namespace heatopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string at_node(const Grid& g, Index k) {
  std::ostringstream os;
  os << "node (" << g.ix(k) << ", " << g.iy(k) << ")";
  return os.str();
}

// Nodes whose graph-distance-`radius` neighborhood lies in `mask`.
Mask erode(const Grid& g, Mask mask, int radius) {
  std::array<Index, 4> nb{};
  for (int r = 0; r < radius; ++r) {
    Mask next = mask;
    for (Index k = 0; k < g.size(); ++k) {
      if (!mask[k]) continue;
      const int n = g.neighbors(k, nb);
      bool keep = n == (g.dim() == 1 ? 2 : 4);
      for (int t = 0; t < n && keep; ++t) keep = mask[nb[t]] != 0;
      next[k] = keep;
    }
    mask = std::move(next);
  }
  return mask;
}

double slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    sx += x[t];
    sy += y[t];
    sxx += x[t] * x[t];
    sxy += x[t] * y[t];
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

struct RaySample {
  double d;
  Vec2 g;
};

// Least-squares fit of g(d) = a + b d^beta per component with a shared beta;
// returns a, the extrapolated value at d = 0.
Vec2 extrapolate_to_face(const std::vector<RaySample>& ray) {
  Vec2 mean = Vec2::Zero();
  for (const auto& s : ray) mean += s.g;
  mean /= static_cast<double>(ray.size());
  if (ray.size() < 4) return mean;

  auto fit = [&](double beta, Vec2& a) {
    double s1 = 0.0, sp = 0.0, spp = 0.0;
    Vec2 sg = Vec2::Zero(), spg = Vec2::Zero();
    for (const auto& s : ray) {
      const double q = std::pow(s.d, beta);
      s1 += 1.0;
      sp += q;
      spp += q * q;
      sg += s.g;
      spg += q * s.g;
    }
    const double det = s1 * spp - sp * sp;
    if (!(det > 0.0)) {
      a = mean;
      return kInf;
    }
    const Vec2 b = (s1 * spg - sp * sg) / det;
    a = (sg - sp * b) / s1;
    double res = 0.0;
    for (const auto& s : ray) res += (s.g - a - b * std::pow(s.d, beta)).squaredNorm();
    return res;
  };

  double best = kInf, best_beta = 1.0;
  Vec2 a;
  for (double beta = 0.05; beta <= 3.0 + 1e-12; beta += 0.01) {
    const double r = fit(beta, a);
    if (r < best) {
      best = r;
      best_beta = beta;
    }
  }
  // Golden-section polish around the best grid value.
  double lo = std::max(0.02, best_beta - 0.01), hi = best_beta + 0.01;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 40; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (fit(m1, a) < fit(m2, a)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  fit(0.5 * (lo + hi), a);
  return a;
}

}  // namespace

double CheckRecord::get(const std::string& key) const {
  for (const auto& [k, v] : extra)
    if (k == key) return v;
  throw Error("check '" + name + "' has no value '" + key + "'");
}

bool PropertyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
}

std::string PropertyReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(24) << "check" << std::setw(8) << "result" << std::setw(14)
     << "value" << std::setw(14) << "threshold" << "property\n";
  for (const auto& c : checks) {
    os << std::setw(24) << c.name << std::setw(8) << (c.pass ? "pass" : "FAIL") << std::setw(14)
       << std::setprecision(6) << c.value << std::setw(14) << c.threshold << c.anchor;
    if (!c.detail.empty()) os << " [" << c.detail << "]";
    os << '\n';
  }
  os << "overall: " << (pass() ? "pass" : "FAIL") << '\n';
  return os.str();
}

CheckRecord check_max_principle(const Field& u, double sup_phi) {
  CheckRecord c;
  c.name = "max_principle";
  c.anchor = "0 <= u <= sup_D phi everywhere";
  c.threshold = 1e-8 * sup_phi;
  double worst = 0.0;
  Index where = -1;
  for (Index k = 0; k < u.size(); ++k) {
    const double excess = std::max(-u[k], u[k] - sup_phi);
    if (excess > worst) {
      worst = excess;
      where = k;
    }
  }
  c.value = worst;
  c.pass = worst <= c.threshold;
  if (!c.pass) c.detail = "violated at " + at_node(u.grid, where);
  c.extra = {{"min", u.values.minCoeff()}, {"max", u.values.maxCoeff()}, {"sup_phi", sup_phi}};
  return c;
}

CheckRecord check_harmonicity(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                              double sup_phi, double rel_tol) {
  const Grid& g = u.grid;
  Mask positive(static_cast<std::size_t>(g.size()), 0);
  for (Index k = 0; k < g.size(); ++k) positive[k] = u[k] > p.pos_threshold;
  const Mask core = erode(g, positive, 2);

  double harm = 0.0, sub = 0.0;
  Index harm_at = -1, sub_at = -1, core_nodes = 0;
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    if (!masks.in_omega(k)) continue;
    const int n = g.neighbors(k, nb);
    bool interior = n == (g.dim() == 1 ? 2 : 4);
    for (int t = 0; t < n && interior; ++t) interior = !masks.outside(nb[t]);
    if (!interior) continue;
    const double lap = laplacian_at(u, k);
    if (core[k]) {
      ++core_nodes;
      if (std::abs(lap) > harm) {
        harm = std::abs(lap);
        harm_at = k;
      }
    }
    if (-lap > sub) {
      sub = -lap;
      sub_at = k;
    }
  }
  CheckRecord c;
  c.name = "harmonicity";
  c.anchor = "u harmonic in {u > 0} and subharmonic in Omega";
  c.threshold = rel_tol * sup_phi;
  c.value = std::max(harm, sub);
  c.pass = harm <= c.threshold && sub <= c.threshold;
  if (harm > c.threshold) c.detail = "positive-phase residual at " + at_node(g, harm_at);
  if (sub > c.threshold) c.detail += (c.detail.empty() ? "" : "; ") + std::string("subharmonicity at ") + at_node(g, sub_at);
  c.extra = {{"harmonic_residual", harm},
             {"subharmonic_violation", sub},
             {"core_nodes", static_cast<double>(core_nodes)}};
  return c;
}

CheckRecord check_volume_bound(double volume, const PenaltyParams& p, double m_probe) {
  CheckRecord c;
  c.name = "volume_bound";
  c.anchor = "|{u > 0} in Omega| <= mu + M eps";
  c.value = volume;
  c.threshold = p.mu + m_probe * p.eps;
  c.pass = volume <= c.threshold;
  c.extra = {{"mu", p.mu}, {"m_probe", m_probe}, {"eps", p.eps}};
  return c;
}

void validate_eps_list(const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw Error("eps list is empty");
  for (std::size_t t = 0; t < eps_list.size(); ++t) {
    if (!(eps_list[t] > 0.0 && eps_list[t] < 1.0)) throw Error("eps values must lie in (0, 1)");
    if (t > 0 && !(eps_list[t] < eps_list[t - 1]))
      throw Error("eps values must be strictly decreasing");
  }
}

SweepRow sweep_point(const DomainMasks& masks, const ObstaclePair& obstacles,
                     const PenaltyParams& p, const SolveParams& sp,
                     const std::optional<Field>& warm_start, Field* u_out) {
  const SolveResult r = solve_penalized(masks, obstacles, p, sp, warm_start);
  SweepRow row;
  row.eps = p.eps;
  row.volume = r.exterior_volume;
  row.energy = r.energy;
  row.penalized_energy = r.penalized_energy;
  row.support_radius = support_radius(r.u, p);
  row.iterations = r.iterations;
  row.converged = r.converged;
  if (masks.grid.dim() == 2) {
    const auto fb = extract_free_boundary(r.u, masks, p);
    if (fb.sample_count() > 0) {
      const auto lam = estimate_lambda(r.u, fb, p);
      row.lambda_mean = lam.mean;
      row.lambda_cv = lam.cv;
    }
  }
  if (u_out) *u_out = r.u;
  return row;
}

void summarize_sweep(SweepResult& sweep, double mu) {
  auto within = [&](const SweepRow& row) {
    return std::abs(row.volume - mu) <= sweep.volume_tol * mu;
  };
  sweep.eps0.reset();
  sweep.holds_below_eps0 = false;
  for (const auto& row : sweep.rows) {
    if (within(row)) {
      sweep.eps0 = row.eps;
      break;
    }
  }
  double lo = kInf, hi = 0.0;
  for (const auto& row : sweep.rows) {
    if (!(row.lambda_mean > 0.0)) continue;
    lo = std::min(lo, row.lambda_mean);
    hi = std::max(hi, row.lambda_mean);
  }
  sweep.lambda_ratio = hi > 0.0 ? hi / lo : 0.0;
  sweep.lambda_bounded = hi > 0.0 && sweep.lambda_ratio <= 3.0;
  if (sweep.eps0) {
    sweep.holds_below_eps0 =
        std::all_of(sweep.rows.begin(), sweep.rows.end(),
                    [&](const SweepRow& row) { return row.eps > *sweep.eps0 || within(row); });
  }
}

SweepResult epsilon_sweep(const DomainMasks& masks, const ObstaclePair& obstacles,
                          const std::vector<double>& eps_list, const PenaltyParams& p,
                          const SolveParams& sp, double volume_tol) {
  validate_eps_list(eps_list);
  SweepResult out;
  out.volume_tol = volume_tol;
  std::optional<Field> warm;
  for (double eps : eps_list) {
    PenaltyParams q = p;
    q.eps = eps;
    Field u;
    out.rows.push_back(sweep_point(masks, obstacles, q, sp, warm, &u));
    if (!out.rows.back().converged) {
      out.aborted = true;
      std::ostringstream os;
      os << "solve at eps = " << eps << " did not converge";
      out.message = os.str();
      break;
    }
    warm = std::move(u);
  }
  summarize_sweep(out, p.mu);
  return out;
}

double max_gradient(const Field& u) {
  const Grid& g = u.grid;
  double best = 0.0;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double dx = i + 1 < g.nx ? u(i + 1, j) - u(i, j) : 0.0;
      const double dy = j + 1 < g.ny ? u(i, j + 1) - u(i, j) : 0.0;
      best = std::max(best, std::hypot(dx, dy));
    }
  }
  return best / g.h;
}

CheckRecord check_lipschitz_refinement(const std::vector<int>& resolutions,
                                       const std::vector<double>& max_grads, double ratio_tol) {
  if (resolutions.size() < 3 || resolutions.size() != max_grads.size())
    throw Error("Lipschitz refinement needs at least three resolutions with one value each");
  for (std::size_t t = 1; t < resolutions.size(); ++t)
    if (resolutions[t - 1] < 2 || (resolutions[t] - 1) % (resolutions[t - 1] - 1) != 0 ||
        resolutions[t] <= resolutions[t - 1])
      throw Error("each resolution must refine the previous one");
  CheckRecord c;
  c.name = "lipschitz_refinement";
  c.anchor = "u Lipschitz: max |grad u| stable under refinement";
  c.threshold = ratio_tol;
  const double prev = max_grads[max_grads.size() - 2];
  c.value = prev > 0.0 ? max_grads.back() / prev : (max_grads.back() > 0.0 ? kInf : 1.0);
  c.pass = c.value <= ratio_tol;
  for (std::size_t t = 0; t < resolutions.size(); ++t)
    c.extra.emplace_back("max_grad_" + std::to_string(resolutions[t]), max_grads[t]);
  return c;
}

FlatExponentResult check_flat_boundary_exponent(const Field& u, const FlatFace& face, double window,
                                                const PenaltyParams& p, double floor) {
  const Grid& g = u.grid;
  const double h = g.h;
  if (g.dim() != 2) throw Error("flat-face exponent needs a 2D grid");
  if (window < 8.0 * h) throw Error("window covers fewer than 8 nodes");
  if (face.half_length < 4.0 * window) throw Error("window too close to the ends of the face");
  const Vec2 n = face.normal.normalized();
  const Vec2 tan(-n.y(), n.x());

  auto side = [&](double sign) {
    SideExponent res;
    std::vector<RaySample> ray;
    struct Sample {
      double r;
      Vec2 g;
    };
    std::vector<Sample> cone;
    double scale = 0.0;
    const int i0 = std::max(1, static_cast<int>(std::floor((face.x0.x() - window - g.origin.x()) / h)));
    const int i1 = std::min(g.nx - 2, static_cast<int>(std::ceil((face.x0.x() + window - g.origin.x()) / h)));
    const int j0 = std::max(1, static_cast<int>(std::floor((face.x0.y() - window - g.origin.y()) / h)));
    const int j1 = std::min(g.ny - 2, static_cast<int>(std::ceil((face.x0.y() + window - g.origin.y()) / h)));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const Vec2 x = g.node(g.index(i, j));
        const double d = sign * (x - face.x0).dot(n);
        const double t = (x - face.x0).dot(tan);
        const double r = (x - face.x0).norm();
        if (d < h * (1.0 - 1e-9) || r > window || std::abs(t) > d + 1e-12) continue;
        // Stencil nodes off the face must be positive (this keeps the outer
        // window inside the positive phase).
        bool ok = true;
        for (const auto& [di, dj] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{-1, 0},
                                     std::pair{0, 1}, std::pair{0, -1}}) {
          const Vec2 y = g.node(g.index(i + di, j + dj));
          const double dy = sign * (y - face.x0).dot(n);
          if (dy > 1e-9 * h && !(u(i + di, j + dj) > p.pos_threshold)) ok = false;
        }
        if (!ok) continue;
        const Vec2 grad((u(i + 1, j) - u(i - 1, j)) / (2.0 * h),
                        (u(i, j + 1) - u(i, j - 1)) / (2.0 * h));
        scale = std::max(scale, grad.norm());
        cone.push_back({r, grad});
        if (std::abs(t) < 0.5 * h) ray.push_back({d, grad});
      }
    }
    std::sort(ray.begin(), ray.end(), [](const RaySample& a, const RaySample& b) { return a.d < b.d; });
    res.reference_gradient = extrapolate_to_face(ray);
    std::vector<double> lx, ly;
    const double floor_diff = 1e-9 * std::max(scale, 1e-300);
    for (const auto& s : cone) {
      const double diff = (s.g - res.reference_gradient).norm();
      if (diff > floor_diff) {
        lx.push_back(std::log(s.r));
        ly.push_back(std::log(diff));
      }
    }
    res.samples = static_cast<int>(cone.size());
    if (cone.empty()) throw Error("no admissible samples in the window");
    if (lx.size() < 8) {
      res.saturated = true;
      res.alpha = kInf;
    } else {
      res.alpha = slope_fit(lx, ly);
    }
    return res;
  };

  FlatExponentResult out;
  out.inner = side(-1.0);
  out.outer = side(1.0);
  CheckRecord& c = out.record;
  c.name = "flat_boundary_exponent";
  c.anchor = "grad u Hoelder-1/2 up to a flat piece of the boundary, each side";
  c.threshold = floor;
  c.value = std::min(out.inner.alpha, out.outer.alpha);
  c.pass = out.inner.alpha >= floor && out.outer.alpha >= floor;
  c.extra = {{"alpha_inner", out.inner.alpha},
             {"alpha_outer", out.outer.alpha},
             {"samples_inner", static_cast<double>(out.inner.samples)},
             {"samples_outer", static_cast<double>(out.outer.samples)}};
  if (out.inner.saturated) c.detail += "inner side saturated";
  if (out.outer.saturated) c.detail += std::string(c.detail.empty() ? "" : "; ") + "outer side saturated";
  return out;
}

CheckRecord check_euler_lagrange(const Field& u, const ObstaclePair& obstacles,
                                 const DomainMasks& masks, double solver_tol) {
  const Grid& g = u.grid;
  const auto& desc = obstacles.descriptor;
  const int dim = g.dim();
  std::array<Index, 4> nb{};
  std::vector<Index> interior;
  std::vector<Vec2> samples;
  double lap_max = 0.0;
  for (Index k = 0; k < g.size(); ++k) {
    if (!masks.in_d(k)) continue;
    samples.push_back(g.node(k));
    const int n = g.neighbors(k, nb);
    bool inner = n == (dim == 1 ? 2 : 4);
    for (int t = 0; t < n && inner; ++t) inner = masks.in_d(nb[t]);
    if (!inner) continue;
    interior.push_back(k);
    lap_max = std::max({lap_max, std::abs(desc.laplacian_phi(g.node(k), dim)),
                        std::abs(desc.laplacian_psi(g.node(k), dim))});
  }
  const double tol_c = std::max(10.0 * g.h * g.h * lap_max, 1e-9 * obstacles.sup_phi);

  enum Class { kBoth, kLower, kUpper, kFree, kClasses };
  std::array<double, kClasses> max_res{}, count{};
  double l1 = 0.0;
  for (Index k : interior) {
    const Vec2 x = g.node(k);
    const double lphi = desc.laplacian_phi(x, dim), lpsi = desc.laplacian_psi(x, dim);
    const bool at_lo = std::abs(u[k] - obstacles.phi[k]) <= tol_c;
    const bool at_hi = std::abs(u[k] - obstacles.psi[k]) <= tol_c;
    Class cls = kFree;
    double rhs = 0.0;
    if (at_lo && at_hi) {
      cls = kBoth;
      rhs = lphi;
    } else if (at_lo) {
      cls = kLower;
      rhs = lphi;
    } else if (at_hi) {
      cls = kUpper;
      rhs = lpsi;
    }
    const double res = std::abs(laplacian_at(u, k) - rhs);
    max_res[cls] = std::max(max_res[cls], res);
    count[cls] += 1.0;
    l1 += res * g.cell_volume();
  }
  CheckRecord c;
  c.name = "euler_lagrange";
  c.anchor = "Delta u = Delta phi on {u = phi}, Delta psi on {u = psi}, 0 elsewhere in D";
  c.value = l1;
  c.threshold = 10.0 * g.h * desc.c2_norm(samples, dim) + solver_tol;
  c.pass = l1 <= c.threshold;
  c.extra = {{"l1_residual", l1},
             {"max_residual_both", max_res[kBoth]},
             {"max_residual_lower", max_res[kLower]},
             {"max_residual_upper", max_res[kUpper]},
             {"max_residual_free", max_res[kFree]},
             {"nodes_both", count[kBoth]},
             {"nodes_lower", count[kLower]},
             {"nodes_upper", count[kUpper]},
             {"nodes_free", count[kFree]},
             {"coincidence_tol", tol_c}};
  return c;
}

PropertyReport verify_solution(const DomainMasks& masks, const ObstaclePair& obstacles,
                               const PenaltyParams& p, const SolveResult& result) {
  PropertyReport rep;
  const double sup_phi = obstacles.sup_phi;
  rep.checks.push_back(check_max_principle(result.u, sup_phi));
  rep.checks.push_back(check_harmonicity(result.u, masks, p, sup_phi));
  rep.checks.push_back(check_volume_bound(result.exterior_volume, p, result.m_probe));
  rep.checks.push_back(check_euler_lagrange(result.u, obstacles, masks));

  {
    CheckRecord c;
    c.name = "descent_monotone";
    c.anchor = "objective non-increasing along accepted iterates";
    c.value = result.max_objective_increase;
    c.threshold = 1e-12;
    c.pass = c.value <= c.threshold;
    c.extra = {{"max_bound_violation", result.max_bound_violation},
               {"iterations", static_cast<double>(result.iterations)}};
    rep.checks.push_back(c);
  }
  {
    CheckRecord c;
    c.name = "iterate_bounds";
    c.anchor = "0 <= u <= sup_D phi at every iterate";
    c.value = result.max_bound_violation;
    c.threshold = 1e-8;
    c.pass = c.value <= c.threshold;
    rep.checks.push_back(c);
  }

  if (masks.grid.dim() == 2) {
    const double h = masks.grid.h;
    const auto clear = clearance_check(result.u, masks, p, 2.0 * h);
    CheckRecord c;
    c.name = "clearance";
    c.anchor = "u > 0 on a collar around D";
    c.value = clear.collar_nodes > 0 ? clear.min_value : 0.0;
    c.threshold = p.pos_threshold;
    c.pass = clear.pass;
    c.extra = {{"delta", 2.0 * h}, {"collar_nodes", static_cast<double>(clear.collar_nodes)}};
    if (!clear.pass) c.detail = "minimum at " + at_node(masks.grid, clear.worst);
    rep.checks.push_back(c);

    const auto fb = extract_free_boundary(result.u, masks, p);
    CheckRecord f;
    f.name = "free_boundary";
    f.anchor = "free boundary extracted with constant gradient jump";
    f.threshold = 0.10;
    if (fb.sample_count() == 0 || fb.status != FreeBoundary::Status::kOk) {
      f.pass = false;
      f.detail = std::string("status ") + status_name(fb.status);
    } else {
      const auto lam = estimate_lambda(result.u, fb, p);
      f.value = lam.cv;
      f.pass = lam.cv <= f.threshold;
      f.extra = {{"lambda_mean", lam.mean},
                 {"lambda_cv", lam.cv},
                 {"lambda_skipped", static_cast<double>(lam.skipped)},
                 {"length", fb.length},
                 {"chains", static_cast<double>(fb.chains.size())},
                 {"support_radius", support_radius(result.u, p)}};
    }
    rep.checks.push_back(f);

    // Nondegeneracy and density constants are existence statements; the
    // empirical constants are recorded and only positivity is required.
    const auto nd = nondegeneracy_scan(result.u, masks, p, 0.01);
    CheckRecord n;
    n.name = "nondegeneracy";
    n.anchor = "small averages force u = 0 on the half ball";
    n.value = nd.critical_constant;
    n.threshold = 0.0;
    n.pass = nd.critical_constant > 0.0;
    n.extra = {{"balls", static_cast<double>(nd.balls)},
               {"violations_at_0.01", static_cast<double>(nd.violations.size())}};
    rep.checks.push_back(n);

    const auto dens = density_scan(result.u, masks, p);
    CheckRecord d;
    d.name = "positive_density";
    d.anchor = "{u > 0} has positive density at its points";
    d.value = dens.min_ratio;
    d.threshold = 0.0;
    d.pass = dens.min_ratio > 0.0;
    d.extra = {{"balls", static_cast<double>(dens.balls)}};
    rep.checks.push_back(d);
  }
  return rep;
}

}  // namespace heatopt
