#include "heatopt/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include "heatopt/error.hpp"

namespace heatopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string node_name(const Grid& g, Index k) {
  std::ostringstream os;
  os << "node (" << g.ix(k) << ", " << g.iy(k) << ")";
  return os.str();
}

// Neighbor list of one node, precomputed so the sweeps avoid index arithmetic.
struct Stencil {
  Index k = 0;
  int n = 0;
  std::array<Index, 4> nb{};
};

std::vector<Stencil> build_stencils(const Grid& g, const std::vector<Index>& nodes) {
  std::vector<Stencil> out(nodes.size());
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    out[t].k = nodes[t];
    out[t].n = g.neighbors(nodes[t], out[t].nb);
  }
  return out;
}

double neighbor_sum(const Field& u, const Stencil& s) {
  double acc = 0.0;
  for (int t = 0; t < s.n; ++t) acc += u[s.nb[t]];
  return acc;
}

double sor_factor(double nodes_across) {
  return 2.0 / (1.0 + std::sin(std::numbers::pi / std::max(nodes_across, 2.0)));
}

int region_extent(const Grid& g, const std::vector<Index>& nodes) {
  int i0 = g.nx, i1 = -1, j0 = g.ny, j1 = -1;
  for (Index k : nodes) {
    i0 = std::min(i0, g.ix(k));
    i1 = std::max(i1, g.ix(k));
    j0 = std::min(j0, g.iy(k));
    j1 = std::max(j1, g.iy(k));
  }
  return std::max(i1 - i0, j1 - j0) + 1;
}

// Box constraints used by the penalized solver. On D the upper bound is
// min(psi, sup phi): minimizers never exceed sup phi, so this loses nothing.
struct Box {
  Field lo;
  Field hi;
};

Box solver_box(const DomainMasks& masks, const ObstaclePair& obs) {
  const Grid& g = masks.grid;
  Box b{Field(g), Field(g)};
  for (Index k = 0; k < g.size(); ++k) {
    if (masks.in_d(k)) {
      b.lo[k] = obs.phi[k];
      b.hi[k] = std::max(obs.phi[k], std::min(obs.psi[k], obs.sup_phi));
    } else if (masks.in_omega(k)) {
      b.hi[k] = obs.sup_phi;
    }
  }
  return b;
}

}  // namespace

void SolveParams::validate() const {
  if (max_iters < 1) throw Error("max_iters must be positive");
  if (!(tol > 0.0) || !(stage_tol > 0.0)) throw Error("tolerance must be positive");
  if (!(update_tol > 0.0) || !(stage_update_tol > 0.0)) throw Error("update tolerance must be positive");
  for (std::size_t t = 0; t < tau_schedule.size(); ++t) {
    if (!(tau_schedule[t] > 0.0)) throw Error("tau schedule must be positive");
    if (t > 0 && !(tau_schedule[t] < tau_schedule[t - 1]))
      throw Error("tau schedule must be strictly decreasing");
  }
  if (kink_smoothing < 0.0) throw Error("kink_smoothing must be non-negative");
  if (omega != 0.0 && !(omega > 0.0 && omega < 2.0)) throw Error("omega must lie in (0, 2)");
  if (step < 0.0) throw Error("step must be non-negative");
  if (!(armijo > 0.0 && armijo < 1.0)) throw Error("armijo constant must lie in (0, 1)");
  if (init_noise < 0.0) throw Error("init_noise must be non-negative");
}

Field project_admissible(const Field& u, const DomainMasks& masks, const ObstaclePair& obstacles) {
  Field out(u.grid);
  for (Index k = 0; k < u.size(); ++k) {
    if (masks.in_d(k)) {
      out[k] = std::clamp(u[k], obstacles.phi[k], std::max(obstacles.phi[k], obstacles.psi[k]));
    } else if (masks.in_omega(k)) {
      out[k] = std::clamp(u[k], 0.0, obstacles.sup_phi);
    }
  }
  return out;
}

ObstacleSolveResult solve_double_obstacle(const Mask& region, const Field& lower,
                                          const Field& upper, const Field& boundary,
                                          const ObstacleSolveOptions& opt) {
  const Grid& g = boundary.grid;
  if (static_cast<Index>(region.size()) != g.size() || lower.size() != g.size() ||
      upper.size() != g.size())
    throw Error("obstacle solve: field sizes differ");
  std::vector<Index> nodes;
  double scale = 0.0;
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    if (!region[k]) continue;
    if (lower[k] > upper[k]) throw Error("infeasible obstacles at " + node_name(g, k));
    nodes.push_back(k);
    // Data scale: bordering values and the clamped initial guess. Far-away
    // sentinel bounds such as +-1e6 must not loosen the stopping test.
    scale = std::max(scale, std::abs(std::clamp(boundary[k], lower[k], upper[k])));
    const int n = g.neighbors(k, nb);
    for (int t = 0; t < n; ++t)
      if (!region[nb[t]]) scale = std::max(scale, std::abs(boundary[nb[t]]));
  }
  if (!std::isfinite(scale)) throw Error("obstacle solve: non-finite boundary data");
  if (scale == 0.0) scale = 1.0;

  ObstacleSolveResult res;
  res.u = boundary;
  for (Index k : nodes) res.u[k] = std::clamp(res.u[k], lower[k], upper[k]);
  if (nodes.empty()) {
    res.converged = true;
    return res;
  }
  const auto stencils = build_stencils(g, nodes);
  const double omega = opt.omega > 0.0 ? opt.omega : sor_factor(region_extent(g, nodes));
  Field& u = res.u;
  for (res.sweeps = 1; res.sweeps <= opt.max_sweeps; ++res.sweeps) {
    double change = 0.0;
    for (const Stencil& s : stencils) {
      const double old = u[s.k];
      const double gs = neighbor_sum(u, s) / s.n;
      const double v = std::clamp(old + omega * (gs - old), lower[s.k], upper[s.k]);
      change = std::max(change, std::abs(v - old));
      u[s.k] = v;
    }
    if (change <= opt.tol * scale) {
      res.converged = true;
      break;
    }
  }
  res.sweeps = std::min(res.sweeps, opt.max_sweeps);
  const double inv_h2 = 1.0 / (g.h * g.h);
  const double touch = 1e-12 * scale;
  for (const Stencil& s : stencils) {
    const double v = u[s.k];
    if (v - lower[s.k] <= touch || upper[s.k] - v <= touch) continue;
    res.residual = std::max(res.residual, std::abs((neighbor_sum(u, s) - s.n * v) * inv_h2));
  }
  return res;
}

ObstacleSolveResult harmonic_extension(const Mask& region, const Field& boundary,
                                       const ObstacleSolveOptions& opt) {
  const Grid& g = boundary.grid;
  if (static_cast<Index>(region.size()) != g.size())
    throw Error("harmonic extension: mask size differs from grid");
  std::vector<int> comp(static_cast<std::size_t>(g.size()), -1);
  std::array<Index, 4> nb{};
  int next = 0;
  for (Index k0 = 0; k0 < g.size(); ++k0) {
    if (!region[k0] || comp[k0] >= 0) continue;
    bool has_boundary = false;
    std::vector<Index> stack{k0};
    comp[k0] = next;
    while (!stack.empty()) {
      const Index k = stack.back();
      stack.pop_back();
      const int n = g.neighbors(k, nb);
      for (int t = 0; t < n; ++t) {
        const Index q = nb[t];
        if (!region[q]) {
          has_boundary = true;
        } else if (comp[q] < 0) {
          comp[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (!has_boundary)
      throw Error("region component containing " + node_name(g, k0) + " has no boundary data");
    ++next;
  }
  const Field lo(g, -kInf);
  const Field hi(g, kInf);
  return solve_double_obstacle(region, lo, hi, boundary, opt);
}

Field initial_field(const DomainMasks& masks, const ObstaclePair& obstacles, double mu) {
  const Grid& g = masks.grid;
  const Box box = solver_box(masks, obstacles);

  Mask in_d(static_cast<std::size_t>(g.size()), 0);
  Field data(g);
  for (Index k = 0; k < g.size(); ++k) {
    if (masks.in_d(k)) {
      in_d[k] = box.lo[k] < box.hi[k];
      data[k] = std::clamp(0.5 * (obstacles.phi[k] + obstacles.psi[k]), box.lo[k], box.hi[k]);
    } else if (masks.kind[k] == NodeKind::kBand) {
      data[k] = 0.5 * (obstacles.phi[k] + obstacles.psi[k]);
    }
  }
  Field v0 = solve_double_obstacle(in_d, box.lo, box.hi, data).u;

  const auto dist = distance_to_d(masks);
  std::vector<Index> omega;
  for (Index k = 0; k < g.size(); ++k)
    if (masks.in_omega(k)) omega.push_back(k);
  // Distances are compared on a 1e-7 h lattice so that ties broken by
  // coordinate round-off (which depends on the grid origin) go to index order.
  const double quantum = 1e-7 * g.h;
  auto key = [&](Index k) {
    return std::isfinite(dist[k]) ? std::llround(dist[k] / quantum)
                                  : std::numeric_limits<long long>::max();
  };
  std::stable_sort(omega.begin(), omega.end(), [&](Index a, Index b) { return key(a) < key(b); });
  const auto take = std::min<std::size_t>(
      omega.size(), static_cast<std::size_t>(std::floor(mu / g.cell_volume() + 1e-9)));

  Mask fill(static_cast<std::size_t>(g.size()), 0);
  Field w0(g);
  for (Index k = 0; k < g.size(); ++k)
    if (masks.in_d(k)) w0[k] = v0[k];
  for (std::size_t t = 0; t < take; ++t) fill[omega[t]] = 1;
  // Nodes of the fill set that cannot reach D would be flagged by the
  // component check; they simply get zero data around them instead.
  w0 = harmonic_extension(fill, w0).u;
  return project_admissible(w0, masks, obstacles);
}

namespace {

// One Omega_R node viewed as a function of its own value with everything else frozen:
//   g(v) = A (v - m)^2 + F(V0 + w H(v)),
// H the ramp of width tau (tau > 0) or the indicator of v > thr (tau == 0).
struct NodeObjective {
  double A = 0.0;
  double m = 0.0;
  double V0 = 0.0;
  double w = 0.0;
  double tau = 0.0;
  double thr = 0.0;
  double sigma = 0.0;
  double upper = 0.0;
  const PenaltyParams* p = nullptr;

  double H(double v) const { return tau > 0.0 ? ramp(v, tau) : (v > thr ? 1.0 : 0.0); }
  double operator()(double v) const {
    return A * (v - m) * (v - m) + f_eps_blend(V0 + w * H(v), *p, sigma);
  }

  // Sharp stage: admissible values are {0} and (thr, upper].
  double argmin_sharp() const {
    if (m <= thr) return 0.0;
    const double pos = std::min(m, upper);
    return (*this)(pos) < (*this)(0.0) ? pos : 0.0;
  }

  // Smoothed stage: g is a convex quadratic between consecutive breakpoints.
  double argmin_smooth() const {
    std::array<double, 6> bp{};
    int n = 0;
    bp[n++] = 0.0;
    const double top = std::min(tau, upper);
    auto add = [&](double v) {
      if (v > 0.0 && v < top) bp[n++] = v;
    };
    add((p->mu - sigma - V0) * tau / w);
    if (sigma > 0.0) add((p->mu + sigma - V0) * tau / w);
    bp[n++] = top;
    if (upper > top) bp[n++] = upper;
    std::sort(bp.begin(), bp.begin() + n);

    const double kappa = sigma > 0.0 ? (1.0 / p->eps - p->eps) / (4.0 * sigma) : 0.0;
    double best_v = 0.0;
    double best_g = (*this)(0.0);
    for (int t = 0; t + 1 < n; ++t) {
      const double a = bp[t];
      const double b = bp[t + 1];
      if (!(b > a)) continue;
      const double mid = 0.5 * (a + b);
      const bool on_ramp = mid < tau;
      const double s = on_ramp ? w / tau : 0.0;
      const double t0 = on_ramp ? V0 : V0 + w;
      const double tm = t0 + s * mid;
      double v;
      if (sigma > 0.0 && std::abs(tm - p->mu) < sigma) {
        v = (2.0 * A * m - s * (p->eps + 2.0 * kappa * (t0 - p->mu + sigma))) /
            (2.0 * A + 2.0 * kappa * s * s);
      } else {
        const double slope = tm <= p->mu ? p->eps : 1.0 / p->eps;
        v = m - s * slope / (2.0 * A);
      }
      v = std::clamp(v, a, b);
      const double gv = (*this)(v);
      if (gv < best_g) {
        best_g = gv;
        best_v = v;
      }
    }
    return best_v;
  }
};

class PenalizedSolver {
 public:
  PenalizedSolver(const DomainMasks& masks, const ObstaclePair& obs, const PenaltyParams& p,
                  const SolveParams& sp)
      : masks_(masks), g_(masks.grid), p_(p), sp_(sp), obs_(obs), box_(solver_box(masks, obs)),
        upper_(obs.sup_phi) {
    w_ = g_.cell_volume();
    hpow_ = g_.dim() == 1 ? 1.0 / g_.h : 1.0;
    std::vector<Index> d_nodes, o_nodes;
    for (Index k = 0; k < g_.size(); ++k) {
      if (masks.in_d(k) && box_.lo[k] < box_.hi[k]) d_nodes.push_back(k);
      if (masks.in_omega(k)) o_nodes.push_back(k);
    }
    // Interleave by index so the sweep is lexicographic over all free nodes.
    std::vector<Index> all = d_nodes;
    all.insert(all.end(), o_nodes.begin(), o_nodes.end());
    std::sort(all.begin(), all.end());
    stencils_ = build_stencils(g_, all);
    is_omega_.resize(stencils_.size());
    for (std::size_t t = 0; t < stencils_.size(); ++t) is_omega_[t] = masks.in_omega(stencils_[t].k);
    omega_count_ = static_cast<Index>(o_nodes.size());

    if (sp.omega > 0.0) {
      sor_ = sp.omega;
    } else {
      // Width of the positive phase next to D, in nodes: the annulus of area mu
      // around a disk of the same area as D.
      const double area_d = std::max(masks.d_measure, w_);
      double width;
      if (g_.dim() == 1) {
        width = p.mu / 2.0;
      } else {
        const double r0 = std::sqrt(area_d / std::numbers::pi);
        width = std::sqrt(r0 * r0 + p.mu / std::numbers::pi) - r0;
      }
      sor_ = sor_factor(2.0 * width / g_.h);
    }
  }

  SolveResult run(const std::optional<Field>& warm_start) {
    SolveResult res;
    Field w0 = initial_field(masks_, obs_, p_.mu);
    res.m_probe = penalized_energy(w0, masks_, p_).value;
    u_ = warm_start ? clamp_box(*warm_start) : clamp_box(w0);
    add_noise();

    std::vector<double> schedule = sp_.tau_schedule;
    if (schedule.empty())
      for (int k = 3; k <= 12; ++k) schedule.push_back(upper_ * std::ldexp(1.0, -k));
    const bool gradient = sp_.step_rule != StepRule::kCoordinate;
    const bool sharp = sp_.exact_stage && !gradient;

    bool last_ok = false;
    for (std::size_t s = 0; s < schedule.size(); ++s) {
      const bool final_stage = !sharp && s + 1 == schedule.size();
      const double tau = schedule[s];
      const double sigma = final_stage ? 0.0 : sp_.kink_smoothing * p_.mu * tau / upper_;
      last_ok = gradient ? gradient_stage(res, static_cast<int>(s), tau, sigma, final_stage)
                         : coordinate_stage(res, static_cast<int>(s), tau, sigma, final_stage);
    }
    int stage = static_cast<int>(schedule.size());
    if (sharp) {
      last_ok = coordinate_stage(res, stage++, 0.0, 0.0, true);
      // Lattice pinning can leave the continuation in a faceted local minimum.
      // A second sharp descent from the comparison function is cheap; the
      // lower of the two end points is returned.
      const Field first = u_;
      const double j_first = penalized_energy(u_, masks_, p_).value;
      u_ = clamp_box(w0);
      const bool ok = coordinate_stage(res, stage++, 0.0, 0.0, true);
      if (!(penalized_energy(u_, masks_, p_).value < j_first)) {
        u_ = first;
      } else {
        last_ok = ok;
      }
    }
    res.stages = stage;

    if (omega_count_ <= sp_.refine_max_nodes) support_search(res);

    res.u = u_;
    const auto e = penalized_energy(u_, masks_, p_);
    res.energy = e.dirichlet;
    res.penalized_energy = e.value;
    res.exterior_volume = e.volume;
    res.converged = last_ok;
    return res;
  }

 private:
  Field clamp_box(const Field& in) const {
    Field out(g_);
    for (Index k = 0; k < g_.size(); ++k)
      out[k] = masks_.outside(k) ? 0.0 : std::clamp(in[k], box_.lo[k], box_.hi[k]);
    return out;
  }

  void add_noise() {
    if (sp_.init_noise <= 0.0) return;
    std::mt19937_64 rng(sp_.seed);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    for (const Stencil& s : stencils_) {
      if (!masks_.in_omega(s.k) || u_[s.k] <= p_.pos_threshold) continue;
      u_[s.k] = std::clamp(u_[s.k] * (1.0 + sp_.init_noise * U(rng)), 0.0, upper_);
    }
  }

  double indicator(double v, double tau) const {
    return tau > 0.0 ? ramp(v, tau) : (v > p_.pos_threshold ? 1.0 : 0.0);
  }

  double stage_volume(const Field& u, double tau) const {
    double acc = 0.0;
    for (Index k = 0; k < g_.size(); ++k)
      if (masks_.in_omega(k)) acc += indicator(u[k], tau);
    return acc * w_;
  }

  double stage_objective(const Field& u, double tau, double sigma) const {
    return dirichlet_energy(u) + f_eps_blend(stage_volume(u, tau), p_, sigma);
  }

  void record(SolveResult& res, int stage, double tau, double objective) {
    ++res.iterations;
    const double lo = u_.values.minCoeff();
    const double hi = u_.values.maxCoeff();
    res.max_bound_violation =
        std::max({res.max_bound_violation, -lo / upper_, (hi - upper_) / upper_, 0.0});
    if (!res.history.empty() && res.history.back().stage == stage) {
      const double prev = res.history.back().objective;
      res.max_objective_increase = std::max(
          res.max_objective_increase, (objective - prev) / std::max(1.0, std::abs(prev)));
    }
    if (!sp_.record_history && !res.history.empty()) {
      res.history.back().stage = stage;
      res.history.back().objective = objective;
      return;
    }
    HistoryEntry h;
    h.iteration = res.iterations;
    h.stage = stage;
    h.tau = tau;
    const auto e = penalized_energy(u_, masks_, p_);
    h.dirichlet = e.dirichlet;
    h.objective = objective;
    h.penalized = e.value;
    h.volume = e.volume;
    res.history.push_back(h);
  }

  NodeObjective node_objective(double tau, double sigma) const {
    NodeObjective g;
    g.w = w_;
    g.tau = tau;
    g.thr = p_.pos_threshold;
    g.sigma = sigma;
    g.upper = upper_;
    g.p = &p_;
    return g;
  }

  struct SweepStats {
    double decrease = 0.0;
    double change = 0.0;
  };

  // One lexicographic pass; every accepted nodal update lowers the stage objective.
  SweepStats sweep(double tau, double sigma) {
    NodeObjective g = node_objective(tau, sigma);
    SweepStats st;
    double volume = stage_volume(u_, tau);
    for (std::size_t t = 0; t < stencils_.size(); ++t) {
      const Stencil& s = stencils_[t];
      const double old = u_[s.k];
      const double sum = neighbor_sum(u_, s);
      if (is_omega_[t] && old == 0.0 && sum == 0.0) continue;
      const double m = sum / s.n;
      const double A = s.n * hpow_;
      if (!is_omega_[t]) {
        const double lo = box_.lo[s.k], hi = box_.hi[s.k];
        const double gs = std::clamp(m, lo, hi);
        double v = std::clamp(old + sor_ * (gs - old), lo, hi);
        double dec = A * ((old - m) * (old - m) - (v - m) * (v - m));
        if (!(dec > 0.0)) {
          v = gs;
          dec = A * ((old - m) * (old - m) - (v - m) * (v - m));
        }
        if (dec > 0.0) {
          u_[s.k] = v;
          st.decrease += dec;
          st.change = std::max(st.change, std::abs(v - old));
        }
        continue;
      }
      g.A = A;
      g.m = m;
      g.V0 = volume - w_ * indicator(old, tau);
      const double gs = tau > 0.0 ? g.argmin_smooth() : g.argmin_sharp();
      double v = std::clamp(old + sor_ * (gs - old), 0.0, upper_);
      if (tau == 0.0 && v <= p_.pos_threshold) v = 0.0;
      const double g_old = g(old);
      double g_new = g(v);
      if (!(g_new < g_old)) {
        v = gs;
        g_new = g(v);
      }
      if (g_new < g_old) {
        u_[s.k] = v;
        volume = g.V0 + w_ * indicator(v, tau);
        st.decrease += g_old - g_new;
        st.change = std::max(st.change, std::abs(v - old));
      }
    }
    return st;
  }

  // Sweeps until converged. With `res` the iterates are recorded; without it
  // the relaxation is a trial whose outcome the caller may discard.
  bool relax(SolveResult* res, int stage, double tau, double sigma, double tol, double utol,
             double& objective) {
    for (int it = 0; it < sp_.max_iters; ++it) {
      const SweepStats st = sweep(tau, sigma);
      objective = stage_objective(u_, tau, sigma);
      if (res) record(*res, stage, tau, objective);
      if (st.decrease <= tol * std::max(1.0, std::abs(objective)) && st.change <= utol) return true;
    }
    return false;
  }

  bool coordinate_stage(SolveResult& res, int stage, double tau, double sigma, bool final_stage) {
    const double tol = final_stage ? sp_.tol : sp_.stage_tol;
    const double utol = (final_stage ? sp_.update_tol : sp_.stage_update_tol) * upper_;

    // Values stranded in (0, thr] are not admissible in the sharp stage.
    if (tau == 0.0)
      for (Index k = 0; k < g_.size(); ++k)
        if (masks_.in_omega(k) && u_[k] <= p_.pos_threshold) u_[k] = 0.0;

    double objective = stage_objective(u_, tau, sigma);
    record(res, stage, tau, objective);
    bool ok = relax(&res, stage, tau, sigma, tol, utol, objective);
    if (tau == 0.0 && ok) ok = exchange_moves(res, stage, tol, utol, objective);
    return ok;
  }

  // Volume-preserving support exchanges for the sharp stage. Single-node
  // sweeps cannot move the free boundary once the volume sits at mu: adding a
  // node costs h^d / eps while dropping one saves only eps h^d. A batch of
  // pairs (drop a cheap boundary node, add the exterior node with the largest
  // local gain) is tried, relaxed, and kept only if the objective drops.
  bool exchange_moves(SolveResult& res, int stage, double tol, double utol, double& objective) {
    const double thr = p_.pos_threshold;
    struct Scored {
      double score;
      Index k;
    };
    std::array<Index, 4> nb{};
    Mask blocked(static_cast<std::size_t>(g_.size()), 0);
    int batch = -1;
    for (int pass = 0; pass < 100000; ++pass) {
      std::vector<Scored> drop, add;
      for (std::size_t t = 0; t < stencils_.size(); ++t) {
        if (!is_omega_[t]) continue;
        const Stencil& s = stencils_[t];
        const double u = u_[s.k];
        bool next_to_zero = false, next_to_pos = false;
        for (int q = 0; q < s.n; ++q) {
          const Index j = s.nb[q];
          if (masks_.in_omega(j) && u_[j] == 0.0) next_to_zero = true;
          if (u_[j] > thr) next_to_pos = true;
        }
        const double m = neighbor_sum(u_, s) / s.n;
        const double A = s.n * hpow_;
        if (u > thr && next_to_zero) drop.push_back({A * (m * m - (u - m) * (u - m)), s.k});
        if (u == 0.0 && next_to_pos && m > thr) add.push_back({A * m * m, s.k});
      }
      auto by_score = [](const Scored& a, const Scored& b) {
        return a.score < b.score || (a.score == b.score && a.k < b.k);
      };
      std::sort(drop.begin(), drop.end(), by_score);
      std::sort(add.begin(), add.end(),
                [&](const Scored& a, const Scored& b) { return by_score(b, a); });
      if (batch < 0) batch = std::max<int>(1, static_cast<int>(drop.size()) / 4);

      std::fill(blocked.begin(), blocked.end(), 0);
      auto block = [&](Index k) {
        blocked[k] = 1;
        const int n = g_.neighbors(k, nb);
        for (int q = 0; q < n; ++q) blocked[nb[q]] = 1;
      };
      std::vector<std::pair<Index, Index>> pairs;
      std::size_t id = 0, ia = 0;
      while (static_cast<int>(pairs.size()) < batch && id < drop.size() && ia < add.size()) {
        if (blocked[drop[id].k]) {
          ++id;
          continue;
        }
        if (blocked[add[ia].k]) {
          ++ia;
          continue;
        }
        if (!(add[ia].score > drop[id].score)) break;
        pairs.emplace_back(drop[id].k, add[ia].k);
        block(drop[id].k);
        block(add[ia].k);
        ++id;
        ++ia;
      }
      if (pairs.empty()) return true;

      const Field saved = u_;
      const double before = objective;
      for (const auto& [r, a] : pairs) {
        u_[r] = 0.0;
        std::array<Index, 4> nba{};
        const int n = g_.neighbors(a, nba);
        double sum = 0.0;
        for (int q = 0; q < n; ++q) sum += u_[nba[q]];
        u_[a] = std::max(sum / n, 2.0 * thr);
      }
      double trial = stage_objective(u_, 0.0, 0.0);
      const bool ok = relax(nullptr, stage, 0.0, 0.0, sp_.stage_tol, sp_.stage_update_tol * upper_, trial);
      if (ok && trial < before - 1e-15 * std::max(1.0, std::abs(before))) {
        record(res, stage, 0.0, trial);
        objective = trial;
        if (!relax(&res, stage, 0.0, 0.0, tol, utol, objective)) return false;
        batch = std::min<int>(2 * batch, std::max<int>(1, static_cast<int>(drop.size()) / 4));
      } else {
        u_ = saved;
        objective = before;
        if (batch == 1) return true;
        batch /= 2;
      }
    }
    return true;
  }

  bool gradient_stage(SolveResult& res, int stage, double tau, double sigma, bool final_stage) {
    const double tol = final_stage ? sp_.tol : sp_.stage_tol;
    const double utol = (final_stage ? sp_.update_tol : sp_.stage_update_tol) * upper_;
    PenaltyParams pt = p_;
    pt.tau = tau;
    const double h2 = g_.h * g_.h;
    const bool backtrack = sp_.step_rule == StepRule::kBacktracking;
    const double step0 = sp_.step > 0.0 ? sp_.step : (backtrack ? h2 / 4.0 : h2 / 16.0);

    double objective = stage_objective(u_, tau, sigma);
    record(res, stage, tau, objective);
    for (int it = 0; it < sp_.max_iters; ++it) {
      Field d = descent_direction(u_, masks_, pt, sigma);
      // On the constraint u >= 0 the ramp contributes its right derivative at 0.
      const double vol = smoothed_volume(u_, masks_, pt);
      const double jump = f_eps_blend_slope(vol, pt, sigma) / tau;
      for (const Stencil& s : stencils_)
        if (masks_.in_omega(s.k) && u_[s.k] <= 0.0) d[s.k] -= jump;
      double step = step0;
      Field trial(g_);
      double f_trial = 0.0;
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        trial = u_;
        for (const Stencil& s : stencils_)
          trial[s.k] = std::clamp(u_[s.k] + step * d[s.k], box_.lo[s.k], box_.hi[s.k]);
        f_trial = stage_objective(trial, tau, sigma);
        if (!backtrack) {
          accepted = f_trial <= objective;
          break;
        }
        // Projected Armijo: F(u+) <= F(u) + c <grad F, u+ - u>, grad F = -d.
        double slope = 0.0;
        for (const Stencil& s : stencils_) slope -= d[s.k] * (trial[s.k] - u_[s.k]);
        slope *= w_;
        if (f_trial <= objective + sp_.armijo * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) return false;
      double change = 0.0;
      for (const Stencil& s : stencils_) change = std::max(change, std::abs(trial[s.k] - u_[s.k]));
      const double decrease = objective - f_trial;
      u_ = trial;
      objective = f_trial;
      record(res, stage, tau, objective);
      if (decrease <= tol * std::max(1.0, std::abs(objective)) && change <= utol) return true;
    }
    return false;
  }

  // Minimizer of the Dirichlet energy with u = 0 on Omega_R off `support`.
  Field restricted_solve(const Mask& support) const {
    Mask region(static_cast<std::size_t>(g_.size()), 0);
    Field data(g_);
    for (Index k = 0; k < g_.size(); ++k) {
      if (masks_.in_d(k)) {
        region[k] = box_.lo[k] < box_.hi[k];
        data[k] = std::clamp(u_[k], box_.lo[k], box_.hi[k]);
      } else if (support[k]) {
        region[k] = 1;
        data[k] = std::max(u_[k], 0.0);
      }
    }
    ObstacleSolveOptions opt;
    opt.tol = 1e-15;
    Field v = solve_double_obstacle(region, box_.lo, box_.hi, data, opt).u;
    for (Index k = 0; k < g_.size(); ++k)
      if (masks_.in_omega(k) && v[k] <= p_.pos_threshold) v[k] = 0.0;
    return v;
  }

  // Local search over positive supports: add a node next to the support or D,
  // drop a node, or swap one for another. Each candidate is scored with the
  // sharp functional after an exact restricted solve.
  void support_search(SolveResult& res) {
    Mask support(static_cast<std::size_t>(g_.size()), 0);
    for (Index k = 0; k < g_.size(); ++k)
      support[k] = masks_.in_omega(k) && u_[k] > p_.pos_threshold;
    double best = penalized_energy(u_, masks_, p_).value;
    {
      Field v = restricted_solve(support);
      const double j = penalized_energy(v, masks_, p_).value;
      if (j <= best) {
        best = j;
        u_ = v;
      }
    }
    const int stage = res.history.empty() ? 0 : res.history.back().stage;
    std::array<Index, 4> nb{};
    for (int round = 0; round < 10000; ++round) {
      std::vector<Index> in, out;
      for (Index k = 0; k < g_.size(); ++k) {
        if (!masks_.in_omega(k)) continue;
        if (support[k]) {
          in.push_back(k);
          continue;
        }
        const int n = g_.neighbors(k, nb);
        for (int t = 0; t < n; ++t) {
          if (support[nb[t]] || masks_.in_d(nb[t])) {
            out.push_back(k);
            break;
          }
        }
      }
      std::vector<std::pair<Index, Index>> moves;  // (drop, add); -1 means none
      for (Index a : out) moves.emplace_back(-1, a);
      for (Index r : in) moves.emplace_back(r, -1);
      for (Index r : in)
        for (Index a : out) moves.emplace_back(r, a);

      double cand_best = best;
      Field cand_field;
      std::pair<Index, Index> cand_move{-1, -1};
      for (const auto& mv : moves) {
        Mask trial = support;
        if (mv.first >= 0) trial[mv.first] = 0;
        if (mv.second >= 0) trial[mv.second] = 1;
        Field v = restricted_solve(trial);
        const double j = penalized_energy(v, masks_, p_).value;
        if (j < cand_best - 1e-14 * std::max(1.0, std::abs(cand_best))) {
          cand_best = j;
          cand_field = std::move(v);
          cand_move = mv;
        }
      }
      if (cand_move.first < 0 && cand_move.second < 0) break;
      best = cand_best;
      u_ = cand_field;
      for (Index k = 0; k < g_.size(); ++k)
        support[k] = masks_.in_omega(k) && u_[k] > p_.pos_threshold;
      ++res.support_moves;
      record(res, stage, 0.0, best);
    }
  }

  const DomainMasks& masks_;
  const Grid& g_;
  const PenaltyParams& p_;
  const SolveParams& sp_;
  const ObstaclePair& obs_;
  Box box_;
  double upper_ = 0.0;
  double w_ = 0.0;
  double hpow_ = 1.0;
  double sor_ = 1.0;
  Index omega_count_ = 0;
  std::vector<Stencil> stencils_;
  std::vector<std::uint8_t> is_omega_;
  Field u_;
};

}  // namespace

SolveResult solve_penalized(const DomainMasks& masks, const ObstaclePair& obstacles,
                            const PenaltyParams& p, const SolveParams& sp,
                            const std::optional<Field>& warm_start) {
  p.validate();
  sp.validate();
  validate_obstacles(obstacles, masks);
  if (!(obstacles.sup_phi > 0.0)) throw Error("sup phi must be positive");
  if (warm_start && warm_start->size() != masks.grid.size())
    throw Error("warm start field does not match the grid");
  PenalizedSolver solver(masks, obstacles, p, sp);
  return solver.run(warm_start);
}

ExtendedObstacles extend_obstacles(const DomainSpec& spec, const DomainMasks& masks,
                                   const ObstaclePair& obstacles, const Field& u_current,
                                   double delta, double pos_threshold) {
  const Grid& g = masks.grid;
  if (!(delta > 0.0)) throw Error("collar width must be positive");
  if (!(spec.max_extent(g.dim()) + delta < spec.R)) throw Error("collar does not fit inside B_R");
  ExtendedObstacles ext;
  ext.region.assign(static_cast<std::size_t>(g.size()), 0);
  ext.collar.assign(static_cast<std::size_t>(g.size()), 0);
  for (Index k = 0; k < g.size(); ++k) {
    if (masks.in_d(k)) {
      ext.region[k] = 1;
    } else if (masks.in_omega(k) && spec.signed_distance(g.node(k), g.dim()) < delta) {
      if (!(u_current[k] > pos_threshold)) {
        std::ostringstream os;
        os << "clearance violated at " << node_name(g, k) << ": u = " << u_current[k];
        throw Error(os.str());
      }
      ext.region[k] = 1;
      ext.collar[k] = 1;
    }
  }
  auto extend = [&](const Field& obstacle) {
    Field data = u_current;
    for (Index k = 0; k < g.size(); ++k) {
      if (masks.in_d(k)) data[k] = obstacle[k];
      if (!ext.region[k] && !masks.in_omega(k) && !masks.in_d(k)) data[k] = 0.0;
    }
    Field out = harmonic_extension(ext.collar, data).u;
    for (Index k = 0; k < g.size(); ++k)
      if (!ext.region[k]) out[k] = 0.0;
    return out;
  };
  ext.phi = extend(obstacles.phi);
  ext.psi = extend(obstacles.psi);
  return ext;
}

}  // namespace heatopt
