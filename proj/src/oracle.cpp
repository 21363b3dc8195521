#include "heatopt/oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "heatopt/error.hpp"

namespace heatopt {

double RadialSolution::u(double r) const {
  if (r <= a) return c;
  if (r >= b) return 0.0;
  return c * std::log(b / r) / std::log(b / a);
}

double RadialSolution::slope(double r) const {
  if (r < a || r > b) return 0.0;
  return c / (r * std::log(b / a));
}

double RadialSolution::energy() const { return 2.0 * std::numbers::pi * c * c / std::log(b / a); }

double RadialSolution::volume() const { return std::numbers::pi * (b * b - a * a); }

double RadialSolution::lambda() const { return c / (b * std::log(b / a)); }

RadialSolution radial_solution(double a, double c, double mu) {
  if (!(a > 0.0) || !(c > 0.0) || !(mu > 0.0))
    throw Error("radial solution needs a > 0, c > 0, mu > 0");
  RadialSolution s;
  s.a = a;
  s.c = c;
  s.mu = mu;
  s.b = std::sqrt(a * a + mu / std::numbers::pi);
  return s;
}

Field sample_radial(const RadialSolution& s, const Grid& g) {
  Field u(g);
  for (Index k = 0; k < g.size(); ++k) u[k] = s.u(g.node(k).norm());
  return u;
}

double SlabSolution::u(double x) const {
  if (x <= 0.0) return c;
  return x >= d ? 0.0 : c * (1.0 - x / d);
}

SlabSolution slab_solution(double c, double d) {
  if (!(c > 0.0) || !(d > 0.0)) throw Error("slab solution needs c > 0, d > 0");
  return {c, d};
}

namespace {

// Thomas algorithm for -x[i-1] + 2 x[i] - x[i+1] = 0 on u[i0..i1] with end values.
void solve_run(std::vector<double>& u, int i0, int i1, double left, double right) {
  const int n = i1 - i0 + 1;
  std::vector<double> cp(n), dp(n);
  for (int t = 0; t < n; ++t) {
    const double rhs = (t == 0 ? left : 0.0) + (t == n - 1 ? right : 0.0);
    const double denom = t == 0 ? 2.0 : 2.0 + cp[t - 1];
    cp[t] = -1.0 / denom;
    dp[t] = (rhs + (t == 0 ? 0.0 : dp[t - 1])) / denom;
  }
  u[i1] = dp[n - 1];
  for (int t = n - 2; t >= 0; --t) u[i0 + t] = dp[t] - cp[t] * u[i0 + t + 1];
}

struct PatternValue {
  double energy;
  std::vector<double> u;
  unsigned long positive;  // bit per Omega_R node
  double volume;
};

}  // namespace

BruteForceResult brute_force_1d(const DomainMasks& masks, double phi_value,
                                const PenaltyParams& p) {
  const Grid& g = masks.grid;
  if (g.dim() != 1) throw Error("brute force oracle is one-dimensional");
  std::vector<int> omega;
  for (Index k = 0; k < g.size(); ++k)
    if (masks.in_omega(k)) omega.push_back(static_cast<int>(k));
  const int n = static_cast<int>(omega.size());
  if (n > 14) throw Error("brute force oracle limited to 14 Omega_R nodes");
  const double h = g.h;

  auto evaluate = [&](unsigned long pattern) {
    std::vector<double> u(static_cast<std::size_t>(g.nx), 0.0);
    std::vector<char> free(static_cast<std::size_t>(g.nx), 0);
    for (int i = 0; i < g.nx; ++i)
      if (masks.in_d(i)) u[i] = phi_value;
    for (int t = 0; t < n; ++t)
      if (pattern >> t & 1UL) free[omega[t]] = 1;
    for (int i = 0; i < g.nx;) {
      if (!free[i]) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < g.nx && free[j + 1]) ++j;
      solve_run(u, i, j, i > 0 ? u[i - 1] : 0.0, j + 1 < g.nx ? u[j + 1] : 0.0);
      i = j + 1;
    }
    PatternValue v{0.0, u, 0UL, 0.0};
    double dir = 0.0;
    for (int i = 0; i + 1 < g.nx; ++i) dir += (u[i + 1] - u[i]) * (u[i + 1] - u[i]);
    dir /= h;
    int count = 0;
    for (int t = 0; t < n; ++t) {
      if (u[omega[t]] > p.pos_threshold) {
        v.positive |= 1UL << t;
        ++count;
      }
    }
    v.volume = count * h;
    v.energy = dir + f_eps(v.volume, p);
    return v;
  };

  const unsigned long total = 1UL << n;
  PatternValue best{std::numeric_limits<double>::infinity(), {}, 0UL, 0.0};
  std::vector<PatternValue> all;
  all.reserve(total);
  for (unsigned long s = 0; s < total; ++s) {
    all.push_back(evaluate(s));
    if (all.back().energy < best.energy) best = all.back();
  }
  double reverse_best = std::numeric_limits<double>::infinity();
  for (unsigned long s = total; s-- > 0;) reverse_best = std::min(reverse_best, all[s].energy);

  BruteForceResult res;
  res.energy = best.energy;
  res.patterns = static_cast<long>(total);
  res.order_invariant = reverse_best == best.energy;
  res.volume = best.volume;
  res.u = Field(g);
  for (int i = 0; i < g.nx; ++i) res.u[i] = best.u[i];
  res.positive.assign(static_cast<std::size_t>(g.size()), 0);
  for (int t = 0; t < n; ++t)
    if (best.positive >> t & 1UL) res.positive[omega[t]] = 1;
  std::vector<unsigned long> seen{best.positive};
  const double slack = 1e-12 * std::max(1.0, std::abs(best.energy));
  for (const auto& v : all) {
    if (v.energy > best.energy + slack) continue;
    bool fresh = true;
    for (unsigned long q : seen) fresh = fresh && q != v.positive;
    if (fresh) {
      seen.push_back(v.positive);
      ++res.ties;
    }
  }
  return res;
}

BruteForceResult brute_force_1d(int n_omega, double phi_value, double mu_cells,
                                const PenaltyParams& p, bool two_sided) {
  if (n_omega < 1 || n_omega > 14) throw Error("brute force oracle limited to 14 Omega_R nodes");
  Layout1D layout;
  layout.n_d = 1;
  layout.h = 1.0;
  layout.n_left = two_sided ? n_omega / 2 : 0;
  layout.n_right = n_omega - layout.n_left;
  PenaltyParams q = p;
  q.mu = mu_cells;
  return brute_force_1d(rasterize_1d(layout), phi_value, q);
}

ChainObstacleResult enumerate_obstacle_1d(const std::vector<double>& lower,
                                          const std::vector<double>& upper, double left,
                                          double right, double h) {
  const int n = static_cast<int>(lower.size());
  if (n < 1 || n > 13 || upper.size() != lower.size())
    throw Error("chain enumeration needs 1..13 nodes with matching bounds");
  long states = 1;
  for (int i = 0; i < n; ++i) states *= 3;
  ChainObstacleResult best;
  best.energy = std::numeric_limits<double>::infinity();
  std::vector<int> state(n);
  std::vector<double> u(n + 2);
  for (long code = 0; code < states; ++code) {
    long c = code;
    for (int i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
    }
    u[0] = left;
    u[n + 1] = right;
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) u[i + 1] = lower[i];
      if (state[i] == 2) u[i + 1] = upper[i];
    }
    // Free runs are linear between their pinned neighbors (tridiagonal solve).
    for (int i = 0; i < n;) {
      if (state[i] != 0) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < n && state[j + 1] == 0) ++j;
      solve_run(u, i + 1, j + 1, u[i], u[j + 2]);
      i = j + 1;
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) ok = u[i + 1] >= lower[i] - 1e-14 && u[i + 1] <= upper[i] + 1e-14;
    if (!ok) continue;
    ++best.feasible;
    double e = 0.0;
    for (int i = 0; i <= n; ++i) e += (u[i + 1] - u[i]) * (u[i + 1] - u[i]);
    e /= h;
    if (e < best.energy) {
      best.energy = e;
      best.u.assign(u.begin() + 1, u.end() - 1);
    }
  }
  return best;
}

}  // namespace heatopt
