#include "heatopt/freeboundary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <utility>

#include "heatopt/error.hpp"

namespace heatopt {

namespace {

// Edge keys: 2k for the horizontal edge leaving node k in +x, 2k+1 for +y.
Index horizontal_edge(const Grid& g, int i, int j) { return 2 * g.index(i, j); }
Index vertical_edge(const Grid& g, int i, int j) { return 2 * g.index(i, j) + 1; }

struct Builder {
  std::vector<Vec2> points;
  std::vector<std::array<int, 2>> adj;
  std::unordered_map<Index, int> by_edge;

  int point(Index key, const Vec2& x) {
    auto [it, fresh] = by_edge.try_emplace(key, static_cast<int>(points.size()));
    if (fresh) {
      points.push_back(x);
      adj.push_back({-1, -1});
    }
    return it->second;
  }

  void link(int a, int b) {
    for (int s : {a, b}) {
      const int other = s == a ? b : a;
      auto& slot = adj[s];
      if (slot[0] < 0) {
        slot[0] = other;
      } else if (slot[1] < 0) {
        slot[1] = other;
      } else {
        throw Error("contour point with more than two segments");
      }
    }
  }
};

// Zero nodes next to the positive phase get the value of the positive side
// extended linearly along each axis (averaged over directions, capped at 0),
// so the level crossing sits where the profile vanishes rather than snapping
// to the lattice.
Field extend_across(const Field& u, const DomainMasks& masks, double level) {
  const Grid& g = u.grid;
  Field out = u;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Index k = g.index(i, j);
      if (!masks.in_omega(k) || u[k] > level) continue;
      double acc = 0.0;
      int n = 0;
      for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
        if (!g.in_range(i + di, j + dj)) continue;
        const double q = u(i + di, j + dj);
        if (!(q > level)) continue;
        const bool far = g.in_range(i + 2 * di, j + 2 * dj) && u(i + 2 * di, j + 2 * dj) > level;
        acc += far ? 2.0 * q - u(i + 2 * di, j + 2 * dj) : -q;
        ++n;
      }
      if (n > 0) out[k] = std::min(acc / n, 0.0);
    }
  }
  return out;
}

Vec2 gradient_at(const Field& u, const Vec2& y) {
  const double h = u.grid.h;
  const Vec2 ex(h, 0.0), ey(0.0, h);
  return Vec2(interpolate(u, y + ex) - interpolate(u, y - ex),
              interpolate(u, y + ey) - interpolate(u, y - ey)) /
         (2.0 * h);
}

// Calls f(k) for every node within distance r of c.
template <typename F>
void for_nodes_in_ball(const Grid& g, const Vec2& c, double r, F&& f) {
  const int i0 = std::max(0, static_cast<int>(std::ceil((c.x() - r - g.origin.x()) / g.h)));
  const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((c.x() + r - g.origin.x()) / g.h)));
  const int j0 = std::max(0, static_cast<int>(std::ceil((c.y() - r - g.origin.y()) / g.h)));
  const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((c.y() + r - g.origin.y()) / g.h)));
  const double r2 = r * r * (1.0 + 1e-12);
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const Index k = g.index(i, j);
      if ((g.node(k) - c).squaredNorm() <= r2) f(k);
    }
  }
}

bool ball_in_omega(const DomainMasks& masks, const Vec2& c, double r) {
  const Grid& g = masks.grid;
  if (c.x() - r < g.x(0) || c.x() + r > g.x(g.nx - 1) || c.y() - r < g.y(0) ||
      c.y() + r > g.y(g.ny - 1))
    return false;
  bool ok = true;
  for_nodes_in_ball(g, c, r, [&](Index k) { ok = ok && masks.in_omega(k); });
  return ok;
}

std::vector<Index> sampled_centers(const DomainMasks& masks, int stride) {
  const Grid& g = masks.grid;
  std::vector<Index> out;
  for (int j = 0; j < g.ny; j += stride)
    for (int i = 0; i < g.nx; i += stride)
      if (masks.in_omega(g.index(i, j))) out.push_back(g.index(i, j));
  return out;
}

}  // namespace

std::size_t FreeBoundary::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.points.size();
  return n;
}

const char* status_name(FreeBoundary::Status s) {
  switch (s) {
    case FreeBoundary::Status::kOk:
      return "ok";
    case FreeBoundary::Status::kEmpty:
      return "empty";
    case FreeBoundary::Status::kReachesOuter:
      return "reaches_outer_boundary";
  }
  return "unknown";
}

FreeBoundary extract_free_boundary(const Field& u, const DomainMasks& masks,
                                   const PenaltyParams& p) {
  const Grid& g = u.grid;
  if (g.dim() != 2) throw Error("free boundary extraction needs a 2D grid");
  const double level = p.pos_threshold;
  FreeBoundary fb;

  bool any_positive = false;
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    if (!masks.in_omega(k) || !(u[k] > level)) continue;
    any_positive = true;
    const int n = g.neighbors(k, nb);
    for (int t = 0; t < n; ++t)
      if (masks.outside(nb[t])) fb.status = FreeBoundary::Status::kReachesOuter;
  }
  if (!any_positive) {
    fb.status = FreeBoundary::Status::kEmpty;
    return fb;
  }

  const Field w = extend_across(u, masks, level);
  Builder b;
  auto crossing = [&](int ia, int ja, int ib, int jb) {
    const double va = w(ia, ja), vb = w(ib, jb);
    const double t = (level - va) / (vb - va);
    const Vec2 xa = g.node(g.index(ia, ja)), xb = g.node(g.index(ib, jb));
    const Index key = ja == jb ? horizontal_edge(g, std::min(ia, ib), ja)
                               : vertical_edge(g, ia, std::min(ja, jb));
    return b.point(key, xa + t * (xb - xa));
  };

  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      const std::array<Index, 4> c{g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1),
                                   g.index(i, j + 1)};
      if (!std::all_of(c.begin(), c.end(), [&](Index k) { return masks.in_omega(k); })) continue;
      int code = 0;
      for (int t = 0; t < 4; ++t)
        if (w[c[t]] > level) code |= 1 << t;
      if (code == 0 || code == 15) continue;
      // Crossing points on edges bottom, right, top, left (created on demand).
      auto edge = [&](int e) {
        switch (e) {
          case 0: return crossing(i, j, i + 1, j);
          case 1: return crossing(i + 1, j, i + 1, j + 1);
          case 2: return crossing(i, j + 1, i + 1, j + 1);
          default: return crossing(i, j, i, j + 1);
        }
      };
      // Each corner t is cut off by its two incident edges.
      static constexpr std::array<std::array<int, 2>, 4> kCorner{{{0, 3}, {0, 1}, {1, 2}, {2, 3}}};
      if (code == 5 || code == 10) {
        const double avg = 0.25 * (w[c[0]] + w[c[1]] + w[c[2]] + w[c[3]]);
        const bool center_in = avg > level;
        // Isolate the two corners whose state differs from the center.
        const int first = (code == 5) == center_in ? 1 : 0;
        for (int t : {first, first + 2}) b.link(edge(kCorner[t][0]), edge(kCorner[t][1]));
        continue;
      }
      static constexpr std::array<std::array<int, 2>, 4> kEdge{{{0, 1}, {1, 2}, {3, 2}, {0, 3}}};
      int crossed[2], n = 0;
      for (int e = 0; e < 4; ++e)
        if ((code >> kEdge[e][0] & 1) != (code >> kEdge[e][1] & 1)) crossed[n++] = e;
      b.link(edge(crossed[0]), edge(crossed[1]));
    }
  }

  std::vector<char> used(b.points.size(), 0);
  auto walk = [&](int start) {
    ContourChain chain;
    int prev = -1, cur = start;
    while (cur >= 0 && !used[cur]) {
      used[cur] = 1;
      chain.points.push_back(b.points[cur]);
      const auto& a = b.adj[cur];
      const int next = a[0] != prev ? a[0] : a[1];
      prev = cur;
      cur = next;
    }
    chain.closed = cur == start && chain.points.size() > 2;
    return chain;
  };
  for (std::size_t s = 0; s < b.points.size(); ++s)
    if (!used[s] && b.adj[s][1] < 0) fb.chains.push_back(walk(static_cast<int>(s)));
  for (std::size_t s = 0; s < b.points.size(); ++s)
    if (!used[s]) fb.chains.push_back(walk(static_cast<int>(s)));

  const double h = g.h;
  for (auto& chain : fb.chains) {
    const auto& pts = chain.points;
    const std::size_t n = pts.size();
    chain.normals.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t a = t > 0 ? t - 1 : (chain.closed ? n - 1 : t);
      const std::size_t c = t + 1 < n ? t + 1 : (chain.closed ? 0 : t);
      Vec2 tangent = pts[c] - pts[a];
      Vec2 normal = tangent.norm() > 0.0 ? Vec2(tangent.y(), -tangent.x()).normalized()
                                         : Vec2(1.0, 0.0);
      if (interpolate(u, pts[t] - h * normal) < interpolate(u, pts[t] + h * normal)) normal = -normal;
      // The positive phase is harmonic, so its gradient a few cells inside
      // gives a cleaner direction than the polyline.
      const Vec2 grad = gradient_at(u, pts[t] - 3.0 * h * normal);
      if (grad.norm() > 0.0 && -grad.dot(normal) > 0.0) normal = -grad.normalized();
      chain.normals[t] = normal;
    }
    for (std::size_t t = 0; t + 1 < n; ++t) fb.length += (pts[t + 1] - pts[t]).norm();
    if (chain.closed) fb.length += (pts.front() - pts.back()).norm();
  }
  return fb;
}

LambdaEstimate estimate_lambda(const Field& u, const FreeBoundary& fb, const PenaltyParams& p) {
  if (fb.sample_count() == 0) throw Error("no free boundary");
  const double h = u.grid.h;
  LambdaEstimate est;
  for (const auto& chain : fb.chains) {
    for (std::size_t t = 0; t < chain.points.size(); ++t) {
      const Vec2& x = chain.points[t];
      const Vec2& nu = chain.normals[t];
      std::array<double, 3> f{};
      bool ok = true;
      for (int s = 0; s < 3; ++s) {
        f[s] = interpolate(u, x - 2.0 * (s + 1) * h * nu);
        ok = ok && f[s] > p.pos_threshold;
      }
      if (!ok) {
        ++est.skipped;
        continue;
      }
      // Derivative at 0 of the quadratic through offsets 2h, 4h, 6h.
      est.points.push_back(x);
      est.values.push_back((-1.25 * f[0] + 2.0 * f[1] - 0.75 * f[2]) / h);
    }
  }
  if (est.values.empty()) return est;
  const double n = static_cast<double>(est.values.size());
  double sum = 0.0, sq = 0.0;
  for (double v : est.values) sum += v;
  est.mean = sum / n;
  for (double v : est.values) sq += (v - est.mean) * (v - est.mean);
  est.cv = est.mean != 0.0 ? std::sqrt(sq / n) / std::abs(est.mean) : 0.0;
  return est;
}

double support_radius(const Field& u, const PenaltyParams& p) {
  double r = 0.0;
  for (Index k = 0; k < u.size(); ++k)
    if (u[k] > p.pos_threshold) r = std::max(r, u.grid.node(k).norm());
  return r;
}

ClearanceResult clearance_check(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                                double delta) {
  const auto dist = distance_to_d(masks);
  ClearanceResult res;
  for (Index k = 0; k < u.size(); ++k) {
    if (!masks.in_omega(k) || dist[k] > delta * (1.0 + 1e-12)) continue;
    ++res.collar_nodes;
    if (u[k] < res.min_value) {
      res.min_value = u[k];
      res.worst = k;
    }
  }
  res.pass = res.collar_nodes == 0 || res.min_value > p.pos_threshold;
  return res;
}

NondegeneracyResult nondegeneracy_scan(const Field& u, const DomainMasks& masks,
                                       const PenaltyParams& p, double c_probe, int stride) {
  const Grid& g = u.grid;
  if (g.dim() != 2) throw Error("nondegeneracy scan needs a 2D grid");
  NondegeneracyResult res;
  const double se = std::sqrt(p.eps);
  for (int m : {4, 8, 16}) {
    const double r = m * g.h;
    const int samples = std::max(32, static_cast<int>(std::ceil(4.0 * std::numbers::pi * m)));
    for (Index k : sampled_centers(masks, std::max(1, stride))) {
      const Vec2 c = g.node(k);
      if (!ball_in_omega(masks, c, r + 1.5 * g.h)) continue;
      ++res.balls;
      double inner = 0.0;
      for_nodes_in_ball(g, c, 0.5 * r, [&](Index q) { inner = std::max(inner, u[q]); });
      if (!(inner > p.pos_threshold)) continue;
      double avg = 0.0;
      for (int s = 0; s < samples; ++s) {
        const double th = 2.0 * std::numbers::pi * s / samples;
        avg += interpolate(u, c + r * Vec2(std::cos(th), std::sin(th)));
      }
      avg /= samples;
      res.critical_constant = std::min(res.critical_constant, avg / (se * r));
      if (avg <= c_probe * se * r) res.violations.push_back({c, r, avg, inner});
    }
  }
  return res;
}

double density_ratio(const Field& u, const PenaltyParams& p, const Vec2& center, double radius) {
  Index total = 0, positive = 0;
  for_nodes_in_ball(u.grid, center, radius, [&](Index k) {
    ++total;
    if (u[k] > p.pos_threshold) ++positive;
  });
  return total > 0 ? static_cast<double>(positive) / static_cast<double>(total) : 0.0;
}

DensityResult density_scan(const Field& u, const DomainMasks& masks, const PenaltyParams& p,
                           int stride) {
  const Grid& g = u.grid;
  if (g.dim() != 2) throw Error("density scan needs a 2D grid");
  DensityResult res;
  for (int m : {4, 8, 16}) {
    const double r = m * g.h;
    for (Index k : sampled_centers(masks, std::max(1, stride))) {
      if (!(u[k] > p.pos_threshold)) continue;
      const Vec2 c = g.node(k);
      if (!ball_in_omega(masks, c, r)) continue;
      ++res.balls;
      const double ratio = density_ratio(u, p, c, r);
      if (ratio < res.min_ratio) {
        res.min_ratio = ratio;
        res.worst_center = c;
        res.worst_radius = r;
      }
    }
  }
  return res;
}

}  // namespace heatopt
