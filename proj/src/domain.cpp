#include "heatopt/domain.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <limits>
#include <cmath>
#include <numbers>
#include <sstream>

#include "heatopt/error.hpp"

namespace heatopt {

namespace {

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

bool polygon_contains(const std::vector<Vec2>& v, const Vec2& p) {
  bool inside = false;
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = v[i];
    const Vec2& b = v[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double xc = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < xc) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

DomainSpec DomainSpec::disk(double a, double R, double mu, Vec2 center) {
  DomainSpec s;
  s.shape = Shape::kDisk;
  s.radius = a;
  s.center = center;
  s.R = R;
  s.mu = mu;
  return s;
}

DomainSpec DomainSpec::rect(Vec2 lo, Vec2 hi, double R, double mu, double corner_radius) {
  DomainSpec s;
  s.shape = Shape::kRect;
  s.lo = lo;
  s.hi = hi;
  s.corner_radius = corner_radius;
  s.R = R;
  s.mu = mu;
  return s;
}

DomainSpec DomainSpec::polygon(std::vector<Vec2> vertices, double R, double mu) {
  DomainSpec s;
  s.shape = Shape::kPolygon;
  s.vertices = std::move(vertices);
  s.R = R;
  s.mu = mu;
  return s;
}

double DomainSpec::signed_distance(const Vec2& p, int dim) const {
  if (dim == 1) {
    switch (shape) {
      case Shape::kDisk:
        return std::abs(p.x() - center.x()) - radius;
      case Shape::kRect:
        return std::max(lo.x() - p.x(), p.x() - hi.x());
      case Shape::kPolygon:
        throw Error("polygon domains are two-dimensional");
    }
  }
  switch (shape) {
    case Shape::kDisk:
      return (p - center).norm() - radius;
    case Shape::kRect: {
      const Vec2 c = 0.5 * (lo + hi);
      const Vec2 half = 0.5 * (hi - lo);
      const double r = corner_radius;
      const Vec2 q = (p - c).cwiseAbs() - (half - Vec2::Constant(r));
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0) - r;
    }
    case Shape::kPolygon: {
      double d = std::numeric_limits<double>::infinity();
      const std::size_t n = vertices.size();
      for (std::size_t i = 0; i < n; ++i) {
        d = std::min(d, segment_distance(p, vertices[i], vertices[(i + 1) % n]));
      }
      return polygon_contains(vertices, p) ? -d : d;
    }
  }
  return 0.0;
}

double DomainSpec::exact_area(int dim) const {
  if (dim == 1) {
    return shape == Shape::kDisk ? 2.0 * radius : hi.x() - lo.x();
  }
  switch (shape) {
    case Shape::kDisk:
      return std::numbers::pi * radius * radius;
    case Shape::kRect: {
      const Vec2 ext = hi - lo;
      const double r = corner_radius;
      return ext.x() * ext.y() - (4.0 - std::numbers::pi) * r * r;
    }
    case Shape::kPolygon: {
      double a = 0.0;
      const std::size_t n = vertices.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = vertices[i];
        const Vec2& q = vertices[(i + 1) % n];
        a += p.x() * q.y() - q.x() * p.y();
      }
      return std::abs(0.5 * a);
    }
  }
  return 0.0;
}

double DomainSpec::min_width(int dim) const {
  switch (shape) {
    case Shape::kDisk:
      return 2.0 * radius;
    case Shape::kRect:
      return dim == 1 ? hi.x() - lo.x() : (hi - lo).minCoeff();
    case Shape::kPolygon: {
      Vec2 mn = vertices.front(), mx = vertices.front();
      for (const auto& v : vertices) {
        mn = mn.cwiseMin(v);
        mx = mx.cwiseMax(v);
      }
      return (mx - mn).minCoeff();
    }
  }
  return 0.0;
}

double DomainSpec::max_extent(int dim) const {
  switch (shape) {
    case Shape::kDisk:
      return dim == 1 ? std::abs(center.x()) + radius : center.norm() + radius;
    case Shape::kRect:
      if (dim == 1) return std::max(std::abs(lo.x()), std::abs(hi.x()));
      return std::max({Vec2(lo.x(), lo.y()).norm(), Vec2(lo.x(), hi.y()).norm(),
                       Vec2(hi.x(), lo.y()).norm(), Vec2(hi.x(), hi.y()).norm()});
    case Shape::kPolygon: {
      double m = 0.0;
      for (const auto& v : vertices) m = std::max(m, v.norm());
      return m;
    }
  }
  return 0.0;
}

void DomainSpec::validate(int dim) const {
  if (!(mu > 0.0)) throw Error("mu must be positive");
  if (!(R > 0.0)) throw Error("R must be positive");
  switch (shape) {
    case Shape::kDisk:
      if (!(radius > 0.0)) throw Error("disk radius must be positive");
      break;
    case Shape::kRect:
      if (!(hi.x() > lo.x()) || (dim == 2 && !(hi.y() > lo.y())))
        throw Error("rect corners must satisfy lo < hi");
      if (corner_radius < 0.0 || 2.0 * corner_radius > min_width(dim))
        throw Error("rect corner radius out of range");
      break;
    case Shape::kPolygon:
      if (dim != 2) throw Error("polygon domains are two-dimensional");
      if (vertices.size() < 3) throw Error("polygon needs at least 3 vertices");
      break;
  }
  if (!(max_extent(dim) < R)) throw Error("closure of D must lie inside B_R");
  const double ball = dim == 1 ? 2.0 * R : std::numbers::pi * R * R;
  if (!(ball - exact_area(dim) > mu)) throw Error("insufficient exterior volume");
}

Grid build_grid(const DomainSpec& spec, int resolution, int dim) {
  if (resolution < 6) throw Error("grid too coarse");
  Grid g;
  g.h = 2.0 * spec.R / (resolution - 5);
  g.nx = resolution;
  g.ny = dim == 1 ? 1 : resolution;
  const double half = 0.5 * (resolution - 1) * g.h;
  g.origin = Vec2(-half, dim == 1 ? 0.0 : -half);
  if (std::floor(spec.min_width(dim) / g.h + 1e-9) + 1 < 4) throw Error("grid too coarse");
  return g;
}

Grid build_grid_with_spacing(const DomainSpec& spec, double h, int dim) {
  if (!(h > 0.0)) throw Error("spacing must be positive");
  const int n = static_cast<int>(std::ceil(2.0 * spec.R / h - 1e-9)) + 5;
  Grid g;
  g.h = h;
  g.nx = n;
  g.ny = dim == 1 ? 1 : n;
  const double half = 0.5 * (n - 1) * h;
  g.origin = Vec2(-half, dim == 1 ? 0.0 : -half);
  if (std::floor(spec.min_width(dim) / h + 1e-9) + 1 < 4) throw Error("grid too coarse");
  return g;
}

Index DomainMasks::count(NodeKind which) const {
  return std::count(kind.begin(), kind.end(), which);
}

namespace {

void finish_masks(DomainMasks& m) {
  const Grid& g = m.grid;
  std::array<Index, 4> nb{};
  for (Index k = 0; k < g.size(); ++k) {
    if (m.kind[k] != NodeKind::kOmega) continue;
    const int n = g.neighbors(k, nb);
    for (int t = 0; t < n; ++t) {
      if (m.kind[nb[t]] == NodeKind::kInsideD) {
        m.kind[k] = NodeKind::kBand;
        break;
      }
    }
  }
  const double w = g.cell_volume();
  m.d_measure = static_cast<double>(m.count(NodeKind::kInsideD)) * w;
  m.omega_measure =
      static_cast<double>(m.count(NodeKind::kOmega) + m.count(NodeKind::kBand)) * w;
}

}  // namespace

DomainMasks rasterize(const DomainSpec& spec, const Grid& grid) {
  const int dim = grid.dim();
  spec.validate(dim);
  DomainMasks m;
  m.grid = grid;
  m.kind.assign(static_cast<std::size_t>(grid.size()), NodeKind::kOutside);
  for (Index k = 0; k < grid.size(); ++k) {
    const Vec2 p = grid.node(k);
    const double r = dim == 1 ? std::abs(p.x()) : p.norm();
    if (r >= spec.R) continue;
    m.kind[k] = spec.signed_distance(p, dim) <= 0.0 ? NodeKind::kInsideD : NodeKind::kOmega;
  }
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const bool edge = i == 0 || i + 1 == grid.nx || (dim == 2 && (j == 0 || j + 1 == grid.ny));
      if (edge && m.kind[grid.index(i, j)] != NodeKind::kOutside)
        throw Error("grid does not cover B_R with a margin");
    }
  }
  finish_masks(m);
  if (m.count(NodeKind::kInsideD) == 0) throw Error("grid too coarse");
  if (m.omega_measure <= spec.mu) throw Error("insufficient exterior volume");
  return m;
}

DomainMasks rasterize_1d(const Layout1D& layout) {
  if (layout.n_d < 1 || layout.n_left < 0 || layout.n_right < 0 || !(layout.h > 0.0))
    throw Error("invalid 1D layout");
  const int n = 4 + layout.n_left + layout.n_d + layout.n_right;
  DomainMasks m;
  m.grid.nx = n;
  m.grid.ny = 1;
  m.grid.h = layout.h;
  m.grid.origin = Vec2(-0.5 * (n - 1) * layout.h, 0.0);
  m.kind.assign(static_cast<std::size_t>(n), NodeKind::kOutside);
  int k = 2;
  for (int t = 0; t < layout.n_left; ++t) m.kind[k++] = NodeKind::kOmega;
  for (int t = 0; t < layout.n_d; ++t) m.kind[k++] = NodeKind::kInsideD;
  for (int t = 0; t < layout.n_right; ++t) m.kind[k++] = NodeKind::kOmega;
  finish_masks(m);
  return m;
}

ObstacleDescriptor ObstacleDescriptor::constant(double lower, double upper) {
  ObstacleDescriptor d;
  d.kind = Kind::kConstant;
  d.lower = lower;
  d.upper = upper;
  return d;
}

ObstacleDescriptor ObstacleDescriptor::paraboloid(double lower, double upper, double curvature,
                                                  double radius, Vec2 center) {
  ObstacleDescriptor d;
  d.kind = Kind::kParaboloid;
  d.lower = lower;
  d.upper = upper;
  d.curvature = curvature;
  d.radius = radius;
  d.center = center;
  return d;
}

ObstacleDescriptor ObstacleDescriptor::touching(double value, double gap, double contact_radius,
                                                double outer_radius, Vec2 center) {
  ObstacleDescriptor d;
  d.kind = Kind::kTouching;
  d.lower = value;
  d.upper = value;
  d.gap = gap;
  d.contact_radius = contact_radius;
  d.radius = outer_radius;
  d.center = center;
  return d;
}

ObstacleDescriptor ObstacleDescriptor::tent(double lower, double upper, double slope,
                                            double radius, Vec2 center) {
  ObstacleDescriptor d;
  d.kind = Kind::kTent;
  d.lower = lower;
  d.upper = upper;
  d.slope = slope;
  d.radius = radius;
  d.center = center;
  return d;
}

namespace {

// Radial profile value, first and second derivative for the non-constant presets.
struct Radial {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

Radial touching_profile(const ObstacleDescriptor& d, double r) {
  const double span = d.radius - d.contact_radius;
  const double t = std::max(0.0, (r - d.contact_radius) / span);
  return {d.gap * t * t * t, 3.0 * d.gap * t * t / span, 6.0 * d.gap * t / (span * span)};
}

double radial_coord(const ObstacleDescriptor& d, const Vec2& p, int dim) {
  return dim == 1 ? std::abs(p.x() - d.center.x()) : (p - d.center).norm();
}

}  // namespace

double ObstacleDescriptor::phi(const Vec2& p) const {
  switch (kind) {
    case Kind::kConstant:
      return lower;
    case Kind::kParaboloid:
      return lower + curvature * (radius * radius - (p - center).squaredNorm());
    case Kind::kTouching:
      return lower;
    case Kind::kTent:
      return lower + slope * std::max(radius - (p - center).norm(), 0.0);
  }
  return 0.0;
}

double ObstacleDescriptor::psi(const Vec2& p) const {
  switch (kind) {
    case Kind::kConstant:
      return upper;
    case Kind::kParaboloid:
      return upper + curvature * (radius * radius - (p - center).squaredNorm());
    case Kind::kTouching:
      return lower + touching_profile(*this, (p - center).norm()).value;
    case Kind::kTent:
      return upper + slope * std::max(radius - (p - center).norm(), 0.0);
  }
  return 0.0;
}

double ObstacleDescriptor::laplacian_phi(const Vec2& p, int dim) const {
  switch (kind) {
    case Kind::kConstant:
    case Kind::kTouching:
      return 0.0;
    case Kind::kParaboloid:
      return -2.0 * curvature * dim;
    case Kind::kTent: {
      const double r = radial_coord(*this, p, dim);
      if (dim == 1 || r >= radius || r == 0.0) return 0.0;
      return -slope / r;
    }
  }
  return 0.0;
}

double ObstacleDescriptor::laplacian_psi(const Vec2& p, int dim) const {
  switch (kind) {
    case Kind::kTouching: {
      const double r = radial_coord(*this, p, dim);
      const Radial q = touching_profile(*this, r);
      if (dim == 1) return q.d2;
      return r > 0.0 ? q.d2 + q.d1 / r : 0.0;
    }
    default:
      return laplacian_phi(p, dim);
  }
}

double ObstacleDescriptor::c2_norm(const std::vector<Vec2>& samples, int dim) const {
  double sup_val = 0.0, sup_grad = 0.0, sup_hess = 0.0;
  for (const auto& p : samples) {
    const double r = radial_coord(*this, p, dim);
    sup_val = std::max({sup_val, std::abs(phi(p)), std::abs(psi(p))});
    switch (kind) {
      case Kind::kConstant:
        break;
      case Kind::kParaboloid:
        sup_grad = std::max(sup_grad, 2.0 * std::abs(curvature) * r);
        sup_hess = std::max(sup_hess, 2.0 * std::abs(curvature));
        break;
      case Kind::kTouching: {
        const Radial q = touching_profile(*this, r);
        sup_grad = std::max(sup_grad, std::abs(q.d1));
        const double tangential = (dim == 2 && r > 0.0) ? std::abs(q.d1 / r) : 0.0;
        sup_hess = std::max({sup_hess, std::abs(q.d2), tangential});
        break;
      }
      case Kind::kTent:
        if (r < radius) {
          sup_grad = std::max(sup_grad, std::abs(slope));
          if (dim == 2 && r > 0.0) sup_hess = std::max(sup_hess, std::abs(slope) / r);
        }
        break;
    }
  }
  return sup_val + sup_grad + sup_hess;
}

std::string ObstacleDescriptor::name() const {
  switch (kind) {
    case Kind::kConstant:
      return "constant";
    case Kind::kParaboloid:
      return "paraboloid";
    case Kind::kTouching:
      return "touching";
    case Kind::kTent:
      return "tent";
  }
  return "unknown";
}

void validate_obstacles(const ObstaclePair& pair, const DomainMasks& masks) {
  const Grid& g = masks.grid;
  for (Index k = 0; k < g.size(); ++k) {
    const NodeKind kind = masks.kind[k];
    if (kind != NodeKind::kInsideD && kind != NodeKind::kBand) continue;
    const double lo = pair.phi[k];
    const double hi = pair.psi[k];
    std::ostringstream where;
    where << " at node (" << g.ix(k) << ", " << g.iy(k) << ")";
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error("non-finite obstacle" + where.str());
    if (!(lo > 0.0)) throw Error("lower obstacle must be positive" + where.str());
    if (kind == NodeKind::kInsideD && lo > hi)
      throw Error("obstacles violate phi <= psi in D" + where.str());
    if (kind == NodeKind::kBand && !(lo < hi))
      throw Error("obstacles violate phi < psi on the boundary of D" + where.str());
  }
}

ObstaclePair make_obstacles(const ObstacleDescriptor& desc, const DomainMasks& masks) {
  const Grid& g = masks.grid;
  ObstaclePair pair;
  pair.descriptor = desc;
  pair.phi = Field(g);
  pair.psi = Field(g);
  double sup = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < g.size(); ++k) {
    const NodeKind kind = masks.kind[k];
    if (kind != NodeKind::kInsideD && kind != NodeKind::kBand) continue;
    const Vec2 p = g.node(k);
    pair.phi[k] = desc.phi(p);
    pair.psi[k] = desc.psi(p);
    if (kind == NodeKind::kInsideD) sup = std::max(sup, pair.phi[k]);
  }
  pair.sup_phi = sup;
  validate_obstacles(pair, masks);
  return pair;
}

// Dijkstra over axis edges, each node carrying the closest D node found so far.
std::vector<double> distance_to_d(const DomainMasks& masks) {
  const Grid& g = masks.grid;
  std::vector<double> dist(static_cast<std::size_t>(g.size()), std::numeric_limits<double>::infinity());
  std::vector<Index> seed(static_cast<std::size_t>(g.size()), -1);
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (Index k = 0; k < g.size(); ++k) {
    if (masks.in_d(k)) {
      dist[k] = 0.0;
      seed[k] = k;
      queue.emplace(0.0, k);
    }
  }
  std::array<Index, 4> nb{};
  while (!queue.empty()) {
    const auto [d, k] = queue.top();
    queue.pop();
    if (d > dist[k]) continue;
    const int n = g.neighbors(k, nb);
    for (int t = 0; t < n; ++t) {
      const Index q = nb[t];
      if (masks.outside(q)) continue;
      const double cand = (g.node(q) - g.node(seed[k])).norm();
      if (cand < dist[q] - 1e-14) {
        dist[q] = cand;
        seed[q] = seed[k];
        queue.emplace(cand, q);
      }
    }
  }
  return dist;
}


}  // namespace heatopt
