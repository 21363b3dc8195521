#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heatopt/field.hpp"
#include "heatopt/grid.hpp"

namespace heatopt {

enum class Shape { kDisk, kRect, kPolygon };

// Geometry of the inner domain D together with the outer radius R and the
// target exterior volume mu. In 1D a disk is the interval [c - a, c + a].
struct DomainSpec {
  Shape shape = Shape::kDisk;
  Vec2 center = Vec2::Zero();     // disk
  double radius = 1.0;            // disk
  Vec2 lo = Vec2(-1.0, -1.0);     // rect
  Vec2 hi = Vec2(1.0, 1.0);       // rect
  double corner_radius = 0.0;     // rect; 0 keeps sharp corners
  std::vector<Vec2> vertices;     // polygon, counter-clockwise or clockwise
  double R = 4.0;
  double mu = 1.0;

  static DomainSpec disk(double a, double R, double mu, Vec2 center = Vec2::Zero());
  static DomainSpec rect(Vec2 lo, Vec2 hi, double R, double mu, double corner_radius = 0.0);
  static DomainSpec polygon(std::vector<Vec2> vertices, double R, double mu);

  // Signed distance to the boundary of D: negative inside, positive outside.
  double signed_distance(const Vec2& p, int dim = 2) const;
  double exact_area(int dim = 2) const;
  // Smallest width of D, used to decide whether a grid resolves it.
  double min_width(int dim = 2) const;
  // Largest |x| over D-bar.
  double max_extent(int dim = 2) const;

  // Throws Error on mu <= 0, D-bar not inside B_R, or |B_R \ D| <= mu.
  void validate(int dim = 2) const;
};

// Grid covering [-R - 2h, R + 2h]^d with `resolution` nodes per axis.
Grid build_grid(const DomainSpec& spec, int resolution, int dim = 2);
// Same covering for a prescribed spacing; node positions are symmetric about 0.
Grid build_grid_with_spacing(const DomainSpec& spec, double h, int dim = 2);

enum class NodeKind : std::uint8_t { kInsideD, kBand, kOmega, kOutside };

// Per-node partition. kBand and kOmega together form Omega_R = B_R \ D-bar;
// kBand marks the Omega_R nodes with an axis neighbor in D.
struct DomainMasks {
  Grid grid;
  std::vector<NodeKind> kind;
  double d_measure = 0.0;
  double omega_measure = 0.0;

  bool in_d(Index k) const { return kind[k] == NodeKind::kInsideD; }
  bool in_omega(Index k) const {
    return kind[k] == NodeKind::kOmega || kind[k] == NodeKind::kBand;
  }
  bool outside(Index k) const { return kind[k] == NodeKind::kOutside; }
  Index count(NodeKind which) const;
};

// Fails with "insufficient exterior volume" when |Omega_R|_h <= mu.
DomainMasks rasterize(const DomainSpec& spec, const Grid& grid);

// Distance from each node to the nearest D node (infinite outside B_R).
std::vector<double> distance_to_d(const DomainMasks& masks);

// 1D layout used by the exhaustive oracle comparisons:
//   [2 outside][n_left Omega][n_d D][n_right Omega][2 outside]
struct Layout1D {
  int n_left = 0;
  int n_d = 1;
  int n_right = 0;
  double h = 1.0;
};
DomainMasks rasterize_1d(const Layout1D& layout);

// Analytic obstacle presets. Values outside D-bar come from the same formula
// so the band can carry boundary data.
struct ObstacleDescriptor {
  enum class Kind { kConstant, kParaboloid, kTouching, kTent };
  Kind kind = Kind::kConstant;
  double lower = 1.0;         // constant/paraboloid/tent: base of phi; touching: common value
  double upper = 2.0;         // constant/paraboloid/tent: base of psi
  double curvature = 0.0;     // paraboloid k in k (rho^2 - |x - c|^2)
  double slope = 0.0;         // tent
  double radius = 1.0;        // paraboloid rho, tent rho, touching outer radius
  double contact_radius = 0.5;  // touching: phi == psi for |x - c| <= contact_radius
  double gap = 1.0;           // touching: psi - phi at |x - c| = radius
  Vec2 center = Vec2::Zero();

  static ObstacleDescriptor constant(double lower, double upper);
  static ObstacleDescriptor paraboloid(double lower, double upper, double curvature,
                                       double radius, Vec2 center = Vec2::Zero());
  static ObstacleDescriptor touching(double value, double gap, double contact_radius,
                                     double outer_radius, Vec2 center = Vec2::Zero());
  static ObstacleDescriptor tent(double lower, double upper, double slope, double radius,
                                 Vec2 center = Vec2::Zero());

  double phi(const Vec2& p) const;
  double psi(const Vec2& p) const;
  // Analytic Laplacians (classical where the preset is C^2).
  double laplacian_phi(const Vec2& p, int dim = 2) const;
  double laplacian_psi(const Vec2& p, int dim = 2) const;
  // sup |f| + sup |grad f| + sup |D^2 f| over the given sample points.
  double c2_norm(const std::vector<Vec2>& samples, int dim = 2) const;
  bool smooth() const { return kind != Kind::kTent; }

  std::string name() const;
};

// Obstacle fields on D and the band (zero elsewhere).
struct ObstaclePair {
  ObstacleDescriptor descriptor;
  Field phi;
  Field psi;
  double sup_phi = 0.0;  // sup over D nodes
};

// Samples the descriptor and checks phi <= psi on D, phi < psi on the band,
// and phi > 0 on D and the band.
ObstaclePair make_obstacles(const ObstacleDescriptor& desc, const DomainMasks& masks);
void validate_obstacles(const ObstaclePair& pair, const DomainMasks& masks);

}  // namespace heatopt
