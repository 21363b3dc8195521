#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>

namespace heatopt {

using Vec2 = Eigen::Vector2d;
using Index = std::ptrdiff_t;

// Uniform Cartesian lattice. Node (i, j) sits at origin + h * (i, j).
// A 1D grid has ny == 1 and lives on the x axis.
struct Grid {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  Vec2 origin = Vec2::Zero();

  int dim() const { return ny == 1 ? 1 : 2; }
  Index size() const { return static_cast<Index>(nx) * ny; }
  Index index(int i, int j) const { return i + static_cast<Index>(nx) * j; }
  int ix(Index k) const { return static_cast<int>(k % nx); }
  int iy(Index k) const { return static_cast<int>(k / nx); }

  double x(int i) const { return origin.x() + h * i; }
  double y(int j) const { return origin.y() + h * j; }
  Vec2 node(Index k) const { return {x(ix(k)), y(iy(k))}; }

  // h^d: the volume element attached to a node.
  double cell_volume() const { return dim() == 1 ? h : h * h; }

  bool in_range(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }

  // Axis neighbors of node k that exist on the grid; returns the count.
  int neighbors(Index k, std::array<Index, 4>& out) const {
    const int i = ix(k);
    const int j = iy(k);
    int n = 0;
    if (i > 0) out[n++] = k - 1;
    if (i + 1 < nx) out[n++] = k + 1;
    if (ny > 1) {
      if (j > 0) out[n++] = k - nx;
      if (j + 1 < ny) out[n++] = k + nx;
    }
    return n;
  }
};

}  // namespace heatopt
