#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "heatopt/grid.hpp"

namespace heatopt {

// One value per grid node. Storage is column-major (nx x ny), so the flat
// index of node (i, j) is i + nx * j, matching Grid::index.
template <typename Scalar>
struct ScalarField {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Grid grid;
  Array values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, Scalar fill = Scalar(0))
      : grid(g), values(Array::Constant(g.nx, g.ny, fill)) {}

  Index size() const { return values.size(); }
  Scalar& operator[](Index k) { return values.data()[k]; }
  const Scalar& operator[](Index k) const { return values.data()[k]; }
  Scalar& operator()(int i, int j) { return values(i, j); }
  const Scalar& operator()(int i, int j) const { return values(i, j); }

  bool all_finite() const { return values.allFinite(); }
};

using Field = ScalarField<double>;

// Per-node flag, nonzero meaning "selected".
using Mask = std::vector<std::uint8_t>;

// Bilinear interpolation at an arbitrary point; points off the grid read 0.
double interpolate(const Field& u, const Vec2& p);

// CSV with header "x,y,u", one row per node, x varying fastest.
void write_csv(std::ostream& os, const Field& u);
void write_csv(const std::string& path, const Field& u);
Field read_csv(const std::string& path);

// Binary dump, little-endian:
//   "OFGD" | uint32 nx | uint32 ny | float64 h | float64 origin_x |
//   float64 origin_y | nx*ny float64 values (x fastest)
void write_binary(std::ostream& os, const Field& u);
void write_binary(const std::string& path, const Field& u);
Field read_binary(std::istream& is);
Field read_binary(const std::string& path);

}  // namespace heatopt
