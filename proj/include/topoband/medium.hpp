// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_MEDIUM_HPP
#define TOPOBAND_MEDIUM_HPP

#include <vector>

#include "topoband/lattice.hpp"
#include "topoband/types.hpp"

namespace topoband
{

// Cellwise-constant relative permittivity on the n x n cell-center grid of
// the fundamental cell. values(i, j): i indexes the e1 direction, j the e2
// direction; cell centers sit at fractional ((i+1/2)/n, (j+1/2)/n).
struct PermittivityField
{
  Lattice lattice;
  int n = 0;
  Real lo = 1.0;  // admissible lower bound
  Real hi = 1.0;  // admissible upper bound
  MatrixXr values;

  int cells() const { return n * n; }
  Real cell_width() const { return 1.0 / Real(n); }
  // Quadrature weight of one cell (midpoint rule, Cartesian measure).
  Real cell_weight() const { return lattice.cell_area() / Real(n * n); }
  Vec2 cell_center_frac(int i, int j) const
  {
    return Vec2((i + 0.5) / n, (j + 0.5) / n);
  }
  Vec2 cell_center(int i, int j) const
  {
    return lattice.frame() * cell_center_frac(i, j);
  }

  // Flattened view, cell index c = i + n*j.
  Eigen::Map<const VectorXr> flat() const
  {
    return Eigen::Map<const VectorXr>(values.data(), n * n);
  }
  Eigen::Map<VectorXr> flat()
  {
    return Eigen::Map<VectorXr>(values.data(), n * n);
  }
};

enum class ShapeKind
{
  Disk,
  IsoscelesRightTriangle,
  Polygon
};

// Orientation of the right-angle corner of the triangle primitive.
enum class TriangleCorner
{
  LowerLeft,   // legs extend +x, +y
  LowerRight,  // legs extend -x, +y
  UpperLeft,   // legs extend +x, -y
  UpperRight   // legs extend -x, -y
};

// One filled primitive, Cartesian coordinates, painter's order on overlap.
struct ShapeSpec
{
  ShapeKind kind = ShapeKind::Disk;
  Real fill = 1.0;

  // Disk
  Vec2 center{0.0, 0.0};
  Real diameter = 0.0;

  // Isosceles right triangle: right-angle vertex and the two equal legs.
  Vec2 corner{0.0, 0.0};
  Real short_edge = 0.0;
  TriangleCorner orientation = TriangleCorner::LowerLeft;

  // Polygon (simple, closed; last vertex connects to the first)
  std::vector<Vec2> vertices;

  static ShapeSpec disk(const Vec2& center, Real diameter, Real fill);
  static ShapeSpec triangle(const Vec2& corner, Real short_edge, TriangleCorner orientation, Real fill);
  static ShapeSpec polygon(std::vector<Vec2> vertices, Real fill);
};

// Paint `background` everywhere, then each shape in order; membership is
// tested at cell centers against all periodic images of the shape. Shapes
// larger than one period are rejected (ShapeOutOfRange).
PermittivityField rasterize(const Lattice& lattice, int n, Real background,
                            const std::vector<ShapeSpec>& shapes, Real lo, Real hi);

// Group-average the field over the rotation orbits about `center_frac`
// (snapped as in symmetry_orbits). Exact projection: idempotent, preserves
// bounds, commutes with clamp.
PermittivityField symmetrize(const PermittivityField& field, RotationGroup group, const Vec2& center_frac);

// Elementwise clamp of values into [lo, hi].
PermittivityField clamp_to_bounds(const PermittivityField& field);

}  // namespace topoband

#endif
