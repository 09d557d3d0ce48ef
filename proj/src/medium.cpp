// SPDX-License-Identifier: Apache-2.0

#include "topoband/medium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topoband/errors.hpp"

namespace topoband
{

ShapeSpec ShapeSpec::disk(const Vec2& center, Real diameter, Real fill)
{
  ShapeSpec s;
  s.kind = ShapeKind::Disk;
  s.center = center;
  s.diameter = diameter;
  s.fill = fill;
  return s;
}

ShapeSpec ShapeSpec::triangle(const Vec2& corner, Real short_edge, TriangleCorner orientation, Real fill)
{
  ShapeSpec s;
  s.kind = ShapeKind::IsoscelesRightTriangle;
  s.corner = corner;
  s.short_edge = short_edge;
  s.orientation = orientation;
  s.fill = fill;
  return s;
}

ShapeSpec ShapeSpec::polygon(std::vector<Vec2> vertices, Real fill)
{
  ShapeSpec s;
  s.kind = ShapeKind::Polygon;
  s.vertices = std::move(vertices);
  s.fill = fill;
  return s;
}

namespace
{

bool contains(const ShapeSpec& shape, const Vec2& x)
{
  switch (shape.kind)
  {
    case ShapeKind::Disk:
      return (x - shape.center).norm() <= 0.5 * shape.diameter;
    case ShapeKind::IsoscelesRightTriangle:
    {
      Real u = x.x() - shape.corner.x();
      Real v = x.y() - shape.corner.y();
      switch (shape.orientation)
      {
        case TriangleCorner::LowerLeft:
          break;
        case TriangleCorner::LowerRight:
          u = -u;
          break;
        case TriangleCorner::UpperLeft:
          v = -v;
          break;
        case TriangleCorner::UpperRight:
          u = -u;
          v = -v;
          break;
      }
      return u >= 0.0 && v >= 0.0 && u + v <= shape.short_edge;
    }
    case ShapeKind::Polygon:
    {
      // Even-odd ray cast along +x.
      const auto& vs = shape.vertices;
      bool inside = false;
      for (std::size_t a = 0, b = vs.size() - 1; a < vs.size(); b = a++)
      {
        const bool straddles = (vs[a].y() > x.y()) != (vs[b].y() > x.y());
        if (!straddles)
        {
          continue;
        }
        const Real t = (x.y() - vs[a].y()) / (vs[b].y() - vs[a].y());
        if (x.x() < vs[a].x() + t * (vs[b].x() - vs[a].x()))
        {
          inside = !inside;
        }
      }
      return inside;
    }
  }
  return false;
}

Real shape_extent(const ShapeSpec& shape)
{
  switch (shape.kind)
  {
    case ShapeKind::Disk:
      return shape.diameter;
    case ShapeKind::IsoscelesRightTriangle:
      return shape.short_edge * std::sqrt(2.0);
    case ShapeKind::Polygon:
    {
      Real ext = 0.0;
      for (const Vec2& a : shape.vertices)
      {
        for (const Vec2& b : shape.vertices)
        {
          ext = std::max(ext, (a - b).norm());
        }
      }
      return ext;
    }
  }
  return 0.0;
}

void validate_shape(const Lattice& lattice, const ShapeSpec& shape)
{
  switch (shape.kind)
  {
    case ShapeKind::Disk:
      if (!(shape.diameter > 0.0))
      {
        throw ShapeOutOfRange("disk diameter must be positive");
      }
      break;
    case ShapeKind::IsoscelesRightTriangle:
      if (!(shape.short_edge > 0.0))
      {
        throw ShapeOutOfRange("triangle short edge must be positive");
      }
      break;
    case ShapeKind::Polygon:
      if (shape.vertices.size() < 3)
      {
        throw ShapeOutOfRange("polygon needs at least 3 vertices");
      }
      break;
  }
  // One period in the tightest direction: |det F| / max(|e1|, |e2|) is the
  // distance between opposite cell edges.
  const Real width = lattice.cell_area() / std::max(lattice.e1.norm(), lattice.e2.norm());
  if (shape_extent(shape) > width + 1e-12)
  {
    throw ShapeOutOfRange("shape does not fit within one lattice period");
  }
}

}  // namespace

PermittivityField rasterize(const Lattice& lattice, int n, Real background,
                            const std::vector<ShapeSpec>& shapes, Real lo, Real hi)
{
  if (n < 1)
  {
    throw ValidationError("grid size must be positive");
  }
  if (!(lo <= hi))
  {
    throw ValidationError("permittivity bounds must satisfy lo <= hi");
  }
  for (const ShapeSpec& s : shapes)
  {
    validate_shape(lattice, s);
  }

  PermittivityField field;
  field.lattice = lattice;
  field.n = n;
  field.lo = lo;
  field.hi = hi;
  field.values = MatrixXr::Constant(n, n, background);

  const Mat2 f = lattice.frame();
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      const Vec2 x = field.cell_center(i, j);
      for (const ShapeSpec& s : shapes)
      {
        bool hit = false;
        for (int dj = -1; dj <= 1 && !hit; ++dj)
        {
          for (int di = -1; di <= 1 && !hit; ++di)
          {
            hit = contains(s, x + f * Vec2(di, dj));
          }
        }
        if (hit)
        {
          field.values(i, j) = s.fill;
        }
      }
    }
  }
  return field;
}

PermittivityField symmetrize(const PermittivityField& field, RotationGroup group, const Vec2& center_frac)
{
  const OrbitMap map = symmetry_orbits(field.lattice, field.n, group, center_frac);
  PermittivityField out = field;
  auto flat = field.flat();
  for (const auto& orbit : map.orbits)
  {
    Real mean = 0.0;
    for (int c : orbit)
    {
      mean += flat[c];
    }
    mean /= Real(orbit.size());
    for (int c : orbit)
    {
      out.flat()[c] = mean;
    }
  }
  return out;
}

PermittivityField clamp_to_bounds(const PermittivityField& field)
{
  PermittivityField out = field;
  out.values = field.values.cwiseMax(field.lo).cwiseMin(field.hi);
  return out;
}

}  // namespace topoband
