// SPDX-License-Identifier: Apache-2.0

#include "topoband/lattice.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "topoband/errors.hpp"

namespace topoband
{

Lattice Lattice::square()
{
  return {Vec2(1.0, 0.0), Vec2(0.0, 1.0), LatticeKind::Square};
}

Lattice Lattice::hexagonal()
{
  return {Vec2(1.0, 0.0), Vec2(0.5, 0.5 * std::sqrt(3.0)), LatticeKind::Hexagonal};
}

Mat2 Lattice::frame() const
{
  Mat2 f;
  f.col(0) = e1;
  f.col(1) = e2;
  return f;
}

Real Lattice::cell_area() const
{
  return std::abs(frame().determinant());
}

Mat2 reciprocal(const Lattice& lattice)
{
  const Mat2 f = lattice.frame();
  const Real det = f.determinant();
  const Real scale = f.norm();
  if (std::abs(det) <= 1e-12 * scale * scale)
  {
    throw DegenerateLattice("lattice vectors are numerically parallel");
  }
  // b = 2*pi*F^{-T} gives b_i . e_j = 2*pi*delta_ij.
  return 2.0 * pi * f.inverse().transpose();
}

Real KGrid::plaquette_area() const
{
  return zone_area() / (Real(nk) * Real(nk));
}

Real KGrid::zone_area() const
{
  return std::abs(b.col(0).x() * b.col(1).y() - b.col(0).y() * b.col(1).x());
}

KGrid k_grid(const Lattice& lattice, int nk)
{
  if (nk < 2)
  {
    throw ValidationError("k-grid size must be at least 2");
  }
  KGrid grid;
  grid.lattice = lattice;
  grid.nk = nk;
  grid.offset = nk / 2;
  grid.b = reciprocal(lattice);
  return grid;
}

KPath high_symmetry_path(const Lattice& lattice, int per_segment)
{
  if (per_segment < 1)
  {
    throw ValidationError("path sampling must be at least 1 per segment");
  }
  const Mat2 b = reciprocal(lattice);
  std::vector<std::string> labels;
  std::vector<Vec2> nodes;
  if (lattice.kind == LatticeKind::Square)
  {
    labels = {"G", "M", "N", "G"};
    nodes = {Vec2(0, 0), Vec2(pi, 0), Vec2(pi, pi), Vec2(0, 0)};
  }
  else
  {
    labels = {"G", "M", "K", "G"};
    const Vec2 m = 0.5 * (b.col(0) + b.col(1));
    const Vec2 k(4.0 * pi / 3.0, 0.0);
    nodes = {Vec2(0, 0), m, k, Vec2(0, 0)};
  }

  KPath path;
  path.labels = labels;
  Real arc = 0.0;
  for (std::size_t leg = 0; leg + 1 < nodes.size(); ++leg)
  {
    const Vec2 a = nodes[leg];
    const Vec2 c = nodes[leg + 1];
    const Real len = (c - a).norm();
    path.node_index.push_back(leg == 0 ? 0 : int(path.points.size()) - 1);
    const int start = (leg == 0) ? 0 : 1;
    for (int s = start; s <= per_segment; ++s)
    {
      const Real t = Real(s) / Real(per_segment);
      path.points.push_back(a + t * (c - a));
      path.arc.push_back(arc + t * len);
    }
    arc += len;
  }
  path.node_index.push_back(int(path.points.size()) - 1);
  return path;
}

LatticeKind lattice_kind_from_string(const std::string& s)
{
  if (s == "square")
  {
    return LatticeKind::Square;
  }
  if (s == "hexagonal" || s == "hex")
  {
    return LatticeKind::Hexagonal;
  }
  throw UnsupportedKind("unknown lattice kind: " + s);
}

std::string to_string(LatticeKind kind)
{
  return kind == LatticeKind::Square ? "square" : "hexagonal";
}

RotationGroup rotation_group_from_string(const std::string& s)
{
  if (s == "identity" || s == "c1")
  {
    return RotationGroup::Identity;
  }
  if (s == "c2")
  {
    return RotationGroup::C2;
  }
  if (s == "c3")
  {
    return RotationGroup::C3;
  }
  if (s == "c4")
  {
    return RotationGroup::C4;
  }
  if (s == "c6")
  {
    return RotationGroup::C6;
  }
  throw UnsupportedKind("unknown rotation group: " + s);
}

std::string to_string(RotationGroup g)
{
  switch (g)
  {
    case RotationGroup::Identity:
      return "identity";
    case RotationGroup::C2:
      return "c2";
    case RotationGroup::C3:
      return "c3";
    case RotationGroup::C4:
      return "c4";
    case RotationGroup::C6:
      return "c6";
  }
  return "identity";
}

int rotation_order(RotationGroup g)
{
  switch (g)
  {
    case RotationGroup::Identity:
      return 1;
    case RotationGroup::C2:
      return 2;
    case RotationGroup::C3:
      return 3;
    case RotationGroup::C4:
      return 4;
    case RotationGroup::C6:
      return 6;
  }
  return 1;
}

namespace
{

// Rotation by 2*pi/k expressed in fractional coordinates (A = F^{-1} R F);
// integer exactly when the group is a symmetry of the lattice.
std::array<long, 4> fractional_rotation(const Lattice& lattice, RotationGroup g)
{
  const bool square = lattice.kind == LatticeKind::Square;
  switch (g)
  {
    case RotationGroup::C2:
      return {-1, 0, 0, -1};
    case RotationGroup::C4:
      if (!square)
      {
        throw UnsupportedKind("c4 orbits require a square lattice");
      }
      return {0, -1, 1, 0};
    case RotationGroup::C3:
      if (square)
      {
        throw UnsupportedKind("c3 orbits require a hexagonal lattice");
      }
      return {-1, -1, 1, 0};
    case RotationGroup::C6:
      if (square)
      {
        throw UnsupportedKind("c6 orbits require a hexagonal lattice");
      }
      return {0, -1, 1, 1};
    default:
      return {1, 0, 0, 1};
  }
}

long positive_mod(long v, long n)
{
  const long r = v % n;
  return r < 0 ? r + n : r;
}

}  // namespace

OrbitMap symmetry_orbits(const Lattice& lattice, int n, RotationGroup group, const Vec2& center_frac)
{
  if (n < 1)
  {
    throw ValidationError("grid size must be positive");
  }
  OrbitMap map;
  map.n = n;
  map.group = group;

  // Snap to the nearest cell center; doubled coordinates 2*n*l are odd
  // integers there, which keeps the affine image exactly on the center grid.
  const long ci = long(std::llround(center_frac.x() * n - 0.5));
  const long cj = long(std::llround(center_frac.y() * n - 0.5));
  map.center = Vec2((ci + 0.5) / n, (cj + 0.5) / n);

  const auto a = fractional_rotation(lattice, group);
  const long qx = 2 * ci + 1;  // doubled snapped center
  const long qy = 2 * cj + 1;

  const int cells = n * n;
  map.rotate.resize(cells);
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      const long px = 2 * i + 1 - qx;
      const long py = 2 * j + 1 - qy;
      const long rx = a[0] * px + a[1] * py + qx;
      const long ry = a[2] * px + a[3] * py + qy;
      // rx, ry are odd by construction for the supported groups/centers.
      const long ii = positive_mod((rx - 1) / 2, n);
      const long jj = positive_mod((ry - 1) / 2, n);
      map.rotate[map.cell(i, j)] = int(ii + n * jj);
    }
  }

  map.orbit_of.assign(cells, -1);
  for (int c = 0; c < cells; ++c)
  {
    if (map.orbit_of[c] >= 0)
    {
      continue;
    }
    const int id = int(map.orbits.size());
    std::vector<int> orbit;
    int v = c;
    do
    {
      map.orbit_of[v] = id;
      orbit.push_back(v);
      v = map.rotate[v];
    } while (v != c);
    map.orbits.push_back(std::move(orbit));
  }
  return map;
}

}  // namespace topoband
