// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_LATTICE_HPP
#define TOPOBAND_LATTICE_HPP

#include <string>
#include <vector>

#include "topoband/types.hpp"

namespace topoband
{

enum class LatticeKind
{
  Square,
  Hexagonal
};

LatticeKind lattice_kind_from_string(const std::string& s);
std::string to_string(LatticeKind kind);

// Two-dimensional Bravais lattice spanned by e1, e2 (Cartesian columns of F).
struct Lattice
{
  Vec2 e1;
  Vec2 e2;
  LatticeKind kind;

  static Lattice square();
  static Lattice hexagonal();

  // F = [e1 e2]; maps fractional (lattice) coordinates to Cartesian.
  Mat2 frame() const;
  Real cell_area() const;  // |det F|
};

// Reciprocal basis (b1, b2) with bi . ej = 2*pi*delta_ij.
// Throws DegenerateLattice when e1, e2 are numerically parallel.
Mat2 reciprocal(const Lattice& lattice);

// Uniform Nk x Nk grid of Bloch vectors tiling the primitive reciprocal cell
// { s1 b1 + s2 b2 : s in [-1/2, 1/2) }, aligned so Gamma = (0,0) is a grid
// point (index `offset` in each direction). Index i may run to Nk inclusive
// in corner queries; the extra sample is the periodic image shifted by b.
struct KGrid
{
  Lattice lattice;
  int nk = 0;
  int offset = 0;  // index of the s = 0 row/column
  Mat2 b;          // columns b1, b2

  Real frac(int i) const { return Real(i - offset) / Real(nk); }
  Vec2 point(int i, int j) const { return b.col(0) * frac(i) + b.col(1) * frac(j); }
  Vec2 plaquette_center(int i, int j) const
  {
    return b.col(0) * (frac(i) + 0.5 / nk) + b.col(1) * (frac(j) + 0.5 / nk);
  }
  Real plaquette_area() const;
  Real zone_area() const;  // |b1 x b2| = plaquette_area * nk^2
};

KGrid k_grid(const Lattice& lattice, int nk);

// Piecewise-linear loop through the labeled high-symmetry points, sampled
// uniformly with `per_segment` intervals per leg; both endpoints of the loop
// are included, interior joints appear once.
struct KPath
{
  std::vector<std::string> labels;      // node labels, size = legs + 1
  std::vector<int> node_index;          // index into points for each node
  std::vector<Vec2> points;
  std::vector<Real> arc;                // cumulative arclength per point
};

KPath high_symmetry_path(const Lattice& lattice, int per_segment);

enum class RotationGroup
{
  Identity,
  C2,
  C3,
  C4,
  C6
};

RotationGroup rotation_group_from_string(const std::string& s);
std::string to_string(RotationGroup g);
int rotation_order(RotationGroup g);

// Partition of the n x n cell-center grid into orbits of the cyclic rotation
// group acting about `center` (fractional coordinates). The center is snapped
// to the nearest cell center: rotations of order 3, 4, 6 map the half-integer
// center grid onto itself only about such points, and snapping keeps the
// permutation exact in integer arithmetic.
struct OrbitMap
{
  int n = 0;
  RotationGroup group = RotationGroup::Identity;
  Vec2 center;                        // snapped center, fractional coordinates
  std::vector<int> rotate;            // cell -> image cell under one rotation
  std::vector<int> orbit_of;          // cell -> orbit id
  std::vector<std::vector<int>> orbits;

  int cell(int i, int j) const { return i + n * j; }
};

// Throws UnsupportedKind when the group is not a symmetry of the lattice
// (C4 needs square, C3/C6 need hexagonal).
OrbitMap symmetry_orbits(const Lattice& lattice, int n, RotationGroup group, const Vec2& center_frac);

}  // namespace topoband

#endif
