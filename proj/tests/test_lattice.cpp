// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "topoband/errors.hpp"
#include "topoband/lattice.hpp"

using namespace topoband;

TEST_CASE("reciprocal basis is biorthogonal to the direct basis")
{
  for (const Lattice& lat : {Lattice::square(), Lattice::hexagonal()})
  {
    const Mat2 b = reciprocal(lat);
    CHECK(std::abs(b.col(0).dot(lat.e1) - 2.0 * pi) < 1e-12);
    CHECK(std::abs(b.col(1).dot(lat.e2) - 2.0 * pi) < 1e-12);
    CHECK(std::abs(b.col(0).dot(lat.e2)) < 1e-12);
    CHECK(std::abs(b.col(1).dot(lat.e1)) < 1e-12);
  }
}

TEST_CASE("reciprocal basis matches a direct linear solve")
{
  // Independent oracle: solve F^T B = 2 pi I column by column.
  const Lattice lat = Lattice::hexagonal();
  const Mat2 f = lat.frame();
  const Mat2 oracle = f.transpose().fullPivLu().solve(2.0 * pi * Mat2::Identity());
  CHECK((reciprocal(lat) - oracle).norm() < 1e-12);

  // Hexagonal values in closed form.
  const Mat2 b = reciprocal(lat);
  CHECK(std::abs(b(0, 0) - 2.0 * pi) < 1e-12);
  CHECK(std::abs(b(1, 0) + 2.0 * pi / std::sqrt(3.0)) < 1e-12);
  CHECK(std::abs(b(0, 1)) < 1e-12);
  CHECK(std::abs(b(1, 1) - 4.0 * pi / std::sqrt(3.0)) < 1e-12);
}

TEST_CASE("degenerate lattice is rejected")
{
  Lattice bad{Vec2(1.0, 0.0), Vec2(2.0, 0.0), LatticeKind::Square};
  CHECK_THROWS_AS(reciprocal(bad), DegenerateLattice);
}

TEST_CASE("k-grid contains Gamma and tiles the reciprocal cell")
{
  for (const Lattice& lat : {Lattice::square(), Lattice::hexagonal()})
  {
    for (int nk : {8, 13, 24})
    {
      const KGrid grid = k_grid(lat, nk);
      CHECK(grid.point(grid.offset, grid.offset).norm() < 1e-14);
      // Fractions stay in [-1/2, 1/2).
      for (int i = 0; i < nk; ++i)
      {
        CHECK(grid.frac(i) >= -0.5);
        CHECK(grid.frac(i) < 0.5);
      }
      // Plaquette areas tile the zone exactly.
      CHECK(grid.plaquette_area() * nk * nk == doctest::Approx(grid.zone_area()).epsilon(1e-14));
      // Zone area equals |det(2 pi F^{-T})|.
      const Real cell = lat.cell_area();
      CHECK(grid.zone_area() == doctest::Approx(4.0 * pi * pi / cell).epsilon(1e-12));
    }
  }
}

TEST_CASE("high-symmetry path visits the documented corners")
{
  const KPath sq = high_symmetry_path(Lattice::square(), 8);
  CHECK(sq.labels == std::vector<std::string>{"G", "M", "N", "G"});
  CHECK((sq.points[sq.node_index[0]] - Vec2(0, 0)).norm() < 1e-14);
  CHECK((sq.points[sq.node_index[1]] - Vec2(pi, 0)).norm() < 1e-14);
  CHECK((sq.points[sq.node_index[2]] - Vec2(pi, pi)).norm() < 1e-14);
  CHECK((sq.points[sq.node_index[3]] - Vec2(0, 0)).norm() < 1e-14);
  CHECK(int(sq.points.size()) == 3 * 8 + 1);
  // Arclength is strictly increasing.
  for (std::size_t i = 1; i < sq.arc.size(); ++i)
  {
    CHECK(sq.arc[i] > sq.arc[i - 1]);
  }

  const KPath hex = high_symmetry_path(Lattice::hexagonal(), 5);
  CHECK(hex.labels == std::vector<std::string>{"G", "M", "K", "G"});
  const Mat2 b = reciprocal(Lattice::hexagonal());
  CHECK((hex.points[hex.node_index[1]] - 0.5 * (b.col(0) + b.col(1))).norm() < 1e-12);
  CHECK((hex.points[hex.node_index[2]] - Vec2(4.0 * pi / 3.0, 0.0)).norm() < 1e-12);
}

namespace
{

// Oracle: rotate cell centers in Cartesian coordinates and find the nearest
// cell center of the periodic image; compare with the integer permutation.
void check_rotation_geometry(const Lattice& lat, int n, RotationGroup g, const Vec2& center)
{
  const OrbitMap map = symmetry_orbits(lat, n, g, center);
  const Mat2 f = lat.frame();
  const Real angle = 2.0 * pi / rotation_order(g);
  Mat2 rot;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  const Vec2 c_cart = f * map.center;
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      const Vec2 x = f * Vec2((i + 0.5) / n, (j + 0.5) / n);
      const Vec2 y = c_cart + rot * (x - c_cart);
      const Vec2 l = f.inverse() * y;  // fractional, any branch
      const Real fi = l.x() * n - 0.5;
      const Real fj = l.y() * n - 0.5;
      const long ri = std::lround(fi);
      const long rj = std::lround(fj);
      CHECK(std::abs(fi - ri) < 1e-9);  // lands exactly on a center
      CHECK(std::abs(fj - rj) < 1e-9);
      const int ii = int(((ri % n) + n) % n);
      const int jj = int(((rj % n) + n) % n);
      CHECK(map.rotate[map.cell(i, j)] == map.cell(ii, jj));
    }
  }
}

}  // namespace

TEST_CASE("rotation orbits agree with Cartesian geometry")
{
  check_rotation_geometry(Lattice::square(), 12, RotationGroup::C4, Vec2(0.5, 0.5));
  check_rotation_geometry(Lattice::square(), 9, RotationGroup::C2, Vec2(0.5, 0.5));
  check_rotation_geometry(Lattice::hexagonal(), 12, RotationGroup::C3, Vec2(1.0 / 3, 1.0 / 3));
  check_rotation_geometry(Lattice::hexagonal(), 10, RotationGroup::C6, Vec2(0.0, 0.0));
}

TEST_CASE("orbits partition the grid and close under rotation")
{
  const int n = 12;
  const OrbitMap map = symmetry_orbits(Lattice::hexagonal(), n, RotationGroup::C6, Vec2(0, 0));
  std::set<int> seen;
  for (const auto& orbit : map.orbits)
  {
    CHECK(!orbit.empty());
    CHECK(6 % orbit.size() == 0);  // cycle length divides the group order
    for (int c : orbit)
    {
      CHECK(seen.insert(c).second);       // each cell exactly once
      CHECK(map.orbit_of[c] == map.orbit_of[orbit.front()]);
      CHECK(map.orbit_of[map.rotate[c]] == map.orbit_of[c]);  // closure
    }
  }
  CHECK(int(seen.size()) == n * n);

  // Applying the rotation k times is the identity permutation.
  for (int c = 0; c < n * n; ++c)
  {
    int v = c;
    for (int r = 0; r < 6; ++r)
    {
      v = map.rotate[v];
    }
    CHECK(v == c);
  }
}

TEST_CASE("identity group gives singleton orbits")
{
  const OrbitMap map = symmetry_orbits(Lattice::square(), 7, RotationGroup::Identity, Vec2(0.5, 0.5));
  CHECK(int(map.orbits.size()) == 49);
  for (const auto& orbit : map.orbits)
  {
    CHECK(orbit.size() == 1);
  }
}

TEST_CASE("incompatible rotation groups are rejected")
{
  CHECK_THROWS_AS(symmetry_orbits(Lattice::square(), 8, RotationGroup::C3, Vec2(0.5, 0.5)),
                  UnsupportedKind);
  CHECK_THROWS_AS(symmetry_orbits(Lattice::square(), 8, RotationGroup::C6, Vec2(0.5, 0.5)),
                  UnsupportedKind);
  CHECK_THROWS_AS(symmetry_orbits(Lattice::hexagonal(), 8, RotationGroup::C4, Vec2(0.5, 0.5)),
                  UnsupportedKind);
}
