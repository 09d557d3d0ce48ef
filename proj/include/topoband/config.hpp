// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "topoband/eigensolver.hpp"
#include "topoband/medium.hpp"
#include "topoband/sdpopt.hpp"

namespace topoband
{

// Initial-field source of one crystal: either a grid-file path or a painted
// geometry (background plus shapes in painter's order). Exactly one of the
// two is present in a valid config; a geometry with no shapes is a uniform
// medium.
struct CrystalSource
{
  std::string grid_path;          // empty unless the source is a grid file
  bool has_geometry = false;      // background or shape keys were given
  Real background = 1.0;
  std::vector<ShapeSpec> shapes;
};

// One experiment setup parsed from key-value text. Keys, ranges, and
// defaults (config key = header field):
//
//   lattice          square | hexagonal            (required)
//   n                cells per side, >= 3          (required)
//   m                gap band index, >= 1          (required)
//   eps_lo           lower permittivity bound       1.0
//   eps_hi           upper permittivity bound      (required, > eps_lo)
//   nk               invariant k-grid, >= 2         24
//   path_per_segment constraint path sampling       8
//   interior_grid    interior constraint grid       6
//   surfaces         bands kept above the gap       3
//   symmetry         identity|c2|c3|c4|c6           identity
//   symmetry_center  fractional center, two reals   0 0
//   invariant        none | valley                  none
//   valley1          Cartesian Bloch vector        (required when valley)
//   valley2          Cartesian Bloch vector        (required when valley)
//   valley_radius    disk radius, < 0: |b1|/4       -1
//   valley_nk        valley k-grid, >= 2            12
//   tau0             retained curvature floor       0.5   (0, 1]
//   tau_ratio        margin decay ratio             0.5   (0, 1)
//   trust_radius     step bound rho                 0.1   > 0
//   tolerance        RMS convergence threshold      1e-3  > 0
//   max_iterations   outer iteration budget         30    >= 0
//   sdp_tolerance    conic solver tolerance         1e-8  > 0
//   eigs_tolerance   eigensolver tolerance          1e-9  > 0
//   seed             eigensolver start seed         0
//   edge_periods     supercell periods per side     12    >= 4
//   edge_shift       lateral interface shift        0
//   edge_samples     parallel-momentum samples      41    >= 2
//   edge_width       localization window, periods   4     >= 1
//   out              output directory               "out"
//
// plus per-crystal sections [crystal1] and [crystal2]:
//
//   grid        path to a grid file (exclusive with geometry keys)
//   background  base permittivity                   eps_lo
//   shape       repeatable; painter's order:
//                 disk <cx> <cy> <diameter> <fill>
//                 triangle <cx> <cy> <edge> <corner> <fill>
//                   corner: lower_left|lower_right|upper_left|upper_right
//                 polygon <x1> <y1> ... <xk> <yk> <fill>   (k >= 3)
//
// Shape coordinates are Cartesian. '#' starts a comment; blank lines are
// ignored; keys may not repeat except `shape`.
struct RunConfig
{
  Lattice lattice = Lattice::square();
  int n = 0;
  Real eps_lo = 1.0;
  Real eps_hi = 0.0;
  int nk = 24;
  unsigned seed = 0;

  OptimizeOptions optimize;  // m, surfaces, sampling, symmetry, invariant,
                             // valleys, tau/trust/tolerance, iterations,
                             // backend and eigensolver tolerances

  int edge_periods = 12;
  Real edge_shift = 0.0;
  int edge_samples = 41;
  int edge_width = 4;

  std::string out = "out";
  CrystalSource crystal1;
  CrystalSource crystal2;
};

// Parse config text / a config file. Structural problems (unknown key,
// malformed value, repeated key, bad section) throw ParseError naming the
// line; range and consistency problems are collected and thrown as one
// ValidationError listing every violation. `name` labels the text in
// diagnostics.
RunConfig parse_config_text(const std::string& text, const std::string& name = "config");
RunConfig parse_config(const std::string& path);

// Materialize one crystal (index 0 or 1): rasterize the geometry or read
// the grid file (whose lattice, n, and bounds must match the config), then
// apply the configured symmetry projection. Grid-file values outside the
// bounds throw ValidationError listing the violations.
PermittivityField realize_crystal(const RunConfig& config, int crystal);

}  // namespace topoband
