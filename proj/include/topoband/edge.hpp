// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_EDGE_HPP
#define TOPOBAND_EDGE_HPP

#include <utility>
#include <vector>

#include "topoband/eigensolver.hpp"
#include "topoband/medium.hpp"
#include "topoband/types.hpp"

namespace topoband
{

// Two periodic media glued along the second lattice vector. Medium 1 fills
// the half plane on the positive side of the interface normal, medium 2 the
// negative side, each tiled `periods` unit cells outward along e1. Both
// tilings are translated by `shift` lattice units along e1 before the cut,
// which selects the termination column of the unit cell at the interface.
// The strip keeps the bulk resolution: n cells along one interface period,
// 2*periods*n across the strip; the transverse index t grows toward the
// medium-1 side and the interface sits between t = periods*n - 1 and
// t = periods*n.
struct Supercell
{
  Lattice lattice;
  int n = 0;
  int periods = 0;
  Real shift = 0.0;
  PermittivityField eps1;
  PermittivityField eps2;
  MatrixXr values;  // (2*periods*n) x n, entry (t, j)

  Vec2 axis() const { return lattice.e2; }  // interface direction
  int transverse_cells() const { return 2 * periods * n; }
  int cells() const { return transverse_cells() * n; }

  // Flattened view, strip cell index c = t + transverse_cells() * j.
  Eigen::Map<const VectorXr> flat() const
  {
    return Eigen::Map<const VectorXr>(values.data(), cells());
  }
};

// Glue two media sharing a lattice and resolution into a strip of 2L periods.
// Throws MismatchedFields when the lattice frames or resolutions differ,
// ValidationError when L < 4 or when shift*n is not a whole number of cells
// (the cell grid can only realize cell-aligned translations).
Supercell build_supercell(const PermittivityField& eps1, const PermittivityField& eps2,
                          int L = 12, Real shift = 0.0);

// Strip pencil at interface wavenumber kpar (radians per period): the same
// nine-point mapped-Laplacian stencil and midpoint quadrature as the bulk
// operator, zero Dirichlet closure at the two transverse ends, and the hops
// wrapping the interface period carrying the phase e^{i kpar} (the Bloch
// factor of the quasi-periodic closure absorbed into the stencil). K is
// Hermitian for every kpar.
struct StripOperator
{
  Real kpar = 0.0;
  SparseMatrixXc K;  // cells x cells
  VectorXr M;        // eps * |det F| / n^2 per strip cell
};
StripOperator assemble_strip(const Supercell& cell, Real kpar);

// Margin classifying "in-gap": a strip eigenvalue counts as in-gap when it
// lies inside (lo + d, hi - d) with d = edge_window_margin * (hi - lo). The
// margin keeps band-edge bulk states out of edge-mode reports.
inline constexpr Real edge_window_margin = 1e-3;

// Strip eigenpairs inside the margin-shrunk window, ascending; psi columns
// are M-orthonormal. count > 0 caps how many pairs are returned (the ones
// nearest the window midpoint win); count <= 0 keeps everything found.
struct EdgeModes
{
  Real kpar = 0.0;
  VectorXr lambda;
  MatrixXc psi;
};
EdgeModes edge_eigs(const Supercell& cell, Real kpar, Real lambda_lo, Real lambda_hi,
                    int count = 0, const EigsOptions& opts = {});

// Fraction of the eps-weighted squared mass within w periods of the
// interface: sum of eps |psi|^2 over |t - periods*n| < w*n, over the same
// sum across the whole strip. Requires 1 <= w < periods.
Real localization(const VectorXc& mode, const Supercell& cell, int w);

// Spectrum of one periodic medium as seen from the strip: hold the Bloch
// component conjugate to the interface direction at kpar, sweep the
// transverse component over one reciprocal period (`samples` points), and
// return per-band [min, max] over the sweep for the lowest `bands` bands.
std::vector<std::pair<Real, Real>> bulk_projection(const PermittivityField& field, Real kpar,
                                                   int bands, int samples = 48,
                                                   const EigsOptions& opts = {});

struct EdgeOptions
{
  int count = 16;               // per-sample cap on reported in-gap pairs
  int width = 4;                // periods defining the interface neighborhood
  Real threshold = 0.9;         // localization fraction classifying an edge mode
  int projection_bands = 0;     // bulk intervals kept per sample (0: skip)
  int projection_samples = 48;  // transverse sweep resolution per projection
  int threads = 1;              // concurrent kpar samples
  EigsOptions eigs{};
};

struct EdgeSample
{
  Real kpar = 0.0;
  VectorXr lambda;            // ascending, strictly inside the shrunk window
  VectorXr localization;      // fraction within `width` periods, per mode
  std::vector<bool> is_edge;  // localization >= threshold
};

// Dispersion of the glued structure over a kpar grid: per-sample in-gap
// eigenvalues with localization data, plus the bulk intervals of each medium
// at the same kpar (bulk1/bulk2 indexed [sample][band], empty when
// projection_bands is 0).
struct EdgeDispersion
{
  Real lambda_lo = 0.0;
  Real lambda_hi = 0.0;
  std::vector<EdgeSample> samples;
  std::vector<std::vector<std::pair<Real, Real>>> bulk1;
  std::vector<std::vector<std::pair<Real, Real>>> bulk2;
};

// Requires a nonempty grid with every kpar in [-pi, pi]. Per-sample solves
// run on opts.threads workers; all shared state is read-only.
EdgeDispersion dispersion(const Supercell& cell, const std::vector<Real>& kpars,
                          Real lambda_lo, Real lambda_hi, const EdgeOptions& opts = {});

}  // namespace topoband

#endif
