// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_TOPO_HPP
#define TOPOBAND_TOPO_HPP

#include <utility>
#include <vector>

#include "topoband/bloch.hpp"
#include "topoband/lattice.hpp"
#include "topoband/medium.hpp"
#include "topoband/types.hpp"

namespace topoband
{

// Berry curvature accumulated per k-plaquette as a raw phase in (-pi, pi];
// the curvature density is phase / area. Summing phase / (2 pi) over the
// whole grid gives the Chern number of the band group.
struct CurvatureField
{
  KGrid grid;
  MatrixXr phase;  // (nk x nk), plaquette (i, j) has corners at grid points
  Real area = 0.0;

  Real total() const { return phase.sum(); }
};

// Phase of the oriented overlap product around one plaquette whose corners
// c0 -> c1 -> c2 -> c3 run counter-clockwise. Each link contributes
// det(next^H diag(mass) current); the phase of the product is invariant
// under per-corner unitary gauge changes. Throws SingularOverlap when a
// link determinant magnitude falls below 1e-10 (k-grid too coarse, or a
// band crossing splits the group).
Real plaquette_phase(const MatrixXc& c0, const MatrixXc& c1, const MatrixXc& c2,
                     const MatrixXc& c3, const VectorXr& mass);

// Curvature of several band groups {first_band, band_count} from a single
// eigensolve sweep over an nk x nk Bloch grid. Plaquette corners that wrap
// past the grid edge reuse the base solution through its periodic-gauge
// image, so each grid point is solved exactly once.
std::vector<CurvatureField> curvature_maps(const PermittivityField& eps, int nk,
                                           const std::vector<std::pair<int, int>>& groups,
                                           const EigsOptions& opts = {});

CurvatureField curvature_map(const PermittivityField& eps, int nk, int first_band, int band_count,
                             const EigsOptions& opts = {});

struct ChernResult
{
  int value = 0;
  Real residual = 0.0;  // |total/2pi - value| before rounding
};

// Chern number of the mapped band group. Throws QuantizationFailure when the
// curvature sum misses an integer by more than `quantization_tol`.
ChernResult chern(const CurvatureField& field, Real quantization_tol = 0.05);

// Sum of plaquette phases / (2 pi) over plaquettes whose centers lie within
// `radius` of `valley` (periodic distance in the reciprocal lattice).
Real local_curvature(const CurvatureField& field, const Vec2& valley, Real radius);

struct ValleyReport
{
  Real c1 = 0.0;  // local curvature around valley 1
  Real c2 = 0.0;  // local curvature around valley 2
  int sign = 0;   // sgn(c1 - c2); 0 when the contrast is below 1e-8
};

// Valley contrast of the band group [first_band, first_band + band_count).
// `radius` < 0 selects the default disk radius |b1| / 4.
ValleyReport valley_chern(const PermittivityField& eps, int nk, int first_band, int band_count,
                          const Vec2& valley1, const Vec2& valley2, Real radius = -1.0,
                          const EigsOptions& opts = {});

// Wilson-loop eigenphases of a band group: for each of `samples_t1` values
// t1 in [0, 1), transport the group along kappa(j) = t1 b1 + (j / samples_t2) b2
// and record the sorted eigenphases of the accumulated overlap product. The
// loop closes through the periodic-gauge image of the starting frame.
struct WilsonSpectrum
{
  VectorXr t1;       // sweep parameter per row
  MatrixXr phases;   // (samples_t1 x band_count), each row sorted ascending
};

WilsonSpectrum wilson_loop(const PermittivityField& eps, int first_band, int band_count,
                           int samples_t1, int samples_t2, const EigsOptions& opts = {});

// Solve (K - lambda M) u = rhs - M B (B^H rhs) with B^H M u = 0 through a
// bordered factorization, where B is an M-orthonormal basis of the (near-)
// kernel at eigenvalue lambda. This is the pseudo-inverse solve used by the
// curvature sensitivity. Throws SingularSystem when the factorization or the
// residual check fails (flags eigenvalues degenerate with bands outside B).
VectorXc solve_deflated(const BlochOperator& op, Real lambda, const MatrixXc& border,
                        const VectorXc& rhs);

// Sum of plaquette phases over a plaquette subset together with its exact
// Frechet gradient with respect to cellwise permittivity (column-major cell
// order, length n * n). Dividing both by 2 pi gives the local Chern
// contribution and its gradient.
struct RegionCurvature
{
  Real value = 0.0;
  VectorXr grad;
};

RegionCurvature region_curvature(const PermittivityField& eps, int nk, int first_band,
                                 int band_count,
                                 const std::vector<std::pair<int, int>>& plaquettes,
                                 const EigsOptions& opts = {});

// Plaquette indices whose centers lie within `radius` of `center` under the
// periodic reciprocal-lattice distance.
std::vector<std::pair<int, int>> disk_plaquettes(const KGrid& grid, const Vec2& center,
                                                 Real radius);

}  // namespace topoband

#endif
