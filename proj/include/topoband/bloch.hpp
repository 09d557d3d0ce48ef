// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_BLOCH_HPP
#define TOPOBAND_BLOCH_HPP

#include <vector>

#include "topoband/eigensolver.hpp"
#include "topoband/medium.hpp"
#include "topoband/types.hpp"

namespace topoband
{

// Discrete Bloch eigenproblem K(kappa) phi = lambda M phi on the n x n
// cell-center grid. K applies -(grad + i kappa) . (grad + i kappa) in
// lattice-mapped coordinates through a nine-point stencil whose hops carry
// the Bloch phase exp(+-i ktilde_a h) (ktilde = F^T kappa). This keeps K
// exactly Hermitian, positive semidefinite for every kappa, and exactly
// gauge-periodic: K(kappa + b) = U K(kappa) U^H with U = diag(e^{-i b.x}).
// Entries carry the midpoint quadrature measure, so M = diag(eps * |det F|/n^2)
// and the pencil eigenvalues approximate omega^2 directly.
struct BlochOperator
{
  Lattice lattice;
  int n = 0;
  Vec2 kappa;
  SparseMatrixXc K;
  VectorXr M;  // diagonal
};

BlochOperator assemble_bloch(const PermittivityField& eps, const Vec2& kappa);

// Eigenpairs at one Bloch vector: ascending eigenvalues, eps-orthonormal
// eigenvectors (phi^H M phi = I), relative residuals of the returned pairs.
struct BandSolution
{
  Vec2 kappa;
  VectorXr lambda;
  MatrixXc phi;
  VectorXr residuals;
};

BandSolution eigensolve(const BlochOperator& op, int q, const EigsOptions& opts = {});

std::vector<BandSolution> band_structure(const PermittivityField& eps,
                                         const std::vector<Vec2>& kappas, int q,
                                         const EigsOptions& opts = {}, int threads = 1);

// Gap between band m and band m+1 over a sampled Bloch set (one or two
// crystals). lambda_lo = max of band m, lambda_hi = min of band m+1;
// a closed gap is reported through `open`, never thrown.
struct GapReport
{
  int m = 0;
  Real lambda_lo = 0.0;
  Real lambda_hi = 0.0;
  bool open = false;
  Real j_gap = 0.0;  // 2(l_hi - l_lo)/(l_hi + l_lo), eigenvalue units
  Real g_gap = 0.0;  // 2(w_hi - w_lo)/(w_hi + w_lo), frequency units
  int arg_lo_crystal = 0;  // 0-based crystal index attaining lambda_lo
  int arg_hi_crystal = 0;
  Vec2 arg_lo_kappa;
  Vec2 arg_hi_kappa;
};

GapReport gap_report(const std::vector<const std::vector<BandSolution>*>& crystals, int m);
GapReport gap_report(const std::vector<BandSolution>& crystal, int m);
GapReport gap_report(const std::vector<BandSolution>& crystal1,
                     const std::vector<BandSolution>& crystal2, int m);

// Periodic-gauge image of eigenvectors under kappa -> kappa + b_axis:
// multiplies row c by exp(-2 pi i l_axis(c)). Exact for the link stencil.
MatrixXc translate_bloch_gauge(const MatrixXc& phi, int n, int axis);

}  // namespace topoband

#endif
