// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_EIGENSOLVER_HPP
#define TOPOBAND_EIGENSOLVER_HPP

#include <cstdint>

#include "topoband/types.hpp"

namespace topoband
{

struct EigsOptions
{
  Real tol = 1e-9;            // relative pencil residual per returned pair
  int max_basis = 0;          // 0: automatic (grows with request size)
  int block_size = 1;         // >1 resolves multiplicities faster
  std::uint64_t seed = 0;     // start-vector generator seed
  int dense_cutoff = 1024;    // N <= cutoff solves densely (grid n <= 32)
  Real cluster_rtol = 1e-8;   // relative spacing treated as one cluster
};

struct EigsResult
{
  VectorXr values;     // ascending
  MatrixXc vectors;    // columns, M-orthonormal
  VectorXr residuals;  // relative residuals ||K x - l M x|| / den
};

// q algebraically smallest eigenpairs of the Hermitian pencil (K, diag(m)),
// m > 0, K = K^H >= 0 assumed only for the automatic shift choice. Dense
// solve below the cutoff, otherwise shift-invert block Lanczos with full
// reorthogonalization on a Cholesky factorization of K - sigma M, sigma < 0.
// Throws ConvergenceFailure (message carries the achieved residual) when the
// basis limit is reached first.
EigsResult smallest_eigenpairs(const SparseMatrixXc& K, const VectorXr& m, int q,
                               const EigsOptions& opts = {});

// All eigenpairs with value strictly inside (lo, hi), for pencils whose
// spectrum continues on both sides of the window (supercell strips).
// Shift-invert at the window center; iterations continue until every Ritz
// value inside the window is converged and at least one converged value
// brackets the window on each side (bracket flags report this).
struct WindowResult
{
  VectorXr values;
  MatrixXc vectors;
  bool bracketed_lo = false;
  bool bracketed_hi = false;
};

WindowResult window_eigenpairs(const SparseMatrixXc& K, const VectorXr& m, Real lo, Real hi,
                               const EigsOptions& opts = {});

}  // namespace topoband

#endif
