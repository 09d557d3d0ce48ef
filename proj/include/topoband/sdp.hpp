// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_SDP_HPP
#define TOPOBAND_SDP_HPP

#include <utility>
#include <vector>

#include "topoband/types.hpp"

namespace topoband
{

// One positive-semidefinite constraint over real symmetric matrices,
//   constant + sum_t x[coefficients[t].first] * coefficients[t].second  >= 0
// in the Loewner order. All matrices share the block size.
struct SdpBlock
{
  MatrixXr constant;
  std::vector<std::pair<Eigen::Index, MatrixXr>> coefficients;
};

// One scalar inequality  constant + sum_t value_t * x[var_t] >= 0.
struct SdpRow
{
  Real constant = 0;
  std::vector<std::pair<Eigen::Index, Real>> coefficients;
};

// Linear semidefinite program in inequality form:
//
//   maximize  objective . x
//   subject to every block and every row constraint.
//
// variable_group is optional (empty, or one entry per variable): -1 marks a
// shared variable, g >= 0 assigns a group. No single block or row may touch
// two distinct groups; the Newton systems then factor group-by-group with a
// small shared Schur complement instead of one dense solve. Grouping never
// changes the optimum, only the factorization cost.
struct SdpModel
{
  Eigen::Index variable_count = 0;
  VectorXr objective;
  std::vector<SdpBlock> blocks;
  std::vector<SdpRow> rows;
  std::vector<int> variable_group;
};

enum class SdpStatus
{
  Optimal,
  Infeasible,         // constraints admit no point (certificate found)
  Unbounded,          // objective unbounded above (improving ray found)
  NumericalFailure,   // no certified conclusion within the iteration budget
};

const char* to_string(SdpStatus status);

struct SdpSolution
{
  SdpStatus status = SdpStatus::NumericalFailure;
  VectorXr x;                // maximizer (Optimal) or improving ray (Unbounded)
  Real objective = 0;        // objective . x at the returned point
  Real duality_gap = 0;      // relative primal-dual gap at termination
  Real primal_residual = 0;  // worst constraint violation at x (absolute)
  Real dual_residual = 0;    // relative dual feasibility residual
  int iterations = 0;
};

struct SdpOptions
{
  Real tolerance = 1e-8;  // feasibility and relative-gap target
  int max_iterations = 200;
  bool verbose = false;   // per-iteration trace on stderr
};

// Primal-dual interior-point solve of the model through a homogeneous
// self-dual embedding with Nesterov-Todd scaling and predictor-corrector
// steps, so infeasibility and unboundedness emerge as certificates rather
// than divergence. Every variable must appear in at least one block or row;
// block matrices must be square, symmetric, and of matching size; the
// grouping, when present, must not couple two groups in one constraint.
// Malformed input throws ValidationError; numerical breakdown is reported
// through the status, never thrown.
SdpSolution solve_sdp(const SdpModel& model, const SdpOptions& options = {});

// Symmetric real embedding [[A, -B], [B, A]] of the Hermitian part of
// A + iB. Eigenvalues are preserved with doubled multiplicity, so
// semidefiniteness constraints carry over verbatim.
MatrixXr real_embedding(const MatrixXc& hermitian);

}  // namespace topoband

#endif
