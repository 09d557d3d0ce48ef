// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_SDPOPT_HPP
#define TOPOBAND_SDPOPT_HPP

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "topoband/bloch.hpp"
#include "topoband/lattice.hpp"
#include "topoband/medium.hpp"
#include "topoband/sdp.hpp"
#include "topoband/types.hpp"

namespace topoband
{

// Iterative maximization of the shared gap-to-midgap ratio of two crystals.
//
// Each outer iteration freezes the current eigenvector frames and solves one
// linear semidefinite program in the scaled variables
//   eps~ = theta * eps   (one value per symmetry orbit per crystal),
//   alpha~ = theta / lambda_lo,  beta~ = theta / lambda_hi,
// normalized by alpha~ + beta~ = 2, theta >= 0. Maximizing alpha~ - beta~
// under spectral blocks per Bloch vector is then exactly maximizing the
// eigenvalue gap-to-midgap ratio of the linearized pencil.

// Global ordering of the decision variables of the per-iterate program:
// [eps~ orbits of crystal 1][eps~ orbits of crystal 2][alpha~][beta~][theta].
struct VariableLayout
{
  Eigen::Index orbit_count_1 = 0;
  Eigen::Index orbit_count_2 = 0;

  Eigen::Index eps_offset(int crystal) const { return crystal == 0 ? 0 : orbit_count_1; }
  Eigen::Index alpha() const { return orbit_count_1 + orbit_count_2; }
  Eigen::Index beta() const { return alpha() + 1; }
  Eigen::Index theta() const { return beta() + 1; }
  Eigen::Index count() const { return theta() + 1; }
};

// Eigenvector frames at one Bloch vector defining the subspace split of the
// linearized program: phi spans the bands at or below the gap, psi the next
// few bands above it. Columns are eps-orthonormal (phi^H M phi = I_m,
// psi^H M psi = I_s, phi^H M psi = 0).
struct Projector
{
  Vec2 kappa{0.0, 0.0};
  int crystal = 0;        // 0-based crystal index
  VectorXr lambda_lower;  // eigenvalues of the phi columns, ascending
  VectorXr lambda_upper;  // eigenvalues of the psi columns, ascending
  MatrixXc phi;           // n^2 x m
  MatrixXc psi;           // n^2 x s
};

// Split one eigensolve into the frame: bands [0, m) -> phi, [m, m + s) -> psi.
Projector make_projector(const BandSolution& bands, int m, int s, int crystal);

// Largest deviation of the frame from eps-orthonormality under the mass
// diagonal (max entry of |phi^H M phi - I|, |psi^H M psi - I|, |phi^H M psi|).
Real projector_orthonormality_residual(const Projector& proj, const VectorXr& mass);

// One linear matrix inequality of the per-iterate program: the Hermitian
// affine combination  constant + sum_v x_v coeff_v  is required positive
// semidefinite. Blocks whose natural requirement is <= 0 are stored negated
// so that every block shares this orientation.
struct LmiBlock
{
  MatrixXc constant;
  std::vector<std::pair<Eigen::Index, MatrixXc>> coefficients;
};

// The linearized gap program of one outer iteration over the scaled
// variables: maximize alpha~ - beta~ subject to the spectral blocks, the
// normalization equality, and box / trust-region / topological rows.
// Row semantics follow the list: equalities require a.x + c == 0,
// inequalities require a.x + c >= 0.
struct SdpProblem
{
  VariableLayout layout;
  VectorXr objective;               // maximize objective . x
  std::vector<LmiBlock> blocks;
  std::vector<SdpRow> equalities;   // alpha~ + beta~ - 2 == 0
  std::vector<SdpRow> inequalities;
};

// Solution of one linearized program mapped back to the named variables.
// Only `status` is meaningful unless the status is Optimal.
struct SdpIterate
{
  SdpStatus status = SdpStatus::NumericalFailure;
  VectorXr x;              // full variable vector in layout order
  Real objective = 0.0;    // alpha~ - beta~ at the solution
  Real alpha_tilde = 0.0;
  Real beta_tilde = 0.0;
  Real theta = 0.0;
  VectorXr eps1_tilde;     // per-orbit scaled permittivities, crystal 1
  VectorXr eps2_tilde;     // crystal 2
};

// Projected stiffness block of the bands below the gap. The requirement
//   alpha~ (phi^H K phi) - sum_o eps~_o (phi^H W_o phi)  <=  0,
// with W_o the diagonal indicator of orbit o times the cell quadrature
// weight, is returned negated (positive-semidefinite orientation).
LmiBlock lower_block(const Projector& proj, const SparseMatrixXc& K, const OrbitMap& orbits,
                     Real cell_weight, const VariableLayout& layout);

// Projected stiffness block of the bands above the gap, stored as required:
//   beta~ (psi^H K psi) - sum_o eps~_o (psi^H W_o psi)  >=  0.
LmiBlock upper_block(const Projector& proj, const SparseMatrixXc& K, const OrbitMap& orbits,
                     Real cell_weight, const VariableLayout& layout);

// First-order model of the gap Berry curvature F of one crystal near one
// valley: its value at the fields being linearized around, its value at the
// initial fields (which sets the decay floor), and its cellwise gradient.
struct ValleyLinearization
{
  int crystal = 0;
  Vec2 valley{0.0, 0.0};  // Bloch vector of the valley (diagnostic only)
  Real f_current = 0.0;
  Real f_initial = 0.0;
  VectorXr grad;          // dF / d eps, cellwise, length n^2
};

// Linear rows keeping each valley curvature on its initial side:
//   sgn(f_current) <delta eps, grad> + tau_p sgn(f_initial) f_initial >= 0
// where delta eps = (eps~ - eps~_prev) / theta_prev, aggregated over orbits.
// Throws DegenerateValley when an initial curvature is below 1e-10 in
// magnitude (its sign would be meaningless).
std::vector<SdpRow> topo_rows(const std::vector<ValleyLinearization>& valleys,
                              const OrbitMap& orbits1, const OrbitMap& orbits2,
                              const VectorXr& eps1_tilde_prev, const VectorXr& eps2_tilde_prev,
                              Real tau_p, Real theta_prev, const VariableLayout& layout);

// Safety-margin schedule of the valley rows: tau_p = (1 - tau0)(1 - r) r^p.
// The series sums to 1 - tau0, so a run that consumes every allowance still
// retains |F| >= tau0 |F_initial| up to linearization error.
Real tau(int p, Real tau0, Real r);

// Everything one outer-iteration assembly depends on. Pointers refer to
// caller-owned state and must outlive the assembled problem's use.
struct AssemblyInput
{
  const PermittivityField* eps1 = nullptr;  // current admissible fields,
  const PermittivityField* eps2 = nullptr;  // constant on every orbit
  const OrbitMap* orbits1 = nullptr;
  const OrbitMap* orbits2 = nullptr;
  std::vector<Projector> projectors;        // both crystals, full constraint set
  std::vector<ValleyLinearization> valleys; // empty when unconstrained
  Real theta_prev = 0.0;   // scale fixing eps~_prev = theta_prev * eps
  Real trust_radius = 0.1; // rho: |eps~ - eps~_prev| <= rho (hi - lo) theta_prev
  Real tau_p = 0.0;        // margin of the valley rows this iteration
};

// Build the full program: objective alpha~ - beta~, lower/upper blocks for
// every projector, theta >= 0, per-orbit box rows theta lo <= eps~ <= theta hi,
// trust-region rows about theta_prev * eps, the normalization equality, and
// the valley rows when linearizations are present.
SdpProblem assemble(const AssemblyInput& in);

// Strictly feasible starting point of an assembled problem built from the
// current gap edges: theta = 2 ll lu / (ll + lu), alpha~ = theta / ll,
// beta~ = theta / lu, eps~ = theta eps. Satisfies every block, with equality
// exactly at the arg-extremal Bloch vectors.
VectorXr warm_start(const AssemblyInput& in, Real lambda_lo, Real lambda_hi);

// Largest constraint violation of an assignment: negative-eigenvalue depth
// of any block, slack deficit of any inequality, mismatch of any equality.
// Each violation is measured relative to 1 + the magnitude of the evaluated
// constraint's largest term, so the result is scale-free.
Real feasibility_residual(const SdpProblem& problem, const VectorXr& x);

// Solve one assembled program: the normalization equality is eliminated by
// substitution, Hermitian blocks are realified to symmetric blocks of
// doubled size, per-crystal variable grouping is handed to the backend, and
// the solution is mapped back to the named variables. Backend failures are
// carried in `status`, never thrown.
SdpIterate solve(const SdpProblem& problem, const SdpOptions& backend = {});

// Invert the scaling: eps = eps~ / theta, expanded from orbits to cells and
// clamped to the admissible box. Throws DegenerateScale when theta <= 1e-10.
std::pair<PermittivityField, PermittivityField> recover(const SdpIterate& iterate,
                                                        const AssemblyInput& in);

// Constraint Bloch set: the high-symmetry loop sampled with `per_segment`
// intervals per leg plus a uniform interior x interior grid of the
// primitive reciprocal cell, exact duplicates removed. `interior` = 0 skips
// the grid.
std::vector<Vec2> constraint_kappas(const Lattice& lattice, int per_segment, int interior);

enum class InvariantMode
{
  None,    // maximize the gap only
  Valley   // additionally pin the sign of the valley curvature contrast
};

struct OptimizeOptions
{
  int m = 3;                  // gap index: open between bands m and m + 1
  int surfaces = 3;           // bands kept above the gap (upper-block size)
  int path_per_segment = 8;   // high-symmetry sampling of the constraint set
  int interior_grid = 6;      // interior kappa samples per direction (0: none)
  RotationGroup group = RotationGroup::Identity;
  Vec2 symmetry_center{0.0, 0.0};  // fractional; snapped by the orbit map

  InvariantMode invariant = InvariantMode::None;
  Vec2 valley1{0.0, 0.0};     // Cartesian Bloch vectors of the valley pair
  Vec2 valley2{0.0, 0.0};
  Real valley_radius = -1.0;  // integration disk radius; < 0: |b1| / 4
  int valley_nk = 12;         // k-grid tracking the valley curvature

  Real tau0 = 0.5;            // retained curvature fraction at convergence
  Real tau_ratio = 0.5;       // geometric decay of the per-step allowance
  Real trust_radius = 0.1;    // rho, halved on solver failure within a step
  Real tolerance = 1e-3;      // converged: RMS(delta eps) < tolerance * (hi - lo)
  int max_iterations = 30;
  int threads = 1;            // concurrent eigensolves within one iteration

  SdpOptions backend;
  EigsOptions eigs;
  std::ostream* log = nullptr;  // line-delimited trace records when set
};

// State after `iteration` accepted steps; iteration 0 is the initial pair.
struct TraceRecord
{
  int iteration = 0;
  Real lambda_lo = 0.0;
  Real lambda_hi = 0.0;
  Real j_gap = 0.0;  // eigenvalue-unit gap-to-midgap
  Real g_gap = 0.0;  // frequency-unit gap-to-midgap

  // Solver data of the step that produced this state (iteration >= 1).
  SdpStatus status = SdpStatus::Optimal;
  Real objective = 0.0;
  Real theta = 0.0;
  Real alpha_tilde = 0.0;
  Real beta_tilde = 0.0;
  Real warm_start_residual = 0.0;  // feasibility of the warm start
  Real solution_residual = 0.0;    // feasibility of the accepted iterate
  Real trust_radius = 0.0;         // radius actually used (after halvings)
  Real delta_eps1 = 0.0;           // RMS change from the previous record
  Real delta_eps2 = 0.0;

  // Valley curvature per (crystal, valley), flattened crystal-major, with
  // the guaranteed floor |F_initial| (tau0 + (1 - tau0) r^(p+1)) alongside;
  // empty when unconstrained.
  VectorXr valley_f;
  VectorXr valley_floor;

  PermittivityField eps1;  // admissible snapshot
  PermittivityField eps2;
};

struct OptimizationTrace
{
  TraceRecord initial;
  std::vector<TraceRecord> records;  // one per accepted iteration
  bool converged = false;
  std::string termination;  // "converged" | "max_iterations" | "solver_failure"
};

// Alternate eigensolves and linearized programs until the RMS change of both
// fields drops below tolerance * (hi - lo) or the iteration budget is spent.
// The fields are symmetrized on entry; every iterate is exactly symmetric.
// Throws GapClosed when the shared gap is not open at any visited pair,
// DegenerateValley when a tracked curvature starts too close to zero, and
// MismatchedFields when the two fields disagree on lattice, grid, or bounds.
// Solver failures are retried with a halved trust radius up to three times,
// then terminate the trace with termination = "solver_failure".
OptimizationTrace run_optimization(const PermittivityField& eps1, const PermittivityField& eps2,
                                   const OptimizeOptions& opts);

}  // namespace topoband

#endif
