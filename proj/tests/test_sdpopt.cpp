// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "topoband/bloch.hpp"
#include "topoband/errors.hpp"
#include "topoband/medium.hpp"
#include "topoband/sdpopt.hpp"
#include "topoband/topo.hpp"

using namespace topoband;

namespace
{

PermittivityField triangle_crystal(int n, bool lower_left)
{
  const Real s = 0.45;
  const Real c0 = (1.0 - s) / 2.0;
  const Vec2 corner = lower_left ? Vec2(c0, c0) : Vec2(1.0 - c0, 1.0 - c0);
  const TriangleCorner orient = lower_left ? TriangleCorner::LowerLeft : TriangleCorner::UpperRight;
  return rasterize(Lattice::square(), n, 1.0, {ShapeSpec::triangle(corner, s, orient, 11.7)}, 1.0,
                   11.7);
}

PermittivityField random_field(int n, Real lo, Real hi, unsigned seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> dist(lo, hi);
  PermittivityField f;
  f.lattice = Lattice::square();
  f.n = n;
  f.lo = lo;
  f.hi = hi;
  f.values = MatrixXr::NullaryExpr(n, n, [&] { return dist(rng); });
  return f;
}

MatrixXc block_value(const LmiBlock& block, const VectorXr& x)
{
  MatrixXc value = block.constant;
  for (const auto& [v, coeff] : block.coefficients)
  {
    value += x[v] * coeff;
  }
  return value;
}

Real row_value(const SdpRow& row, const VectorXr& x)
{
  Real value = row.constant;
  for (const auto& [v, coeff] : row.coefficients)
  {
    value += x[v] * coeff;
  }
  return value;
}

Real min_eigenvalue(const MatrixXc& a)
{
  return Eigen::SelfAdjointEigenSolver<MatrixXc>(a, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

// Expand per-orbit values to cells.
VectorXr expand(const OrbitMap& orbits, const VectorXr& per_orbit)
{
  VectorXr cells(orbits.n * orbits.n);
  for (std::size_t o = 0; o < orbits.orbits.size(); ++o)
  {
    for (int c : orbits.orbits[o])
    {
      cells[c] = per_orbit[Eigen::Index(o)];
    }
  }
  return cells;
}

// Hand-built two-crystal scalar program: per crystal, a lower block
// eps~ - alpha~ a >= 0, an upper block beta~ b - eps~ >= 0, and the box
// theta lo <= eps~ <= theta hi, sharing alpha~ + beta~ = 2 and theta >= 0.
SdpProblem scalar_toy(Real a, Real b, Real lo, Real hi)
{
  SdpProblem prob;
  prob.layout.orbit_count_1 = 1;
  prob.layout.orbit_count_2 = 1;
  prob.objective = VectorXr::Zero(prob.layout.count());
  prob.objective[prob.layout.alpha()] = 1.0;
  prob.objective[prob.layout.beta()] = -1.0;

  for (int crystal = 0; crystal < 2; ++crystal)
  {
    const Eigen::Index e = prob.layout.eps_offset(crystal);
    LmiBlock lower;
    lower.constant = MatrixXc::Zero(1, 1);
    lower.coefficients = {{e, MatrixXc::Constant(1, 1, 1.0)},
                          {prob.layout.alpha(), MatrixXc::Constant(1, 1, -a)}};
    prob.blocks.push_back(lower);

    LmiBlock upper;
    upper.constant = MatrixXc::Zero(1, 1);
    upper.coefficients = {{e, MatrixXc::Constant(1, 1, -1.0)},
                          {prob.layout.beta(), MatrixXc::Constant(1, 1, b)}};
    prob.blocks.push_back(upper);

    prob.inequalities.push_back({0.0, {{e, 1.0}, {prob.layout.theta(), -lo}}});
    prob.inequalities.push_back({0.0, {{e, -1.0}, {prob.layout.theta(), hi}}});
  }
  prob.inequalities.push_back({0.0, {{prob.layout.theta(), 1.0}}});
  prob.equalities.push_back({-2.0, {{prob.layout.alpha(), 1.0}, {prob.layout.beta(), 1.0}}});
  return prob;
}

}  // namespace

TEST_CASE("margin schedule is geometric and sums to the retained fraction")
{
  CHECK(tau(0, 0.5, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(tau(3, 0.5, 0.5) == doctest::Approx(0.25 / 8.0).epsilon(1e-15));
  CHECK(tau(5, 1.0, 0.5) == 0.0);

  for (const Real tau0 : {0.5, 0.25, 0.9})
  {
    for (const Real r : {0.5, 0.8})
    {
      Real sum = 0.0;
      for (int p = 0; p < 400; ++p)
      {
        sum += tau(p, tau0, r);
      }
      CHECK(sum == doctest::Approx(1.0 - tau0).epsilon(1e-12));
    }
  }
}

TEST_CASE("projector frames split an eigensolve and stay mass-orthonormal")
{
  const int n = 4;
  const PermittivityField eps = random_field(n, 1.0, 4.0, 91u);
  const BlochOperator op = assemble_bloch(eps, Vec2(0.3, -0.7));
  const BandSolution bands = eigensolve(op, 5);

  const Projector proj = make_projector(bands, 2, 3, 1);
  CHECK(proj.crystal == 1);
  CHECK(proj.phi.cols() == 2);
  CHECK(proj.psi.cols() == 3);
  CHECK(proj.lambda_lower.size() == 2);
  CHECK(proj.lambda_upper.size() == 3);
  CHECK(proj.lambda_lower[1] == doctest::Approx(bands.lambda[1]).epsilon(1e-14));
  CHECK(proj.lambda_upper[0] == doctest::Approx(bands.lambda[2]).epsilon(1e-14));
  CHECK(projector_orthonormality_residual(proj, op.M) < 1e-8);

  CHECK_THROWS_AS(make_projector(bands, 3, 3, 0), ValidationError);
}

TEST_CASE("projected blocks match dense projections of the full operator")
{
  const int n = 4;
  const int m = 2;
  const int s = 3;
  const PermittivityField eps = random_field(n, 1.0, 4.0, 37u);
  const BlochOperator op = assemble_bloch(eps, Vec2(0.4, 0.9));
  const BandSolution bands = eigensolve(op, m + s);
  const Projector proj = make_projector(bands, m, s, 0);
  const Real w = eps.cell_weight();

  std::mt19937_64 rng(7u);
  std::uniform_real_distribution<Real> dist(0.5, 3.0);

  for (const RotationGroup group : {RotationGroup::Identity, RotationGroup::C4})
  {
    const OrbitMap orbits = symmetry_orbits(eps.lattice, n, group, Vec2(0.5, 0.5));
    VariableLayout layout;
    layout.orbit_count_1 = Eigen::Index(orbits.orbits.size());
    layout.orbit_count_2 = 0;

    VectorXr x = VectorXr::Zero(layout.count());
    for (Eigen::Index v = 0; v < layout.count(); ++v)
    {
      x[v] = dist(rng);
    }
    VectorXr per_orbit = x.head(layout.orbit_count_1);
    const VectorXr cellwise = expand(orbits, per_orbit);

    const LmiBlock lower = lower_block(proj, op.K, orbits, w, layout);
    const LmiBlock upper = upper_block(proj, op.K, orbits, w, layout);
    CHECK(lower.constant.rows() == m);
    CHECK(upper.constant.rows() == s);
    CHECK(Eigen::Index(lower.coefficients.size()) == layout.orbit_count_1 + 1);

    const MatrixXc phiK = proj.phi.adjoint() * (op.K * proj.phi);
    const MatrixXc psiK = proj.psi.adjoint() * (op.K * proj.psi);
    const MatrixXc phiW = proj.phi.adjoint() * (w * cellwise).asDiagonal() * proj.phi;
    const MatrixXc psiW = proj.psi.adjoint() * (w * cellwise).asDiagonal() * proj.psi;

    const MatrixXc lower_direct = -(x[layout.alpha()] * phiK - phiW);
    const MatrixXc upper_direct = x[layout.beta()] * psiK - psiW;
    CHECK((block_value(lower, x) - lower_direct).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((block_value(upper, x) - upper_direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("single-band blocks cross feasibility exactly at the eigenvalue boundary")
{
  const int n = 4;
  const PermittivityField eps = random_field(n, 1.0, 4.0, 53u);
  const BlochOperator op = assemble_bloch(eps, Vec2(-0.8, 0.2));
  const BandSolution bands = eigensolve(op, 2);
  const Projector proj = make_projector(bands, 1, 1, 0);
  const OrbitMap orbits = symmetry_orbits(eps.lattice, n, RotationGroup::Identity, Vec2(0, 0));

  VariableLayout layout;
  layout.orbit_count_1 = Eigen::Index(orbits.orbits.size());
  layout.orbit_count_2 = 0;
  const Real w = eps.cell_weight();
  const LmiBlock lower = lower_block(proj, op.K, orbits, w, layout);
  const LmiBlock upper = upper_block(proj, op.K, orbits, w, layout);

  const Real theta = 2.0;
  const Real l1 = bands.lambda[0];
  const Real l2 = bands.lambda[1];

  VectorXr x = VectorXr::Zero(layout.count());
  x.head(layout.orbit_count_1) = theta * expand(orbits, eps.flat());

  // Feasible iff alpha~ <= theta / lambda_1: the block value is theta - alpha~ lambda_1.
  x[layout.alpha()] = (theta / l1) * (1.0 - 1e-6);
  CHECK(min_eigenvalue(block_value(lower, x)) > 0.0);
  x[layout.alpha()] = (theta / l1) * (1.0 + 1e-6);
  CHECK(min_eigenvalue(block_value(lower, x)) < 0.0);

  // Feasible iff beta~ >= theta / lambda_2.
  x[layout.beta()] = (theta / l2) * (1.0 + 1e-6);
  CHECK(min_eigenvalue(block_value(upper, x)) > 0.0);
  x[layout.beta()] = (theta / l2) * (1.0 - 1e-6);
  CHECK(min_eigenvalue(block_value(upper, x)) < 0.0);

  // Zero scaled permittivity: the lower block vanishes with alpha~ = 0 and the
  // upper block is automatically positive for beta~ > 0 because K >= 0.
  VectorXr zero = VectorXr::Zero(layout.count());
  CHECK(block_value(lower, zero).cwiseAbs().maxCoeff() == 0.0);
  zero[layout.beta()] = 1.0;
  CHECK(min_eigenvalue(block_value(upper, zero)) > -1e-12 * l2);
}

TEST_CASE("valley rows allow standing still and forbid sign flips")
{
  const int n = 2;
  const Lattice lat = Lattice::square();
  const OrbitMap identity = symmetry_orbits(lat, n, RotationGroup::Identity, Vec2(0, 0));
  VariableLayout layout;
  layout.orbit_count_1 = 4;
  layout.orbit_count_2 = 4;

  const Real theta_prev = 2.0;
  const Real tau_p = 0.25;
  VectorXr g1(4);
  g1 << 0.3, -0.1, 0.2, 0.05;
  VectorXr g2 = -g1;

  ValleyLinearization lin1{0, Vec2(-1.2, 1.2), 0.25, 0.25, g1};
  ValleyLinearization lin2{1, Vec2(-1.2, 1.2), -0.25, -0.25, g2};

  const VectorXr prev1 = VectorXr::Constant(4, theta_prev * 3.0);
  const VectorXr prev2 = VectorXr::Constant(4, theta_prev * 5.0);
  const auto rows =
      topo_rows({lin1, lin2}, identity, identity, prev1, prev2, tau_p, theta_prev, layout);
  REQUIRE(rows.size() == 2);

  VectorXr x = VectorXr::Zero(layout.count());
  x.head(4) = prev1;
  x.segment(4, 4) = prev2;

  // Standing still leaves exactly the schedule margin.
  CHECK(row_value(rows[0], x) == doctest::Approx(tau_p * 0.25).epsilon(1e-12));
  CHECK(row_value(rows[1], x) == doctest::Approx(tau_p * 0.25).epsilon(1e-12));

  // A step engineered to flip the curvature sign violates its row: move
  // against the gradient far enough that <delta eps, g> < -tau_p |F0|.
  const Real t = 2.0 * tau_p * 0.25 / g1.squaredNorm();
  x.head(4) = prev1 - theta_prev * t * g1;
  CHECK(row_value(rows[0], x) < 0.0);
  CHECK(row_value(rows[1], x) == doctest::Approx(tau_p * 0.25).epsilon(1e-12));

  // Orbit aggregation: the row coefficient of an orbit is the sum of the
  // member cells' gradient entries over theta_prev. A C2 map about an exact
  // cell center of a 4 x 4 grid has six two-cell orbits and four fixed cells.
  const OrbitMap c2 = symmetry_orbits(lat, 4, RotationGroup::C2, Vec2(0.375, 0.375));
  REQUIRE(c2.orbits.size() == 10);
  VariableLayout small;
  small.orbit_count_1 = 10;
  small.orbit_count_2 = 10;
  std::mt19937_64 rng(23u);
  std::uniform_real_distribution<Real> dist(-1.0, 1.0);
  ValleyLinearization wide{0, Vec2(-1.2, 1.2), 0.25, 0.25,
                           VectorXr::NullaryExpr(16, [&] { return dist(rng); })};
  const auto c2rows = topo_rows({wide}, c2, c2, VectorXr::Constant(10, 6.0),
                                VectorXr::Constant(10, 10.0), tau_p, theta_prev, small);
  REQUIRE(c2rows.size() == 1);
  VectorXr coeffs = VectorXr::Zero(small.count());
  for (const auto& [v, coeff] : c2rows[0].coefficients)
  {
    coeffs[v] = coeff;
  }
  for (std::size_t o = 0; o < c2.orbits.size(); ++o)
  {
    Real expected = 0.0;
    for (int c : c2.orbits[o])
    {
      expected += wide.grad[c];
    }
    CHECK(coeffs[Eigen::Index(o)] == doctest::Approx(expected / theta_prev).epsilon(1e-12));
  }

  // A vanishing initial curvature has no meaningful sign.
  ValleyLinearization degenerate = lin1;
  degenerate.f_initial = 1e-12;
  CHECK_THROWS_AS(
      topo_rows({degenerate}, identity, identity, prev1, prev2, tau_p, theta_prev, layout),
      DegenerateValley);
}

TEST_CASE("assembled programs are warm-start feasible with the documented shape")
{
  const int n = 12;
  const int m = 3;
  const int s = 3;
  const PermittivityField eps1 = triangle_crystal(n, true);
  const PermittivityField eps2 = triangle_crystal(n, false);
  const OrbitMap orbits =
      symmetry_orbits(eps1.lattice, n, RotationGroup::Identity, Vec2(0, 0));

  const std::vector<Vec2> kappas = constraint_kappas(eps1.lattice, 4, 4);
  const auto sols1 = band_structure(eps1, kappas, m + s);
  const auto sols2 = band_structure(eps2, kappas, m + s);
  const GapReport gap = gap_report(sols1, sols2, m);
  REQUIRE(gap.open);

  AssemblyInput in;
  in.eps1 = &eps1;
  in.eps2 = &eps2;
  in.orbits1 = &orbits;
  in.orbits2 = &orbits;
  for (std::size_t k = 0; k < kappas.size(); ++k)
  {
    in.projectors.push_back(make_projector(sols1[k], m, s, 0));
    in.projectors.push_back(make_projector(sols2[k], m, s, 1));
  }
  in.theta_prev = 2.0 * gap.lambda_lo * gap.lambda_hi / (gap.lambda_lo + gap.lambda_hi);
  in.trust_radius = 0.1;
  in.tau_p = tau(0, 0.5, 0.5);

  // Synthetic but correctly signed valley data exercises the row plumbing.
  VectorXr g = VectorXr::Constant(n * n, 1e-3);
  in.valleys.push_back({0, Vec2(-1.2, 1.2), 0.25, 0.25, g});
  in.valleys.push_back({0, Vec2(1.2, -1.2), -0.25, -0.25, -g});
  in.valleys.push_back({1, Vec2(-1.2, 1.2), -0.25, -0.25, -g});
  in.valleys.push_back({1, Vec2(1.2, -1.2), 0.25, 0.25, g});

  const SdpProblem prob = assemble(in);
  CHECK(prob.layout.orbit_count_1 == n * n);
  CHECK(prob.layout.orbit_count_2 == n * n);
  CHECK(prob.blocks.size() == 2 * 2 * kappas.size());
  CHECK(prob.equalities.size() == 1);
  // theta >= 0, two box rows and two trust rows per orbit per crystal, and
  // one row per valley linearization.
  CHECK(prob.inequalities.size() == 1 + 4 * std::size_t(2 * n * n) + in.valleys.size());
  CHECK(prob.objective[prob.layout.alpha()] == 1.0);
  CHECK(prob.objective[prob.layout.beta()] == -1.0);

  const VectorXr x0 = warm_start(in, gap.lambda_lo, gap.lambda_hi);
  CHECK(x0[prob.layout.alpha()] + x0[prob.layout.beta()] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(x0[prob.layout.theta()] > 0.0);
  CHECK(feasibility_residual(prob, x0) < 1e-8);

  // Dropping the valley data only removes its rows.
  AssemblyInput plain = in;
  plain.valleys.clear();
  const SdpProblem unconstrained = assemble(plain);
  CHECK(unconstrained.blocks.size() == prob.blocks.size());
  CHECK(unconstrained.inequalities.size() + in.valleys.size() == prob.inequalities.size());
}

TEST_CASE("the scalar two-crystal program reaches its hand optimum")
{
  const Real a = 2.0;
  const Real b = 3.0;
  const Real lo = 0.5;
  const Real hi = 1.5;
  const SdpProblem prob = scalar_toy(a, b, lo, hi);

  const SdpIterate it = solve(prob);
  REQUIRE(it.status == SdpStatus::Optimal);

  // Optimum: alpha~ = 2b/(a+b), beta~ = 2a/(a+b), objective 2(b-a)/(a+b);
  // eps~ is pinched where the lower and upper blocks meet, a alpha~ = b beta~.
  // theta is any scale keeping eps~ inside the box, so only its range is
  // determined (the solver lands in the interior of that optimal segment).
  const Real alpha = 2.0 * b / (a + b);
  const Real beta = 2.0 * a / (a + b);
  const Real pinched = 2.0 * a * b / (a + b);
  CHECK(it.objective == doctest::Approx(2.0 * (b - a) / (a + b)).epsilon(1e-6));
  CHECK(it.alpha_tilde == doctest::Approx(alpha).epsilon(1e-6));
  CHECK(it.beta_tilde == doctest::Approx(beta).epsilon(1e-6));
  CHECK(it.eps1_tilde[0] == doctest::Approx(pinched).epsilon(1e-6));
  CHECK(it.eps2_tilde[0] == doctest::Approx(pinched).epsilon(1e-6));
  CHECK(it.theta >= pinched / hi - 1e-6);
  CHECK(it.theta <= pinched / lo + 1e-6);
  CHECK(it.alpha_tilde + it.beta_tilde == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(feasibility_residual(prob, it.x) < 1e-7);
}

TEST_CASE("contradictory admissible bounds are certified infeasible")
{
  // Swapped bounds shrink the trust region below zero width: no point
  // satisfies both trust rows.
  SdpProblem prob = scalar_toy(2.0, 3.0, 1.5, 0.5);
  const Real rho = 0.1;
  const Real radius = rho * (0.5 - 1.5);  // negative
  for (int crystal = 0; crystal < 2; ++crystal)
  {
    const Eigen::Index e = prob.layout.eps_offset(crystal);
    prob.inequalities.push_back({radius + 1.0, {{e, -1.0}}});
    prob.inequalities.push_back({radius - 1.0, {{e, 1.0}}});
  }
  CHECK(solve(prob).status == SdpStatus::Infeasible);
}

TEST_CASE("assembly with swapped bounds yields an infeasible program")
{
  const int n = 4;
  const int m = 2;
  const int s = 2;
  PermittivityField eps1 = random_field(n, 1.0, 4.0, 11u);
  PermittivityField eps2 = random_field(n, 1.0, 4.0, 12u);
  eps1.lo = eps2.lo = 4.0;  // swapped on purpose
  eps1.hi = eps2.hi = 1.0;
  const OrbitMap orbits = symmetry_orbits(eps1.lattice, n, RotationGroup::Identity, Vec2(0, 0));

  const std::vector<Vec2> kappas = {Vec2(0.7, -0.3)};
  const auto sols1 = band_structure(eps1, kappas, m + s);
  const auto sols2 = band_structure(eps2, kappas, m + s);

  AssemblyInput in;
  in.eps1 = &eps1;
  in.eps2 = &eps2;
  in.orbits1 = &orbits;
  in.orbits2 = &orbits;
  in.projectors = {make_projector(sols1[0], m, s, 0), make_projector(sols2[0], m, s, 1)};
  in.theta_prev = 1.0;
  in.trust_radius = 0.1;

  CHECK(solve(assemble(in)).status == SdpStatus::Infeasible);
}

TEST_CASE("recovered fields invert the scaling, clamp, and stay exactly symmetric")
{
  const int n = 8;
  const PermittivityField base = random_field(n, 1.0, 11.7, 5u);
  const OrbitMap orbits = symmetry_orbits(base.lattice, n, RotationGroup::C4, Vec2(0.5, 0.5));
  const Eigen::Index count = Eigen::Index(orbits.orbits.size());

  AssemblyInput in;
  in.eps1 = &base;
  in.eps2 = &base;
  in.orbits1 = &orbits;
  in.orbits2 = &orbits;

  std::mt19937_64 rng(17u);
  std::uniform_real_distribution<Real> dist(1.0, 11.7);
  SdpIterate it;
  it.status = SdpStatus::Optimal;
  it.theta = 2.0;
  it.eps1_tilde = VectorXr::NullaryExpr(count, [&] { return 2.0 * dist(rng); });
  it.eps2_tilde = VectorXr::NullaryExpr(count, [&] { return 2.0 * dist(rng); });
  it.eps2_tilde[0] = 2.0 * (11.7 + 1e-9);  // clamps to the upper bound

  const auto [rec1, rec2] = recover(it, in);
  for (Eigen::Index o = 0; o < count; ++o)
  {
    for (int c : orbits.orbits[std::size_t(o)])
    {
      CHECK(rec1.flat()[c] == doctest::Approx(it.eps1_tilde[o] / 2.0).epsilon(1e-14));
      // Exact symmetry: every cell of an orbit carries the same double.
      CHECK(rec1.flat()[c] == rec1.flat()[orbits.orbits[std::size_t(o)][0]]);
    }
  }
  CHECK(rec2.flat()[orbits.orbits[0][0]] == 11.7);

  // Round trip: scaling an admissible field and recovering is the identity.
  SdpIterate exact;
  exact.status = SdpStatus::Optimal;
  exact.theta = 3.0;
  exact.eps1_tilde.resize(count);
  exact.eps2_tilde.resize(count);
  for (Eigen::Index o = 0; o < count; ++o)
  {
    exact.eps1_tilde[o] = 3.0 * base.flat()[orbits.orbits[std::size_t(o)][0]];
    exact.eps2_tilde[o] = 3.0 * base.flat()[orbits.orbits[std::size_t(o)][0]];
  }
  PermittivityField symmetric = symmetrize(base, RotationGroup::C4, Vec2(0.5, 0.5));
  AssemblyInput sym_in = in;
  sym_in.eps1 = &symmetric;
  sym_in.eps2 = &symmetric;
  for (Eigen::Index o = 0; o < count; ++o)
  {
    exact.eps1_tilde[o] = 3.0 * symmetric.flat()[orbits.orbits[std::size_t(o)][0]];
    exact.eps2_tilde[o] = exact.eps1_tilde[o];
  }
  const auto [back1, back2] = recover(exact, sym_in);
  CHECK((back1.values - symmetric.values).cwiseAbs().maxCoeff() < 1e-14);

  SdpIterate collapsed = exact;
  collapsed.theta = 1e-12;
  CHECK_THROWS_AS(recover(collapsed, sym_in), DegenerateScale);
}

TEST_CASE("constraint set merges the path with the interior grid")
{
  const Lattice lat = Lattice::square();
  const auto path_only = constraint_kappas(lat, 4, 0);
  CHECK(path_only.size() == 12);  // 3 legs x 4, closing point dropped

  const auto merged = constraint_kappas(lat, 4, 4);
  CHECK(merged.size() >= path_only.size());
  CHECK(merged.size() < path_only.size() + 16);  // at least Gamma deduplicated
  for (std::size_t i = 0; i < merged.size(); ++i)
  {
    for (std::size_t j = i + 1; j < merged.size(); ++j)
    {
      CHECK((merged[i] - merged[j]).norm() > 1e-9);
    }
  }
}

TEST_CASE("driver converges immediately at infinite tolerance and logs a faithful trace")
{
  const int n = 12;
  OptimizeOptions opts;
  opts.m = 3;
  opts.surfaces = 3;
  opts.path_per_segment = 4;
  opts.interior_grid = 4;
  opts.invariant = InvariantMode::Valley;
  opts.valley1 = Vec2(-1.2, 1.2);
  opts.valley2 = Vec2(1.2, -1.2);
  opts.valley_nk = 12;
  opts.tolerance = 1e30;  // converge after a single accepted step
  opts.max_iterations = 5;
  std::ostringstream log;
  opts.log = &log;

  const PermittivityField eps1 = triangle_crystal(n, true);
  const PermittivityField eps2 = triangle_crystal(n, false);
  const OptimizationTrace trace = run_optimization(eps1, eps2, opts);

  CHECK(trace.converged);
  CHECK(trace.termination == "converged");
  REQUIRE(trace.records.size() == 1);

  const TraceRecord& start = trace.initial;
  CHECK(start.iteration == 0);
  CHECK(start.lambda_lo > 0.0);
  CHECK(start.lambda_hi > start.lambda_lo);
  CHECK(start.j_gap > 0.0);
  REQUIRE(start.valley_f.size() == 4);
  // Crystal-major (valley 1, valley 2) per crystal: signs +,-,-,+.
  CHECK(start.valley_f[0] > 0.0);
  CHECK(start.valley_f[1] < 0.0);
  CHECK(start.valley_f[2] < 0.0);
  CHECK(start.valley_f[3] > 0.0);
  CHECK(start.valley_f[0] == doctest::Approx(-start.valley_f[1]).epsilon(1e-6));

  const TraceRecord& step = trace.records[0];
  CHECK(step.iteration == 1);
  CHECK(step.status == SdpStatus::Optimal);
  CHECK(step.theta > 0.0);
  CHECK(step.alpha_tilde + step.beta_tilde == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(step.warm_start_residual < 1e-8);
  CHECK(step.solution_residual <= 1e-7);
  // The warm start is feasible, so the maximized linearized gap dominates the
  // current one.
  CHECK(step.objective >= start.j_gap - 1e-9);
  CHECK(step.j_gap > 0.0);
  CHECK(step.delta_eps1 > 0.0);
  CHECK(step.eps1.values.minCoeff() >= eps1.lo);
  CHECK(step.eps1.values.maxCoeff() <= eps1.hi);

  // Valley signs preserved and floors recorded.
  REQUIRE(step.valley_f.size() == 4);
  CHECK(step.valley_f[0] > 0.0);
  CHECK(step.valley_f[2] < 0.0);
  REQUIRE(step.valley_floor.size() == 4);
  CHECK(step.valley_floor[0] > 0.0);

  const std::string text = log.str();
  CHECK(text.find("iter=0") != std::string::npos);
  CHECK(text.find("iter=1") != std::string::npos);
  CHECK(text.find("status=optimal") != std::string::npos);
}

TEST_CASE("driver reports solver failure after exhausting trust-region retries")
{
  const int n = 12;
  OptimizeOptions opts;
  opts.m = 3;
  opts.path_per_segment = 2;
  opts.interior_grid = 0;
  opts.tolerance = 1e30;
  opts.backend.max_iterations = 1;  // starves the conic solver

  const PermittivityField eps1 = triangle_crystal(n, true);
  const PermittivityField eps2 = triangle_crystal(n, false);
  const OptimizationTrace trace = run_optimization(eps1, eps2, opts);
  CHECK_FALSE(trace.converged);
  CHECK(trace.termination == "solver_failure");
  CHECK(trace.records.empty());
  CHECK(trace.initial.j_gap > 0.0);
}

TEST_CASE("driver rejects mismatched field pairs")
{
  const PermittivityField eps1 = triangle_crystal(12, true);
  const PermittivityField eps2 = triangle_crystal(16, false);
  CHECK_THROWS_AS(run_optimization(eps1, eps2, OptimizeOptions{}), MismatchedFields);
}
