// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "topoband/errors.hpp"
#include "topoband/sdp.hpp"

using namespace topoband;

namespace
{

MatrixXc random_hermitian(int n, std::mt19937_64& rng)
{
  std::normal_distribution<Real> dist;
  MatrixXc g(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) g(r, c) = Complex(dist(rng), dist(rng));
  return MatrixXc(0.5 * (g + g.adjoint()));
}

MatrixXc random_hpd(int n, std::mt19937_64& rng)
{
  std::normal_distribution<Real> dist;
  MatrixXc g(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) g(r, c) = Complex(dist(rng), dist(rng));
  return MatrixXc(g * g.adjoint() + Real(n) * MatrixXc::Identity(n, n));
}

SdpRow make_row(Real constant, std::vector<std::pair<Eigen::Index, Real>> coeffs)
{
  SdpRow row;
  row.constant = constant;
  row.coefficients = std::move(coeffs);
  return row;
}

}  // namespace

TEST_CASE("scalar and box linear programs reach their analytic optima")
{
  // maximize x subject to x <= 3
  SdpModel m;
  m.variable_count = 1;
  m.objective = VectorXr::Constant(1, 1.0);
  m.rows.push_back(make_row(3.0, {{0, -1.0}}));
  auto sol = solve_sdp(m);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(sol.primal_residual <= 1e-7);

  // maximize x + y subject to x <= 1, y <= 2, x + y <= 2.5
  SdpModel b;
  b.variable_count = 2;
  b.objective = VectorXr::Ones(2);
  b.rows.push_back(make_row(1.0, {{0, -1.0}}));
  b.rows.push_back(make_row(2.0, {{1, -1.0}}));
  b.rows.push_back(make_row(2.5, {{0, -1.0}, {1, -1.0}}));
  b.rows.push_back(make_row(0.0, {{0, 1.0}}));
  b.rows.push_back(make_row(0.0, {{1, 1.0}}));
  auto bs = solve_sdp(b);
  REQUIRE(bs.status == SdpStatus::Optimal);
  CHECK(bs.objective == doctest::Approx(2.5).epsilon(1e-7));
}

TEST_CASE("semidefinite completion bound is attained")
{
  // maximize t subject to [[1, t], [t, 1]] >= 0; the optimum is t = 1.
  SdpModel m;
  m.variable_count = 1;
  m.objective = VectorXr::Constant(1, 1.0);
  SdpBlock block;
  block.constant = MatrixXr::Identity(2, 2);
  MatrixXr off(2, 2);
  off << 0, 1, 1, 0;
  block.coefficients.emplace_back(0, off);
  m.blocks.push_back(block);
  auto sol = solve_sdp(m);
  REQUIRE(sol.status == SdpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.primal_residual <= 1e-7);
}

TEST_CASE("smallest scalar dominating a symmetric matrix is its top eigenvalue")
{
  std::mt19937_64 rng(7);
  std::normal_distribution<Real> dist;
  MatrixXr a(8, 8);
  for (int c = 0; c < 8; ++c)
    for (int r = 0; r < 8; ++r) a(r, c) = dist(rng);
  a = MatrixXr(0.5 * (a + a.transpose()));

  // minimize t subject to t I - A >= 0  (maximize -t)
  SdpModel m;
  m.variable_count = 1;
  m.objective = VectorXr::Constant(1, -1.0);
  SdpBlock block;
  block.constant = -a;
  block.coefficients.emplace_back(0, MatrixXr::Identity(8, 8));
  m.blocks.push_back(block);
  auto sol = solve_sdp(m);
  REQUIRE(sol.status == SdpStatus::Optimal);

  Eigen::SelfAdjointEigenSolver<MatrixXr> es(a, Eigen::EigenvaluesOnly);
  CHECK(sol.x[0] == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-8));
}

TEST_CASE("projected pencil programs recover interior eigenvalues of random Hermitian pencils")
{
  // For an eigenvector-spanned rank-k projector, minimizing a scalar subject
  // to the projected pencil staying dominated recovers the k-th eigenvalue;
  // the complementary program maximizes below the (k+1)-th. Oracle: a dense
  // generalized eigendecomposition of the same pencil.
  const int n = 20;
  std::mt19937_64 rng(20260818);
  for (int trial = 0; trial < 20; ++trial)
  {
    const MatrixXc k_mat = random_hermitian(n, rng);
    const MatrixXc m_mat = random_hpd(n, rng);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXc> gev(k_mat, m_mat);
    REQUIRE(gev.info() == Eigen::Success);
    const VectorXr truth = gev.eigenvalues();

    for (int k : {1, 3, 5})
    {
      const MatrixXc phi = gev.eigenvectors().leftCols(k);
      const MatrixXc psi = gev.eigenvectors().rightCols(n - k);

      // minimize lambda with Phi^H (K - lambda M) Phi <= 0
      SdpModel lower;
      lower.variable_count = 1;
      lower.objective = VectorXr::Constant(1, -1.0);
      SdpBlock lo;
      lo.constant = real_embedding(MatrixXc(-phi.adjoint() * k_mat * phi));
      lo.coefficients.emplace_back(0, real_embedding(MatrixXc(phi.adjoint() * m_mat * phi)));
      lower.blocks.push_back(lo);
      auto ls = solve_sdp(lower);
      REQUIRE(ls.status == SdpStatus::Optimal);
      CHECK(std::abs(ls.x[0] - truth[k - 1]) <= 1e-6 * std::max(1.0, std::abs(truth[k - 1])));

      // maximize lambda with Psi^H (K - lambda M) Psi >= 0
      SdpModel upper;
      upper.variable_count = 1;
      upper.objective = VectorXr::Constant(1, 1.0);
      SdpBlock up;
      up.constant = real_embedding(MatrixXc(psi.adjoint() * k_mat * psi));
      up.coefficients.emplace_back(0, real_embedding(MatrixXc(-psi.adjoint() * m_mat * psi)));
      upper.blocks.push_back(up);
      auto us = solve_sdp(upper);
      REQUIRE(us.status == SdpStatus::Optimal);
      CHECK(std::abs(us.x[0] - truth[k]) <= 1e-6 * std::max(1.0, std::abs(truth[k])));
    }
  }
}

TEST_CASE("contradictory and unbounded programs are certified, not mis-solved")
{
  // x >= 1 together with x <= 0 has no solution.
  SdpModel infeasible;
  infeasible.variable_count = 1;
  infeasible.objective = VectorXr::Constant(1, 1.0);
  infeasible.rows.push_back(make_row(-1.0, {{0, 1.0}}));
  infeasible.rows.push_back(make_row(0.0, {{0, -1.0}}));
  CHECK(solve_sdp(infeasible).status == SdpStatus::Infeasible);

  // maximize x subject to x >= 0 only.
  SdpModel unbounded;
  unbounded.variable_count = 1;
  unbounded.objective = VectorXr::Constant(1, 1.0);
  unbounded.rows.push_back(make_row(0.0, {{0, 1.0}}));
  auto us = solve_sdp(unbounded);
  REQUIRE(us.status == SdpStatus::Unbounded);
  CHECK(us.objective > 0);

  // A constant negative-definite block is infeasible outright.
  SdpModel constant;
  constant.variable_count = 1;
  constant.objective = VectorXr::Constant(1, 1.0);
  constant.rows.push_back(make_row(1.0, {{0, -1.0}}));
  SdpBlock bad;
  bad.constant = -MatrixXr::Identity(2, 2);
  constant.blocks.push_back(bad);
  CHECK(solve_sdp(constant).status == SdpStatus::Infeasible);
}

TEST_CASE("grouped factorization reproduces the dense solve")
{
  std::mt19937_64 rng(42);
  std::normal_distribution<Real> dist;
  const int per_group = 5;
  const int p = 2 * per_group + 2;  // two groups plus two shared variables

  SdpModel m;
  m.variable_count = p;
  m.objective.resize(p);
  for (int v = 0; v < p; ++v) m.objective[v] = dist(rng);

  // One random semidefinite block per group, touching that group and the
  // shared tail, plus box rows on every variable to keep the program bounded.
  for (int grp = 0; grp < 2; ++grp)
  {
    SdpBlock block;
    const int d = 3;
    MatrixXr c(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) c(i, j) = dist(rng);
    block.constant = MatrixXr(0.5 * (c + c.transpose()) + 4.0 * MatrixXr::Identity(d, d));
    auto add_term = [&](int var) {
      MatrixXr t(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) t(i, j) = 0.3 * dist(rng);
      block.coefficients.emplace_back(var, MatrixXr(0.5 * (t + t.transpose())));
    };
    for (int v = 0; v < per_group; ++v) add_term(grp * per_group + v);
    add_term(2 * per_group);
    add_term(2 * per_group + 1);
    m.blocks.push_back(block);
  }
  for (int v = 0; v < p; ++v)
  {
    m.rows.push_back(make_row(5.0, {{v, -1.0}}));
    m.rows.push_back(make_row(5.0, {{v, 1.0}}));
  }

  auto dense = solve_sdp(m);
  REQUIRE(dense.status == SdpStatus::Optimal);

  m.variable_group.assign(p, -1);
  for (int v = 0; v < per_group; ++v)
  {
    m.variable_group[v] = 0;
    m.variable_group[per_group + v] = 1;
  }
  auto grouped = solve_sdp(m);
  REQUIRE(grouped.status == SdpStatus::Optimal);
  CHECK(grouped.objective == doctest::Approx(dense.objective).epsilon(1e-6));
  CHECK(grouped.primal_residual <= 1e-6);
}

TEST_CASE("real embedding doubles the Hermitian spectrum and is exactly symmetric")
{
  std::mt19937_64 rng(3);
  const MatrixXc h = random_hermitian(6, rng);
  const MatrixXr e = real_embedding(h);
  CHECK((e - e.transpose()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::SelfAdjointEigenSolver<MatrixXc> hs(h, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<MatrixXr> es(e, Eigen::EigenvaluesOnly);
  for (int i = 0; i < 6; ++i)
  {
    CHECK(es.eigenvalues()[2 * i] == doctest::Approx(hs.eigenvalues()[i]).epsilon(1e-12));
    CHECK(es.eigenvalues()[2 * i + 1] == doctest::Approx(hs.eigenvalues()[i]).epsilon(1e-12));
  }
}

TEST_CASE("malformed semidefinite models are rejected")
{
  SdpModel empty;
  empty.variable_count = 0;
  CHECK_THROWS_AS(solve_sdp(empty), ValidationError);

  SdpModel loose;
  loose.variable_count = 2;
  loose.objective = VectorXr::Ones(2);
  loose.rows.push_back(make_row(1.0, {{0, -1.0}}));
  CHECK_THROWS_AS(solve_sdp(loose), ValidationError);  // second variable unconstrained

  SdpModel asym;
  asym.variable_count = 1;
  asym.objective = VectorXr::Ones(1);
  SdpBlock block;
  block.constant = MatrixXr::Identity(2, 2);
  MatrixXr skew(2, 2);
  skew << 0, 1, -1, 0;
  block.coefficients.emplace_back(0, skew);
  asym.blocks.push_back(block);
  CHECK_THROWS_AS(solve_sdp(asym), ValidationError);

  SdpModel coupled;
  coupled.variable_count = 2;
  coupled.objective = VectorXr::Ones(2);
  coupled.rows.push_back(make_row(1.0, {{0, -1.0}, {1, -1.0}}));
  coupled.rows.push_back(make_row(0.0, {{0, 1.0}}));
  coupled.rows.push_back(make_row(0.0, {{1, 1.0}}));
  coupled.variable_group = {0, 1};
  CHECK_THROWS_AS(solve_sdp(coupled), ValidationError);

  SdpModel outside;
  outside.variable_count = 1;
  outside.objective = VectorXr::Ones(1);
  outside.rows.push_back(make_row(1.0, {{2, -1.0}}));
  CHECK_THROWS_AS(solve_sdp(outside), ValidationError);
}
