// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "topoband/bloch.hpp"
#include "topoband/errors.hpp"
#include "topoband/medium.hpp"

using namespace topoband;

namespace
{

PermittivityField uniform_field(const Lattice& lat, int n, Real value)
{
  PermittivityField f;
  f.lattice = lat;
  f.n = n;
  f.lo = 1.0;
  f.hi = std::max(value, 12.0);
  f.values = MatrixXr::Constant(n, n, value);
  return f;
}

PermittivityField demo_crystal(int n)
{
  return rasterize(Lattice::square(), n, 1.0, {ShapeSpec::disk(Vec2(0.5, 0.5), 0.4, 11.7)}, 1.0,
                   11.7);
}

// Analytic discrete dispersion of the uniform medium: the stencil symbol at
// the plane-wave frequencies, minimized over reciprocal shifts.
std::vector<Real> uniform_discrete_spectrum(const Lattice& lat, int n, Real eps, const Vec2& kappa,
                                            int count)
{
  const Mat2 f = lat.frame();
  const Mat2 g = (f.transpose() * f).inverse();
  const Real h = 1.0 / n;
  std::vector<Real> vals;
  for (int p = -n / 2 - 2; p <= n / 2 + 2; ++p)
  {
    for (int q = -n / 2 - 2; q <= n / 2 + 2; ++q)
    {
      const Vec2 kt = f.transpose() * kappa + 2.0 * pi * Vec2(p, q);
      const Real t1 = (2.0 - 2.0 * std::cos(kt.x() * h)) / (h * h);
      const Real t2 = (2.0 - 2.0 * std::cos(kt.y() * h)) / (h * h);
      const Real x12 = std::sin(kt.x() * h) * std::sin(kt.y() * h) / (h * h);
      vals.push_back((g(0, 0) * t1 + g(1, 1) * t2 + 2.0 * g(0, 1) * x12) / eps);
    }
  }
  std::sort(vals.begin(), vals.end());
  vals.resize(count);
  return vals;
}

}  // namespace

TEST_CASE("bloch operator is Hermitian and positive semidefinite")
{
  const auto field = demo_crystal(12);
  for (const Vec2& kappa : {Vec2(0.0, 0.0), Vec2(1.1, -0.7), Vec2(pi, pi)})
  {
    const auto op = assemble_bloch(field, kappa);
    const MatrixXc dense = MatrixXc(op.K);
    CHECK((dense - dense.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(dense);
    CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("constants are the kernel at kappa = 0")
{
  const auto field = demo_crystal(10);
  const auto op = assemble_bloch(field, Vec2(0.0, 0.0));
  const VectorXc ones = VectorXc::Constant(100, Complex(1.0, 0.0));
  CHECK((op.K * ones).norm() < 1e-12 * op.K.coeffs().abs().sum());
}

TEST_CASE("conjugation symmetry K(-kappa) = conj(K(kappa))")
{
  const auto field = demo_crystal(8);
  const Vec2 kappa(0.9, -1.3);
  const auto plus = assemble_bloch(field, kappa);
  const auto minus = assemble_bloch(field, -kappa);
  CHECK((MatrixXc(minus.K) - MatrixXc(plus.K).conjugate()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("uniform medium matches the discrete plane-wave dispersion exactly")
{
  const Lattice lat = Lattice::hexagonal();
  const int n = 12;
  const Real eps = 3.0;
  const Vec2 kappa(0.6, 0.4);
  const auto field = uniform_field(lat, n, eps);
  const auto sol = eigensolve(assemble_bloch(field, kappa), 6);
  const auto oracle = uniform_discrete_spectrum(lat, n, eps, kappa, 6);
  for (int i = 0; i < 6; ++i)
  {
    CHECK(sol.lambda[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
  }
}

TEST_CASE("uniform square medium approaches the analytic spectrum")
{
  // lambda -> |kappa + 2 pi p|^2 / eps; at Gamma the first nonzero value is
  // 4 pi^2 with multiplicity 4.
  const auto field = uniform_field(Lattice::square(), 36, 1.0);
  const auto sol = eigensolve(assemble_bloch(field, Vec2(0, 0)), 6);
  CHECK(std::abs(sol.lambda[0]) < 1e-8);
  for (int i = 1; i <= 4; ++i)
  {
    CHECK(sol.lambda[i] == doctest::Approx(4.0 * pi * pi).epsilon(0.01));
  }
  CHECK(sol.lambda[5] == doctest::Approx(8.0 * pi * pi).epsilon(0.01));
}

TEST_CASE("eigenvalue scaling in the permittivity")
{
  // Scaling eps by c scales every eigenvalue by 1/c.
  const auto f1 = uniform_field(Lattice::square(), 16, 1.0);
  const auto f4 = uniform_field(Lattice::square(), 16, 4.0);
  const Vec2 kappa(0.3, 0.9);
  const auto s1 = eigensolve(assemble_bloch(f1, kappa), 4);
  const auto s4 = eigensolve(assemble_bloch(f4, kappa), 4);
  for (int i = 0; i < 4; ++i)
  {
    CHECK(s4.lambda[i] == doctest::Approx(0.25 * s1.lambda[i]).epsilon(1e-10));
  }
}

TEST_CASE("spectrum is exactly periodic under reciprocal translations")
{
  const auto field = demo_crystal(12);
  const Mat2 b = reciprocal(field.lattice);
  const Vec2 kappa(0.37, 0.81);
  const auto s0 = eigensolve(assemble_bloch(field, kappa), 5);
  const auto s1 = eigensolve(assemble_bloch(field, kappa + b.col(0)), 5);
  const auto s2 = eigensolve(assemble_bloch(field, kappa + b.col(1)), 5);
  for (int i = 0; i < 5; ++i)
  {
    CHECK(s1.lambda[i] == doctest::Approx(s0.lambda[i]).epsilon(1e-8));
    CHECK(s2.lambda[i] == doctest::Approx(s0.lambda[i]).epsilon(1e-8));
  }

  // The gauge image of an eigenvector is an eigenvector at kappa + b.
  const auto op1 = assemble_bloch(field, kappa + b.col(0));
  const MatrixXc moved = translate_bloch_gauge(s0.phi, field.n, 0);
  for (int i = 0; i < 5; ++i)
  {
    const VectorXc r = op1.K * moved.col(i) - s0.lambda[i] * (op1.M.asDiagonal() * moved.col(i));
    CHECK(r.norm() < 1e-8 * (op1.K * moved.col(i)).norm() + 1e-12);
  }
}

TEST_CASE("eigenvectors are eps-orthonormal")
{
  const auto field = demo_crystal(14);
  const auto sol = eigensolve(assemble_bloch(field, Vec2(0.5, 0.2)), 5);
  const auto op = assemble_bloch(field, Vec2(0.5, 0.2));
  const MatrixXc gram = sol.phi.adjoint() * op.M.asDiagonal() * sol.phi;
  CHECK((gram - MatrixXc::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sol.residuals.maxCoeff() < 1e-9);
  // Ascending order.
  for (int i = 1; i < 5; ++i)
  {
    CHECK(sol.lambda[i] >= sol.lambda[i - 1]);
  }
}

TEST_CASE("iterative path agrees with the dense fallback")
{
  const auto field = demo_crystal(40);  // N = 1600 > dense cutoff
  const Vec2 kappa(1.0, 0.5);
  const auto op = assemble_bloch(field, kappa);
  EigsOptions dense_opts;
  dense_opts.dense_cutoff = 4096;
  const auto sol_dense = eigensolve(op, 6, dense_opts);
  EigsOptions iter_opts;
  iter_opts.dense_cutoff = 128;
  const auto sol_iter = eigensolve(op, 6, iter_opts);
  for (int i = 0; i < 6; ++i)
  {
    CHECK(sol_iter.lambda[i] == doctest::Approx(sol_dense.lambda[i]).epsilon(1e-8));
  }
  CHECK(sol_iter.residuals.maxCoeff() < 1e-9);
}

TEST_CASE("band refinement converges at second order")
{
  // Fixed kappa, uniform medium: the discrete eigenvalue error against the
  // analytic |kappa + 2 pi p|^2 decays ~ n^-2 (order fit >= 1.7).
  const Vec2 kappa(0.7, 0.3);
  const Real exact = kappa.squaredNorm();
  Real err16 = 0.0, err32 = 0.0;
  {
    const auto f = uniform_field(Lattice::square(), 16, 1.0);
    err16 = std::abs(eigensolve(assemble_bloch(f, kappa), 1).lambda[0] - exact);
  }
  {
    const auto f = uniform_field(Lattice::square(), 32, 1.0);
    err32 = std::abs(eigensolve(assemble_bloch(f, kappa), 1).lambda[0] - exact);
  }
  const Real order = std::log2(err16 / err32);
  CHECK(order >= 1.7);
}

TEST_CASE("gap report over two crystals")
{
  const auto f1 = demo_crystal(16);
  const auto f2 = rasterize(Lattice::square(), 16, 1.0,
                            {ShapeSpec::disk(Vec2(0.5, 0.5), 0.5, 11.7)}, 1.0, 11.7);
  const std::vector<Vec2> ks = {Vec2(0, 0), Vec2(pi, 0), Vec2(pi, pi), Vec2(0.4, 1.1)};
  const auto b1 = band_structure(f1, ks, 3);
  const auto b2 = band_structure(f2, ks, 3);
  const auto rep = gap_report(b1, b2, 2);

  // Oracle: direct max/min scan.
  Real lo = -1e300, hi = 1e300;
  for (const auto* bands : {&b1, &b2})
  {
    for (const auto& sol : *bands)
    {
      lo = std::max(lo, sol.lambda[1]);
      hi = std::min(hi, sol.lambda[2]);
    }
  }
  CHECK(rep.lambda_lo == doctest::Approx(lo).epsilon(1e-14));
  CHECK(rep.lambda_hi == doctest::Approx(hi).epsilon(1e-14));
  CHECK(rep.open == (hi > lo));
  if (rep.open)
  {
    CHECK(rep.j_gap ==
          doctest::Approx(2.0 * (hi - lo) / (hi + lo)).epsilon(1e-14));
    const Real whi = std::sqrt(hi), wlo = std::sqrt(lo);
    CHECK(rep.g_gap == doctest::Approx(2.0 * (whi - wlo) / (whi + wlo)).epsilon(1e-14));
  }

  // Single-crystal report bounds the shared one.
  const auto rep1 = gap_report(b1, 2);
  CHECK(rep1.lambda_lo <= rep.lambda_lo + 1e-14);
  CHECK(rep1.lambda_hi >= rep.lambda_hi - 1e-14);
}
