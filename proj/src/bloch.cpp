// SPDX-License-Identifier: Apache-2.0

#include "topoband/bloch.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "parallel.hpp"
#include "topoband/errors.hpp"

namespace topoband
{

BlochOperator assemble_bloch(const PermittivityField& eps, const Vec2& kappa)
{
  if (eps.n < 3)
  {
    throw ValidationError("bloch assembly needs a grid of at least 3x3 cells");
  }
  const int n = eps.n;
  const int cells = n * n;
  const Mat2 f = eps.lattice.frame();
  const Real det = std::abs(f.determinant());
  if (det <= 1e-12 * f.norm() * f.norm())
  {
    throw DegenerateLattice("lattice vectors are numerically parallel");
  }
  const Mat2 g = (f.transpose() * f).inverse();  // metric of the unit-square map
  const Vec2 kt = f.transpose() * kappa;         // lattice-mapped Bloch vector
  const Real h = 1.0 / Real(n);

  // Hop coefficients, quadrature-scaled: K entries are |det F| * h^2 times
  // the 1/h^2 stencil weights, so only |det F| appears.
  const Complex e1p = std::polar(1.0, kt.x() * h);
  const Complex e2p = std::polar(1.0, kt.y() * h);
  const Complex axis1 = -det * g(0, 0) * e1p;
  const Complex axis2 = -det * g(1, 1) * e2p;
  const Complex corner_pp = -0.5 * det * g(0, 1) * e1p * e2p;
  const Complex corner_pm = 0.5 * det * g(0, 1) * e1p * std::conj(e2p);
  const Real diag = 2.0 * det * (g(0, 0) + g(1, 1));

  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(std::size_t(cells) * 9);
  auto cell = [n](int i, int j) { return (i + n) % n + n * ((j + n) % n); };
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      const int c = cell(i, j);
      trips.emplace_back(c, c, Complex(diag, 0.0));
      trips.emplace_back(c, cell(i + 1, j), axis1);
      trips.emplace_back(c, cell(i - 1, j), std::conj(axis1));
      trips.emplace_back(c, cell(i, j + 1), axis2);
      trips.emplace_back(c, cell(i, j - 1), std::conj(axis2));
      trips.emplace_back(c, cell(i + 1, j + 1), corner_pp);
      trips.emplace_back(c, cell(i - 1, j - 1), std::conj(corner_pp));
      trips.emplace_back(c, cell(i + 1, j - 1), corner_pm);
      trips.emplace_back(c, cell(i - 1, j + 1), std::conj(corner_pm));
    }
  }

  BlochOperator op;
  op.lattice = eps.lattice;
  op.n = n;
  op.kappa = kappa;
  op.K.resize(cells, cells);
  op.K.setFromTriplets(trips.begin(), trips.end());
  op.K.makeCompressed();
  op.M = eps.flat() * (det * h * h);
  return op;
}

BandSolution eigensolve(const BlochOperator& op, int q, const EigsOptions& opts)
{
  EigsResult res = smallest_eigenpairs(op.K, op.M, q, opts);
  BandSolution sol;
  sol.kappa = op.kappa;
  sol.lambda = std::move(res.values);
  sol.phi = std::move(res.vectors);
  sol.residuals = std::move(res.residuals);
  return sol;
}

std::vector<BandSolution> band_structure(const PermittivityField& eps,
                                         const std::vector<Vec2>& kappas, int q,
                                         const EigsOptions& opts, int threads)
{
  std::vector<BandSolution> out(kappas.size());
  detail::parallel_for(kappas.size(), threads, [&](std::size_t i) {
    out[i] = eigensolve(assemble_bloch(eps, kappas[i]), q, opts);
  });
  return out;
}

GapReport gap_report(const std::vector<const std::vector<BandSolution>*>& crystals, int m)
{
  if (m < 1)
  {
    throw ValidationError("gap band index must be at least 1");
  }
  GapReport rep;
  rep.m = m;
  rep.lambda_lo = -std::numeric_limits<Real>::infinity();
  rep.lambda_hi = std::numeric_limits<Real>::infinity();
  bool any = false;
  for (std::size_t c = 0; c < crystals.size(); ++c)
  {
    for (const BandSolution& sol : *crystals[c])
    {
      if (sol.lambda.size() < m + 1)
      {
        throw ValidationError("gap report needs at least m+1 bands per Bloch point");
      }
      any = true;
      if (sol.lambda[m - 1] > rep.lambda_lo)
      {
        rep.lambda_lo = sol.lambda[m - 1];
        rep.arg_lo_crystal = int(c);
        rep.arg_lo_kappa = sol.kappa;
      }
      if (sol.lambda[m] < rep.lambda_hi)
      {
        rep.lambda_hi = sol.lambda[m];
        rep.arg_hi_crystal = int(c);
        rep.arg_hi_kappa = sol.kappa;
      }
    }
  }
  if (!any)
  {
    throw ValidationError("gap report needs at least one Bloch solution");
  }
  rep.open = rep.lambda_hi > rep.lambda_lo;
  const Real mid = 0.5 * (rep.lambda_hi + rep.lambda_lo);
  rep.j_gap = mid > 0.0 ? (rep.lambda_hi - rep.lambda_lo) / mid : 0.0;
  const Real w_lo = std::sqrt(std::max(rep.lambda_lo, 0.0));
  const Real w_hi = std::sqrt(std::max(rep.lambda_hi, 0.0));
  const Real w_mid = 0.5 * (w_hi + w_lo);
  rep.g_gap = w_mid > 0.0 ? (w_hi - w_lo) / w_mid : 0.0;
  return rep;
}

GapReport gap_report(const std::vector<BandSolution>& crystal, int m)
{
  return gap_report(std::vector<const std::vector<BandSolution>*>{&crystal}, m);
}

GapReport gap_report(const std::vector<BandSolution>& crystal1,
                     const std::vector<BandSolution>& crystal2, int m)
{
  return gap_report(std::vector<const std::vector<BandSolution>*>{&crystal1, &crystal2}, m);
}

MatrixXc translate_bloch_gauge(const MatrixXc& phi, int n, int axis)
{
  if (axis != 0 && axis != 1)
  {
    throw ValidationError("gauge translation axis must be 0 or 1");
  }
  MatrixXc out = phi;
  for (int j = 0; j < n; ++j)
  {
    for (int i = 0; i < n; ++i)
    {
      const Real frac = axis == 0 ? (i + 0.5) / Real(n) : (j + 0.5) / Real(n);
      out.row(i + n * j) *= std::polar(1.0, -2.0 * pi * frac);
    }
  }
  return out;
}

}  // namespace topoband
