// SPDX-License-Identifier: Apache-2.0

#include "topoband/edge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "parallel.hpp"
#include "topoband/bloch.hpp"
#include "topoband/errors.hpp"

namespace topoband
{

namespace
{

int wrap_index(int i, int n)
{
  return (i % n + n) % n;
}

using detail::parallel_for;

}  // namespace

Supercell build_supercell(const PermittivityField& eps1, const PermittivityField& eps2, int L,
                          Real shift)
{
  if (eps1.n != eps2.n)
  {
    throw MismatchedFields("glued media must share the grid resolution");
  }
  const Mat2 f1 = eps1.lattice.frame();
  const Mat2 f2 = eps2.lattice.frame();
  if (eps1.lattice.kind != eps2.lattice.kind ||
      (f1 - f2).norm() > 1e-12 * (f1.norm() + f2.norm()))
  {
    throw MismatchedFields("glued media must share the lattice");
  }
  if (eps1.n < 3)
  {
    throw ValidationError("supercell needs at least 3x3 cells per period");
  }
  if (L < 4)
  {
    throw ValidationError("supercell needs at least 4 periods per side");
  }
  const int n = eps1.n;
  const Real cells = shift * Real(n);
  const int roll = int(std::lround(cells));
  if (std::abs(cells - Real(roll)) > 1e-6)
  {
    throw ValidationError("lateral shift must be a whole number of grid cells");
  }

  Supercell cell;
  cell.lattice = eps1.lattice;
  cell.n = n;
  cell.periods = L;
  cell.shift = shift;
  cell.eps1 = eps1;
  cell.eps2 = eps2;
  const int transverse = 2 * L * n;
  cell.values.resize(transverse, n);
  for (int j = 0; j < n; ++j)
  {
    for (int t = 0; t < transverse; ++t)
    {
      const PermittivityField& side = t < L * n ? eps2 : eps1;
      cell.values(t, j) = side.values(wrap_index(t - roll, n), j);
    }
  }
  return cell;
}

StripOperator assemble_strip(const Supercell& cell, Real kpar)
{
  if (cell.n < 3 || cell.periods < 1)
  {
    throw ValidationError("strip assembly needs an initialized supercell");
  }
  const int n = cell.n;
  const int transverse = cell.transverse_cells();
  const Mat2 f = cell.lattice.frame();
  const Real det = std::abs(f.determinant());
  const Mat2 g = (f.transpose() * f).inverse();
  const Real h = 1.0 / Real(n);

  // Bulk stencil weights (quadrature-scaled); hops that wrap the interface
  // period carry the quasi-periodic seam phase, hops leaving the transverse
  // range are dropped by the zero Dirichlet closure.
  const Complex seam = std::polar(1.0, kpar);
  const Real axis1 = -det * g(0, 0);
  const Real axis2 = -det * g(1, 1);
  const Real corner_pp = -0.5 * det * g(0, 1);  // towards (t+1, j+1) / (t-1, j-1)
  const Real corner_pm = 0.5 * det * g(0, 1);   // towards (t+1, j-1) / (t-1, j+1)
  const Real diag = 2.0 * det * (g(0, 0) + g(1, 1));

  const auto at = [&](int t, int j) { return t + transverse * wrap_index(j, n); };
  const auto phase = [&](int j) -> Complex {
    if (j >= n)
    {
      return seam;
    }
    return j < 0 ? std::conj(seam) : Complex(1.0, 0.0);
  };

  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(std::size_t(cell.cells()) * 9);
  for (int j = 0; j < n; ++j)
  {
    for (int t = 0; t < transverse; ++t)
    {
      const int c = at(t, j);
      trips.emplace_back(c, c, Complex(diag, 0.0));
      trips.emplace_back(c, at(t, j + 1), axis2 * phase(j + 1));
      trips.emplace_back(c, at(t, j - 1), axis2 * phase(j - 1));
      if (t + 1 < transverse)
      {
        trips.emplace_back(c, at(t + 1, j), Complex(axis1, 0.0));
        trips.emplace_back(c, at(t + 1, j + 1), corner_pp * phase(j + 1));
        trips.emplace_back(c, at(t + 1, j - 1), corner_pm * phase(j - 1));
      }
      if (t > 0)
      {
        trips.emplace_back(c, at(t - 1, j), Complex(axis1, 0.0));
        trips.emplace_back(c, at(t - 1, j - 1), corner_pp * phase(j - 1));
        trips.emplace_back(c, at(t - 1, j + 1), corner_pm * phase(j + 1));
      }
    }
  }

  StripOperator op;
  op.kpar = kpar;
  op.K.resize(cell.cells(), cell.cells());
  op.K.setFromTriplets(trips.begin(), trips.end());
  op.K.makeCompressed();
  op.M = cell.flat() * (det * h * h);
  return op;
}

EdgeModes edge_eigs(const Supercell& cell, Real kpar, Real lambda_lo, Real lambda_hi, int count,
                    const EigsOptions& opts)
{
  if (!(lambda_lo < lambda_hi))
  {
    throw ValidationError("edge window must satisfy lambda_lo < lambda_hi");
  }
  const Real margin = edge_window_margin * (lambda_hi - lambda_lo);
  const StripOperator op = assemble_strip(cell, kpar);
  WindowResult res = window_eigenpairs(op.K, op.M, lambda_lo + margin, lambda_hi - margin, opts);

  const int found = int(res.values.size());
  std::vector<int> order(static_cast<std::size_t>(found));
  std::iota(order.begin(), order.end(), 0);
  if (count > 0 && found > count)
  {
    // Keep the pairs nearest the window midpoint, then restore value order.
    const Real mid = 0.5 * (lambda_lo + lambda_hi);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(res.values[a] - mid) < std::abs(res.values[b] - mid);
    });
    order.resize(std::size_t(count));
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return res.values[a] < res.values[b]; });

  EdgeModes out;
  out.kpar = kpar;
  out.lambda.resize(Eigen::Index(order.size()));
  out.psi.resize(res.vectors.rows(), Eigen::Index(order.size()));
  for (std::size_t q = 0; q < order.size(); ++q)
  {
    out.lambda[Eigen::Index(q)] = res.values[order[q]];
    out.psi.col(Eigen::Index(q)) = res.vectors.col(order[q]);
  }
  return out;
}

Real localization(const VectorXc& mode, const Supercell& cell, int w)
{
  if (w < 1 || w >= cell.periods)
  {
    throw ValidationError("localization width must satisfy 1 <= w < periods");
  }
  if (mode.size() != cell.cells())
  {
    throw ValidationError("mode length does not match the strip grid");
  }
  const int n = cell.n;
  const int transverse = cell.transverse_cells();
  const int t_lo = (cell.periods - w) * n;
  const int t_hi = (cell.periods + w) * n;
  Real inner = 0.0;
  Real total = 0.0;
  for (int j = 0; j < n; ++j)
  {
    for (int t = 0; t < transverse; ++t)
    {
      const Real mass = cell.values(t, j) * std::norm(mode[t + transverse * j]);
      total += mass;
      if (t >= t_lo && t < t_hi)
      {
        inner += mass;
      }
    }
  }
  if (total <= 0.0)
  {
    throw ValidationError("localization of a zero mode is undefined");
  }
  return inner / total;
}

std::vector<std::pair<Real, Real>> bulk_projection(const PermittivityField& field, Real kpar,
                                                   int bands, int samples,
                                                   const EigsOptions& opts)
{
  if (bands < 1 || bands > field.cells())
  {
    throw ValidationError("projected band count out of range");
  }
  if (samples < 1)
  {
    throw ValidationError("projection needs at least one transverse sample");
  }
  const Mat2 b = reciprocal(field.lattice);
  std::vector<std::pair<Real, Real>> out(
      std::size_t(bands),
      {std::numeric_limits<Real>::infinity(), -std::numeric_limits<Real>::infinity()});
  for (int s = 0; s < samples; ++s)
  {
    const Vec2 kappa = b * Vec2(Real(s) / Real(samples), kpar / (2.0 * pi));
    const BandSolution sol = eigensolve(assemble_bloch(field, kappa), bands, opts);
    for (int q = 0; q < bands; ++q)
    {
      out[std::size_t(q)].first = std::min(out[std::size_t(q)].first, sol.lambda[q]);
      out[std::size_t(q)].second = std::max(out[std::size_t(q)].second, sol.lambda[q]);
    }
  }
  return out;
}

EdgeDispersion dispersion(const Supercell& cell, const std::vector<Real>& kpars, Real lambda_lo,
                          Real lambda_hi, const EdgeOptions& opts)
{
  if (kpars.empty())
  {
    throw ValidationError("dispersion needs a nonempty kpar grid");
  }
  for (const Real kpar : kpars)
  {
    if (!(std::abs(kpar) <= pi + 1e-12))
    {
      throw ValidationError("kpar samples must lie in [-pi, pi]");
    }
  }
  if (opts.width < 1 || opts.width >= cell.periods)
  {
    throw ValidationError("edge classification width must satisfy 1 <= width < periods");
  }

  EdgeDispersion out;
  out.lambda_lo = lambda_lo;
  out.lambda_hi = lambda_hi;
  out.samples.assign(kpars.size(), {});
  if (opts.projection_bands > 0)
  {
    out.bulk1.assign(kpars.size(), {});
    out.bulk2.assign(kpars.size(), {});
  }

  parallel_for(kpars.size(), opts.threads, [&](std::size_t i) {
    const EdgeModes modes = edge_eigs(cell, kpars[i], lambda_lo, lambda_hi, opts.count, opts.eigs);
    EdgeSample sample;
    sample.kpar = kpars[i];
    sample.lambda = modes.lambda;
    const Eigen::Index found = sample.lambda.size();
    sample.localization.resize(found);
    sample.is_edge.assign(std::size_t(found), false);
    for (Eigen::Index q = 0; q < found; ++q)
    {
      sample.localization[q] = localization(modes.psi.col(q), cell, opts.width);
      sample.is_edge[std::size_t(q)] = sample.localization[q] >= opts.threshold;
    }
    out.samples[i] = std::move(sample);
    if (opts.projection_bands > 0)
    {
      out.bulk1[i] = bulk_projection(cell.eps1, kpars[i], opts.projection_bands,
                                     opts.projection_samples, opts.eigs);
      out.bulk2[i] = bulk_projection(cell.eps2, kpars[i], opts.projection_bands,
                                     opts.projection_samples, opts.eigs);
    }
  });
  return out;
}

}  // namespace topoband
