// SPDX-License-Identifier: Apache-2.0

#include "topoband/topo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "topoband/errors.hpp"

namespace topoband
{

namespace
{

constexpr Real kLinkDetFloor = 1e-10;

// Shortest distance from `d` to the reciprocal lattice spanned by b.
Real periodic_k_distance(const Vec2& d, const Mat2& b)
{
  Real best = d.norm();
  for (int p = -1; p <= 1; ++p)
  {
    for (int q = -1; q <= 1; ++q)
    {
      best = std::min(best, (d + Real(p) * b.col(0) + Real(q) * b.col(1)).norm());
    }
  }
  return best;
}

Complex link_determinant(const MatrixXc& bra, const MatrixXc& ket, const VectorXr& mass)
{
  const MatrixXc overlap = bra.adjoint() * (mass.asDiagonal() * ket);
  const Complex det = overlap.determinant();
  if (std::abs(det) < kLinkDetFloor)
  {
    throw SingularOverlap(
        "plaquette link overlap is numerically singular; refine the k-grid or "
        "check for a band crossing inside the group");
  }
  return det;
}

void check_group(int first_band, int band_count)
{
  if (first_band < 0 || band_count < 1)
  {
    throw ValidationError("band group must have a nonnegative start and positive size");
  }
}

// Eigensolve sweep over the nk x nk grid, keeping the first q vectors.
struct GridFrames
{
  KGrid grid;
  int n = 0;
  VectorXr mass;
  std::vector<VectorXr> lambda;  // per grid point
  std::vector<MatrixXc> phi;

  const MatrixXc& base(int i, int j) const { return phi[(i % grid.nk) + grid.nk * (j % grid.nk)]; }

  // Corner frame for indices in 0..nk inclusive; the nk-th sample is the
  // periodic-gauge image of the 0-th.
  MatrixXc corner(int i, int j, int first, int count) const
  {
    MatrixXc c = base(i, j).middleCols(first, count);
    if (i == grid.nk)
    {
      c = translate_bloch_gauge(c, n, 0);
    }
    if (j == grid.nk)
    {
      c = translate_bloch_gauge(c, n, 1);
    }
    return c;
  }
};

GridFrames sweep_grid(const PermittivityField& eps, int nk, int q, const EigsOptions& opts)
{
  if (nk < 3)
  {
    throw ValidationError("curvature grid needs at least 3 points per direction");
  }
  GridFrames frames;
  frames.grid = k_grid(eps.lattice, nk);
  frames.n = eps.n;
  frames.mass = eps.flat() * eps.cell_weight();
  frames.lambda.resize(std::size_t(nk) * nk);
  frames.phi.resize(std::size_t(nk) * nk);
  for (int j = 0; j < nk; ++j)
  {
    for (int i = 0; i < nk; ++i)
    {
      const BlochOperator op = assemble_bloch(eps, frames.grid.point(i, j));
      BandSolution sol = eigensolve(op, q, opts);
      frames.lambda[i + nk * j] = sol.lambda;
      frames.phi[i + nk * j] = std::move(sol.phi);
    }
  }
  return frames;
}

}  // namespace

Real plaquette_phase(const MatrixXc& c0, const MatrixXc& c1, const MatrixXc& c2,
                     const MatrixXc& c3, const VectorXr& mass)
{
  if (c0.cols() != c1.cols() || c0.cols() != c2.cols() || c0.cols() != c3.cols())
  {
    throw MismatchedFields("plaquette corners carry different band counts");
  }
  Complex prod = link_determinant(c1, c0, mass);
  prod *= link_determinant(c2, c1, mass);
  prod *= link_determinant(c3, c2, mass);
  prod *= link_determinant(c0, c3, mass);
  return std::arg(prod);
}

std::vector<CurvatureField> curvature_maps(const PermittivityField& eps, int nk,
                                           const std::vector<std::pair<int, int>>& groups,
                                           const EigsOptions& opts)
{
  if (groups.empty())
  {
    throw ValidationError("no band groups requested");
  }
  int q = 0;
  for (const auto& g : groups)
  {
    check_group(g.first, g.second);
    q = std::max(q, g.first + g.second);
  }
  const GridFrames frames = sweep_grid(eps, nk, q, opts);

  std::vector<CurvatureField> out;
  out.reserve(groups.size());
  for (const auto& g : groups)
  {
    CurvatureField field;
    field.grid = frames.grid;
    field.area = frames.grid.plaquette_area();
    field.phase.resize(nk, nk);
    for (int j = 0; j < nk; ++j)
    {
      for (int i = 0; i < nk; ++i)
      {
        field.phase(i, j) = plaquette_phase(frames.corner(i, j, g.first, g.second),
                                            frames.corner(i + 1, j, g.first, g.second),
                                            frames.corner(i + 1, j + 1, g.first, g.second),
                                            frames.corner(i, j + 1, g.first, g.second),
                                            frames.mass);
      }
    }
    out.push_back(std::move(field));
  }
  return out;
}

CurvatureField curvature_map(const PermittivityField& eps, int nk, int first_band, int band_count,
                             const EigsOptions& opts)
{
  return curvature_maps(eps, nk, {{first_band, band_count}}, opts)[0];
}

ChernResult chern(const CurvatureField& field, Real quantization_tol)
{
  const Real total = field.phase.sum() / (2.0 * pi);
  const Real rounded = std::round(total);
  ChernResult result;
  result.value = int(rounded);
  result.residual = std::abs(total - rounded);
  if (result.residual > quantization_tol)
  {
    std::ostringstream msg;
    msg << "total curvature / 2 pi = " << total << " is not quantized";
    throw QuantizationFailure(msg.str());
  }
  return result;
}

Real local_curvature(const CurvatureField& field, const Vec2& valley, Real radius)
{
  Real sum = 0.0;
  for (int j = 0; j < field.grid.nk; ++j)
  {
    for (int i = 0; i < field.grid.nk; ++i)
    {
      if (periodic_k_distance(field.grid.plaquette_center(i, j) - valley, field.grid.b) <= radius)
      {
        sum += field.phase(i, j);
      }
    }
  }
  return sum / (2.0 * pi);
}

ValleyReport valley_chern(const PermittivityField& eps, int nk, int first_band, int band_count,
                          const Vec2& valley1, const Vec2& valley2, Real radius,
                          const EigsOptions& opts)
{
  const CurvatureField field = curvature_map(eps, nk, first_band, band_count, opts);
  const Real r = radius < 0.0 ? field.grid.b.col(0).norm() / 4.0 : radius;
  if (periodic_k_distance(valley1 - valley2, field.grid.b) < 2.0 * r)
  {
    throw ValidationError("valley disks overlap");
  }
  ValleyReport rep;
  rep.c1 = local_curvature(field, valley1, r);
  rep.c2 = local_curvature(field, valley2, r);
  const Real diff = rep.c1 - rep.c2;
  rep.sign = std::abs(diff) < 1e-8 ? 0 : (diff > 0.0 ? 1 : -1);
  return rep;
}

WilsonSpectrum wilson_loop(const PermittivityField& eps, int first_band, int band_count,
                           int samples_t1, int samples_t2, const EigsOptions& opts)
{
  check_group(first_band, band_count);
  if (samples_t1 < 1 || samples_t2 < 3)
  {
    throw ValidationError("Wilson loop needs at least 1 sweep sample and 3 loop samples");
  }
  const int q = first_band + band_count;
  const Mat2 b = reciprocal(eps.lattice);
  const VectorXr mass = eps.flat() * eps.cell_weight();

  WilsonSpectrum spec;
  spec.t1.resize(samples_t1);
  spec.phases.resize(samples_t1, band_count);
  for (int a = 0; a < samples_t1; ++a)
  {
    const Real t1 = Real(a) / samples_t1;
    spec.t1[a] = t1;

    auto group_at = [&](int j) {
      const Vec2 kappa = t1 * b.col(0) + (Real(j) / samples_t2) * b.col(1);
      return eigensolve(assemble_bloch(eps, kappa), q, opts)
          .phi.middleCols(first_band, band_count)
          .eval();
    };

    const MatrixXc start = group_at(0);
    MatrixXc prev = start;
    MatrixXc w = MatrixXc::Identity(band_count, band_count);
    for (int j = 1; j <= samples_t2; ++j)
    {
      const MatrixXc next = j < samples_t2 ? group_at(j) : translate_bloch_gauge(start, eps.n, 1);
      const MatrixXc link = next.adjoint() * (mass.asDiagonal() * prev);
      if (std::abs(link.determinant()) < kLinkDetFloor)
      {
        throw SingularOverlap("Wilson loop link overlap is numerically singular");
      }
      w = (link * w).eval();
      prev = next;
    }

    Eigen::ComplexEigenSolver<MatrixXc> es(w);
    if (es.info() != Eigen::Success)
    {
      throw ConvergenceFailure("Wilson matrix eigendecomposition failed");
    }
    std::vector<Real> phases(static_cast<std::size_t>(band_count));
    for (int c = 0; c < band_count; ++c)
    {
      const Complex ev = es.eigenvalues()[c];
      if (std::abs(ev) < 0.1)
      {
        throw SingularOverlap("Wilson eigenvalue magnitude collapsed; loop under-resolved");
      }
      phases[std::size_t(c)] = std::arg(ev);
    }
    std::sort(phases.begin(), phases.end());
    for (int c = 0; c < band_count; ++c)
    {
      spec.phases(a, c) = phases[std::size_t(c)];
    }
  }
  return spec;
}

namespace
{

// (K - lambda M) with eps-orthogonality to `border` enforced through border
// multiplier columns; one factorization serves many right-hand sides.
class BorderedSolver
{
public:
  BorderedSolver(const BlochOperator& op, Real lambda, const MatrixXc& border)
      : op_(op), lambda_(lambda), mb_(op.M.asDiagonal() * border)
  {
    const Eigen::Index n = op.K.rows();
    const Eigen::Index m = border.cols();
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(std::size_t(op.K.nonZeros()) + std::size_t(n) + 2 * std::size_t(n * m));
    for (int c = 0; c < op.K.outerSize(); ++c)
    {
      for (SparseMatrixXc::InnerIterator it(op.K, c); it; ++it)
      {
        trips.emplace_back(int(it.row()), int(it.col()), it.value());
      }
    }
    for (Eigen::Index c = 0; c < n; ++c)
    {
      trips.emplace_back(int(c), int(c), Complex(-lambda * op.M[c], 0.0));
    }
    for (Eigen::Index a = 0; a < m; ++a)
    {
      for (Eigen::Index r = 0; r < n; ++r)
      {
        const Complex v = mb_(r, a);
        trips.emplace_back(int(r), int(n + a), v);
        trips.emplace_back(int(n + a), int(r), std::conj(v));
      }
    }
    SparseMatrixXc sys(n + m, n + m);
    sys.setFromTriplets(trips.begin(), trips.end());
    sys.makeCompressed();
    lu_.compute(sys);
    if (lu_.info() != Eigen::Success)
    {
      throw SingularSystem("bordered eigenvalue-shift factorization failed");
    }
    kscale_ = 0.0;
    VectorXr rowsum = VectorXr::Zero(n);
    for (int c = 0; c < op.K.outerSize(); ++c)
    {
      for (SparseMatrixXc::InnerIterator it(op.K, c); it; ++it)
      {
        rowsum[it.row()] += std::abs(it.value());
      }
    }
    kscale_ = rowsum.maxCoeff() + std::abs(lambda) * op.M.maxCoeff();
  }

  VectorXc solve(const VectorXc& rhs) const
  {
    const Eigen::Index n = op_.K.rows();
    const Eigen::Index m = mb_.cols();
    VectorXc full = VectorXc::Zero(n + m);
    full.head(n) = rhs;
    const VectorXc sol = lu_.solve(full);
    const VectorXc u = sol.head(n);
    const VectorXc alpha = sol.tail(m);
    const VectorXc res =
        op_.K * u - lambda_ * (op_.M.asDiagonal() * u) + mb_ * alpha - rhs;
    const Real scale = rhs.norm() + kscale_ * u.norm();
    if (!(res.norm() <= 1e-8 * scale) || !((mb_.adjoint() * u).norm() <= 1e-8 * u.norm() + 1e-14))
    {
      throw SingularSystem("bordered solve failed the residual check");
    }
    return u;
  }

private:
  const BlochOperator& op_;
  Real lambda_;
  MatrixXc mb_;
  Eigen::SparseLU<SparseMatrixXc> lu_;
  Real kscale_ = 0.0;
};

}  // namespace

VectorXc solve_deflated(const BlochOperator& op, Real lambda, const MatrixXc& border,
                        const VectorXc& rhs)
{
  if (border.rows() != op.K.rows() || rhs.size() != op.K.rows() || border.cols() < 1)
  {
    throw MismatchedFields("border and right-hand side must match the operator size");
  }
  return BorderedSolver(op, lambda, border).solve(rhs);
}

RegionCurvature region_curvature(const PermittivityField& eps, int nk, int first_band,
                                 int band_count,
                                 const std::vector<std::pair<int, int>>& plaquettes,
                                 const EigsOptions& opts)
{
  check_group(first_band, band_count);
  if (plaquettes.empty())
  {
    throw ValidationError("no plaquettes selected");
  }
  {
    auto sorted = plaquettes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    {
      throw ValidationError("plaquette list contains duplicates");
    }
  }
  const int q = first_band + band_count;

  struct Corner
  {
    MatrixXc phi;     // group frame, gauge-translated as needed
    VectorXr lambda;  // group eigenvalues
  };

  const KGrid grid = k_grid(eps.lattice, nk);
  const VectorXr mass = eps.flat() * eps.cell_weight();

  // One eigensolve per distinct base grid point under the listed corners;
  // corners on the wrapped edge reuse it through the periodic-gauge image.
  std::map<int, BandSolution> base;
  std::map<int, Corner> corners;
  auto corner_key = [&](int i, int j) { return i + (nk + 1) * j; };
  auto corner_at = [&](int i, int j) -> Corner& {
    const int key = corner_key(i, j);
    auto found = corners.find(key);
    if (found != corners.end())
    {
      return found->second;
    }
    const int bkey = (i % nk) + nk * (j % nk);
    auto bfound = base.find(bkey);
    if (bfound == base.end())
    {
      const BlochOperator op = assemble_bloch(eps, grid.point(i % nk, j % nk));
      bfound = base.emplace(bkey, eigensolve(op, q, opts)).first;
    }
    Corner corner;
    corner.lambda = bfound->second.lambda.segment(first_band, band_count);
    corner.phi = bfound->second.phi.middleCols(first_band, band_count);
    if (i == nk)
    {
      corner.phi = translate_bloch_gauge(corner.phi, eps.n, 0);
    }
    if (j == nk)
    {
      corner.phi = translate_bloch_gauge(corner.phi, eps.n, 1);
    }
    return corners.emplace(key, std::move(corner)).first->second;
  };

  // Pass 1: plaquette phases and inverted links O_k = phi_{k+1}^H M phi_k,
  // taken around the counter-clockwise plaquette as in plaquette_phase.
  RegionCurvature out;
  struct PlaquetteData
  {
    int corner[4];     // literal corner keys, counter-clockwise
    MatrixXc oinv[4];  // inverse of O_k between corners k and k+1
  };
  std::vector<PlaquetteData> data(plaquettes.size());
  for (std::size_t p = 0; p < plaquettes.size(); ++p)
  {
    const int i = plaquettes[p].first;
    const int j = plaquettes[p].second;
    if (i < 0 || i >= nk || j < 0 || j >= nk)
    {
      throw ValidationError("plaquette index out of range");
    }
    const Corner* c[4] = {&corner_at(i, j), &corner_at(i + 1, j), &corner_at(i + 1, j + 1),
                          &corner_at(i, j + 1)};
    data[p].corner[0] = corner_key(i, j);
    data[p].corner[1] = corner_key(i + 1, j);
    data[p].corner[2] = corner_key(i + 1, j + 1);
    data[p].corner[3] = corner_key(i, j + 1);

    Complex prod(1.0, 0.0);
    for (int k = 0; k < 4; ++k)
    {
      const MatrixXc overlap = c[(k + 1) % 4]->phi.adjoint() * (mass.asDiagonal() * c[k]->phi);
      const Complex det = overlap.determinant();
      if (std::abs(det) < kLinkDetFloor)
      {
        throw SingularOverlap(
            "plaquette link overlap is numerically singular; refine the k-grid "
            "or check for a band crossing inside the group");
      }
      prod *= det;
      data[p].oinv[k] = overlap.inverse();
    }
    out.value += std::arg(prod);
  }

  // Pass 2: adjoint accumulation, corner-major so each bordered factorization
  // is built once, serves every incident plaquette, and is freed before the
  // next corner (the factorizations dominate memory at production sizes).
  std::map<int, std::vector<std::pair<std::size_t, int>>> incident;  // key -> (plaquette, slot)
  for (std::size_t p = 0; p < plaquettes.size(); ++p)
  {
    for (int k = 0; k < 4; ++k)
    {
      incident[data[p].corner[k]].emplace_back(p, k);
    }
  }

  VectorXc acc = VectorXc::Zero(eps.cells());
  for (const auto& entry : incident)
  {
    const int key = entry.first;
    const Corner& corner = corners.at(key);
    const BlochOperator op =
        assemble_bloch(eps, grid.point(key % (nk + 1), key / (nk + 1)));
    for (int a = 0; a < band_count; ++a)
    {
      const BorderedSolver solver(op, corner.lambda[a], corner.phi);
      for (const auto& use : entry.second)
      {
        const PlaquetteData& pd = data[use.first];
        const int k = use.second;
        const Corner& next = corners.at(pd.corner[(k + 1) % 4]);
        const Corner& prev = corners.at(pd.corner[(k + 3) % 4]);
        // Forward weights through link k, backward weights through link k-1.
        const VectorXc psi = next.phi * pd.oinv[k].adjoint().col(a);
        const VectorXc chi = prev.phi * pd.oinv[(k + 3) % 4].col(a);
        const VectorXc v = solver.solve(mass.asDiagonal() * psi);
        const VectorXc w = solver.solve(mass.asDiagonal() * chi);
        const auto phi_a = corner.phi.col(a);
        acc += corner.lambda[a] * (v - w).conjugate().cwiseProduct(phi_a);
        acc += psi.conjugate().cwiseProduct(phi_a);
      }
    }
  }
  out.grad = eps.cell_weight() * acc.imag();
  return out;
}

std::vector<std::pair<int, int>> disk_plaquettes(const KGrid& grid, const Vec2& center,
                                                 Real radius)
{
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < grid.nk; ++j)
  {
    for (int i = 0; i < grid.nk; ++i)
    {
      if (periodic_k_distance(grid.plaquette_center(i, j) - center, grid.b) <= radius)
      {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

}  // namespace topoband
