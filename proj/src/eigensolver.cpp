// SPDX-License-Identifier: Apache-2.0

#include "topoband/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "topoband/errors.hpp"

namespace topoband
{

namespace
{

void check_pencil(const SparseMatrixXc& k, const VectorXr& m)
{
  if (k.rows() != k.cols() || k.rows() != m.size())
  {
    throw MismatchedFields("pencil dimensions disagree");
  }
  if ((m.array() <= 0.0).any())
  {
    throw ValidationError("mass diagonal must be strictly positive");
  }
}

Real matrix_inf_norm(const SparseMatrixXc& k)
{
  VectorXr rowsum = VectorXr::Zero(k.rows());
  for (int j = 0; j < k.outerSize(); ++j)
  {
    for (SparseMatrixXc::InnerIterator it(k, j); it; ++it)
    {
      rowsum[it.row()] += std::abs(it.value());
    }
  }
  return rowsum.size() == 0 ? 0.0 : rowsum.maxCoeff();
}

// Backward-error residual. The denominator floors at the operator scale so a
// converged null vector (lambda = 0, Kx ~ roundoff) reads as converged rather
// than as a 0/0 artifact.
Real pencil_residual(const SparseMatrixXc& k, const VectorXr& m, Real kscale, Real lambda,
                     const VectorXc& x)
{
  const VectorXc kx = k * x;
  const VectorXc mx = m.asDiagonal() * x;
  const Real den = (kscale + std::abs(lambda) * m.maxCoeff()) * x.norm();
  if (den == 0.0)
  {
    return 0.0;
  }
  return (kx - lambda * mx).norm() / den;
}

EigsResult dense_pencil(const SparseMatrixXc& k, const VectorXr& m)
{
  const Eigen::Index n = k.rows();
  const VectorXr dinv = m.array().sqrt().inverse();
  MatrixXc h = MatrixXc(k);
  h = dinv.asDiagonal() * h * dinv.asDiagonal();
  // Symmetrize away assembly roundoff before the dense solve.
  h = Complex(0.5, 0.0) * (h + h.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(h);
  if (es.info() != Eigen::Success)
  {
    throw ConvergenceFailure("dense eigensolver failed");
  }
  EigsResult out;
  out.values = es.eigenvalues();
  out.vectors = dinv.asDiagonal() * es.eigenvectors();
  out.residuals = VectorXr::Zero(n);
  const Real kscale = matrix_inf_norm(k);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    out.residuals[i] = pencil_residual(k, m, kscale, out.values[i], out.vectors.col(i));
  }
  return out;
}

struct RitzPair
{
  Real lambda = 0.0;
  Real residual = 1.0;
  VectorXc x;  // M-normalized pencil eigenvector
};

// Shift-invert block Lanczos with full reorthogonalization on the standard
// form H = D^{-1} K D^{-1}, D = sqrt(M), op = (H - sigma I)^{-1}. Two modes:
//   Smallest: converge the q algebraically smallest pencil eigenvalues.
//   Window:   converge everything in (lo, hi) plus one value beyond each end.
//
// Converged pairs are locked: later basis vectors are kept orthogonal to them
// and the recurrence restarts from a fresh random block once the target set
// is filled. Restarts are what make degenerate copies reachable -- a single
// Krylov sequence contains one copy per distinct eigenvalue -- and the final
// restarted sweep doubles as a stopping certificate: it must converge the
// best remaining value and find it beyond the requested set. Ritz vectors are
// realized only for candidates whose cheap coupling bound suggests
// convergence; the decisive test is the explicit pencil residual.
class Lanczos
{
public:
  enum class Mode
  {
    Smallest,
    Window
  };

  Lanczos(const SparseMatrixXc& k, const VectorXr& m, Real sigma,
          std::function<void(const MatrixXc&, MatrixXc&)> op, const EigsOptions& opts, Mode mode)
      : k_(k), m_(m), sigma_(sigma), op_(std::move(op)), opts_(opts), mode_(mode),
        kscale_(matrix_inf_norm(k))
  {
  }

  int want_q = 0;  // Smallest mode
  Real lo = 0.0;   // Window mode
  Real hi = 0.0;

  std::vector<RitzPair> locked;  // ascending lambda once run() returns

  void run(int max_basis)
  {
    const Eigen::Index n = k_.rows();
    const int b = std::max(1, opts_.block_size);
    d_ = m_.array().sqrt();
    dinv_ = d_.cwiseInverse();
    z_.resize(n, 0);

    std::mt19937_64 gen(opts_.seed + 0x9e3779b97f4a7c15ull);
    std::normal_distribution<Real> dist;
    auto random_block = [&](Eigen::Index cols) {
      MatrixXc r(n, cols);
      for (Eigen::Index jc = 0; jc < cols; ++jc)
      {
        for (Eigen::Index ic = 0; ic < n; ++ic)
        {
          r(ic, jc) = Complex(dist(gen), dist(gen));
        }
      }
      return r;
    };

    const int s_cap = int(std::min<Eigen::Index>(max_basis, n) / b * b);
    if (s_cap < b)
    {
      throw ValidationError("eigensolver basis too small for the block size");
    }
    MatrixXc v(n, s_cap + b);
    MatrixXc t(s_cap + b, s_cap + b);
    MatrixXc w(n, b);

    const int sweep_limit = 64;
    for (int sweep = 0; sweep < sweep_limit && !done_; ++sweep)
    {
      const Eigen::Index room = n - Eigen::Index(z_.cols());
      const int s_max = int(std::min<Eigen::Index>(s_cap, room / b * b));
      if (s_max < b)
      {
        break;  // locking consumed (essentially) the whole space
      }

      // Fresh start block, orthogonal to everything locked so far.
      {
        MatrixXc seed = random_block(b);
        deflate(seed);
        Eigen::HouseholderQR<MatrixXc> qr(seed);
        v.leftCols(b) = qr.householderQ() * MatrixXc::Identity(n, b);
      }
      t.setZero();
      sweep_locks_ = 0;
      int s = 0;
      int next_check = std::min(s_max, sweep == 0 ? std::max(4 * b, 24) : std::max(2 * b, 12));
      bool restart = false;
      while (!restart)
      {
        op_(v.middleCols(s, b), w);
        if (s >= b)
        {
          w.noalias() -= v.middleCols(s - b, b) * t.block(s - b, s, b, b);
        }
        MatrixXc a = v.middleCols(s, b).adjoint() * w;
        a = Complex(0.5, 0.0) * (a + a.adjoint()).eval();
        w.noalias() -= v.middleCols(s, b) * a;
        t.block(s, s, b, b) = a;
        for (int pass = 0; pass < 2; ++pass)
        {
          deflate(w);
          const MatrixXc proj = v.leftCols(s + b).adjoint() * w;
          w.noalias() -= v.leftCols(s + b) * proj;
        }
        Eigen::HouseholderQR<MatrixXc> qr(w);
        MatrixXc r = MatrixXc(qr.matrixQR().topRows(b).template triangularView<Eigen::Upper>());
        MatrixXc q = qr.householderQ() * MatrixXc::Identity(n, b);
        const Real r_scale = std::max<Real>(1e-300, r.cwiseAbs().maxCoeff());
        for (int jc = 0; jc < b; ++jc)
        {
          // Replace a dead direction (exactly invariant subspace) randomly.
          if (std::abs(r(jc, jc)) < 1e-13 * r_scale)
          {
            MatrixXc fresh = random_block(1);
            for (int pass = 0; pass < 2; ++pass)
            {
              deflate(fresh);
              fresh.noalias() -= v.leftCols(s + b) * (v.leftCols(s + b).adjoint() * fresh).eval();
              fresh.noalias() -= q.leftCols(jc) * (q.leftCols(jc).adjoint() * fresh).eval();
            }
            q.col(jc) = fresh.col(0) / fresh.col(0).norm();
          }
        }
        if (s < s_max)
        {
          v.middleCols(s + b, b) = q;
          t.block(s, s + b, b, b) = r.adjoint();
          t.block(s + b, s, b, b) = r;
        }
        s += b;

        if (s >= next_check || s >= s_max)
        {
          checkpoint(v, t, s, b);
          if (done_)
          {
            break;
          }
          if (target_met() && sweep_locks_ > 0)
          {
            restart = true;  // a clean sweep must supply the certificate
          }
          else if (s >= s_max)
          {
            if (sweep_locks_ == 0)
            {
              std::ostringstream msg;
              msg << "eigensolver basis limit " << s_max
                  << " reached (best unconverged residual " << best_pending_ << ")";
              throw ConvergenceFailure(msg.str());
            }
            restart = true;  // progress was made; rebuild around the new locks
          }
          else
          {
            next_check = std::min(s_max, next_check + std::max(next_check / 2, 16));
          }
        }
      }
    }

    if (!done_)
    {
      const bool exhausted = n - Eigen::Index(z_.cols()) < b;
      const bool enough = mode_ == Mode::Smallest ? int(locked.size()) >= want_q : true;
      if (!(exhausted && enough))
      {
        throw ConvergenceFailure("eigensolver sweep limit reached without a stopping certificate");
      }
    }
    std::sort(locked.begin(), locked.end(),
              [](const RitzPair& a, const RitzPair& c) { return a.lambda < c.lambda; });
  }

private:
  void deflate(MatrixXc& x) const
  {
    if (z_.cols() > 0)
    {
      x.noalias() -= z_ * (z_.adjoint() * x).eval();
    }
  }

  bool target_met() const
  {
    if (mode_ == Mode::Smallest)
    {
      return int(locked.size()) >= want_q;
    }
    bool have_lo = false;
    bool have_hi = false;
    for (const auto& p : locked)
    {
      have_lo = have_lo || p.lambda <= lo;
      have_hi = have_hi || p.lambda >= hi;
    }
    return have_lo && have_hi;
  }

  Real answer_cut() const
  {
    std::vector<Real> vals;
    vals.reserve(locked.size());
    for (const auto& p : locked)
    {
      vals.push_back(p.lambda);
    }
    std::nth_element(vals.begin(), vals.begin() + (want_q - 1), vals.end());
    return vals[want_q - 1];
  }

  // Would this eigenvalue belong to the requested set?
  bool is_needed(Real lambda) const
  {
    if (mode_ == Mode::Smallest)
    {
      if (int(locked.size()) < want_q)
      {
        return true;
      }
      const Real cut = answer_cut();
      const Real scale = std::max({std::abs(cut), std::abs(lambda), Real(1)});
      return lambda < cut - opts_.cluster_rtol * scale;
    }
    if (lambda > lo && lambda < hi)
    {
      return true;
    }
    for (const auto& p : locked)
    {
      if (lambda <= lo ? p.lambda <= lo : p.lambda >= hi)
      {
        return false;  // this side is already bracketed
      }
    }
    return true;
  }

  void checkpoint(const MatrixXc& v, const MatrixXc& t, int s, int b)
  {
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(t.topLeftCorner(s, s));
    const VectorXr& mu = es.eigenvalues();
    const MatrixXc& y = es.eigenvectors();
    const MatrixXc coupling = t.block(s, s - b, b, b);

    struct Cand
    {
      Real lambda;
      Real amu;
      int idx;
      Real cheap;
    };
    std::vector<Cand> cands;
    cands.reserve(std::size_t(mu.size()));
    for (Eigen::Index i = 0; i < mu.size(); ++i)
    {
      // The inverted operator is positive definite in Smallest mode (sigma
      // sits below a PSD pencil), so nonpositive Ritz values are roundoff.
      if (mode_ == Mode::Smallest ? mu[i] <= 1e-14 : std::abs(mu[i]) < 1e-14)
      {
        continue;
      }
      // Coupling-norm bound on the shift-inverted residual, made relative to
      // |mu|; a loose gate (the realized pencil residual decides).
      const Real cheap = (coupling * y.block(s - b, i, b, 1)).norm() / std::abs(mu[i]);
      cands.push_back({sigma_ + 1.0 / mu[i], std::abs(mu[i]), int(i), cheap});
    }
    // The iteration converges large |mu| first: smallest lambda in Smallest
    // mode, nearest the window center otherwise. Walk in that order.
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& c) { return a.amu > c.amu; });

    const bool clean = sweep_locks_ == 0;
    for (std::size_t ci = 0; ci < cands.size(); ++ci)
    {
      const Cand& cand = cands[ci];
      const bool needed = is_needed(cand.lambda);
      // A clean sweep whose best remaining value converges outside the
      // requested set certifies that nothing is missing.
      const bool certify = ci == 0 && clean && !needed && target_met();
      if (!needed && !certify)
      {
        if (mode_ == Mode::Smallest)
        {
          break;  // lambda-ordered: nothing farther out is needed either
        }
        continue;
      }
      if (cand.cheap > 0.1)
      {
        if (needed)
        {
          best_pending_ = std::min(best_pending_, cand.cheap);
          break;
        }
        continue;
      }
      // Realize in standard coordinates, splitting off locked components so
      // a value re-surfacing after a mid-sweep lock is not double-counted.
      VectorXc zc = v.leftCols(s) * y.col(cand.idx);
      if (z_.cols() > 0)
      {
        for (int pass = 0; pass < 2; ++pass)
        {
          zc -= z_ * (z_.adjoint() * zc).eval();
        }
        const Real rem = zc.norm();
        if (rem < 0.5)
        {
          continue;  // an already locked direction, not a new copy
        }
        zc /= rem;
      }
      else
      {
        zc /= zc.norm();
      }
      RitzPair p;
      p.lambda = cand.lambda;
      p.x = dinv_.asDiagonal() * zc;
      p.residual = pencil_residual(k_, m_, kscale_, p.lambda, p.x);
      if (p.residual > opts_.tol)
      {
        if (needed)
        {
          best_pending_ = std::min(best_pending_, p.residual);
          break;
        }
        continue;
      }
      if (certify)
      {
        done_ = true;
        return;
      }
      z_.conservativeResize(Eigen::NoChange, z_.cols() + 1);
      z_.col(z_.cols() - 1) = zc;
      locked.push_back(std::move(p));
      ++sweep_locks_;
    }
  }

  const SparseMatrixXc& k_;
  const VectorXr& m_;
  Real sigma_;
  std::function<void(const MatrixXc&, MatrixXc&)> op_;
  const EigsOptions& opts_;
  Mode mode_;
  Real kscale_;
  VectorXr d_;
  VectorXr dinv_;
  MatrixXc z_;  // locked vectors, standard coordinates, orthonormal columns
  int sweep_locks_ = 0;
  bool done_ = false;
  Real best_pending_ = 1.0;
};

// M-inner-product Gram-Schmidt cleanup of nearly degenerate groups.
void reorthonormalize(MatrixXc& x, const VectorXr& m)
{
  for (Eigen::Index c = 0; c < x.cols(); ++c)
  {
    for (int pass = 0; pass < 2; ++pass)
    {
      for (Eigen::Index p = 0; p < c; ++p)
      {
        const Complex g = (x.col(p).adjoint() * (m.asDiagonal() * x.col(c)))(0, 0);
        x.col(c) -= g * x.col(p);
      }
    }
    const Real nrm =
        std::sqrt(std::abs((x.col(c).adjoint() * (m.asDiagonal() * x.col(c)))(0, 0).real()));
    x.col(c) /= nrm;
  }
}

}  // namespace

EigsResult smallest_eigenpairs(const SparseMatrixXc& k, const VectorXr& m, int q,
                               const EigsOptions& opts)
{
  check_pencil(k, m);
  const Eigen::Index n = k.rows();
  if (q < 1 || q > n)
  {
    throw ValidationError("requested eigenpair count out of range");
  }

  if (n <= opts.dense_cutoff)
  {
    EigsResult full = dense_pencil(k, m);
    EigsResult out;
    out.values = full.values.head(q);
    out.vectors = full.vectors.leftCols(q);
    out.residuals = full.residuals.head(q);
    reorthonormalize(out.vectors, m);
    return out;
  }

  // Shift below the spectrum, on the scale of the first nonzero eigenvalue
  // (lowest band curvature ~ (2 pi)^2 / eps).
  const Real contrast = m.maxCoeff() / m.minCoeff();
  const Real sigma = -std::max(4.0 * pi * pi / contrast, 1e-8);

  SparseMatrixXc shifted = k;
  for (Eigen::Index c = 0; c < n; ++c)
  {
    shifted.coeffRef(c, c) += Complex(-sigma * m[c], 0.0);
  }
  shifted.makeCompressed();
  Eigen::SimplicialLLT<SparseMatrixXc, Eigen::Lower> llt(shifted);
  if (llt.info() != Eigen::Success)
  {
    throw ConvergenceFailure("shifted operator factorization failed");
  }

  const VectorXr d = m.array().sqrt();
  Lanczos solver(
      k, m, sigma,
      [&](const MatrixXc& x, MatrixXc& y) { y = d.asDiagonal() * llt.solve(d.asDiagonal() * x); },
      opts, Lanczos::Mode::Smallest);
  solver.want_q = q;
  const int max_basis = opts.max_basis > 0
                            ? opts.max_basis
                            : int(std::min<Eigen::Index>(n, std::max(90, 8 * q + 42)));
  solver.run(max_basis);

  EigsResult out;
  out.values.resize(q);
  out.vectors.resize(n, q);
  out.residuals.resize(q);
  for (int i = 0; i < q; ++i)
  {
    out.values[i] = solver.locked[i].lambda;
    out.vectors.col(i) = solver.locked[i].x;
    out.residuals[i] = solver.locked[i].residual;
  }
  reorthonormalize(out.vectors, m);
  return out;
}

WindowResult window_eigenpairs(const SparseMatrixXc& k, const VectorXr& m, Real lo, Real hi,
                               const EigsOptions& opts)
{
  check_pencil(k, m);
  if (!(lo < hi))
  {
    throw ValidationError("window bounds must satisfy lo < hi");
  }
  const Eigen::Index n = k.rows();

  WindowResult out;
  if (n <= opts.dense_cutoff)
  {
    EigsResult full = dense_pencil(k, m);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < full.values.size(); ++i)
    {
      if (full.values[i] > lo && full.values[i] < hi)
      {
        keep.push_back(i);
      }
      out.bracketed_lo = out.bracketed_lo || full.values[i] <= lo;
      out.bracketed_hi = out.bracketed_hi || full.values[i] >= hi;
    }
    out.values.resize(keep.size());
    out.vectors.resize(n, Eigen::Index(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
    {
      out.values[Eigen::Index(i)] = full.values[keep[i]];
      out.vectors.col(Eigen::Index(i)) = full.vectors.col(keep[i]);
    }
    return out;
  }

  const Real sigma = 0.5 * (lo + hi);
  SparseMatrixXc shifted = k;
  for (Eigen::Index c = 0; c < n; ++c)
  {
    shifted.coeffRef(c, c) += Complex(-sigma * m[c], 0.0);
  }
  shifted.makeCompressed();
  Eigen::SparseLU<SparseMatrixXc> lu(shifted);
  if (lu.info() != Eigen::Success)
  {
    throw ConvergenceFailure("window factorization failed (shift hits an eigenvalue?)");
  }

  EigsOptions local = opts;
  if (local.block_size == 1)
  {
    local.block_size = 2;  // resolve crossing pairs faster
  }
  const VectorXr d = m.array().sqrt();
  Lanczos solver(
      k, m, sigma,
      [&](const MatrixXc& x, MatrixXc& y) {
        y = d.asDiagonal() * lu.solve((d.asDiagonal() * x).eval());
      },
      local, Lanczos::Mode::Window);
  solver.lo = lo;
  solver.hi = hi;
  const int max_basis = local.max_basis > 0 ? local.max_basis : int(std::min<Eigen::Index>(n, 168));
  solver.run(max_basis);

  const int count = int(solver.locked.size());
  int kept = 0;
  out.values.resize(count);
  out.vectors.resize(n, count);
  for (int i = 0; i < count; ++i)
  {
    const Real lam = solver.locked[i].lambda;
    out.bracketed_lo = out.bracketed_lo || lam <= lo;
    out.bracketed_hi = out.bracketed_hi || lam >= hi;
    if (lam > lo && lam < hi)
    {
      out.values[kept] = lam;
      out.vectors.col(kept) = solver.locked[i].x;
      ++kept;
    }
  }
  out.values.conservativeResize(kept);
  out.vectors.conservativeResize(Eigen::NoChange, kept);
  reorthonormalize(out.vectors, m);
  return out;
}

}  // namespace topoband
