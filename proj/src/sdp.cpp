// SPDX-License-Identifier: Apache-2.0

#include "topoband/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "topoband/errors.hpp"

namespace topoband
{

namespace
{

constexpr Real kAsymmetryTol = 1e-9;
constexpr Real kInfinity = std::numeric_limits<Real>::infinity();

Eigen::Index svec_size(Eigen::Index d)
{
  return d * (d + 1) / 2;
}

// Packed symmetric embedding with sqrt(2)-weighted off-diagonals, so that
// dot(svec(A), svec(B)) equals the Frobenius inner product <A, B> for
// symmetric A, B. Mild asymmetry is projected out by averaging.
void svec_fill(const MatrixXr& a, VectorXr& out)
{
  const Eigen::Index d = a.rows();
  const Real w = std::sqrt(Real(2)) * Real(0.5);
  Eigen::Index t = 0;
  for (Eigen::Index c = 0; c < d; ++c)
  {
    out[t++] = a(c, c);
    for (Eigen::Index r = c + 1; r < d; ++r) out[t++] = w * (a(r, c) + a(c, r));
  }
}

void check_symmetric(const MatrixXr& m, const char* what)
{
  if (m.rows() != m.cols()) throw ValidationError(std::string(what) + " is not square");
  if (!m.allFinite()) throw ValidationError(std::string(what) + " has a non-finite entry");
  const Real scale = 1 + m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kAsymmetryTol * scale)
    throw ValidationError(std::string(what) + " is not symmetric");
}

// One semidefinite cone constraint after preprocessing, plus all per-iterate
// solver state attached to it.
struct BlockWork
{
  Eigen::Index dim = 0;
  MatrixXr constant;                // scaled constant term
  std::vector<Eigen::Index> vars;   // ascending, unique
  std::vector<MatrixXr> coeff;      // scaled, aligned with vars

  // cone iterates
  MatrixXr s, z;

  // Nesterov-Todd scaling of the current iterate: R and its inverse satisfy
  // R^-1 S R^-T = R^T Z R = diag(lam).
  MatrixXr r, rinv;
  VectorXr lam;
  MatrixXr hmat;  // one row per term: svec(R^-1 F_v R^-T)
  VectorXr h0;    // svec(R^-1 constant R^-T)

  // per-pass scratch
  MatrixXr rp;            // primal residual
  MatrixXr bmat, bs;      // right-hand side B and R^-1 B R^-T
  MatrixXr ds_s, dz_s;    // scaled directions
  MatrixXr ds, dz;        // unscaled directions
  MatrixXr corr;          // Mehrotra corrector from the predictor pass
  MatrixXr tmp1, tmp2;
  VectorXr sv;            // svec scratch
};

// All scalar inequality rows in compressed sparse form, with iterates.
struct RowSet
{
  Eigen::Index count = 0;
  std::vector<Eigen::Index> ptr;  // count + 1
  std::vector<Eigen::Index> var;
  std::vector<Real> val;
  VectorXr constant;

  VectorXr s, z;                      // cone iterates
  VectorXr w, lam;                    // scaling w = sqrt(s/z), lam = sqrt(s z)
  VectorXr rp, b, ds, dz, dss, dzs;   // scratch (dss/dzs are scaled directions)
  VectorXr corr;

  void apply(const VectorXr& x, VectorXr& out) const  // out_r = a_r . x
  {
    out.setZero(count);
    for (Eigen::Index r = 0; r < count; ++r)
      for (Eigen::Index t = ptr[r]; t < ptr[r + 1]; ++t) out[r] += val[t] * x[var[t]];
  }
  void apply_adjoint(const VectorXr& y, VectorXr& out) const  // out += sum_r y_r a_r
  {
    for (Eigen::Index r = 0; r < count; ++r)
      for (Eigen::Index t = ptr[r]; t < ptr[r + 1]; ++t) out[var[t]] += val[t] * y[r];
  }
};

struct Prepared
{
  Eigen::Index p = 0;
  VectorXr objective;  // scaled
  std::vector<BlockWork> blocks;
  RowSet rows;
  bool trivially_infeasible = false;

  // grouping: buckets 0..group_count-1 are groups, bucket group_count is the
  // shared tail (possibly everything when no grouping was requested)
  int group_count = 0;
  std::vector<int> bucket_of;          // size p
  std::vector<Eigen::Index> local_of;  // size p
  std::vector<Eigen::Index> bucket_size;

  Real constant_norm = 0;  // Frobenius norm of all scaled constant terms
};

struct RawRow
{
  std::vector<std::pair<Eigen::Index, Real>> a;
  Real c = 0;
};

// Sort by variable, merge duplicates, drop exact zeros.
template <class Pair, class Add>
void normalize_terms(std::vector<Pair>& terms, Eigen::Index p, const Add& add_into)
{
  for (const auto& t : terms)
    if (t.first < 0 || t.first >= p)
      throw ValidationError("constraint references a variable outside the model");
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Pair& a, const Pair& b) { return a.first < b.first; });
  std::vector<Pair> merged;
  for (auto& t : terms)
  {
    if (!merged.empty() && merged.back().first == t.first)
      add_into(merged.back().second, t.second);
    else
      merged.push_back(std::move(t));
  }
  terms.swap(merged);
}

Prepared prepare(const SdpModel& model)
{
  const Eigen::Index p = model.variable_count;
  if (p <= 0) throw ValidationError("semidefinite model must declare at least one variable");
  if (model.objective.size() != p)
    throw ValidationError("objective length does not match the variable count");
  if (!model.objective.allFinite()) throw ValidationError("objective has a non-finite entry");

  Prepared prep;
  prep.p = p;
  const Real gscale = std::max(Real(1), model.objective.cwiseAbs().maxCoeff());
  prep.objective = model.objective / gscale;

  // Bucket assignment: -1 (or no grouping at all) lands in the shared tail.
  std::vector<int> bucket(p, -1);
  int groups = 0;
  if (!model.variable_group.empty())
  {
    if (Eigen::Index(model.variable_group.size()) != p)
      throw ValidationError("variable grouping length does not match the variable count");
    std::vector<int> ids;
    for (Eigen::Index v = 0; v < p; ++v)
    {
      const int gid = model.variable_group[v];
      if (gid < -1) throw ValidationError("variable group ids must be -1 or non-negative");
      if (gid == -1) continue;
      auto it = std::find(ids.begin(), ids.end(), gid);
      if (it == ids.end())
      {
        ids.push_back(gid);
        bucket[v] = groups++;
      }
      else
      {
        bucket[v] = int(it - ids.begin());
      }
    }
  }
  prep.group_count = groups;
  for (auto& v : bucket)
    if (v == -1) v = groups;
  prep.bucket_of = bucket;
  prep.bucket_size.assign(groups + 1, 0);
  prep.local_of.resize(p);
  for (Eigen::Index v = 0; v < p; ++v) prep.local_of[v] = prep.bucket_size[bucket[v]]++;

  std::vector<bool> seen(p, false);
  std::vector<RawRow> raw_rows;
  Real const_sq = 0;

  auto bucket_check = [&](const std::vector<Eigen::Index>& vars) {
    int found = -1;
    for (Eigen::Index v : vars)
    {
      const int b = bucket[v];
      if (b == groups) continue;
      if (found == -1) found = b;
      else if (found != b)
        throw ValidationError("a constraint couples two variable groups");
    }
  };

  auto push_row = [&](RawRow row) {
    Real scale = std::abs(row.c);
    for (const auto& t : row.a) scale = std::max(scale, std::abs(t.second));
    if (scale == 0) return;  // 0 >= 0, nothing to add
    row.c /= scale;
    std::vector<std::pair<Eigen::Index, Real>> terms;
    for (const auto& t : row.a)
      if (t.second != 0) terms.emplace_back(t.first, t.second / scale);
    normalize_terms(terms, p, [](Real& a, const Real& b) { a += b; });
    terms.erase(std::remove_if(terms.begin(), terms.end(),
                               [](const auto& t) { return t.second == 0; }),
                terms.end());
    if (terms.empty())
    {
      if (row.c < -1e-14) prep.trivially_infeasible = true;
      return;
    }
    std::vector<Eigen::Index> vars;
    for (const auto& t : terms) vars.push_back(t.first);
    bucket_check(vars);
    for (Eigen::Index v : vars) seen[v] = true;
    RawRow out;
    out.c = row.c;
    out.a = std::move(terms);
    raw_rows.push_back(std::move(out));
  };

  for (const auto& row : model.rows)
  {
    if (!std::isfinite(row.constant)) throw ValidationError("row constant is not finite");
    for (const auto& t : row.coefficients)
      if (!std::isfinite(t.second)) throw ValidationError("row coefficient is not finite");
    RawRow raw;
    raw.c = row.constant;
    raw.a = row.coefficients;
    push_row(std::move(raw));
  }

  for (const auto& block : model.blocks)
  {
    check_symmetric(block.constant, "block constant matrix");
    const Eigen::Index d = block.constant.rows();
    if (d == 0) continue;
    std::vector<std::pair<Eigen::Index, MatrixXr>> terms = block.coefficients;
    Real scale = block.constant.cwiseAbs().maxCoeff();
    for (const auto& t : terms)
    {
      check_symmetric(t.second, "block coefficient matrix");
      if (t.second.rows() != d)
        throw ValidationError("block coefficient size differs from the constant term");
      scale = std::max(scale, t.second.cwiseAbs().maxCoeff());
    }
    if (scale == 0) continue;  // 0 >= 0 in the Loewner order

    if (d == 1)
    {
      RawRow raw;
      raw.c = block.constant(0, 0);
      for (const auto& t : terms) raw.a.emplace_back(t.first, t.second(0, 0));
      push_row(std::move(raw));
      continue;
    }

    normalize_terms(terms, p, [](MatrixXr& a, const MatrixXr& b) { a += b; });
    terms.erase(std::remove_if(terms.begin(), terms.end(),
                               [](const auto& t) { return t.second.cwiseAbs().maxCoeff() == 0; }),
                terms.end());
    if (terms.empty())
    {
      Eigen::SelfAdjointEigenSolver<MatrixXr> es(block.constant / scale, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-12) prep.trivially_infeasible = true;
      continue;
    }

    BlockWork work;
    work.dim = d;
    work.constant = block.constant / scale;
    for (auto& t : terms)
    {
      work.vars.push_back(t.first);
      work.coeff.push_back(t.second / scale);
      seen[t.first] = true;
    }
    bucket_check(work.vars);
    const_sq += work.constant.squaredNorm();
    prep.blocks.push_back(std::move(work));
  }

  // Assemble the row set.
  RowSet& rows = prep.rows;
  rows.count = Eigen::Index(raw_rows.size());
  rows.ptr.assign(1, 0);
  rows.constant.resize(rows.count);
  for (Eigen::Index r = 0; r < rows.count; ++r)
  {
    rows.constant[r] = raw_rows[r].c;
    const_sq += raw_rows[r].c * raw_rows[r].c;
    for (const auto& t : raw_rows[r].a)
    {
      rows.var.push_back(t.first);
      rows.val.push_back(t.second);
    }
    rows.ptr.push_back(Eigen::Index(rows.var.size()));
  }
  prep.constant_norm = std::sqrt(const_sq);

  if (!prep.trivially_infeasible)
    for (Eigen::Index v = 0; v < p; ++v)
      if (!seen[v])
        throw ValidationError("decision variable appears in no constraint");

  return prep;
}

// Schur complement of the Newton system, stored and factored bucket by
// bucket: dense diagonal blocks per group, a rectangular border against the
// shared tail, and a dense shared block that absorbs the group Schur
// complements.
class GroupedSchur
{
public:
  void init(const Prepared& prep)
  {
    prep_ = &prep;
    const int g = prep.group_count;
    diag_.resize(g + 1);
    border_.resize(g);
    for (int i = 0; i <= g; ++i)
      diag_[i].setZero(prep.bucket_size[i], prep.bucket_size[i]);
    for (int i = 0; i < g; ++i) border_[i].setZero(prep.bucket_size[g], prep.bucket_size[i]);
    llt_.resize(g);
    wg_.resize(g);
  }

  void zero()
  {
    for (auto& m : diag_) m.setZero();
    for (auto& m : border_) m.setZero();
  }

  // M += H H^T scattered onto vars; row t of h corresponds to vars[t].
  void add_outer(const std::vector<Eigen::Index>& vars, const MatrixXr& h)
  {
    const Prepared& prep = *prep_;
    const int shared = prep.group_count;
    const Eigen::Index k = Eigen::Index(vars.size());

    Eigen::Index grouped_end = 0;  // rows [0, grouped_end) in one group, rest shared
    int group = -1;
    bool split_clean = true;
    for (Eigen::Index i = 0; i < k; ++i)
    {
      const int b = prep.bucket_of[vars[i]];
      if (b != shared)
      {
        if (Eigen::Index(i) != grouped_end) split_clean = false;
        group = b;
        ++grouped_end;
      }
    }

    if (!split_clean)
    {
      scatter_outer(vars, h * h.transpose());
      return;
    }

    if (grouped_end > 0)
    {
      bool contiguous = true;
      const Eigen::Index base = prep.local_of[vars[0]];
      for (Eigen::Index i = 1; i < grouped_end; ++i)
        if (prep.local_of[vars[i]] != base + i) contiguous = false;
      const auto hg = h.topRows(grouped_end);
      if (contiguous)
      {
        diag_[group]
            .block(base, base, grouped_end, grouped_end)
            .selfadjointView<Eigen::Lower>()
            .rankUpdate(hg);
        for (Eigen::Index i = grouped_end; i < k; ++i)
        {
          const Eigen::Index ls = prep.local_of[vars[i]];
          border_[group].row(ls).segment(base, grouped_end).noalias() +=
              (hg * h.row(i).transpose()).transpose();
        }
      }
      else
      {
        const MatrixXr t = hg * hg.transpose();
        for (Eigen::Index i = 0; i < grouped_end; ++i)
          for (Eigen::Index j = 0; j <= i; ++j)
            entry(vars[i], vars[j]) += t(i, j);
        for (Eigen::Index i = grouped_end; i < k; ++i)
          for (Eigen::Index j = 0; j < grouped_end; ++j)
            entry(vars[i], vars[j]) += h.row(i).dot(h.row(j));
      }
    }
    for (Eigen::Index i = grouped_end; i < k; ++i)
      for (Eigen::Index j = grouped_end; j <= i; ++j)
        entry(vars[i], vars[j]) += h.row(i).dot(h.row(j));
  }

  void add_row(const Eigen::Index* vars, const Real* vals, Eigen::Index k, Real weight)
  {
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        entry(vars[i], vars[j]) += weight * vals[i] * vals[j];
  }

  bool factor()
  {
    const int g = prep_->group_count;
    Real jitter = 0;
    for (int attempt = 0; attempt < 4; ++attempt)
    {
      if (jitter > 0)
        for (auto& m : diag_)
          if (m.rows() > 0) m.diagonal().array() += jitter;
      bool ok = true;
      MatrixXr schur = diag_[g].selfadjointView<Eigen::Lower>();
      for (int i = 0; i < g && ok; ++i)
      {
        if (diag_[i].rows() == 0) continue;
        llt_[i].compute(diag_[i]);
        if (llt_[i].info() != Eigen::Success)
        {
          ok = false;
          break;
        }
        wg_[i] = llt_[i].matrixL().solve(border_[i].transpose());
        schur.noalias() -= wg_[i].transpose() * wg_[i];
      }
      if (ok && schur.rows() > 0)
      {
        shared_llt_.compute(schur);
        ok = shared_llt_.info() == Eigen::Success;
      }
      if (ok) return true;
      Real scale = 1;
      for (const auto& m : diag_)
        if (m.rows() > 0) scale = std::max(scale, m.diagonal().cwiseAbs().maxCoeff());
      jitter = (jitter == 0 ? 1e-13 * scale : jitter * 1e3);
    }
    return false;
  }

  VectorXr solve(const VectorXr& rhs) const
  {
    const Prepared& prep = *prep_;
    const int g = prep.group_count;
    std::vector<VectorXr> parts(g + 1);
    for (int i = 0; i <= g; ++i) parts[i].resize(prep.bucket_size[i]);
    for (Eigen::Index v = 0; v < prep.p; ++v)
      parts[prep.bucket_of[v]][prep.local_of[v]] = rhs[v];

    VectorXr rsh = parts[g];
    std::vector<VectorXr> yg(g);
    for (int i = 0; i < g; ++i)
    {
      if (parts[i].size() == 0) continue;
      yg[i] = llt_[i].matrixL().solve(parts[i]);
      rsh.noalias() -= wg_[i].transpose() * yg[i];
    }
    VectorXr xsh;
    if (rsh.size() > 0) xsh = shared_llt_.solve(rsh);
    VectorXr out(prep.p);
    for (int i = 0; i < g; ++i)
    {
      if (parts[i].size() == 0) continue;
      VectorXr xi = yg[i];
      if (xsh.size() > 0) xi.noalias() -= wg_[i] * xsh;
      parts[i] = llt_[i].matrixU().solve(xi);
    }
    parts[g] = xsh;
    for (Eigen::Index v = 0; v < prep.p; ++v)
      out[v] = parts[prep.bucket_of[v]][prep.local_of[v]];
    return out;
  }

private:
  Real& entry(Eigen::Index u, Eigen::Index v)  // lower-triangle slot for the pair
  {
    const Prepared& prep = *prep_;
    int bu = prep.bucket_of[u], bv = prep.bucket_of[v];
    Eigen::Index lu = prep.local_of[u], lv = prep.local_of[v];
    if (bu == bv)
    {
      if (lu < lv) std::swap(lu, lv);
      return diag_[bu](lu, lv);
    }
    if (bu > bv) return border_[bv](lu, lv);  // bu is the shared bucket
    return border_[bu](lv, lu);
  }

  void scatter_outer(const std::vector<Eigen::Index>& vars, const MatrixXr& t)
  {
    for (Eigen::Index i = 0; i < Eigen::Index(vars.size()); ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        entry(vars[i], vars[j]) += t(i, j);
  }

  const Prepared* prep_ = nullptr;
  std::vector<MatrixXr> diag_;
  std::vector<MatrixXr> border_;
  std::vector<Eigen::LLT<MatrixXr>> llt_;
  std::vector<MatrixXr> wg_;
  Eigen::LLT<MatrixXr> shared_llt_;
};

// Largest step alpha with diag(lam) + alpha * d still positive semidefinite.
Real step_bound(const VectorXr& lam, const MatrixXr& d)
{
  const VectorXr inv = lam.array().sqrt().inverse();
  const MatrixXr t = inv.asDiagonal() * d * inv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXr> es(t, Eigen::EigenvaluesOnly);
  const Real mineig = es.eigenvalues().minCoeff();
  return mineig >= 0 ? kInfinity : Real(1) / (-mineig);
}

Real ratio_bound(const VectorXr& value, const VectorXr& delta)
{
  Real bound = kInfinity;
  for (Eigen::Index i = 0; i < value.size(); ++i)
    if (delta[i] < 0) bound = std::min(bound, -value[i] / delta[i]);
  return bound;
}

Real violation(const SdpModel& model, const VectorXr& x, bool homogeneous)
{
  Real worst = 0;
  for (const auto& block : model.blocks)
  {
    MatrixXr e = homogeneous ? MatrixXr::Zero(block.constant.rows(), block.constant.cols())
                             : block.constant;
    for (const auto& t : block.coefficients) e += x[t.first] * t.second;
    if (e.rows() == 0) continue;
    const MatrixXr sym = Real(0.5) * (e + e.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXr> es(sym, Eigen::EigenvaluesOnly);
    worst = std::max(worst, -es.eigenvalues().minCoeff());
  }
  for (const auto& row : model.rows)
  {
    Real v = homogeneous ? 0 : row.constant;
    for (const auto& t : row.coefficients) v += x[t.first] * t.second;
    worst = std::max(worst, -v);
  }
  return worst;
}

}  // namespace

MatrixXr real_embedding(const MatrixXc& hermitian)
{
  if (hermitian.rows() != hermitian.cols())
    throw ValidationError("real embedding needs a square matrix");
  const Eigen::Index d = hermitian.rows();
  const MatrixXc h = Real(0.5) * (hermitian + hermitian.adjoint());
  MatrixXr out(2 * d, 2 * d);
  out.topLeftCorner(d, d) = h.real();
  out.topRightCorner(d, d) = -h.imag();
  out.bottomLeftCorner(d, d) = h.imag();
  out.bottomRightCorner(d, d) = h.real();
  return out;
}

SdpSolution solve_sdp(const SdpModel& model, const SdpOptions& options)
{
  Prepared prep = prepare(model);
  const Eigen::Index p = prep.p;

  SdpSolution sol;
  sol.x = VectorXr::Zero(p);
  if (prep.trivially_infeasible)
  {
    sol.status = SdpStatus::Infeasible;
    return sol;
  }

  RowSet& rows = prep.rows;
  const VectorXr& g = prep.objective;
  const Real gnorm = g.norm();
  const Real enorm = prep.constant_norm;

  // Homogeneous self-dual state.
  VectorXr x = VectorXr::Zero(p);
  Real tau = 1, kappa = 1;
  Eigen::Index nu = rows.count;
  for (auto& b : prep.blocks)
  {
    b.s = MatrixXr::Identity(b.dim, b.dim);
    b.z = MatrixXr::Identity(b.dim, b.dim);
    nu += b.dim;
  }
  rows.s = VectorXr::Ones(rows.count);
  rows.z = VectorXr::Ones(rows.count);

  GroupedSchur schur;
  schur.init(prep);

  VectorXr fz(p), rd(p), qv(p), nv(p), u1(p), u2(p), dx(p);
  Real mu0 = 0;
  int stall = 0;

  const Real tol = options.tolerance;
  Real best_gap = kInfinity;

  for (int it = 0; it < options.max_iterations; ++it)
  {
    // Residuals of the self-dual system.
    fz.setZero();
    Real hz = 0;
    for (auto& b : prep.blocks)
    {
      b.rp.noalias() = tau * b.constant - b.s;
      for (std::size_t t = 0; t < b.vars.size(); ++t)
      {
        b.rp.noalias() += x[b.vars[t]] * b.coeff[t];
        fz[b.vars[t]] += b.coeff[t].cwiseProduct(b.z).sum();
      }
      hz += b.constant.cwiseProduct(b.z).sum();
    }
    rows.apply(x, rows.rp);
    rows.rp += tau * rows.constant - rows.s;
    rows.apply_adjoint(rows.z, fz);
    hz += rows.constant.dot(rows.z);

    rd = fz + tau * g;
    const Real rg = kappa - g.dot(x) + hz;

    Real gap = rows.s.dot(rows.z);
    Real pr_sq = rows.rp.squaredNorm();
    for (const auto& b : prep.blocks)
    {
      gap += b.s.cwiseProduct(b.z).sum();
      pr_sq += b.rp.squaredNorm();
    }
    const Real mu = (gap + tau * kappa) / Real(nu + 1);
    if (it == 0) mu0 = mu;

    const Real prnorm = std::sqrt(pr_sq);
    const Real drnorm = rd.norm();
    const Real pobj = g.dot(x) / tau;
    const Real dobj = hz / tau;
    const Real pres = prnorm / tau / (1 + enorm);
    const Real dres = drnorm / tau / (1 + gnorm);
    const Real relgap = (gap / (tau * tau)) / std::max({Real(1), std::abs(pobj), std::abs(dobj)});
    best_gap = std::min(best_gap, relgap);

    if (options.verbose)
      std::fprintf(stderr, "sdp %3d mu %9.2e pres %8.1e dres %8.1e gap %8.1e tau %8.1e kap %8.1e\n",
                   it, mu, pres, dres, relgap, tau, kappa);

    if (pres <= tol && dres <= tol && relgap <= tol)
    {
      const VectorXr xhat = x / tau;
      sol.status = SdpStatus::Optimal;
      sol.x = xhat;
      sol.objective = model.objective.dot(xhat);
      sol.duality_gap = relgap;
      sol.primal_residual = violation(model, xhat, false);
      sol.dual_residual = dres;
      sol.iterations = it;
      return sol;
    }
    if (hz < 0 && fz.norm() <= tol * std::max(Real(1), gnorm) * (-hz))
    {
      sol.status = SdpStatus::Infeasible;
      sol.objective = 0;
      sol.duality_gap = relgap;
      sol.dual_residual = fz.norm() / (-hz);
      sol.iterations = it;
      return sol;
    }
    const Real gx = g.dot(x);
    if (gx > 0 && (prnorm + tau * enorm) / gx <= tol * (1 + enorm))
    {
      const VectorXr ray = x / gx;
      sol.status = SdpStatus::Unbounded;
      sol.x = ray;
      sol.objective = model.objective.dot(ray);
      sol.duality_gap = relgap;
      sol.primal_residual = violation(model, ray, true);
      sol.iterations = it;
      return sol;
    }
    if (!std::isfinite(mu) || mu > 1e32 * mu0)
    {
      if (options.verbose) std::fprintf(stderr, "sdp break: mu diverged\n");
      break;
    }

    // Nesterov-Todd scalings.
    bool scaled = true;
    for (auto& b : prep.blocks)
    {
      Eigen::LLT<MatrixXr> ls(b.s), lz(b.z);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success)
      {
        scaled = false;
        break;
      }
      const MatrixXr lsm = ls.matrixL();
      const MatrixXr lzm = lz.matrixL();
      Eigen::BDCSVD<MatrixXr> svd(lzm.transpose() * lsm, Eigen::ComputeFullU | Eigen::ComputeFullV);
      b.lam = svd.singularValues();
      if (b.lam.minCoeff() <= 0)
      {
        scaled = false;
        break;
      }
      const VectorXr ris = b.lam.array().sqrt().inverse();
      b.r.noalias() = lsm * svd.matrixV() * ris.asDiagonal();
      b.rinv.noalias() = ris.asDiagonal() * svd.matrixU().transpose() * lzm.transpose();

      const Eigen::Index nsv = svec_size(b.dim);
      b.hmat.resize(Eigen::Index(b.vars.size()), nsv);
      b.sv.resize(nsv);
      for (std::size_t t = 0; t < b.vars.size(); ++t)
      {
        b.tmp1.noalias() = b.rinv * b.coeff[t];
        b.tmp2.noalias() = b.tmp1 * b.rinv.transpose();
        svec_fill(b.tmp2, b.sv);
        b.hmat.row(Eigen::Index(t)) = b.sv;
      }
      b.tmp1.noalias() = b.rinv * b.constant;
      b.tmp2.noalias() = b.tmp1 * b.rinv.transpose();
      b.h0.resize(nsv);
      svec_fill(b.tmp2, b.h0);
    }
    if (!scaled)
    {
      if (options.verbose) std::fprintf(stderr, "sdp break: NT scaling failed\n");
      break;
    }
    rows.w = (rows.s.array() / rows.z.array()).sqrt();
    rows.lam = (rows.s.array() * rows.z.array()).sqrt();

    // Schur complement and the tau elimination vectors.
    schur.zero();
    nv.setZero();
    for (auto& b : prep.blocks)
    {
      schur.add_outer(b.vars, b.hmat);
      const VectorXr hn = b.hmat * b.h0;
      for (std::size_t t = 0; t < b.vars.size(); ++t) nv[b.vars[t]] += hn[Eigen::Index(t)];
    }
    for (Eigen::Index r = 0; r < rows.count; ++r)
    {
      const Real weight = rows.z[r] / rows.s[r];
      schur.add_row(rows.var.data() + rows.ptr[r], rows.val.data() + rows.ptr[r],
                    rows.ptr[r + 1] - rows.ptr[r], weight);
      for (Eigen::Index t = rows.ptr[r]; t < rows.ptr[r + 1]; ++t)
        nv[rows.var[t]] += rows.val[t] * rows.constant[r] * weight;
    }
    if (!schur.factor())
    {
      if (options.verbose) std::fprintf(stderr, "sdp break: Schur factorization failed\n");
      break;
    }
    // The tau denominator equals kappa/tau + g.H^{-1}g + |(I - P)h0|^2 with P
    // the projector onto the constraint range: every piece is nonnegative.
    // Forming it as (g + nv).H^{-1}(g - nv) + e0q cancels catastrophically
    // once the Schur complement turns ill-conditioned near convergence, so
    // split the solves and accumulate the projection residual as squares.
    const VectorXr ug = schur.solve(g);
    const VectorXr uh = schur.solve(nv);
    u2 = ug - uh;
    Real proj = 0;
    for (const auto& b : prep.blocks)
    {
      VectorXr rb = b.h0;
      for (std::size_t t = 0; t < b.vars.size(); ++t)
        rb -= uh[b.vars[t]] * b.hmat.row(Eigen::Index(t)).transpose();
      proj += rb.squaredNorm();
    }
    for (Eigen::Index r = 0; r < rows.count; ++r)
    {
      const Real weight = rows.z[r] / rows.s[r];
      Real au = 0;
      for (Eigen::Index t = rows.ptr[r]; t < rows.ptr[r + 1]; ++t)
        au += rows.val[t] * uh[rows.var[t]];
      const Real res = rows.constant[r] - au;
      proj += weight * res * res;
    }
    const Real dtau_den = kappa / tau + std::max(Real(0), g.dot(ug)) + proj;
    if (!(dtau_den > 0))
    {
      if (options.verbose) std::fprintf(stderr, "sdp break: dtau denominator nonpositive\n");
      break;
    }

    // One Newton solve of the scaled system; mode 0 is the predictor (full
    // residual targets), mode 1 the corrector-combined step.
    Real sigma = 0, mu_target = 0, corr_tk = 0;
    Real dtau = 0, dkappa = 0;
    auto newton = [&](int mode) {
      const Real eta = mode == 0 ? Real(1) : Real(1) - sigma;
      qv.setZero();
      Real hb = 0;
      for (auto& b : prep.blocks)
      {
        if (mode == 0)
        {
          b.bmat = -b.rp - b.s;
        }
        else
        {
          // D_c = Lyapunov^{-1}(sigma mu I - Lam^2 - corrector)
          const Eigen::Index d = b.dim;
          b.tmp1 = -b.corr;
          b.tmp1.diagonal().array() += mu_target;
          b.tmp1.diagonal() -= b.lam.cwiseProduct(b.lam);
          for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
              b.tmp1(i, j) *= Real(2) / (b.lam[i] + b.lam[j]);
          b.tmp2.noalias() = b.r * b.tmp1;
          b.bmat.noalias() = b.tmp2 * b.r.transpose();
          b.bmat -= eta * b.rp;
          b.tmp2 = b.tmp1;  // keep D_c for the ds recovery below
        }
        b.tmp1.noalias() = b.rinv * b.bmat;
        b.bs.noalias() = b.tmp1 * b.rinv.transpose();
        svec_fill(b.bs, b.sv);
        const VectorXr qb = b.hmat * b.sv;
        for (std::size_t t = 0; t < b.vars.size(); ++t) qv[b.vars[t]] += qb[Eigen::Index(t)];
        hb += b.h0.dot(b.sv);
      }
      if (mode == 0)
        rows.b = -rows.rp - rows.s;
      else
        rows.b = -eta * rows.rp +
                 (mu_target - rows.lam.array().square() - rows.corr.array()).matrix().cwiseQuotient(rows.z);
      for (Eigen::Index r = 0; r < rows.count; ++r)
      {
        const Real weight = rows.z[r] / rows.s[r];
        for (Eigen::Index t = rows.ptr[r]; t < rows.ptr[r + 1]; ++t)
          qv[rows.var[t]] += rows.val[t] * rows.b[r] * weight;
        hb += rows.constant[r] * rows.b[r] * weight;
      }

      u1 = schur.solve(qv + eta * rd);
      const Real rhs_tau = mode == 0 ? -tau * kappa : mu_target - tau * kappa - corr_tk;
      dtau = (eta * rg + rhs_tau / tau + hb - (g + nv).dot(u1)) / dtau_den;
      dx = u1 + dtau * u2;
      dkappa = (rhs_tau - kappa * dtau) / tau;

      for (auto& b : prep.blocks)
      {
        b.tmp1 = b.bmat - dtau * b.constant;
        for (std::size_t t = 0; t < b.vars.size(); ++t) b.tmp1 -= dx[b.vars[t]] * b.coeff[t];
        const MatrixXr c = b.rinv * b.tmp1 * b.rinv.transpose();
        b.dz_s = Real(0.5) * (c + c.transpose());
        if (mode == 0)
        {
          b.ds_s = -b.dz_s;
          b.ds_s.diagonal() -= b.lam;
        }
        else
        {
          b.ds_s = b.tmp2 - b.dz_s;  // tmp2 holds D_c
        }
      }
      rows.apply(dx, rows.dz);
      rows.dz = (rows.b - rows.dz - dtau * rows.constant).cwiseProduct(rows.z).cwiseQuotient(rows.s);
      rows.dzs = rows.w.cwiseProduct(rows.dz);
      if (mode == 0)
        rows.dss = -rows.lam - rows.dzs;
      else
        rows.dss = (mu_target - rows.lam.array().square() - rows.corr.array()).matrix().cwiseQuotient(rows.lam) -
                   rows.dzs;
      rows.ds = rows.w.cwiseProduct(rows.dss);

      Real alpha = kInfinity;
      for (auto& b : prep.blocks)
      {
        alpha = std::min(alpha, step_bound(b.lam, b.ds_s));
        alpha = std::min(alpha, step_bound(b.lam, b.dz_s));
      }
      alpha = std::min(alpha, ratio_bound(rows.s, rows.ds));
      alpha = std::min(alpha, ratio_bound(rows.z, rows.dz));
      if (dtau < 0) alpha = std::min(alpha, -tau / dtau);
      if (dkappa < 0) alpha = std::min(alpha, -kappa / dkappa);
      return alpha;
    };

    // Predictor.
    const Real alpha_aff = std::min(Real(1), newton(0));
    Real gap_aff = (tau + alpha_aff * dtau) * (kappa + alpha_aff * dkappa);
    for (const auto& b : prep.blocks)
    {
      const Real c0 = b.lam.squaredNorm();
      const Real c1 = b.lam.dot(b.ds_s.diagonal() + b.dz_s.diagonal());
      const Real c2 = b.ds_s.cwiseProduct(b.dz_s).sum();
      gap_aff += c0 + alpha_aff * c1 + alpha_aff * alpha_aff * c2;
    }
    {
      const VectorXr ss = rows.lam + alpha_aff * rows.dss;
      const VectorXr zz = rows.lam + alpha_aff * rows.dzs;
      gap_aff += ss.dot(zz);
    }
    Real ratio = gap_aff / (gap + tau * kappa);
    ratio = std::min(std::max(ratio, Real(0)), Real(1));
    sigma = ratio * ratio * ratio;
    mu_target = sigma * mu;
    corr_tk = dtau * dkappa;
    for (auto& b : prep.blocks)
    {
      b.corr.noalias() = Real(0.5) * (b.ds_s * b.dz_s + b.dz_s * b.ds_s);
    }
    rows.corr = rows.dss.cwiseProduct(rows.dzs);

    // Corrector-combined step.
    const Real alpha_max = newton(1);
    const Real alpha = std::min(Real(1), Real(0.99) * alpha_max);
    if (alpha < 1e-7)
    {
      if (++stall >= 3)
      {
        if (options.verbose) std::fprintf(stderr, "sdp break: step length stalled\n");
        break;
      }
    }
    else
    {
      stall = 0;
    }

    x += alpha * dx;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    for (auto& b : prep.blocks)
    {
      b.ds.noalias() = b.r * b.ds_s * b.r.transpose();
      b.dz.noalias() = b.rinv.transpose() * b.dz_s * b.rinv;
      b.s += alpha * b.ds;
      b.z += alpha * b.dz;
      b.s = Real(0.5) * (b.s + b.s.transpose()).eval();
      b.z = Real(0.5) * (b.z + b.z.transpose()).eval();
    }
    rows.s += alpha * rows.ds;
    rows.z += alpha * rows.dz;
    if (!(tau > 0) || !(kappa > 0))
    {
      if (options.verbose) std::fprintf(stderr, "sdp break: tau or kappa nonpositive\n");
      break;
    }
  }

  sol.status = SdpStatus::NumericalFailure;
  if (tau > 0)
  {
    const VectorXr xhat = x / tau;
    sol.x = xhat;
    sol.objective = model.objective.dot(xhat);
    sol.primal_residual = violation(model, xhat, false);
  }
  sol.duality_gap = best_gap;
  sol.iterations = options.max_iterations;
  return sol;
}

const char* to_string(SdpStatus status)
{
  switch (status)
  {
    case SdpStatus::Optimal:
      return "optimal";
    case SdpStatus::Infeasible:
      return "infeasible";
    case SdpStatus::Unbounded:
      return "unbounded";
    case SdpStatus::NumericalFailure:
      return "numerical_failure";
  }
  return "numerical_failure";
}

}  // namespace topoband
