// SPDX-License-Identifier: Apache-2.0

#include "topoband/sdpopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "parallel.hpp"
#include "topoband/errors.hpp"
#include "topoband/topo.hpp"

namespace topoband
{

namespace
{

int sign_of(Real v)
{
  return (v > 0.0) - (v < 0.0);
}

// Orbit representatives of a field that is constant on every orbit; the mean
// is exact in that case and a harmless average otherwise.
VectorXr orbit_means(const PermittivityField& field, const OrbitMap& orbits)
{
  VectorXr means(Eigen::Index(orbits.orbits.size()));
  const auto flat = field.flat();
  for (std::size_t o = 0; o < orbits.orbits.size(); ++o)
  {
    Real sum = 0.0;
    for (int c : orbits.orbits[o])
    {
      sum += flat[c];
    }
    means[Eigen::Index(o)] = sum / Real(orbits.orbits[o].size());
  }
  return means;
}

Eigen::Index orbit_count_for(const VariableLayout& layout, int crystal)
{
  return crystal == 0 ? layout.orbit_count_1 : layout.orbit_count_2;
}

void check_frame(const MatrixXc& frame, const OrbitMap& orbits, int crystal,
                 const VariableLayout& layout)
{
  if (crystal != 0 && crystal != 1)
  {
    throw ValidationError("crystal index must be 0 or 1");
  }
  if (frame.rows() != Eigen::Index(orbits.n) * orbits.n)
  {
    throw ValidationError("frame row count does not match the orbit grid");
  }
  if (Eigen::Index(orbits.orbits.size()) != orbit_count_for(layout, crystal))
  {
    throw ValidationError("orbit count does not match the variable layout");
  }
}

// Shared builder of the projected spectral blocks. `stiffness_sign` is the
// sign of the frame^H K frame coefficient, `mass_sign` the sign of the
// per-orbit mass pieces; the stiffness coefficient attaches to `edge_var`.
LmiBlock projected_block(const MatrixXc& frame, const SparseMatrixXc& K, const OrbitMap& orbits,
                         Real cell_weight, Eigen::Index eps_offset, Eigen::Index edge_var,
                         Real stiffness_sign, Real mass_sign)
{
  const Eigen::Index d = frame.cols();
  LmiBlock block;
  block.constant = MatrixXc::Zero(d, d);
  block.coefficients.reserve(orbits.orbits.size() + 1);

  for (std::size_t o = 0; o < orbits.orbits.size(); ++o)
  {
    MatrixXc gram = MatrixXc::Zero(d, d);
    for (int c : orbits.orbits[o])
    {
      gram.noalias() += frame.row(c).adjoint() * frame.row(c);
    }
    block.coefficients.emplace_back(eps_offset + Eigen::Index(o),
                                    (mass_sign * cell_weight) * gram);
  }

  MatrixXc projected = frame.adjoint() * (K * frame);
  projected = 0.5 * (projected + projected.adjoint()).eval();
  block.coefficients.emplace_back(edge_var, stiffness_sign * projected);
  return block;
}

}  // namespace

Projector make_projector(const BandSolution& bands, int m, int s, int crystal)
{
  if (m < 1 || s < 1)
  {
    throw ValidationError("projector needs at least one band on each side of the gap");
  }
  if (bands.phi.cols() < Eigen::Index(m + s) || bands.lambda.size() < Eigen::Index(m + s))
  {
    throw ValidationError("eigensolve carries fewer bands than the requested split");
  }
  Projector proj;
  proj.kappa = bands.kappa;
  proj.crystal = crystal;
  proj.lambda_lower = bands.lambda.head(m);
  proj.lambda_upper = bands.lambda.segment(m, s);
  proj.phi = bands.phi.leftCols(m);
  proj.psi = bands.phi.middleCols(m, s);
  return proj;
}

Real projector_orthonormality_residual(const Projector& proj, const VectorXr& mass)
{
  if (mass.size() != proj.phi.rows() || proj.psi.rows() != proj.phi.rows())
  {
    throw ValidationError("mass diagonal does not match the frame rows");
  }
  const MatrixXc mphi = mass.asDiagonal() * proj.phi;
  const MatrixXc mpsi = mass.asDiagonal() * proj.psi;
  const Eigen::Index m = proj.phi.cols();
  const Eigen::Index s = proj.psi.cols();
  Real worst = (proj.phi.adjoint() * mphi - MatrixXc::Identity(m, m)).cwiseAbs().maxCoeff();
  worst = std::max(worst,
                   (proj.psi.adjoint() * mpsi - MatrixXc::Identity(s, s)).cwiseAbs().maxCoeff());
  worst = std::max(worst, (proj.phi.adjoint() * mpsi).cwiseAbs().maxCoeff());
  return worst;
}

LmiBlock lower_block(const Projector& proj, const SparseMatrixXc& K, const OrbitMap& orbits,
                     Real cell_weight, const VariableLayout& layout)
{
  check_frame(proj.phi, orbits, proj.crystal, layout);
  // alpha~ (phi^H K phi) - sum_o eps~_o (phi^H W_o phi) <= 0, stored negated.
  return projected_block(proj.phi, K, orbits, cell_weight, layout.eps_offset(proj.crystal),
                         layout.alpha(), -1.0, +1.0);
}

LmiBlock upper_block(const Projector& proj, const SparseMatrixXc& K, const OrbitMap& orbits,
                     Real cell_weight, const VariableLayout& layout)
{
  check_frame(proj.psi, orbits, proj.crystal, layout);
  // beta~ (psi^H K psi) - sum_o eps~_o (psi^H W_o psi) >= 0, stored as is.
  return projected_block(proj.psi, K, orbits, cell_weight, layout.eps_offset(proj.crystal),
                         layout.beta(), +1.0, -1.0);
}

std::vector<SdpRow> topo_rows(const std::vector<ValleyLinearization>& valleys,
                              const OrbitMap& orbits1, const OrbitMap& orbits2,
                              const VectorXr& eps1_tilde_prev, const VectorXr& eps2_tilde_prev,
                              Real tau_p, Real theta_prev, const VariableLayout& layout)
{
  if (!(theta_prev > 0.0))
  {
    throw ValidationError("previous scale must be positive for the valley rows");
  }
  if (eps1_tilde_prev.size() != layout.orbit_count_1 ||
      eps2_tilde_prev.size() != layout.orbit_count_2)
  {
    throw ValidationError("previous scaled fields do not match the variable layout");
  }

  std::vector<SdpRow> rows;
  rows.reserve(valleys.size());
  for (const ValleyLinearization& lin : valleys)
  {
    if (lin.crystal != 0 && lin.crystal != 1)
    {
      throw ValidationError("valley linearization names an unknown crystal");
    }
    const OrbitMap& orbits = lin.crystal == 0 ? orbits1 : orbits2;
    const VectorXr& prev = lin.crystal == 0 ? eps1_tilde_prev : eps2_tilde_prev;
    if (lin.grad.size() != Eigen::Index(orbits.n) * orbits.n)
    {
      throw ValidationError("valley gradient does not match the orbit grid");
    }
    if (std::abs(lin.f_initial) < 1e-10)
    {
      throw DegenerateValley("initial valley curvature too small for a meaningful sign");
    }
    const int s_init = sign_of(lin.f_initial);
    const int s_cur = lin.f_current != 0.0 ? sign_of(lin.f_current) : s_init;

    SdpRow row;
    row.constant = tau_p * std::abs(lin.f_initial);
    const Eigen::Index offset = layout.eps_offset(lin.crystal);
    for (std::size_t o = 0; o < orbits.orbits.size(); ++o)
    {
      Real orbit_grad = 0.0;
      for (int c : orbits.orbits[o])
      {
        orbit_grad += lin.grad[c];
      }
      const Real coeff = Real(s_cur) * orbit_grad / theta_prev;
      if (coeff != 0.0)
      {
        row.coefficients.emplace_back(offset + Eigen::Index(o), coeff);
        row.constant -= coeff * prev[Eigen::Index(o)];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Real tau(int p, Real tau0, Real r)
{
  if (p < 0 || !(tau0 > 0.0) || tau0 > 1.0 || !(r > 0.0) || !(r < 1.0))
  {
    throw ValidationError("margin schedule needs p >= 0, 0 < tau0 <= 1, 0 < r < 1");
  }
  return (1.0 - tau0) * (1.0 - r) * std::pow(r, p);
}

SdpProblem assemble(const AssemblyInput& in)
{
  if (in.eps1 == nullptr || in.eps2 == nullptr || in.orbits1 == nullptr || in.orbits2 == nullptr)
  {
    throw ValidationError("assembly input is missing fields or orbit maps");
  }
  if (in.eps1->n != in.orbits1->n || in.eps2->n != in.orbits2->n)
  {
    throw MismatchedFields("orbit maps do not match the field grids");
  }
  if (in.eps1->lo != in.eps2->lo || in.eps1->hi != in.eps2->hi || in.eps1->n != in.eps2->n)
  {
    throw MismatchedFields("the two crystals must share grid and admissible bounds");
  }
  if (!(in.theta_prev > 0.0))
  {
    throw ValidationError("previous scale must be positive");
  }

  SdpProblem prob;
  prob.layout.orbit_count_1 = Eigen::Index(in.orbits1->orbits.size());
  prob.layout.orbit_count_2 = Eigen::Index(in.orbits2->orbits.size());
  const VariableLayout& layout = prob.layout;

  prob.objective = VectorXr::Zero(layout.count());
  prob.objective[layout.alpha()] = 1.0;
  prob.objective[layout.beta()] = -1.0;

  // Spectral blocks. The stiffness matrix depends on kappa only, so it is
  // rebuilt per distinct Bloch vector and shared between the crystals.
  const Real weight = in.eps1->cell_weight();
  std::vector<std::pair<Vec2, SparseMatrixXc>> cache;
  for (const Projector& proj : in.projectors)
  {
    const SparseMatrixXc* K = nullptr;
    for (const auto& [kappa, mat] : cache)
    {
      if ((kappa - proj.kappa).norm() < 1e-12)
      {
        K = &mat;
        break;
      }
    }
    if (K == nullptr)
    {
      cache.emplace_back(proj.kappa, assemble_bloch(*in.eps1, proj.kappa).K);
      K = &cache.back().second;
    }
    const OrbitMap& orbits = proj.crystal == 0 ? *in.orbits1 : *in.orbits2;
    prob.blocks.push_back(lower_block(proj, *K, orbits, weight, layout));
    prob.blocks.push_back(upper_block(proj, *K, orbits, weight, layout));
  }

  prob.equalities.push_back({-2.0, {{layout.alpha(), 1.0}, {layout.beta(), 1.0}}});
  prob.inequalities.push_back({0.0, {{layout.theta(), 1.0}}});

  const Real lo = in.eps1->lo;
  const Real hi = in.eps1->hi;
  const Real radius = in.trust_radius * (hi - lo) * in.theta_prev;
  const VectorXr prev1 = in.theta_prev * orbit_means(*in.eps1, *in.orbits1);
  const VectorXr prev2 = in.theta_prev * orbit_means(*in.eps2, *in.orbits2);
  for (int crystal = 0; crystal < 2; ++crystal)
  {
    const Eigen::Index offset = layout.eps_offset(crystal);
    const Eigen::Index count = orbit_count_for(layout, crystal);
    const VectorXr& prev = crystal == 0 ? prev1 : prev2;
    for (Eigen::Index o = 0; o < count; ++o)
    {
      const Eigen::Index v = offset + o;
      prob.inequalities.push_back({0.0, {{v, 1.0}, {layout.theta(), -lo}}});
      prob.inequalities.push_back({0.0, {{v, -1.0}, {layout.theta(), hi}}});
      prob.inequalities.push_back({radius + prev[o], {{v, -1.0}}});
      prob.inequalities.push_back({radius - prev[o], {{v, 1.0}}});
    }
  }

  if (!in.valleys.empty())
  {
    const auto rows = topo_rows(in.valleys, *in.orbits1, *in.orbits2, prev1, prev2, in.tau_p,
                                in.theta_prev, layout);
    prob.inequalities.insert(prob.inequalities.end(), rows.begin(), rows.end());
  }
  return prob;
}

VectorXr warm_start(const AssemblyInput& in, Real lambda_lo, Real lambda_hi)
{
  if (in.eps1 == nullptr || in.eps2 == nullptr || in.orbits1 == nullptr || in.orbits2 == nullptr)
  {
    throw ValidationError("assembly input is missing fields or orbit maps");
  }
  if (!(lambda_lo > 0.0) || !(lambda_hi > lambda_lo))
  {
    throw ValidationError("warm start needs 0 < lambda_lo < lambda_hi");
  }
  VariableLayout layout;
  layout.orbit_count_1 = Eigen::Index(in.orbits1->orbits.size());
  layout.orbit_count_2 = Eigen::Index(in.orbits2->orbits.size());

  const Real theta = 2.0 * lambda_lo * lambda_hi / (lambda_lo + lambda_hi);
  VectorXr x = VectorXr::Zero(layout.count());
  x.head(layout.orbit_count_1) = theta * orbit_means(*in.eps1, *in.orbits1);
  x.segment(layout.orbit_count_1, layout.orbit_count_2) =
      theta * orbit_means(*in.eps2, *in.orbits2);
  x[layout.alpha()] = theta / lambda_lo;
  x[layout.beta()] = theta / lambda_hi;
  x[layout.theta()] = theta;
  return x;
}

Real feasibility_residual(const SdpProblem& problem, const VectorXr& x)
{
  if (x.size() != problem.layout.count())
  {
    throw ValidationError("assignment length does not match the variable layout");
  }
  Real worst = 0.0;
  for (const LmiBlock& block : problem.blocks)
  {
    MatrixXc value = block.constant;
    Real scale = block.constant.size() > 0 ? block.constant.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& [v, coeff] : block.coefficients)
    {
      value += x[v] * coeff;
      scale = std::max(scale, std::abs(x[v]) * coeff.cwiseAbs().maxCoeff());
    }
    const Real lambda_min =
        Eigen::SelfAdjointEigenSolver<MatrixXc>(value, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    worst = std::max(worst, std::max(0.0, -lambda_min) / (1.0 + scale));
  }
  auto row_deficit = [&x](const SdpRow& row, bool equality) {
    Real value = row.constant;
    Real scale = std::abs(row.constant);
    for (const auto& [v, coeff] : row.coefficients)
    {
      value += coeff * x[v];
      scale = std::max(scale, std::abs(coeff * x[v]));
    }
    const Real deficit = equality ? std::abs(value) : std::max(0.0, -value);
    return deficit / (1.0 + scale);
  };
  for (const SdpRow& row : problem.equalities)
  {
    worst = std::max(worst, row_deficit(row, true));
  }
  for (const SdpRow& row : problem.inequalities)
  {
    worst = std::max(worst, row_deficit(row, false));
  }
  return worst;
}

namespace
{

struct Elimination
{
  Eigen::Index pivot = -1;
  Real pivot_coeff = 0.0;
  Real constant = 0.0;
  std::vector<std::pair<Eigen::Index, Real>> others;
};

void substitute_row(SdpRow& row, const Elimination& elim)
{
  auto found = std::find_if(row.coefficients.begin(), row.coefficients.end(),
                            [&](const auto& term) { return term.first == elim.pivot; });
  if (found == row.coefficients.end())
  {
    return;
  }
  const Real a = found->second;
  row.coefficients.erase(found);
  row.constant -= a * elim.constant / elim.pivot_coeff;
  for (const auto& [u, b] : elim.others)
  {
    auto other = std::find_if(row.coefficients.begin(), row.coefficients.end(),
                              [&, uu = u](const auto& term) { return term.first == uu; });
    if (other == row.coefficients.end())
    {
      row.coefficients.emplace_back(u, -a * b / elim.pivot_coeff);
    }
    else
    {
      other->second -= a * b / elim.pivot_coeff;
    }
  }
}

void substitute_block(LmiBlock& block, const Elimination& elim)
{
  auto found = std::find_if(block.coefficients.begin(), block.coefficients.end(),
                            [&](const auto& term) { return term.first == elim.pivot; });
  if (found == block.coefficients.end())
  {
    return;
  }
  const MatrixXc coeff = found->second;
  block.coefficients.erase(found);
  block.constant -= (elim.constant / elim.pivot_coeff) * coeff;
  for (const auto& [u, b] : elim.others)
  {
    auto other = std::find_if(block.coefficients.begin(), block.coefficients.end(),
                              [&, uu = u](const auto& term) { return term.first == uu; });
    if (other == block.coefficients.end())
    {
      block.coefficients.emplace_back(u, (-b / elim.pivot_coeff) * coeff);
    }
    else
    {
      other->second -= (b / elim.pivot_coeff) * coeff;
    }
  }
}

}  // namespace

SdpIterate solve(const SdpProblem& problem, const SdpOptions& backend)
{
  const Eigen::Index p = problem.layout.count();
  if (problem.objective.size() != p)
  {
    throw ValidationError("objective length does not match the variable layout");
  }
  auto check_index = [p](Eigen::Index v) {
    if (v < 0 || v >= p)
    {
      throw ValidationError("constraint references a variable outside the layout");
    }
  };
  for (const LmiBlock& block : problem.blocks)
  {
    for (const auto& [v, coeff] : block.coefficients)
    {
      check_index(v);
      (void)coeff;
    }
  }
  for (const auto* rows : {&problem.equalities, &problem.inequalities})
  {
    for (const SdpRow& row : *rows)
    {
      for (const auto& [v, coeff] : row.coefficients)
      {
        check_index(v);
        (void)coeff;
      }
    }
  }

  // Eliminate the equality rows by substitution (the normalization makes
  // beta~ affine in alpha~); ties pick the highest-indexed variable.
  std::vector<LmiBlock> blocks = problem.blocks;
  std::vector<SdpRow> inequalities = problem.inequalities;
  std::vector<SdpRow> equalities = problem.equalities;
  VectorXr objective = problem.objective;
  Real offset = 0.0;
  std::vector<char> eliminated(std::size_t(p), 0);
  std::vector<Elimination> elims;

  SdpIterate out;
  for (std::size_t e = 0; e < equalities.size(); ++e)
  {
    SdpRow row = equalities[e];
    Elimination elim;
    for (const auto& [v, coeff] : row.coefficients)
    {
      if (eliminated[std::size_t(v)] || coeff == 0.0)
      {
        continue;
      }
      if (elim.pivot < 0 || std::abs(coeff) > std::abs(elim.pivot_coeff) ||
          (std::abs(coeff) == std::abs(elim.pivot_coeff) && v > elim.pivot))
      {
        elim.pivot = v;
        elim.pivot_coeff = coeff;
      }
    }
    if (elim.pivot < 0)
    {
      if (std::abs(row.constant) > 1e-12)
      {
        out.status = SdpStatus::Infeasible;
        return out;
      }
      continue;
    }
    elim.constant = row.constant;
    for (const auto& [v, coeff] : row.coefficients)
    {
      if (v != elim.pivot && coeff != 0.0)
      {
        elim.others.emplace_back(v, coeff);
      }
    }
    eliminated[std::size_t(elim.pivot)] = 1;

    if (objective[elim.pivot] != 0.0)
    {
      const Real a = objective[elim.pivot];
      offset -= a * elim.constant / elim.pivot_coeff;
      for (const auto& [u, b] : elim.others)
      {
        objective[u] -= a * b / elim.pivot_coeff;
      }
      objective[elim.pivot] = 0.0;
    }
    for (LmiBlock& block : blocks)
    {
      substitute_block(block, elim);
    }
    for (SdpRow& row2 : inequalities)
    {
      substitute_row(row2, elim);
    }
    for (std::size_t f = e + 1; f < equalities.size(); ++f)
    {
      substitute_row(equalities[f], elim);
    }
    elims.push_back(std::move(elim));
  }

  // Compact the surviving variables and realify the blocks for the backend.
  std::vector<Eigen::Index> to_new(std::size_t(p), -1);
  std::vector<Eigen::Index> to_old;
  for (Eigen::Index v = 0; v < p; ++v)
  {
    if (!eliminated[std::size_t(v)])
    {
      to_new[std::size_t(v)] = Eigen::Index(to_old.size());
      to_old.push_back(v);
    }
  }

  SdpModel model;
  model.variable_count = Eigen::Index(to_old.size());
  model.objective.resize(model.variable_count);
  model.variable_group.resize(std::size_t(model.variable_count), -1);
  for (Eigen::Index v = 0; v < model.variable_count; ++v)
  {
    const Eigen::Index old = to_old[std::size_t(v)];
    model.objective[v] = objective[old];
    if (old < problem.layout.orbit_count_1)
    {
      model.variable_group[std::size_t(v)] = 0;
    }
    else if (old < problem.layout.orbit_count_1 + problem.layout.orbit_count_2)
    {
      model.variable_group[std::size_t(v)] = 1;
    }
  }
  model.blocks.reserve(blocks.size());
  for (const LmiBlock& block : blocks)
  {
    SdpBlock realified;
    realified.constant = real_embedding(block.constant);
    realified.coefficients.reserve(block.coefficients.size());
    for (const auto& [v, coeff] : block.coefficients)
    {
      realified.coefficients.emplace_back(to_new[std::size_t(v)], real_embedding(coeff));
    }
    model.blocks.push_back(std::move(realified));
  }
  model.rows.reserve(inequalities.size());
  for (const SdpRow& row : inequalities)
  {
    SdpRow mapped;
    mapped.constant = row.constant;
    mapped.coefficients.reserve(row.coefficients.size());
    for (const auto& [v, coeff] : row.coefficients)
    {
      mapped.coefficients.emplace_back(to_new[std::size_t(v)], coeff);
    }
    model.rows.push_back(std::move(mapped));
  }

  const SdpSolution sol = solve_sdp(model, backend);
  out.status = sol.status;
  if (sol.status != SdpStatus::Optimal)
  {
    return out;
  }

  VectorXr x = VectorXr::Zero(p);
  for (Eigen::Index v = 0; v < model.variable_count; ++v)
  {
    x[to_old[std::size_t(v)]] = sol.x[v];
  }
  for (auto it = elims.rbegin(); it != elims.rend(); ++it)
  {
    Real value = -it->constant;
    for (const auto& [u, b] : it->others)
    {
      value -= b * x[u];
    }
    x[it->pivot] = value / it->pivot_coeff;
  }
  out.x = x;
  out.objective = sol.objective + offset;
  out.alpha_tilde = x[problem.layout.alpha()];
  out.beta_tilde = x[problem.layout.beta()];
  out.theta = x[problem.layout.theta()];
  out.eps1_tilde = x.head(problem.layout.orbit_count_1);
  out.eps2_tilde = x.segment(problem.layout.orbit_count_1, problem.layout.orbit_count_2);
  return out;
}

std::pair<PermittivityField, PermittivityField> recover(const SdpIterate& iterate,
                                                        const AssemblyInput& in)
{
  if (in.eps1 == nullptr || in.eps2 == nullptr || in.orbits1 == nullptr || in.orbits2 == nullptr)
  {
    throw ValidationError("assembly input is missing fields or orbit maps");
  }
  if (iterate.theta <= 1e-10)
  {
    throw DegenerateScale("scale variable collapsed; cannot recover the fields");
  }
  if (iterate.eps1_tilde.size() != Eigen::Index(in.orbits1->orbits.size()) ||
      iterate.eps2_tilde.size() != Eigen::Index(in.orbits2->orbits.size()))
  {
    throw ValidationError("scaled fields do not match the orbit maps");
  }

  auto expand = [](const PermittivityField& base, const OrbitMap& orbits,
                   const VectorXr& tilde, Real theta) {
    PermittivityField field = base;
    auto flat = field.flat();
    for (std::size_t o = 0; o < orbits.orbits.size(); ++o)
    {
      const Real value = std::clamp(tilde[Eigen::Index(o)] / theta, base.lo, base.hi);
      for (int c : orbits.orbits[o])
      {
        flat[c] = value;
      }
    }
    return field;
  };
  return {expand(*in.eps1, *in.orbits1, iterate.eps1_tilde, iterate.theta),
          expand(*in.eps2, *in.orbits2, iterate.eps2_tilde, iterate.theta)};
}

std::vector<Vec2> constraint_kappas(const Lattice& lattice, int per_segment, int interior)
{
  std::vector<Vec2> kappas;
  auto push_unique = [&kappas](const Vec2& candidate) {
    for (const Vec2& existing : kappas)
    {
      if ((existing - candidate).norm() < 1e-9)
      {
        return;
      }
    }
    kappas.push_back(candidate);
  };

  const KPath path = high_symmetry_path(lattice, per_segment);
  for (std::size_t i = 0; i + 1 < path.points.size(); ++i)  // closing point repeats the start
  {
    push_unique(path.points[i]);
  }
  if (interior >= 2)
  {
    const KGrid grid = k_grid(lattice, interior);
    for (int j = 0; j < interior; ++j)
    {
      for (int i = 0; i < interior; ++i)
      {
        push_unique(grid.point(i, j));
      }
    }
  }
  return kappas;
}

namespace
{

using detail::parallel_for;

// Whether b maps (valley1 + valley2) to integers: the second valley is then
// the time-reversal image of the first modulo the reciprocal lattice, and
// real permittivities force F(valley2) = -F(valley1) exactly.
bool reciprocal_mirror(const Lattice& lattice, const Vec2& valley1, const Vec2& valley2)
{
  const Vec2 fractional = reciprocal(lattice).inverse() * (valley1 + valley2);
  return std::abs(fractional[0] - std::round(fractional[0])) < 1e-9 &&
         std::abs(fractional[1] - std::round(fractional[1])) < 1e-9;
}

struct ValleyState
{
  bool active = false;
  bool mirror = false;
  Real radius = 0.0;
  std::vector<std::pair<int, int>> disk1;
  std::vector<std::pair<int, int>> disk2;
  Real f[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [crystal][valley]
  VectorXr grad[2][2];
  Real f0[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};

std::string format_vector(const VectorXr& values)
{
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < values.size(); ++i)
  {
    if (i > 0)
    {
      os << ';';
    }
    os << values[i];
  }
  return os.str();
}

}  // namespace

OptimizationTrace run_optimization(const PermittivityField& eps1_init,
                                   const PermittivityField& eps2_init,
                                   const OptimizeOptions& opts)
{
  if (eps1_init.n != eps2_init.n || eps1_init.lattice.kind != eps2_init.lattice.kind ||
      (eps1_init.lattice.frame() - eps2_init.lattice.frame()).cwiseAbs().maxCoeff() > 1e-12 ||
      eps1_init.lo != eps2_init.lo || eps1_init.hi != eps2_init.hi)
  {
    throw MismatchedFields("the two crystals must share lattice, grid, and bounds");
  }
  if (opts.m < 1 || opts.surfaces < 1)
  {
    throw ValidationError("band index and surface count must be positive");
  }
  if (opts.m + opts.surfaces > eps1_init.n * eps1_init.n)
  {
    throw ValidationError("requested more bands than grid unknowns");
  }
  if (!(opts.tau0 > 0.0) || opts.tau0 > 1.0 || !(opts.tau_ratio > 0.0) ||
      !(opts.tau_ratio < 1.0))
  {
    throw ValidationError("margin schedule needs 0 < tau0 <= 1 and 0 < ratio < 1");
  }
  if (!(opts.trust_radius > 0.0) || !(opts.tolerance > 0.0) || opts.max_iterations < 1)
  {
    throw ValidationError("trust radius, tolerance, and iteration budget must be positive");
  }
  if (opts.invariant == InvariantMode::Valley && opts.valley_nk < 4)
  {
    throw ValidationError("valley tracking needs a k-grid of at least 4");
  }

  const Lattice lat = eps1_init.lattice;
  const int n = eps1_init.n;
  const int m = opts.m;
  const int s = opts.surfaces;
  const OrbitMap orbits = symmetry_orbits(lat, n, opts.group, opts.symmetry_center);
  PermittivityField eps1 = symmetrize(eps1_init, opts.group, opts.symmetry_center);
  PermittivityField eps2 = symmetrize(eps2_init, opts.group, opts.symmetry_center);

  const std::vector<Vec2> kappas = constraint_kappas(lat, opts.path_per_segment,
                                                     opts.interior_grid);

  auto sweep = [&](const PermittivityField& field) {
    std::vector<BandSolution> sols(kappas.size());
    parallel_for(kappas.size(), opts.threads, [&](std::size_t i) {
      sols[i] = eigensolve(assemble_bloch(field, kappas[i]), m + s, opts.eigs);
    });
    return sols;
  };
  auto gap_of = [&](const std::vector<BandSolution>& a, const std::vector<BandSolution>& b,
                    int iteration) {
    const GapReport gap = gap_report(a, b, m);
    if (!gap.open || gap.lambda_lo <= 0.0)
    {
      std::ostringstream msg;
      msg << "shared gap closed at iteration " << iteration << " (band " << m
          << ", gap " << gap.j_gap << ")";
      throw GapClosed(msg.str());
    }
    return gap;
  };

  std::vector<BandSolution> sols1 = sweep(eps1);
  std::vector<BandSolution> sols2 = sweep(eps2);
  GapReport gap = gap_of(sols1, sols2, 0);

  // Valley curvature and its gradient per crystal. When the second valley is
  // the time-reversal image of the first, its value and gradient are exact
  // negations; this is verified numerically once at setup.
  ValleyState valley;
  valley.active = opts.invariant == InvariantMode::Valley;
  if (valley.active)
  {
    valley.radius =
        opts.valley_radius > 0.0 ? opts.valley_radius : reciprocal(lat).col(0).norm() / 4.0;
    const KGrid vgrid = k_grid(lat, opts.valley_nk);
    valley.disk1 = disk_plaquettes(vgrid, opts.valley1, valley.radius);
    valley.disk2 = disk_plaquettes(vgrid, opts.valley2, valley.radius);
    if (valley.disk1.empty() || valley.disk2.empty())
    {
      throw ValidationError("valley disk captures no plaquettes; increase the k-grid or radius");
    }
    valley.mirror = reciprocal_mirror(lat, opts.valley1, opts.valley2);
  }
  const Real twopi = 2.0 * pi;
  auto eval_valleys = [&] {
    const PermittivityField* fields[2] = {&eps1, &eps2};
    parallel_for(2, std::min(opts.threads, 2), [&](std::size_t i) {
      const RegionCurvature rc =
          region_curvature(*fields[i], opts.valley_nk, 0, m, valley.disk1, opts.eigs);
      valley.f[i][0] = rc.value / twopi;
      valley.grad[i][0] = rc.grad / twopi;
      if (valley.mirror)
      {
        valley.f[i][1] = -valley.f[i][0];
        valley.grad[i][1] = -valley.grad[i][0];
      }
      else
      {
        const RegionCurvature rc2 =
            region_curvature(*fields[i], opts.valley_nk, 0, m, valley.disk2, opts.eigs);
        valley.f[i][1] = rc2.value / twopi;
        valley.grad[i][1] = rc2.grad / twopi;
      }
    });
  };
  if (valley.active)
  {
    eval_valleys();
    if (valley.mirror)
    {
      // Confirm the mirror identity on the actual discretization once.
      const RegionCurvature check =
          region_curvature(eps1, opts.valley_nk, 0, m, valley.disk2, opts.eigs);
      const Real direct = check.value / twopi;
      if (std::abs(direct + valley.f[0][0]) > 1e-6 * std::max(1.0, std::abs(direct)))
      {
        valley.mirror = false;
        valley.f[0][1] = direct;
        valley.grad[0][1] = check.grad / twopi;
        const RegionCurvature other =
            region_curvature(eps2, opts.valley_nk, 0, m, valley.disk2, opts.eigs);
        valley.f[1][1] = other.value / twopi;
        valley.grad[1][1] = other.grad / twopi;
      }
    }
    for (int i = 0; i < 2; ++i)
    {
      for (int j = 0; j < 2; ++j)
      {
        valley.f0[i][j] = valley.f[i][j];
        if (std::abs(valley.f0[i][j]) < 1e-10)
        {
          throw DegenerateValley("initial valley curvature too small for a meaningful sign");
        }
      }
    }
  }

  auto make_record = [&](int iteration, const GapReport& g) {
    TraceRecord rec;
    rec.iteration = iteration;
    rec.lambda_lo = g.lambda_lo;
    rec.lambda_hi = g.lambda_hi;
    rec.j_gap = g.j_gap;
    rec.g_gap = g.g_gap;
    if (valley.active)
    {
      rec.valley_f.resize(4);
      rec.valley_floor.resize(4);
      const Real retained = opts.tau0 + (1.0 - opts.tau0) * std::pow(opts.tau_ratio, iteration);
      for (int i = 0; i < 2; ++i)
      {
        for (int j = 0; j < 2; ++j)
        {
          rec.valley_f[2 * i + j] = valley.f[i][j];
          rec.valley_floor[2 * i + j] = std::abs(valley.f0[i][j]) * retained;
        }
      }
    }
    rec.eps1 = eps1;
    rec.eps2 = eps2;
    return rec;
  };
  auto stream = [&](const TraceRecord& rec) {
    if (opts.log == nullptr)
    {
      return;
    }
    std::ostream& os = *opts.log;
    os << std::setprecision(17) << "iter=" << rec.iteration << " lambda_lo=" << rec.lambda_lo
       << " lambda_hi=" << rec.lambda_hi << " j_gap=" << rec.j_gap << " g_gap=" << rec.g_gap
       << " status=" << (rec.iteration == 0 ? "initial" : to_string(rec.status))
       << " objective=" << rec.objective << " theta=" << rec.theta
       << " alpha=" << rec.alpha_tilde << " beta=" << rec.beta_tilde
       << " warm_residual=" << rec.warm_start_residual
       << " solution_residual=" << rec.solution_residual << " trust=" << rec.trust_radius
       << " delta_eps1=" << rec.delta_eps1 << " delta_eps2=" << rec.delta_eps2;
    if (valley.active)
    {
      os << " valley_f=" << format_vector(rec.valley_f)
         << " valley_floor=" << format_vector(rec.valley_floor);
    }
    os << '\n';
    os.flush();
  };

  OptimizationTrace trace;
  trace.initial = make_record(0, gap);
  stream(trace.initial);

  const Real convergence = opts.tolerance * (eps1.hi - eps1.lo);
  for (int p = 0; p < opts.max_iterations; ++p)
  {
    AssemblyInput in;
    in.eps1 = &eps1;
    in.eps2 = &eps2;
    in.orbits1 = &orbits;
    in.orbits2 = &orbits;
    in.projectors.reserve(2 * kappas.size());
    for (std::size_t k = 0; k < kappas.size(); ++k)
    {
      in.projectors.push_back(make_projector(sols1[k], m, s, 0));
      in.projectors.push_back(make_projector(sols2[k], m, s, 1));
    }
    if (valley.active)
    {
      const Vec2 points[2] = {opts.valley1, opts.valley2};
      for (int i = 0; i < 2; ++i)
      {
        for (int j = 0; j < 2; ++j)
        {
          in.valleys.push_back(
              {i, points[j], valley.f[i][j], valley.f0[i][j], valley.grad[i][j]});
        }
      }
    }
    in.theta_prev = 2.0 * gap.lambda_lo * gap.lambda_hi / (gap.lambda_lo + gap.lambda_hi);
    in.tau_p = valley.active ? tau(p, opts.tau0, opts.tau_ratio) : 0.0;

    SdpIterate iterate;
    Real warm_residual = 0.0;
    Real solution_residual = 0.0;
    Real used_radius = opts.trust_radius;
    bool accepted = false;
    for (int attempt = 0; attempt <= 3; ++attempt)
    {
      in.trust_radius = used_radius;
      const SdpProblem prob = assemble(in);
      warm_residual = feasibility_residual(prob, warm_start(in, gap.lambda_lo, gap.lambda_hi));
      iterate = solve(prob, opts.backend);
      if (iterate.status == SdpStatus::Optimal)
      {
        solution_residual = feasibility_residual(prob, iterate.x);
        if (solution_residual <= 1e-7)
        {
          accepted = true;
          break;
        }
      }
      used_radius *= 0.5;
    }
    if (!accepted)
    {
      trace.termination = "solver_failure";
      if (opts.log != nullptr)
      {
        *opts.log << "iter=" << (p + 1) << " status=" << to_string(iterate.status)
                  << " termination=solver_failure\n";
        opts.log->flush();
      }
      return trace;
    }

    const auto [next1, next2] = recover(iterate, in);
    PermittivityField new1 = symmetrize(next1, opts.group, opts.symmetry_center);
    PermittivityField new2 = symmetrize(next2, opts.group, opts.symmetry_center);
    const Real delta1 = (new1.values - eps1.values).norm() / Real(n);
    const Real delta2 = (new2.values - eps2.values).norm() / Real(n);
    eps1 = std::move(new1);
    eps2 = std::move(new2);

    sols1 = sweep(eps1);
    sols2 = sweep(eps2);
    gap = gap_of(sols1, sols2, p + 1);
    if (valley.active)
    {
      eval_valleys();
    }

    TraceRecord rec = make_record(p + 1, gap);
    rec.status = iterate.status;
    rec.objective = iterate.objective;
    rec.theta = iterate.theta;
    rec.alpha_tilde = iterate.alpha_tilde;
    rec.beta_tilde = iterate.beta_tilde;
    rec.warm_start_residual = warm_residual;
    rec.solution_residual = solution_residual;
    rec.trust_radius = used_radius;
    rec.delta_eps1 = delta1;
    rec.delta_eps2 = delta2;
    trace.records.push_back(rec);
    stream(rec);

    if (delta1 < convergence && delta2 < convergence)
    {
      trace.converged = true;
      trace.termination = "converged";
      return trace;
    }
  }
  trace.termination = "max_iterations";
  return trace;
}

}  // namespace topoband
