// SPDX-License-Identifier: Apache-2.0

#include "topoband/tables.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "topoband/errors.hpp"
#include "topoband/sdp.hpp"

namespace topoband
{

namespace
{

std::string cell(Real value)
{
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", double(value));
  return buffer;
}

}  // namespace

std::string bands_table(const std::vector<const std::vector<BandSolution>*>& crystals)
{
  std::ostringstream out;
  out << "crystal\tkx[1/a]\tky[1/a]\tband\tlambda[(c/a)^2]\tomega[c/a]\n";
  for (std::size_t c = 0; c < crystals.size(); ++c)
  {
    for (const BandSolution& solution : *crystals[c])
    {
      for (Eigen::Index band = 0; band < solution.lambda.size(); ++band)
      {
        const Real lambda = solution.lambda[band];
        out << (c + 1) << '\t' << cell(solution.kappa.x()) << '\t' << cell(solution.kappa.y())
            << '\t' << (band + 1) << '\t' << cell(lambda) << '\t'
            << cell(std::sqrt(std::max(lambda, Real(0)))) << '\n';
      }
    }
  }
  return out.str();
}

std::string curvature_table(const CurvatureField& field)
{
  std::ostringstream out;
  out << "kx[1/a]\tky[1/a]\tF[a^2]\n";
  for (int i = 0; i < field.grid.nk; ++i)
  {
    for (int j = 0; j < field.grid.nk; ++j)
    {
      const Vec2 center = field.grid.plaquette_center(i, j);
      out << cell(center.x()) << '\t' << cell(center.y()) << '\t'
          << cell(field.phase(i, j) / field.area) << '\n';
    }
  }
  return out.str();
}

std::string wilson_table(const WilsonSpectrum& spectrum)
{
  std::ostringstream out;
  out << "kappa1[b1]";
  for (Eigen::Index band = 0; band < spectrum.phases.cols(); ++band)
  {
    out << "\tphase_" << (band + 1) << "[rad]";
  }
  out << '\n';
  for (Eigen::Index row = 0; row < spectrum.t1.size(); ++row)
  {
    out << cell(spectrum.t1[row]);
    for (Eigen::Index band = 0; band < spectrum.phases.cols(); ++band)
    {
      out << '\t' << cell(spectrum.phases(row, band));
    }
    out << '\n';
  }
  return out.str();
}

std::string dispersion_table(const EdgeDispersion& dispersion)
{
  std::ostringstream out;
  out << "kpar[rad]\tlambda[(c/a)^2]\tomega[c/a]\tlocalization[1]\tis_edge[0/1]\n";
  for (const EdgeSample& sample : dispersion.samples)
  {
    for (Eigen::Index mode = 0; mode < sample.lambda.size(); ++mode)
    {
      const Real lambda = sample.lambda[mode];
      out << cell(sample.kpar) << '\t' << cell(lambda) << '\t'
          << cell(std::sqrt(std::max(lambda, Real(0)))) << '\t'
          << cell(sample.localization[mode]) << '\t'
          << (sample.is_edge[std::size_t(mode)] ? '1' : '0') << '\n';
    }
  }
  return out.str();
}

std::string projection_table(const EdgeDispersion& dispersion, int crystal)
{
  if (crystal != 0 && crystal != 1)
  {
    throw ValidationError("projection table crystal index must be 0 or 1");
  }
  const auto& bulk = crystal == 0 ? dispersion.bulk1 : dispersion.bulk2;
  if (!bulk.empty() && bulk.size() != dispersion.samples.size())
  {
    throw MismatchedFields("bulk projection does not cover the dispersion samples");
  }
  std::ostringstream out;
  out << "kpar[rad]\tband\tlo[(c/a)^2]\thi[(c/a)^2]\n";
  for (std::size_t s = 0; s < bulk.size(); ++s)
  {
    for (std::size_t band = 0; band < bulk[s].size(); ++band)
    {
      out << cell(dispersion.samples[s].kpar) << '\t' << (band + 1) << '\t'
          << cell(bulk[s][band].first) << '\t' << cell(bulk[s][band].second) << '\n';
    }
  }
  return out.str();
}

std::string trace_table(const OptimizationTrace& trace)
{
  const Eigen::Index valleys = trace.initial.valley_f.size() > 0
                                   ? trace.initial.valley_f.size()
                                   : (trace.records.empty() ? 0 : trace.records[0].valley_f.size());
  std::ostringstream out;
  out << "iteration\tlambda_lo[(c/a)^2]\tlambda_hi[(c/a)^2]\tj_gap[1]\tg_gap[1]\tstatus"
         "\ttheta[1]\twarm_residual[1]\tsolution_residual[1]\ttrust_radius[1]"
         "\tdelta_eps1[rms]\tdelta_eps2[rms]";
  for (Eigen::Index v = 0; v < valleys; ++v)
  {
    out << "\tvalley_f" << (v + 1) << "[a^2]\tvalley_floor" << (v + 1) << "[a^2]";
  }
  out << '\n';
  auto row = [&](const TraceRecord& record) {
    out << record.iteration << '\t' << cell(record.lambda_lo) << '\t' << cell(record.lambda_hi)
        << '\t' << cell(record.j_gap) << '\t' << cell(record.g_gap) << '\t'
        << to_string(record.status) << '\t' << cell(record.theta) << '\t'
        << cell(record.warm_start_residual) << '\t' << cell(record.solution_residual) << '\t'
        << cell(record.trust_radius) << '\t' << cell(record.delta_eps1) << '\t'
        << cell(record.delta_eps2);
    for (Eigen::Index v = 0; v < valleys; ++v)
    {
      out << '\t' << (v < record.valley_f.size() ? cell(record.valley_f[v]) : "-") << '\t'
          << (v < record.valley_floor.size() ? cell(record.valley_floor[v]) : "-");
    }
    out << '\n';
  };
  row(trace.initial);
  for (const TraceRecord& record : trace.records)
  {
    row(record);
  }
  return out.str();
}

}  // namespace topoband
