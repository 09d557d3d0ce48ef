// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "topoband/bloch.hpp"
#include "topoband/edge.hpp"
#include "topoband/sdpopt.hpp"
#include "topoband/topo.hpp"

namespace topoband
{

// Delimited-text exports. Every table is tab-separated with one header line
// naming columns and units; values are printed with 12 significant digits.
// Lengths are in lattice constants a, frequencies in c/a (c the vacuum
// speed), eigenvalues in (c/a)^2, band indices 1-based.

// (crystal, kx, ky, band, lambda, omega): one row per crystal, Bloch
// vector, and band. `crystals` holds one sweep per crystal, all over the
// same Bloch set.
std::string bands_table(const std::vector<const std::vector<BandSolution>*>& crystals);

// (kx, ky, F): one row per plaquette, (kx, ky) its center, F the Berry
// curvature as phase per area.
std::string curvature_table(const CurvatureField& field);

// (kappa1, phase_1..phase_m): one row per sweep parameter, phases in
// radians sorted ascending.
std::string wilson_table(const WilsonSpectrum& spectrum);

// (kpar, lambda, omega, localization, is_edge): one row per in-window mode
// of every parallel-momentum sample; samples with no in-window modes
// contribute no rows.
std::string dispersion_table(const EdgeDispersion& dispersion);

// (kpar, band, lo, hi): bulk projection intervals of one glued medium
// (crystal 0 or 1).
std::string projection_table(const EdgeDispersion& dispersion, int crystal);

// One row per accepted state of an optimization run (iteration 0 is the
// initial pair): gap edges, gap-to-midgap ratios, solver status and
// residuals, RMS field steps, and the tracked valley curvatures when the
// run is topology-constrained.
std::string trace_table(const OptimizationTrace& trace);

}  // namespace topoband
