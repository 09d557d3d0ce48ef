// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "topoband/medium.hpp"

namespace topoband
{

// A permittivity field plus the point-group tag it was produced under,
// as stored in a grid file. The text format is:
//
//   topoband-grid 1
//   lattice <square|hexagonal>
//   e1 <x> <y>
//   e2 <x> <y>
//   n <cells per side>
//   bounds <lo> <hi>
//   symmetry <identity|c2|c3|c4|c6>
//   values
//   <n lines of n cell values>
//
// Line i of the value block holds cells (i, 0..n-1): the first lattice
// direction indexes lines, the second indexes values within a line. Values
// are printed with 17 significant digits so write -> read -> write is
// bit-identical for any finite field.
struct GridFile
{
  PermittivityField field;
  RotationGroup symmetry = RotationGroup::Identity;
};

// Render a field to grid-file text / parse grid-file text. Parsing checks
// structure only (header shape, version, counts, numeric syntax, ordered
// bounds) and throws FormatError naming what was expected and what was
// found; whether the values respect the declared bounds is a separate
// question answered by `bounds_violations`.
std::string format_grid(const PermittivityField& field,
                        RotationGroup symmetry = RotationGroup::Identity);
GridFile parse_grid(const std::string& text);

// File variants of the above. Read/write failures throw FormatError naming
// the path.
void write_grid(const std::string& path, const PermittivityField& field,
                RotationGroup symmetry = RotationGroup::Identity);
GridFile read_grid(const std::string& path);

// Every cell whose value falls outside [field.lo, field.hi], described one
// per string ("cell (i, j): value v below lower bound lo"). Empty means the
// field honours its declared bounds.
std::vector<std::string> bounds_violations(const PermittivityField& field);

}  // namespace topoband
