// SPDX-License-Identifier: Apache-2.0

#ifndef TOPOBAND_ERRORS_HPP
#define TOPOBAND_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace topoband
{

// Base for all library errors so callers can catch one type at the boundary.
struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

// Lattice basis vectors are (numerically) parallel.
struct DegenerateLattice : Error
{
  using Error::Error;
};

// A requested enum-like option (lattice kind, symmetry group, ...) is not supported.
struct UnsupportedKind : Error
{
  using Error::Error;
};

// A shape primitive does not fit in the fundamental cell or is malformed.
struct ShapeOutOfRange : Error
{
  using Error::Error;
};

// Iterative eigensolver failed to reach the requested residual.
struct ConvergenceFailure : Error
{
  using Error::Error;
};

// A Bloch overlap (or overlap determinant) is too close to zero to take a phase.
struct SingularOverlap : Error
{
  using Error::Error;
};

// A curvature sum failed to round cleanly to an integer.
struct QuantizationFailure : Error
{
  using Error::Error;
};

// A regularized adjoint system could not be solved to tolerance.
struct SingularSystem : Error
{
  using Error::Error;
};

// A tracked curvature value is too small for its sign to be meaningful.
struct DegenerateValley : Error
{
  using Error::Error;
};

// The scale variable of a fractional-program iterate collapsed to zero.
struct DegenerateScale : Error
{
  using Error::Error;
};

// The shared spectral gap closed during optimization.
struct GapClosed : Error
{
  using Error::Error;
};

// Two fields that must share lattice/grid/bounds do not.
struct MismatchedFields : Error
{
  using Error::Error;
};

// Text input could not be parsed (carries line information in the message).
struct ParseError : Error
{
  using Error::Error;
};

// Parsed input violates a semantic constraint; message lists all violations.
struct ValidationError : Error
{
  using Error::Error;
};

// A structured file has a bad header, shape, or value.
struct FormatError : Error
{
  using Error::Error;
};

}  // namespace topoband

#endif
