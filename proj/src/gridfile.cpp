// SPDX-License-Identifier: Apache-2.0

#include "topoband/gridfile.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "topoband/errors.hpp"

namespace topoband
{

namespace
{

constexpr const char* grid_tag = "topoband-grid";
constexpr const char* grid_version = "1";

std::string real_text(Real value)
{
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

// Reads whitespace-separated tokens with truncation-aware diagnostics.
struct TokenReader
{
  std::istringstream in;

  explicit TokenReader(const std::string& text) : in(text) {}

  std::string need(const char* what)
  {
    std::string token;
    if (!(in >> token))
    {
      throw FormatError(std::string("grid file truncated: expected ") + what);
    }
    return token;
  }

  void expect_key(const char* key)
  {
    const std::string token = need(key);
    if (token != key)
    {
      throw FormatError(std::string("grid file: expected '") + key + "', found '" + token + "'");
    }
  }

  Real need_real(const char* what)
  {
    const std::string token = need(what);
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size())
    {
      throw FormatError(std::string("grid file: ") + what + " is not a number: '" + token + "'");
    }
    return Real(value);
  }

  int need_int(const char* what)
  {
    const std::string token = need(what);
    char* end = nullptr;
    const long value = std::strtol(token.c_str(), &end, 10);
    if (end != token.c_str() + token.size())
    {
      throw FormatError(std::string("grid file: ") + what + " is not an integer: '" + token +
                        "'");
    }
    return int(value);
  }
};

}  // namespace

std::string format_grid(const PermittivityField& field, RotationGroup symmetry)
{
  std::ostringstream out;
  out << grid_tag << ' ' << grid_version << '\n';
  out << "lattice " << to_string(field.lattice.kind) << '\n';
  out << "e1 " << real_text(field.lattice.e1.x()) << ' ' << real_text(field.lattice.e1.y())
      << '\n';
  out << "e2 " << real_text(field.lattice.e2.x()) << ' ' << real_text(field.lattice.e2.y())
      << '\n';
  out << "n " << field.n << '\n';
  out << "bounds " << real_text(field.lo) << ' ' << real_text(field.hi) << '\n';
  out << "symmetry " << to_string(symmetry) << '\n';
  out << "values\n";
  for (int i = 0; i < field.n; ++i)
  {
    for (int j = 0; j < field.n; ++j)
    {
      out << (j == 0 ? "" : " ") << real_text(field.values(i, j));
    }
    out << '\n';
  }
  return out.str();
}

GridFile parse_grid(const std::string& text)
{
  TokenReader reader(text);

  const std::string tag = reader.need("format tag");
  if (tag != grid_tag)
  {
    throw FormatError(std::string("grid file: expected format tag '") + grid_tag + "', found '" +
                      tag + "'");
  }
  const std::string version = reader.need("format version");
  if (version != grid_version)
  {
    throw FormatError(std::string("grid file: expected format version ") + grid_version +
                      ", found " + version);
  }

  reader.expect_key("lattice");
  const std::string kind_name = reader.need("lattice kind");
  LatticeKind kind;
  try
  {
    kind = lattice_kind_from_string(kind_name);
  }
  catch (const UnsupportedKind& e)
  {
    throw FormatError(std::string("grid file: ") + e.what());
  }
  const Lattice lattice = kind == LatticeKind::Square ? Lattice::square() : Lattice::hexagonal();

  reader.expect_key("e1");
  const Real e1x = reader.need_real("e1 x component");
  const Real e1y = reader.need_real("e1 y component");
  reader.expect_key("e2");
  const Real e2x = reader.need_real("e2 x component");
  const Real e2y = reader.need_real("e2 y component");
  const Real frame_error =
      std::abs(e1x - lattice.e1.x()) + std::abs(e1y - lattice.e1.y()) +
      std::abs(e2x - lattice.e2.x()) + std::abs(e2y - lattice.e2.y());
  if (frame_error > 1e-12)
  {
    throw FormatError("grid file: lattice vectors do not match the declared kind '" + kind_name +
                      "'");
  }

  reader.expect_key("n");
  const int n = reader.need_int("grid size");
  if (n < 1)
  {
    throw FormatError("grid file: grid size must be positive, found " + std::to_string(n));
  }

  reader.expect_key("bounds");
  const Real lo = reader.need_real("lower bound");
  const Real hi = reader.need_real("upper bound");
  if (!(lo <= hi))
  {
    throw FormatError("grid file: bounds are not ordered (" + real_text(lo) + " > " +
                      real_text(hi) + ")");
  }

  reader.expect_key("symmetry");
  const std::string group_name = reader.need("symmetry group");
  RotationGroup symmetry;
  try
  {
    symmetry = rotation_group_from_string(group_name);
  }
  catch (const UnsupportedKind& e)
  {
    throw FormatError(std::string("grid file: ") + e.what());
  }

  reader.expect_key("values");

  GridFile grid;
  grid.field.lattice = lattice;
  grid.field.n = n;
  grid.field.lo = lo;
  grid.field.hi = hi;
  grid.field.values.resize(n, n);
  grid.symmetry = symmetry;
  for (int i = 0; i < n; ++i)
  {
    for (int j = 0; j < n; ++j)
    {
      grid.field.values(i, j) = reader.need_real("cell value");
    }
  }

  std::string trailing;
  if (reader.in >> trailing)
  {
    throw FormatError("grid file: trailing data after the value block: '" + trailing + "'");
  }
  return grid;
}

void write_grid(const std::string& path, const PermittivityField& field, RotationGroup symmetry)
{
  std::ofstream out(path);
  if (!out)
  {
    throw FormatError("cannot open grid file for writing: " + path);
  }
  out << format_grid(field, symmetry);
  out.flush();
  if (!out)
  {
    throw FormatError("failed while writing grid file: " + path);
  }
}

GridFile read_grid(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw FormatError("cannot open grid file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try
  {
    return parse_grid(buffer.str());
  }
  catch (const FormatError& e)
  {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<std::string> bounds_violations(const PermittivityField& field)
{
  std::vector<std::string> violations;
  char buffer[128];
  for (int i = 0; i < field.n; ++i)
  {
    for (int j = 0; j < field.n; ++j)
    {
      const Real value = field.values(i, j);
      if (value < field.lo)
      {
        std::snprintf(buffer, sizeof(buffer), "cell (%d, %d): value %.12g below lower bound %.12g",
                      i, j, double(value), double(field.lo));
        violations.emplace_back(buffer);
      }
      else if (value > field.hi)
      {
        std::snprintf(buffer, sizeof(buffer), "cell (%d, %d): value %.12g above upper bound %.12g",
                      i, j, double(value), double(field.hi));
        violations.emplace_back(buffer);
      }
    }
  }
  return violations;
}

}  // namespace topoband
