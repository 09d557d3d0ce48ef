// SPDX-License-Identifier: Apache-2.0

#include "topoband/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "topoband/errors.hpp"
#include "topoband/gridfile.hpp"

namespace topoband
{

namespace
{

std::string trim(const std::string& s)
{
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos)
  {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> tokens(const std::string& value)
{
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string token;
  while (in >> token)
  {
    out.push_back(token);
  }
  return out;
}

// Structural diagnostics carry the config name and 1-based line number.
struct Diag
{
  const std::string& name;
  int line = 0;

  [[noreturn]] void fail(const std::string& message) const
  {
    throw ParseError(name + ", line " + std::to_string(line) + ": " + message);
  }
};

Real parse_real(const std::string& token, const char* what, const Diag& diag)
{
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size())
  {
    diag.fail(std::string(what) + " is not a number: '" + token + "'");
  }
  return Real(value);
}

long parse_integer(const std::string& token, const char* what, const Diag& diag)
{
  char* end = nullptr;
  const long value = std::strtol(token.c_str(), &end, 10);
  if (token.empty() || end != token.c_str() + token.size())
  {
    diag.fail(std::string(what) + " is not an integer: '" + token + "'");
  }
  return value;
}

Vec2 parse_vec2(const std::string& value, const char* what, const Diag& diag)
{
  const auto parts = tokens(value);
  if (parts.size() != 2)
  {
    diag.fail(std::string(what) + " needs exactly two numbers, found '" + value + "'");
  }
  return Vec2(parse_real(parts[0], what, diag), parse_real(parts[1], what, diag));
}

TriangleCorner corner_from_name(const std::string& name, const Diag& diag)
{
  if (name == "lower_left")
  {
    return TriangleCorner::LowerLeft;
  }
  if (name == "lower_right")
  {
    return TriangleCorner::LowerRight;
  }
  if (name == "upper_left")
  {
    return TriangleCorner::UpperLeft;
  }
  if (name == "upper_right")
  {
    return TriangleCorner::UpperRight;
  }
  diag.fail("unknown triangle corner '" + name +
            "' (expected lower_left, lower_right, upper_left, or upper_right)");
}

ShapeSpec parse_shape(const std::string& value, const Diag& diag)
{
  const auto parts = tokens(value);
  if (parts.empty())
  {
    diag.fail("shape needs a kind (disk, triangle, or polygon)");
  }
  const std::string& kind = parts[0];
  if (kind == "disk")
  {
    if (parts.size() != 5)
    {
      diag.fail("disk shape needs 'disk <cx> <cy> <diameter> <fill>'");
    }
    const Vec2 center(parse_real(parts[1], "disk center", diag),
                      parse_real(parts[2], "disk center", diag));
    return ShapeSpec::disk(center, parse_real(parts[3], "disk diameter", diag),
                           parse_real(parts[4], "disk fill", diag));
  }
  if (kind == "triangle")
  {
    if (parts.size() != 6)
    {
      diag.fail("triangle shape needs 'triangle <cx> <cy> <edge> <corner> <fill>'");
    }
    const Vec2 corner(parse_real(parts[1], "triangle corner", diag),
                      parse_real(parts[2], "triangle corner", diag));
    return ShapeSpec::triangle(corner, parse_real(parts[3], "triangle edge", diag),
                               corner_from_name(parts[4], diag),
                               parse_real(parts[5], "triangle fill", diag));
  }
  if (kind == "polygon")
  {
    if (parts.size() < 8 || parts.size() % 2 != 0)
    {
      diag.fail("polygon shape needs 'polygon <x1> <y1> ... <xk> <yk> <fill>' with k >= 3");
    }
    std::vector<Vec2> vertices;
    for (std::size_t p = 1; p + 2 < parts.size(); p += 2)
    {
      vertices.emplace_back(parse_real(parts[p], "polygon vertex", diag),
                            parse_real(parts[p + 1], "polygon vertex", diag));
    }
    return ShapeSpec::polygon(std::move(vertices),
                              parse_real(parts.back(), "polygon fill", diag));
  }
  diag.fail("unknown shape kind '" + kind + "' (expected disk, triangle, or polygon)");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& name)
{
  RunConfig config;
  LatticeKind kind = LatticeKind::Square;
  bool has_lattice = false;
  bool has_n = false;
  bool has_m = false;
  bool has_eps_hi = false;
  bool has_valley1 = false;
  bool has_valley2 = false;

  std::set<std::string> seen;  // "<section>/<key>" for repeat detection
  std::string section;         // "", "crystal1", "crystal2"

  std::istringstream in(text);
  std::string raw;
  int line_number = 0;
  while (std::getline(in, raw))
  {
    ++line_number;
    const Diag diag{name, line_number};
    const auto comment = raw.find('#');
    if (comment != std::string::npos)
    {
      raw.erase(comment);
    }
    const std::string line = trim(raw);
    if (line.empty())
    {
      continue;
    }

    if (line.front() == '[')
    {
      if (line.back() != ']')
      {
        diag.fail("unterminated section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "crystal1" && section != "crystal2")
      {
        diag.fail("unknown section '[" + section + "]' (expected [crystal1] or [crystal2])");
      }
      continue;
    }

    const auto equals = line.find('=');
    if (equals == std::string::npos)
    {
      diag.fail("expected 'key = value', found '" + line + "'");
    }
    const std::string key = trim(line.substr(0, equals));
    const std::string value = trim(line.substr(equals + 1));
    if (key.empty())
    {
      diag.fail("missing key before '='");
    }
    if (value.empty())
    {
      diag.fail("missing value for key '" + key + "'");
    }
    if (key != "shape" && !seen.insert(section + "/" + key).second)
    {
      diag.fail("repeated key '" + key + "'");
    }

    if (!section.empty())
    {
      CrystalSource& crystal = section == "crystal1" ? config.crystal1 : config.crystal2;
      if (key == "grid")
      {
        crystal.grid_path = value;
      }
      else if (key == "background")
      {
        crystal.background = parse_real(value, "background", diag);
        crystal.has_geometry = true;
      }
      else if (key == "shape")
      {
        crystal.shapes.push_back(parse_shape(value, diag));
        crystal.has_geometry = true;
      }
      else
      {
        diag.fail("unknown key '" + key + "' in section [" + section + "]");
      }
      continue;
    }

    if (key == "lattice")
    {
      try
      {
        kind = lattice_kind_from_string(value);
      }
      catch (const UnsupportedKind& e)
      {
        diag.fail(e.what());
      }
      has_lattice = true;
    }
    else if (key == "n")
    {
      config.n = int(parse_integer(value, "n", diag));
      has_n = true;
    }
    else if (key == "m")
    {
      config.optimize.m = int(parse_integer(value, "m", diag));
      has_m = true;
    }
    else if (key == "eps_lo")
    {
      config.eps_lo = parse_real(value, "eps_lo", diag);
    }
    else if (key == "eps_hi")
    {
      config.eps_hi = parse_real(value, "eps_hi", diag);
      has_eps_hi = true;
    }
    else if (key == "nk")
    {
      config.nk = int(parse_integer(value, "nk", diag));
    }
    else if (key == "path_per_segment")
    {
      config.optimize.path_per_segment = int(parse_integer(value, "path_per_segment", diag));
    }
    else if (key == "interior_grid")
    {
      config.optimize.interior_grid = int(parse_integer(value, "interior_grid", diag));
    }
    else if (key == "surfaces")
    {
      config.optimize.surfaces = int(parse_integer(value, "surfaces", diag));
    }
    else if (key == "symmetry")
    {
      try
      {
        config.optimize.group = rotation_group_from_string(value);
      }
      catch (const UnsupportedKind& e)
      {
        diag.fail(e.what());
      }
    }
    else if (key == "symmetry_center")
    {
      config.optimize.symmetry_center = parse_vec2(value, "symmetry_center", diag);
    }
    else if (key == "invariant")
    {
      if (value == "none")
      {
        config.optimize.invariant = InvariantMode::None;
      }
      else if (value == "valley")
      {
        config.optimize.invariant = InvariantMode::Valley;
      }
      else
      {
        diag.fail("unknown invariant '" + value + "' (expected none or valley)");
      }
    }
    else if (key == "valley1")
    {
      config.optimize.valley1 = parse_vec2(value, "valley1", diag);
      has_valley1 = true;
    }
    else if (key == "valley2")
    {
      config.optimize.valley2 = parse_vec2(value, "valley2", diag);
      has_valley2 = true;
    }
    else if (key == "valley_radius")
    {
      config.optimize.valley_radius = parse_real(value, "valley_radius", diag);
    }
    else if (key == "valley_nk")
    {
      config.optimize.valley_nk = int(parse_integer(value, "valley_nk", diag));
    }
    else if (key == "tau0")
    {
      config.optimize.tau0 = parse_real(value, "tau0", diag);
    }
    else if (key == "tau_ratio")
    {
      config.optimize.tau_ratio = parse_real(value, "tau_ratio", diag);
    }
    else if (key == "trust_radius")
    {
      config.optimize.trust_radius = parse_real(value, "trust_radius", diag);
    }
    else if (key == "tolerance")
    {
      config.optimize.tolerance = parse_real(value, "tolerance", diag);
    }
    else if (key == "max_iterations")
    {
      config.optimize.max_iterations = int(parse_integer(value, "max_iterations", diag));
    }
    else if (key == "sdp_tolerance")
    {
      config.optimize.backend.tolerance = parse_real(value, "sdp_tolerance", diag);
    }
    else if (key == "eigs_tolerance")
    {
      config.optimize.eigs.tol = parse_real(value, "eigs_tolerance", diag);
    }
    else if (key == "seed")
    {
      const long seed = parse_integer(value, "seed", diag);
      if (seed < 0)
      {
        diag.fail("seed must be non-negative");
      }
      config.seed = unsigned(seed);
    }
    else if (key == "edge_periods")
    {
      config.edge_periods = int(parse_integer(value, "edge_periods", diag));
    }
    else if (key == "edge_shift")
    {
      config.edge_shift = parse_real(value, "edge_shift", diag);
    }
    else if (key == "edge_samples")
    {
      config.edge_samples = int(parse_integer(value, "edge_samples", diag));
    }
    else if (key == "edge_width")
    {
      config.edge_width = int(parse_integer(value, "edge_width", diag));
    }
    else if (key == "out")
    {
      config.out = value;
    }
    else
    {
      diag.fail("unknown key '" + key + "'");
    }
  }

  config.lattice = kind == LatticeKind::Square ? Lattice::square() : Lattice::hexagonal();
  config.optimize.eigs.seed = config.seed;

  // Range and consistency checks, all collected before throwing.
  std::vector<std::string> violations;
  auto require = [&](bool ok, const std::string& message) {
    if (!ok)
    {
      violations.push_back(message);
    }
  };

  require(has_lattice, "lattice is required");
  require(has_n, "n is required");
  require(has_m, "m is required");
  require(has_eps_hi, "eps_hi is required");
  require(!has_n || config.n >= 3, "n must be at least 3");
  require(!has_m || config.optimize.m >= 1, "m must be at least 1");
  require(config.eps_lo > 0.0, "eps_lo must be positive");
  require(!has_eps_hi || config.eps_hi > config.eps_lo, "eps_hi must exceed eps_lo");
  require(config.nk >= 2, "nk must be at least 2");
  require(config.optimize.path_per_segment >= 1, "path_per_segment must be at least 1");
  require(config.optimize.interior_grid >= 0, "interior_grid must be non-negative");
  require(config.optimize.surfaces >= 1, "surfaces must be at least 1");
  require(config.optimize.valley_nk >= 2, "valley_nk must be at least 2");
  require(config.optimize.valley_radius < 0.0 || config.optimize.valley_radius > 0.0,
          "valley_radius must be positive (or negative for the default)");
  require(config.optimize.tau0 > 0.0 && config.optimize.tau0 <= 1.0,
          "tau0 must lie in (0, 1]");
  require(config.optimize.tau_ratio > 0.0 && config.optimize.tau_ratio < 1.0,
          "tau_ratio must lie in (0, 1)");
  require(config.optimize.trust_radius > 0.0, "trust_radius must be positive");
  require(config.optimize.tolerance > 0.0, "tolerance must be positive");
  require(config.optimize.max_iterations >= 0, "max_iterations must be non-negative");
  require(config.optimize.backend.tolerance > 0.0, "sdp_tolerance must be positive");
  require(config.optimize.eigs.tol > 0.0, "eigs_tolerance must be positive");
  require(config.edge_periods >= 4, "edge_periods must be at least 4");
  require(config.edge_samples >= 2, "edge_samples must be at least 2");
  require(config.edge_width >= 1 && config.edge_width < config.edge_periods,
          "edge_width must lie in [1, edge_periods)");
  if (config.optimize.invariant == InvariantMode::Valley)
  {
    require(has_valley1, "invariant = valley requires valley1");
    require(has_valley2, "invariant = valley requires valley2");
  }

  const CrystalSource* crystals[2] = {&config.crystal1, &config.crystal2};
  for (int c = 0; c < 2; ++c)
  {
    const std::string label = "crystal" + std::to_string(c + 1);
    const CrystalSource& crystal = *crystals[c];
    const bool has_grid = !crystal.grid_path.empty();
    require(has_grid || crystal.has_geometry,
            label + " needs an initial-field source (grid or geometry)");
    require(!(has_grid && crystal.has_geometry),
            label + " must use either a grid file or a geometry, not both");
    if (crystal.has_geometry && has_eps_hi)
    {
      require(crystal.background >= config.eps_lo && crystal.background <= config.eps_hi,
              label + " background lies outside [eps_lo, eps_hi]");
      for (std::size_t s = 0; s < crystal.shapes.size(); ++s)
      {
        require(crystal.shapes[s].fill >= config.eps_lo && crystal.shapes[s].fill <= config.eps_hi,
                label + " shape " + std::to_string(s + 1) + " fill lies outside [eps_lo, eps_hi]");
      }
    }
  }

  if (!violations.empty())
  {
    std::string message = name + ": " + std::to_string(violations.size()) + " violation" +
                          (violations.size() == 1 ? "" : "s") + ":";
    for (const std::string& violation : violations)
    {
      message += "\n  - " + violation;
    }
    throw ValidationError(message);
  }

  // The painted background defaults to the admissible floor.
  for (CrystalSource* crystal : {&config.crystal1, &config.crystal2})
  {
    if (crystal->has_geometry && !seen.count((crystal == &config.crystal1 ? "crystal1/" : "crystal2/") +
                                             std::string("background")))
    {
      crystal->background = config.eps_lo;
    }
  }
  return config;
}

RunConfig parse_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw ParseError("cannot open config file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

PermittivityField realize_crystal(const RunConfig& config, int crystal)
{
  if (crystal != 0 && crystal != 1)
  {
    throw ValidationError("crystal index must be 0 or 1");
  }
  const CrystalSource& source = crystal == 0 ? config.crystal1 : config.crystal2;
  PermittivityField field;
  if (!source.grid_path.empty())
  {
    const GridFile grid = read_grid(source.grid_path);
    std::vector<std::string> problems;
    if (grid.field.lattice.kind != config.lattice.kind)
    {
      problems.push_back("lattice kind " + to_string(grid.field.lattice.kind) +
                         " does not match the config (" + to_string(config.lattice.kind) + ")");
    }
    if (grid.field.n != config.n)
    {
      problems.push_back("grid size " + std::to_string(grid.field.n) +
                         " does not match the config (" + std::to_string(config.n) + ")");
    }
    if (grid.field.lo != config.eps_lo || grid.field.hi != config.eps_hi)
    {
      problems.push_back("bounds do not match the config");
    }
    const auto out_of_bounds = bounds_violations(grid.field);
    problems.insert(problems.end(), out_of_bounds.begin(), out_of_bounds.end());
    if (!problems.empty())
    {
      std::string message = source.grid_path + ": " + std::to_string(problems.size()) +
                            " violation" + (problems.size() == 1 ? "" : "s") + ":";
      for (const std::string& problem : problems)
      {
        message += "\n  - " + problem;
      }
      throw ValidationError(message);
    }
    field = grid.field;
  }
  else
  {
    field = rasterize(config.lattice, config.n, source.background, source.shapes, config.eps_lo,
                      config.eps_hi);
  }
  if (config.optimize.group != RotationGroup::Identity)
  {
    field = symmetrize(field, config.optimize.group, config.optimize.symmetry_center);
  }
  return field;
}

}  // namespace topoband
