#pragma once

// Run configuration: one INI file per run. Unknown sections or keys are
// rejected. See configs/ for annotated examples; every key is optional.
//
// [mesh]          source = shell | msh | dump
//                 r_inner, r_outer, level, base_subdivision, base_layers, max_tets
//                 path (msh/dump), scalp_tags, cortex_tags (msh physical ids, comma lists)
// [conductivity]  default = 1.0, region.<id> = sigma
// [electrodes]    source = hemisphere | file, count, radius, path, project = true|false
// [data]          source = synthetic | file, path, noise, seed
// [field]         l_max, half_width_deg, arm_length_deg, rolloff_deg
// [solver]        method = direct | iterative, tol, max_iterations, equilibrate, gamma (number | auto)
// [inverse]       epsilons (comma list; a single value for reconstruct)
// [qrm]           epsilon, delta
// [oracle]        epsilons, cap
// [convergence]   levels, self_levels, self_base_subdivision, self_epsilon, kkt = true|false
// [output]        dir, vtk = true|false
// [run]           seed, threads

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "eegoc/analytic.hpp"
#include "eegoc/error.hpp"
#include "eegoc/mesh.hpp"
#include "eegoc/mesh_io.hpp"
#include "eegoc/solver.hpp"

namespace eegoc {

struct MeshConfig {
  std::string source = "shell";
  double r_inner = 0.7;
  double r_outer = 1.0;
  int level = 1;
  ShellMeshOptions shell;
  std::string path;
  MshTagTable tags = MshTagTable::shell_default();
};

struct ConductivityConfig {
  double default_sigma = 1.0;
  std::map<int, double> regions;

  [[nodiscard]] ConductivityMap for_mesh(const TetMesh& m) const {
    ConductivityMap c;
    for (int r : m.regions) c.sigma[r] = default_sigma;
    for (const auto& [r, s] : regions) c.sigma[r] = s;
    return c;
  }
};

struct ElectrodeConfig {
  std::string source = "hemisphere";
  int count = 198;
  std::optional<double> radius;  // default: outer shell radius
  std::string path;
  bool project = true;  // radially onto the scalp surface
};

struct DataConfig {
  std::string source = "synthetic";
  std::string path;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct FieldConfig {
  int l_max = 25;
  CrossPattern cross;
};

struct SolverConfig {
  SolveOptions solve;
  std::optional<double> gamma;
};

struct QrmConfig {
  double epsilon = 1e-8;
  double delta = 1e-8;
};

struct OracleConfig {
  std::vector<double> epsilons = {1e-6, 1e-8, 1e-10};
  Index cap = 2000;
};

struct ConvergenceConfig {
  std::vector<int> levels = {0, 1, 2};
  std::vector<int> self_levels = {0, 1, 2, 3};
  int self_base_subdivision = 2;
  double self_epsilon = 1e-5;
  bool kkt = true;
};

struct OutputConfig {
  std::string dir = "out";
  bool vtk = true;
};

struct RunConfig {
  MeshConfig mesh;
  ConductivityConfig conductivity;
  ElectrodeConfig electrodes;
  DataConfig data;
  FieldConfig field;
  SolverConfig solver;
  std::vector<double> epsilons = {1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12};
  QrmConfig qrm;
  OracleConfig oracle;
  ConvergenceConfig convergence;
  OutputConfig output;
  int threads = 1;
  std::map<std::string, std::map<std::string, std::string>> raw;  // as read, for the manifest
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string config_where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

inline double parse_number(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Parse, where + ": '" + v + "' is not a finite number");
}

inline long long parse_integer(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (trim(v.substr(pos)).empty()) return x;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Parse, where + ": '" + v + "' is not an integer");
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  fail(ErrorKind::Parse, where + ": '" + v + "' is not a boolean");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string one_of(const std::string& v, std::initializer_list<const char*> options, const std::string& where) {
  for (const char* o : options)
    if (v == o) return v;
  std::string list;
  for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
  fail(ErrorKind::Parameter, where + ": '" + v + "' is not one of " + list);
}

}  // namespace detail

/// Parses and validates the configuration. Relative paths are resolved
/// against `base_dir` (normally the directory of the config file).
inline RunConfig parse_config(std::istream& in, const std::string& base_dir = ".") {
  namespace pt = boost::property_tree;
  using namespace detail;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), "config: " + e.message());
  }

  static const std::map<std::string, std::set<std::string>> schema = {
      {"mesh", {"source", "r_inner", "r_outer", "level", "base_subdivision", "base_layers", "max_tets", "path",
                "scalp_tags", "cortex_tags"}},
      {"conductivity", {"default"}},
      {"electrodes", {"source", "count", "radius", "path", "project"}},
      {"data", {"source", "path", "noise", "seed"}},
      {"field", {"l_max", "half_width_deg", "arm_length_deg", "rolloff_deg"}},
      {"solver", {"method", "tol", "max_iterations", "equilibrate", "gamma"}},
      {"inverse", {"epsilons"}},
      {"qrm", {"epsilon", "delta"}},
      {"oracle", {"epsilons", "cap"}},
      {"convergence", {"levels", "self_levels", "self_base_subdivision", "self_epsilon", "kkt"}},
      {"output", {"dir", "vtk"}},
      {"run", {"seed", "threads"}},
  };

  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      fail(ErrorKind::Parse, "config: key '" + section + "' outside of a section");
    const auto it = schema.find(section);
    if (it == schema.end()) fail(ErrorKind::Parse, "config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const bool region_key = section == "conductivity" && key.rfind("region.", 0) == 0;
      if (!region_key && !it->second.count(key))
        fail(ErrorKind::Parse, "config: unknown key " + config_where(section, key));
      c.raw[section][key] = trim(value.data());
    }
  }

  auto resolve = [&](const std::string& p) {
    if (p.empty() || p.front() == '/') return p;
    return base_dir + "/" + p;
  };
  auto get = [&](const std::string& s, const std::string& k) -> std::optional<std::string> {
    const auto a = c.raw.find(s);
    if (a == c.raw.end()) return std::nullopt;
    const auto b = a->second.find(k);
    if (b == a->second.end()) return std::nullopt;
    return b->second;
  };
  auto num = [&](const std::string& s, const std::string& k, double& out) {
    if (auto v = get(s, k)) out = parse_number(*v, config_where(s, k));
  };
  auto integer = [&](const std::string& s, const std::string& k, auto& out) {
    if (auto v = get(s, k)) out = static_cast<std::remove_reference_t<decltype(out)>>(parse_integer(*v, config_where(s, k)));
  };
  auto boolean = [&](const std::string& s, const std::string& k, bool& out) {
    if (auto v = get(s, k)) out = parse_bool(*v, config_where(s, k));
  };
  auto numbers = [&](const std::string& s, const std::string& k, std::vector<double>& out) {
    if (auto v = get(s, k)) {
      out.clear();
      for (const auto& item : split_list(*v)) out.push_back(parse_number(item, config_where(s, k)));
    }
  };
  auto integers = [&](const std::string& s, const std::string& k, std::vector<int>& out) {
    if (auto v = get(s, k)) {
      out.clear();
      for (const auto& item : split_list(*v)) out.push_back(static_cast<int>(parse_integer(item, config_where(s, k))));
    }
  };

  // [mesh]
  if (auto v = get("mesh", "source")) c.mesh.source = one_of(*v, {"shell", "msh", "dump"}, "[mesh] source");
  num("mesh", "r_inner", c.mesh.r_inner);
  num("mesh", "r_outer", c.mesh.r_outer);
  integer("mesh", "level", c.mesh.level);
  integer("mesh", "base_subdivision", c.mesh.shell.base_subdivision);
  integer("mesh", "base_layers", c.mesh.shell.base_layers);
  integer("mesh", "max_tets", c.mesh.shell.max_tets);
  if (auto v = get("mesh", "path")) c.mesh.path = resolve(*v);
  if (get("mesh", "scalp_tags") || get("mesh", "cortex_tags")) {
    c.mesh.tags.surface.clear();
    std::vector<int> ids;
    integers("mesh", "scalp_tags", ids);
    for (int id : ids) c.mesh.tags.surface[id] = BoundaryTag::Scalp;
    ids.clear();
    integers("mesh", "cortex_tags", ids);
    for (int id : ids) c.mesh.tags.surface[id] = BoundaryTag::Cortex;
  }
  if (c.mesh.source == "shell") {
    require(c.mesh.r_inner > 0.0 && c.mesh.r_inner < c.mesh.r_outer, ErrorKind::Parameter,
            "[mesh] shell radii must satisfy 0 < r_inner < r_outer");
    require(c.mesh.level >= 0 && c.mesh.level <= 12, ErrorKind::Parameter, "[mesh] level must be in [0, 12]");
    require(c.mesh.shell.base_subdivision >= 0 && c.mesh.shell.base_subdivision <= 8, ErrorKind::Parameter,
            "[mesh] base_subdivision must be in [0, 8]");
    require(c.mesh.shell.base_layers >= 1, ErrorKind::Parameter, "[mesh] base_layers must be >= 1");
  } else {
    require(!c.mesh.path.empty(), ErrorKind::Parameter, "[mesh] path is required for source = " + c.mesh.source);
  }

  // [conductivity]
  num("conductivity", "default", c.conductivity.default_sigma);
  require(c.conductivity.default_sigma > 0.0, ErrorKind::Parameter, "[conductivity] default must be positive");
  if (c.raw.count("conductivity"))
    for (const auto& [k, v] : c.raw["conductivity"]) {
      if (k.rfind("region.", 0) != 0) continue;
      const int id = static_cast<int>(parse_integer(k.substr(7), config_where("conductivity", k)));
      const double s = parse_number(v, config_where("conductivity", k));
      require(s > 0.0, ErrorKind::Parameter, config_where("conductivity", k) + " must be positive");
      c.conductivity.regions[id] = s;
    }

  // [electrodes]
  if (auto v = get("electrodes", "source")) c.electrodes.source = one_of(*v, {"hemisphere", "file"}, "[electrodes] source");
  integer("electrodes", "count", c.electrodes.count);
  if (auto v = get("electrodes", "radius")) c.electrodes.radius = parse_number(*v, "[electrodes] radius");
  if (auto v = get("electrodes", "path")) c.electrodes.path = resolve(*v);
  boolean("electrodes", "project", c.electrodes.project);
  require(c.electrodes.count >= 1, ErrorKind::Parameter, "[electrodes] count must be >= 1");
  require(!c.electrodes.radius || *c.electrodes.radius > 0.0, ErrorKind::Parameter, "[electrodes] radius must be positive");
  require(c.electrodes.source != "file" || !c.electrodes.path.empty(), ErrorKind::Parameter,
          "[electrodes] path is required for source = file");

  // [data]
  if (auto v = get("data", "source")) c.data.source = one_of(*v, {"synthetic", "file"}, "[data] source");
  if (auto v = get("data", "path")) c.data.path = resolve(*v);
  num("data", "noise", c.data.noise);
  integer("data", "seed", c.data.seed);
  if (auto v = get("run", "seed")) c.data.seed = static_cast<std::uint64_t>(parse_integer(*v, "[run] seed"));
  require(c.data.noise >= 0.0, ErrorKind::Parameter, "[data] noise must be >= 0");
  require(c.data.source != "file" || !c.data.path.empty(), ErrorKind::Parameter, "[data] path is required for source = file");

  // [field]
  integer("field", "l_max", c.field.l_max);
  num("field", "half_width_deg", c.field.cross.half_width_deg);
  num("field", "arm_length_deg", c.field.cross.arm_length_deg);
  num("field", "rolloff_deg", c.field.cross.rolloff_deg);
  require(c.field.l_max >= 0 && c.field.l_max <= 200, ErrorKind::Parameter, "[field] l_max must be in [0, 200]");
  require(c.field.cross.half_width_deg > 0.0 && c.field.cross.arm_length_deg > 0.0 && c.field.cross.rolloff_deg >= 0.0,
          ErrorKind::Parameter, "[field] cross dimensions must be positive");

  // [solver]
  if (auto v = get("solver", "method")) {
    one_of(*v, {"direct", "iterative"}, "[solver] method");
    c.solver.solve.method = parse_solver_method(*v);
  }
  num("solver", "tol", c.solver.solve.tol);
  integer("solver", "max_iterations", c.solver.solve.max_iterations);
  boolean("solver", "equilibrate", c.solver.solve.equilibrate);
  if (auto v = get("solver", "gamma"); v && *v != "auto") c.solver.gamma = parse_number(*v, "[solver] gamma");
  require(c.solver.solve.tol > 0.0, ErrorKind::Parameter, "[solver] tol must be positive");
  require(c.solver.solve.max_iterations >= 0, ErrorKind::Parameter, "[solver] max_iterations must be >= 0");
  require(!c.solver.gamma || *c.solver.gamma >= 0.0, ErrorKind::Parameter, "[solver] gamma must be >= 0");

  // [inverse]
  numbers("inverse", "epsilons", c.epsilons);
  for (double e : c.epsilons) require(e > 0.0, ErrorKind::Parameter, "[inverse] epsilons must be positive");
  require(!c.epsilons.empty(), ErrorKind::Parameter, "[inverse] epsilons is empty");
  {
    std::set<double> seen(c.epsilons.begin(), c.epsilons.end());
    require(seen.size() == c.epsilons.size(), ErrorKind::Parameter, "[inverse] epsilons has repeated values");
  }

  // [qrm]
  num("qrm", "epsilon", c.qrm.epsilon);
  num("qrm", "delta", c.qrm.delta);
  require(c.qrm.epsilon > 0.0, ErrorKind::Parameter, "[qrm] epsilon must be positive");
  require(c.qrm.delta > 0.0, ErrorKind::Parameter, "[qrm] delta must be positive (the problem needs stabilization)");

  // [oracle]
  numbers("oracle", "epsilons", c.oracle.epsilons);
  integer("oracle", "cap", c.oracle.cap);
  require(!c.oracle.epsilons.empty(), ErrorKind::Parameter, "[oracle] epsilons is empty");
  for (double e : c.oracle.epsilons) require(e > 0.0, ErrorKind::Parameter, "[oracle] epsilons must be positive");
  require(c.oracle.cap >= 1, ErrorKind::Parameter, "[oracle] cap must be >= 1");

  // [convergence]
  integers("convergence", "levels", c.convergence.levels);
  integers("convergence", "self_levels", c.convergence.self_levels);
  integer("convergence", "self_base_subdivision", c.convergence.self_base_subdivision);
  num("convergence", "self_epsilon", c.convergence.self_epsilon);
  boolean("convergence", "kkt", c.convergence.kkt);
  require(c.convergence.levels.size() >= 2, ErrorKind::Parameter, "[convergence] levels needs at least two entries");
  require(!c.convergence.kkt || c.convergence.self_levels.size() >= 3, ErrorKind::Parameter,
          "[convergence] self_levels needs at least three entries");
  require(c.convergence.self_epsilon > 0.0, ErrorKind::Parameter, "[convergence] self_epsilon must be positive");
  for (int l : c.convergence.levels) require(l >= 0 && l <= 12, ErrorKind::Parameter, "[convergence] levels out of range");
  for (int l : c.convergence.self_levels)
    require(l >= 0 && l <= 12, ErrorKind::Parameter, "[convergence] self_levels out of range");

  // [output], [run]
  if (auto v = get("output", "dir")) c.output.dir = resolve(*v);
  boolean("output", "vtk", c.output.vtk);
  integer("run", "threads", c.threads);
  require(c.threads >= 1, ErrorKind::Parameter, "[run] threads must be >= 1");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
  const auto slash = path.find_last_of('/');
  return parse_config(in, slash == std::string::npos ? "." : path.substr(0, slash));
}

}  // namespace eegoc
