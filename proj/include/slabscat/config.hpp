#pragma once
// Strict JSON run configuration: every block validated up front, unknown keys
// rejected, all violations collected before reporting. Quantities are
// dimensionless throughout.

#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "slabscat/assembly.hpp"
#include "slabscat/raster_io.hpp"
#include "slabscat/structure.hpp"

namespace slabscat {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  std::vector<std::string> violations;
  explicit ConfigError(std::vector<std::string> v)
      : std::runtime_error("invalid configuration (" + std::to_string(v.size()) + " violations)"),
        violations(std::move(v)) {}
};

struct DirectionSpec {
  std::string type = "smooth";  // smooth | random | cell
  double amplitude = 0.1;
  int kx = 1;
  double phase = 0.0;
  int cell_i = 0, cell_j = 0;
  std::uint64_t seed = 0;
};

struct SensitivitySpec {
  DirectionSpec dir_eps, dir_tau;
  bool tau_direction = false;
  std::string functional = "energy";  // energy | order
  int order = 0;
  std::vector<double> steps = {1e-3, 1e-4, 1e-5};
};

struct EigenSpec {
  int count = 3;
  double window_lo = 0.05, window_hi = 2.0;
  int samples = 48;
  double guided_threshold = 1e-8;
};

struct CertifySpec {
  int j = 1;
  double omega_lo = 0.5, omega_hi = 1.5;
  // uniform envelope bounds, or margins around the rasterized structure
  bool around_structure = false;
  double eps_lo = 1.0, eps_hi = 1.0, tau_lo = 1.0, tau_hi = 1.0;
  double eps_margin = 0.0, tau_margin = 0.0;
  double scan_lo = -1.0, scan_hi = -1.0;
  int samples = 64;
};

struct DesignSpec {
  std::string objective = "maximize";  // maximize | minimize | match
  std::vector<double> targets;
  bool region_all = true;
  double region[4] = {0, 0, 0, 0};  // x_lo, z_lo, x_hi, z_hi when not all
  double step = 0.5;
  int max_iters = 100;
  double tolerance = 1e-9;
  bool optimize_tau = false;
  double env_eps_lo = 1.0, env_eps_hi = 4.0, env_tau_lo = 1.0, env_tau_hi = 1.0;
};

struct SolverSpec {
  double tolerance = 1e-10;
  int threads = 1;
  double condition_warn = 1e12;
  bool estimate_condition = true;
};

struct OutputSpec {
  std::string directory = "out";
  bool orders = false;
};

struct RunConfig {
  CellGeometry geom;
  int m_max = 0;  // 0: default nx/2 - 1
  double eps0 = 1.0, tau0 = 1.0;
  double background_eps = 1.0, background_tau = 1.0;
  std::vector<Inclusion> inclusions;
  std::string raster_eps_path, raster_tau_path;
  std::vector<double> omegas, kappas;
  IncidentWave incident = IncidentWave::plane_from_left();
  SensitivitySpec sensitivity;
  EigenSpec eigen;
  CertifySpec certify;
  DesignSpec design;
  SolverSpec solver;
  OutputSpec output;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  int effective_m_max() const { return m_max > 0 ? m_max : geom.nx / 2 - 1; }

  CoefficientField build_field() const {
    CoefficientField f = rasterize(geom, background_eps, background_tau, inclusions);
    if (!raster_eps_path.empty()) {
      RasterData d = read_raster_file(raster_eps_path);
      if (d.nx != geom.nx || d.nz != geom.nz)
        throw std::runtime_error("raster_eps grid does not match geometry");
      f.eps = d.values;
    }
    if (!raster_tau_path.empty()) {
      RasterData d = read_raster_file(raster_tau_path);
      if (d.nx != geom.nx || d.nz != geom.nz)
        throw std::runtime_error("raster_tau grid does not match geometry");
      f.tau = d.values;
    }
    return f;
  }
};

namespace cfg_detail {

struct Checker {
  std::vector<std::string> problems;

  void keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) problems.push_back(where + ": unknown key '" + it.key() + "'");
  }

  bool has(const json& obj, const std::string& key) { return obj.contains(key); }

  double num(const json& obj, const std::string& where, const std::string& key, double fallback,
             bool required = false) {
    if (!obj.contains(key)) {
      if (required) problems.push_back(where + ": missing required key '" + key + "'");
      return fallback;
    }
    if (!obj[key].is_number()) {
      problems.push_back(where + "." + key + ": expected a number");
      return fallback;
    }
    return obj[key].get<double>();
  }

  long long integer(const json& obj, const std::string& where, const std::string& key,
                    long long fallback, bool required = false) {
    if (!obj.contains(key)) {
      if (required) problems.push_back(where + ": missing required key '" + key + "'");
      return fallback;
    }
    if (!obj[key].is_number_integer()) {
      problems.push_back(where + "." + key + ": expected an integer");
      return fallback;
    }
    return obj[key].get<long long>();
  }

  bool boolean(const json& obj, const std::string& where, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) {
      problems.push_back(where + "." + key + ": expected a boolean");
      return fallback;
    }
    return obj[key].get<bool>();
  }

  std::string str(const json& obj, const std::string& where, const std::string& key,
                  const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) {
      problems.push_back(where + "." + key + ": expected a string");
      return fallback;
    }
    return obj[key].get<std::string>();
  }

  void positive(double v, const std::string& what) {
    if (!(v > 0.0))
      problems.push_back(what + " must be strictly positive (coefficient bounds require 0 < value)");
  }
};

inline DirectionSpec parse_direction(const json& d, const std::string& where, Checker& ck) {
  DirectionSpec out;
  ck.keys(d, where, {"type", "amplitude", "kx", "phase", "cell", "seed"});
  out.type = ck.str(d, where, "type", "smooth");
  if (out.type != "smooth" && out.type != "random" && out.type != "cell")
    ck.problems.push_back(where + ".type: must be smooth, random or cell");
  out.amplitude = ck.num(d, where, "amplitude", 0.1);
  out.kx = static_cast<int>(ck.integer(d, where, "kx", 1));
  out.phase = ck.num(d, where, "phase", 0.0);
  out.seed = static_cast<std::uint64_t>(ck.integer(d, where, "seed", 0));
  if (d.contains("cell")) {
    if (!d["cell"].is_array() || d["cell"].size() != 2)
      ck.problems.push_back(where + ".cell: expected [i, j]");
    else {
      out.cell_i = d["cell"][0].get<int>();
      out.cell_j = d["cell"][1].get<int>();
    }
  }
  return out;
}

}  // namespace cfg_detail

inline RunConfig parse_config_json(const json& root) {
  using cfg_detail::Checker;
  Checker ck;
  RunConfig rc;

  if (!root.is_object()) throw ConfigError({"top level: expected a JSON object"});
  ck.keys(root, "top level",
          {"geometry", "exterior", "structure", "bloch", "incident", "sensitivity", "eigen",
           "certify", "design", "solver", "output", "seed"});

  // geometry
  if (!root.contains("geometry")) ck.problems.push_back("missing required block 'geometry'");
  else {
    const json& g = root["geometry"];
    ck.keys(g, "geometry", {"z_minus", "z_plus", "nx", "nz", "m_max"});
    rc.geom.z_minus = ck.num(g, "geometry", "z_minus", 0.0, true);
    rc.geom.z_plus = ck.num(g, "geometry", "z_plus", 1.0, true);
    rc.geom.nx = static_cast<int>(ck.integer(g, "geometry", "nx", 8, true));
    rc.geom.nz = static_cast<int>(ck.integer(g, "geometry", "nz", 4, true));
    rc.m_max = static_cast<int>(ck.integer(g, "geometry", "m_max", 0));
    if (!(rc.geom.z_minus < rc.geom.z_plus))
      ck.problems.push_back("geometry: z_minus must be < z_plus");
    if (rc.geom.nx < 4 || rc.geom.nx % 2 != 0)
      ck.problems.push_back("geometry.nx: must be even and >= 4");
    if (rc.geom.nz < 2) ck.problems.push_back("geometry.nz: must be >= 2");
    if (rc.m_max < 0 || (rc.m_max > 0 && rc.m_max > rc.geom.nx / 2 - 1))
      ck.problems.push_back("geometry.m_max: must be in [1, nx/2 - 1] (boundary DFT aliasing)");
  }

  // exterior
  if (!root.contains("exterior")) ck.problems.push_back("missing required block 'exterior'");
  else {
    const json& e = root["exterior"];
    ck.keys(e, "exterior", {"eps0", "tau0"});
    rc.eps0 = ck.num(e, "exterior", "eps0", 1.0, true);
    rc.tau0 = ck.num(e, "exterior", "tau0", 1.0, true);
    ck.positive(rc.eps0, "exterior.eps0");
    ck.positive(rc.tau0, "exterior.tau0");
  }

  // structure
  if (!root.contains("structure")) ck.problems.push_back("missing required block 'structure'");
  else {
    const json& s = root["structure"];
    ck.keys(s, "structure", {"background", "inclusions", "raster_eps", "raster_tau"});
    if (s.contains("background")) {
      ck.keys(s["background"], "structure.background", {"eps", "tau"});
      rc.background_eps = ck.num(s["background"], "structure.background", "eps", 1.0);
      rc.background_tau = ck.num(s["background"], "structure.background", "tau", 1.0);
      ck.positive(rc.background_eps, "structure.background.eps");
      ck.positive(rc.background_tau, "structure.background.tau");
    }
    if (s.contains("inclusions")) {
      if (!s["inclusions"].is_array()) ck.problems.push_back("structure.inclusions: expected an array");
      else {
        int auto_id = 1;
        for (const json& ij : s["inclusions"]) {
          std::string where = "structure.inclusions[" + std::to_string(auto_id - 1) + "]";
          ck.keys(ij, where, {"id", "shape", "center", "radius", "lo", "hi", "eps", "tau"});
          Inclusion inc;
          inc.id = static_cast<int>(ck.integer(ij, where, "id", auto_id));
          inc.eps_j = ck.num(ij, where, "eps", 1.0, true);
          inc.tau_j = ck.num(ij, where, "tau", 1.0, true);
          ck.positive(inc.eps_j, where + ".eps");
          ck.positive(inc.tau_j, where + ".tau");
          std::string shape = ck.str(ij, where, "shape", "");
          if (shape == "disk") {
            if (!ij.contains("center") || !ij["center"].is_array() || ij["center"].size() != 2)
              ck.problems.push_back(where + ".center: expected [x1, x3]");
            else
              inc.shape = Disk{ij["center"][0].get<double>(), ij["center"][1].get<double>(),
                               ck.num(ij, where, "radius", 0.0, true)};
          } else if (shape == "rect") {
            bool ok = ij.contains("lo") && ij["lo"].is_array() && ij["lo"].size() == 2 &&
                      ij.contains("hi") && ij["hi"].is_array() && ij["hi"].size() == 2;
            if (!ok) ck.problems.push_back(where + ": rect needs lo=[x1,x3] and hi=[x1,x3]");
            else
              inc.shape = RectShape{ij["lo"][0].get<double>(), ij["lo"][1].get<double>(),
                                    ij["hi"][0].get<double>(), ij["hi"][1].get<double>()};
          } else {
            ck.problems.push_back(where + ".shape: must be disk or rect");
          }
          rc.inclusions.push_back(inc);
          ++auto_id;
        }
      }
    }
    rc.raster_eps_path = ck.str(s, "structure", "raster_eps", "");
    rc.raster_tau_path = ck.str(s, "structure", "raster_tau", "");
  }

  // bloch
  if (!root.contains("bloch")) ck.problems.push_back("missing required block 'bloch'");
  else {
    const json& b = root["bloch"];
    ck.keys(b, "bloch", {"omega", "kappa", "omega_sweep", "kappa_sweep"});
    auto sweep_values = [&](const json& sw, const std::string& where) {
      std::vector<double> vals;
      ck.keys(sw, where, {"lo", "hi", "n"});
      double lo = ck.num(sw, where, "lo", 0.0, true);
      double hi = ck.num(sw, where, "hi", 1.0, true);
      int n = static_cast<int>(ck.integer(sw, where, "n", 2, true));
      if (n < 1) ck.problems.push_back(where + ".n: must be >= 1");
      if (n == 1) vals.push_back(lo);
      else
        for (int i = 0; i < n; ++i) vals.push_back(lo + (hi - lo) * i / (n - 1));
      return vals;
    };
    if (b.contains("omega") && b.contains("omega_sweep"))
      ck.problems.push_back("bloch: give omega or omega_sweep, not both");
    if (b.contains("omega")) rc.omegas = {ck.num(b, "bloch", "omega", 1.0)};
    else if (b.contains("omega_sweep")) rc.omegas = sweep_values(b["omega_sweep"], "bloch.omega_sweep");
    else ck.problems.push_back("bloch: missing omega or omega_sweep");
    for (double w : rc.omegas)
      if (!(w > 0.0)) ck.problems.push_back("bloch.omega: frequencies must be > 0");

    if (b.contains("kappa") && b.contains("kappa_sweep"))
      ck.problems.push_back("bloch: give kappa or kappa_sweep, not both");
    if (b.contains("kappa_sweep")) rc.kappas = sweep_values(b["kappa_sweep"], "bloch.kappa_sweep");
    else rc.kappas = {ck.num(b, "bloch", "kappa", 0.0)};
    for (double& k : rc.kappas) {
      double r = BlochContext::reduce_kappa(k);
      if (std::abs(r - k) > 1e-15) {
        rc.warnings.push_back("bloch.kappa " + num17(k) + " reduced to first Brillouin zone value " +
                              num17(r));
        k = r;
      }
    }
  }

  // incident
  if (root.contains("incident")) {
    const json& inc = root["incident"];
    ck.keys(inc, "incident", {"a", "b"});
    rc.incident = IncidentWave{};
    auto parse_side = [&](const char* key, std::vector<std::pair<int, cplx>>& out) {
      if (!inc.contains(key)) return;
      if (!inc[key].is_array()) {
        ck.problems.push_back(std::string("incident.") + key + ": expected an array");
        return;
      }
      for (const json& t : inc[key]) {
        ck.keys(t, std::string("incident.") + key + "[]", {"m", "re", "im"});
        int m = static_cast<int>(ck.integer(t, "incident", "m", 0, true));
        out.push_back({m, cplx(ck.num(t, "incident", "re", 0.0), ck.num(t, "incident", "im", 0.0))});
      }
    };
    parse_side("a", rc.incident.a);
    parse_side("b", rc.incident.b);
  }

  // sensitivity
  if (root.contains("sensitivity")) {
    const json& s = root["sensitivity"];
    ck.keys(s, "sensitivity", {"direction", "direction_tau", "functional", "order", "steps"});
    if (s.contains("direction"))
      rc.sensitivity.dir_eps = cfg_detail::parse_direction(s["direction"], "sensitivity.direction", ck);
    if (s.contains("direction_tau")) {
      rc.sensitivity.dir_tau =
          cfg_detail::parse_direction(s["direction_tau"], "sensitivity.direction_tau", ck);
      rc.sensitivity.tau_direction = true;
    }
    rc.sensitivity.functional = ck.str(s, "sensitivity", "functional", "energy");
    if (rc.sensitivity.functional != "energy" && rc.sensitivity.functional != "order")
      ck.problems.push_back("sensitivity.functional: must be energy or order");
    rc.sensitivity.order = static_cast<int>(ck.integer(s, "sensitivity", "order", 0));
    if (s.contains("steps")) {
      if (!s["steps"].is_array()) ck.problems.push_back("sensitivity.steps: expected an array");
      else {
        rc.sensitivity.steps.clear();
        for (const json& v : s["steps"]) rc.sensitivity.steps.push_back(v.get<double>());
      }
    }
  }

  // eigen
  if (root.contains("eigen")) {
    const json& e = root["eigen"];
    ck.keys(e, "eigen", {"count", "window", "samples", "guided_threshold"});
    rc.eigen.count = static_cast<int>(ck.integer(e, "eigen", "count", 3));
    if (e.contains("window")) {
      if (!e["window"].is_array() || e["window"].size() != 2)
        ck.problems.push_back("eigen.window: expected [lo, hi]");
      else {
        rc.eigen.window_lo = e["window"][0].get<double>();
        rc.eigen.window_hi = e["window"][1].get<double>();
      }
    }
    rc.eigen.samples = static_cast<int>(ck.integer(e, "eigen", "samples", 48));
    rc.eigen.guided_threshold = ck.num(e, "eigen", "guided_threshold", 1e-8);
  }

  // certify
  if (root.contains("certify")) {
    const json& c = root["certify"];
    ck.keys(c, "certify", {"j", "omega_range", "envelope", "scan", "samples"});
    rc.certify.j = static_cast<int>(ck.integer(c, "certify", "j", 1));
    if (c.contains("omega_range") && c["omega_range"].is_array() && c["omega_range"].size() == 2) {
      rc.certify.omega_lo = c["omega_range"][0].get<double>();
      rc.certify.omega_hi = c["omega_range"][1].get<double>();
    } else if (c.contains("omega_range"))
      ck.problems.push_back("certify.omega_range: expected [lo, hi]");
    if (c.contains("envelope")) {
      const json& env = c["envelope"];
      ck.keys(env, "certify.envelope",
              {"eps_lo", "eps_hi", "tau_lo", "tau_hi", "eps_margin", "tau_margin"});
      if (env.contains("eps_margin") || env.contains("tau_margin")) {
        rc.certify.around_structure = true;
        rc.certify.eps_margin = ck.num(env, "certify.envelope", "eps_margin", 0.0);
        rc.certify.tau_margin = ck.num(env, "certify.envelope", "tau_margin", 0.0);
      } else {
        rc.certify.eps_lo = ck.num(env, "certify.envelope", "eps_lo", 1.0, true);
        rc.certify.eps_hi = ck.num(env, "certify.envelope", "eps_hi", 1.0, true);
        rc.certify.tau_lo = ck.num(env, "certify.envelope", "tau_lo", 1.0, true);
        rc.certify.tau_hi = ck.num(env, "certify.envelope", "tau_hi", 1.0, true);
      }
    }
    if (c.contains("scan") && c["scan"].is_array() && c["scan"].size() == 2) {
      rc.certify.scan_lo = c["scan"][0].get<double>();
      rc.certify.scan_hi = c["scan"][1].get<double>();
    } else if (c.contains("scan"))
      ck.problems.push_back("certify.scan: expected [lo, hi]");
    rc.certify.samples = static_cast<int>(ck.integer(c, "certify", "samples", 64));
  }

  // design
  if (root.contains("design")) {
    const json& d = root["design"];
    ck.keys(d, "design",
            {"objective", "targets", "region", "step", "max_iters", "tolerance", "optimize_tau",
             "envelope"});
    rc.design.objective = ck.str(d, "design", "objective", "maximize");
    if (rc.design.objective != "maximize" && rc.design.objective != "minimize" &&
        rc.design.objective != "match")
      ck.problems.push_back("design.objective: must be maximize, minimize or match");
    if (d.contains("targets"))
      for (const json& t : d["targets"]) rc.design.targets.push_back(t.get<double>());
    if (d.contains("region")) {
      if (d["region"].is_string() && d["region"].get<std::string>() == "all")
        rc.design.region_all = true;
      else if (d["region"].is_array() && d["region"].size() == 4) {
        rc.design.region_all = false;
        for (int i = 0; i < 4; ++i) rc.design.region[i] = d["region"][i].get<double>();
      } else
        ck.problems.push_back("design.region: expected \"all\" or [x_lo, z_lo, x_hi, z_hi]");
    }
    rc.design.step = ck.num(d, "design", "step", 0.5);
    rc.design.max_iters = static_cast<int>(ck.integer(d, "design", "max_iters", 100));
    rc.design.tolerance = ck.num(d, "design", "tolerance", 1e-9);
    rc.design.optimize_tau = ck.boolean(d, "design", "optimize_tau", false);
    if (d.contains("envelope")) {
      const json& env = d["envelope"];
      ck.keys(env, "design.envelope", {"eps_lo", "eps_hi", "tau_lo", "tau_hi"});
      rc.design.env_eps_lo = ck.num(env, "design.envelope", "eps_lo", 1.0, true);
      rc.design.env_eps_hi = ck.num(env, "design.envelope", "eps_hi", 4.0, true);
      rc.design.env_tau_lo = ck.num(env, "design.envelope", "tau_lo", 1.0, true);
      rc.design.env_tau_hi = ck.num(env, "design.envelope", "tau_hi", 1.0, true);
      ck.positive(rc.design.env_eps_lo, "design.envelope.eps_lo");
      ck.positive(rc.design.env_tau_lo, "design.envelope.tau_lo");
    }
  }

  // solver
  if (root.contains("solver")) {
    const json& s = root["solver"];
    ck.keys(s, "solver", {"tolerance", "threads", "condition_warn", "estimate_condition"});
    rc.solver.tolerance = ck.num(s, "solver", "tolerance", 1e-10);
    rc.solver.threads = static_cast<int>(ck.integer(s, "solver", "threads", 1));
    rc.solver.condition_warn = ck.num(s, "solver", "condition_warn", 1e12);
    rc.solver.estimate_condition = ck.boolean(s, "solver", "estimate_condition", true);
    if (rc.solver.threads < 1) ck.problems.push_back("solver.threads: must be >= 1");
  }

  // output
  if (root.contains("output")) {
    const json& o = root["output"];
    ck.keys(o, "output", {"directory", "orders"});
    rc.output.directory = ck.str(o, "output", "directory", "out");
    rc.output.orders = ck.boolean(o, "output", "orders", false);
  }

  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer()) ck.problems.push_back("seed: expected an integer");
    else rc.seed = root["seed"].get<std::uint64_t>();
  }

  if (!ck.problems.empty()) throw ConfigError(std::move(ck.problems));
  return rc;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  json root;
  try {
    root = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  return parse_config_json(root);
}

// Direction realization on the configured grid, clipped to nothing: the
// caller checks admissibility where it matters.
inline Eigen::ArrayXd realize_direction(const DirectionSpec& d, const CellGeometry& g) {
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(g.n_cells());
  if (d.type == "cell") {
    if (d.cell_i < 0 || d.cell_i >= g.nx || d.cell_j < 0 || d.cell_j >= g.nz)
      throw std::runtime_error("direction cell index out of range");
    out(g.cell_index(d.cell_i, d.cell_j)) = d.amplitude;
  } else if (d.type == "random") {
    std::mt19937_64 rng(d.seed);
    std::uniform_real_distribution<double> u(-d.amplitude, d.amplitude);
    for (int c = 0; c < g.n_cells(); ++c) out(c) = u(rng);
  } else {  // smooth
    for (int j = 0; j < g.nz; ++j) {
      double zz = (g.cell_center_x3(j) - g.z_minus) / (g.z_plus - g.z_minus);
      double wz = std::sin(M_PI * zz);
      for (int i = 0; i < g.nx; ++i)
        out(g.cell_index(i, j)) = d.amplitude * wz * wz * std::cos(d.kx * g.cell_center_x1(i) + d.phase);
    }
  }
  return out;
}

}  // namespace slabscat
