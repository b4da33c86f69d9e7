// slabscat: quasi-periodic Helmholtz scattering for a lossless periodic slab
// (2D reduction), diffraction efficiencies, adjoint gradients of the
// transmitted energy, guided-mode eigenvalues and non-resonance certificates.
//
// Subcommands: solve | sweep | grad | linearize | modes | certify | optimize | fdcheck
// Exit codes: 0 success, 1 error, 2 certified refusal (resonance risk).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slabscat/config.hpp"
#include "slabscat/format.hpp"
#include "slabscat/modes.hpp"
#include "slabscat/optimize.hpp"
#include "slabscat/scatter.hpp"
#include "slabscat/sensitivity.hpp"
#include "slabscat/version.hpp"

namespace fs = std::filesystem;
using namespace slabscat;

namespace {

struct RunContextCli {
  RunConfig cfg;
  fs::path outdir;
  std::string subcommand;
  std::string config_dump;
  std::vector<std::string> warnings;
  std::vector<double> balance_defects;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
};

std::ofstream open_out(const RunContextCli& rc, const std::string& name) {
  fs::create_directories(rc.outdir);
  std::ofstream f(rc.outdir / name);
  if (!f) throw std::runtime_error("cannot open output file " + (rc.outdir / name).string());
  return f;
}

void csv_banner(std::ofstream& f, const std::string& what) {
  f << "# slabscat " << what << " " << k_schema << "\n";
}

void write_run_json(const RunContextCli& rc, int exit_code) {
  nlohmann::json j;
  j["tool"] = "slabscat";
  j["version"] = k_version;
  j["schema"] = k_schema;
  j["subcommand"] = rc.subcommand;
  j["config_hash"] = hex64(fnv1a64(rc.config_dump));
  j["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - rc.t0).count();
  j["exit_code"] = exit_code;
  j["warnings"] = rc.warnings;
  if (!rc.balance_defects.empty()) {
    double mx = 0.0;
    for (double d : rc.balance_defects) mx = std::max(mx, std::abs(d));
    j["max_abs_balance_defect"] = mx;
  }
  std::ofstream f(rc.outdir / "run.json");
  f << j.dump(2) << "\n";
}

SolveOptions solve_options(const RunConfig& cfg) {
  return SolveOptions{cfg.solver.tolerance, cfg.solver.estimate_condition,
                      cfg.solver.condition_warn};
}

void write_sweep_csv(RunContextCli& rc, const std::vector<SweepRow>& rows, int m_max,
                     const std::string& name) {
  std::ofstream f = open_out(rc, name);
  csv_banner(f, "sweep");
  f << "omega,kappa,incident_flux,reflected_flux,transmitted_flux,balance_defect,residual";
  if (rc.cfg.output.orders)
    for (int m = -m_max; m <= m_max; ++m)
      f << ",a_" << m << "_re,a_" << m << "_im,b_" << m << "_re,b_" << m << "_im";
  f << "\n";
  for (const SweepRow& r : rows) {
    if (!r.ok) {
      rc.warnings.push_back("sweep point omega=" + num17(r.omega) + " kappa=" + num17(r.kappa) +
                            " failed: " + r.error);
      continue;
    }
    f << num17(r.omega) << "," << num17(r.kappa) << "," << num17(r.incident_flux) << ","
      << num17(r.reflected_flux) << "," << num17(r.transmitted_flux) << ","
      << num17(r.balance_defect) << "," << num17(r.residual);
    if (rc.cfg.output.orders)
      for (size_t q = 0; q < r.a_orders.size(); ++q)
        f << "," << num17(r.a_orders[q].real()) << "," << num17(r.a_orders[q].imag()) << ","
          << num17(r.b_orders[q].real()) << "," << num17(r.b_orders[q].imag());
    f << "\n";
    rc.balance_defects.push_back(r.balance_defect);
  }
}

int cmd_solve_or_sweep(RunContextCli& rc) {
  SweepRequest req;
  req.geom = rc.cfg.geom;
  req.field = rc.cfg.build_field();
  req.eps0 = rc.cfg.eps0;
  req.tau0 = rc.cfg.tau0;
  req.m_max = rc.cfg.effective_m_max();
  req.incident = rc.cfg.incident;
  req.omegas = rc.cfg.omegas;
  req.kappas = rc.cfg.kappas;
  req.keep_orders = rc.cfg.output.orders;
  req.threads = rc.cfg.solver.threads;
  std::vector<SweepRow> rows = sweep(req, solve_options(rc.cfg));
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.omega != b.omega ? a.omega < b.omega : a.kappa < b.kappa;
  });
  write_sweep_csv(rc, rows, req.m_max, rc.subcommand == "solve" ? "solve.csv" : "sweep.csv");
  for (const SweepRow& r : rows)
    if (!r.ok) return 1;
  return 0;
}

struct PrimalCli {
  BlochContext ctx;
  Mesh mesh;
  DiscreteSystem sys;
  Factorized fac;
  ScatteringSolution sol;
};

PrimalCli solve_primal_cli(RunContextCli& rc, double omega, double kappa) {
  BlochContext ctx(omega, kappa, rc.cfg.eps0, rc.cfg.tau0, rc.cfg.effective_m_max());
  Mesh mesh = build_mesh(rc.cfg.geom, ctx.kappa);
  DiscreteSystem sys = assemble(mesh, rc.cfg.build_field(), ctx);
  Factorized fac(sys.A);
  ScatteringSolution sol = solve_with(sys, fac, rc.cfg.incident,
                                      incident_rhs(mesh, ctx, rc.cfg.incident), solve_options(rc.cfg));
  for (const std::string& w : sol.warnings) rc.warnings.push_back(w);
  rc.balance_defects.push_back(sol.balance_defect);
  return PrimalCli{ctx, mesh, std::move(sys), std::move(fac), std::move(sol)};
}

int cmd_grad(RunContextCli& rc) {
  PrimalCli p = solve_primal_cli(rc, rc.cfg.omegas.at(0), rc.cfg.kappas.at(0));
  GradientField g = gradient_energy_discrete(p.sys, p.fac, p.sol);

  std::ofstream f = open_out(rc, "grad.csv");
  f << "# slabscat-grad nx=" << rc.cfg.geom.nx << " nz=" << rc.cfg.geom.nz << "\n";
  f << "i,j,g_eps,g_tau\n";
  for (int j = 0; j < rc.cfg.geom.nz; ++j)
    for (int i = 0; i < rc.cfg.geom.nx; ++i) {
      int c = rc.cfg.geom.cell_index(i, j);
      f << i << "," << j << "," << num17(g.g_eps(c)) << "," << num17(g.g_tau(c)) << "\n";
    }

  if (!rc.cfg.inclusions.empty()) {
    auto per_inc = gradient_homogeneous(g, rc.cfg.geom, rc.cfg.inclusions);
    std::ofstream fi = open_out(rc, "grad_inclusions.csv");
    csv_banner(fi, "grad-inclusions");
    fi << "id,d_eps,d_tau,cells\n";
    for (const auto& ig : per_inc)
      fi << ig.id << "," << num17(ig.d_eps) << "," << num17(ig.d_tau) << "," << ig.cells << "\n";
  }
  return 0;
}

int cmd_linearize(RunContextCli& rc) {
  PrimalCli p = solve_primal_cli(rc, rc.cfg.omegas.at(0), rc.cfg.kappas.at(0));
  Eigen::ArrayXd de = realize_direction(rc.cfg.sensitivity.dir_eps, rc.cfg.geom);
  Eigen::ArrayXd dt = rc.cfg.sensitivity.tau_direction
                          ? realize_direction(rc.cfg.sensitivity.dir_tau, rc.cfg.geom)
                          : Eigen::ArrayXd::Zero(rc.cfg.geom.n_cells()).eval();
  LinearizedField lf = solve_linearized(p.sys, p.fac, p.sol.u, de, dt);

  std::ofstream f = open_out(rc, "linearized.csv");
  csv_banner(f, "linearized-field");
  f << "i,j,re,im\n";
  for (int j = 0; j <= rc.cfg.geom.nz; ++j)
    for (int i = 0; i < rc.cfg.geom.nx; ++i) {
      cplx v = lf.u0_breve(p.mesh.dof(i, j));
      f << i << "," << j << "," << num17(v.real()) << "," << num17(v.imag()) << "\n";
    }

  nlohmann::json j;
  j["h1_norm"] = h1_norm(p.mesh, lf.u0_breve);
  double res = 0.0;
  for (Side side : {Side::gamma_minus, Side::gamma_plus}) {
    TraceVector tr = boundary_fourier(p.sys, lf.u0_breve, side);
    TraceVector dn = apply_dtn(p.ctx, tr, DtnVariant::full);
    dn.coeffs = -dn.coeffs;
    res = std::max(res, outgoing_residual(p.ctx, tr, dn));
  }
  j["outgoing_residual"] = res;
  std::ofstream js = open_out(rc, "linearize.json");
  js << j.dump(2) << "\n";
  return 0;
}

int cmd_modes(RunContextCli& rc) {
  ModeProblem mp{rc.cfg.geom, rc.cfg.build_field(), rc.cfg.eps0, rc.cfg.tau0, rc.cfg.kappas.at(0),
                 rc.cfg.effective_m_max()};
  bool kappa_sweep = rc.cfg.kappas.size() > 1;
  std::ofstream f = open_out(rc, "modes.csv");
  csv_banner(f, "modes");
  if (kappa_sweep) f << "kappa,";
  f << "j,omega_j,guided,max_prop_trace\n";
  for (double kappa : rc.cfg.kappas) {
    mp.kappa = kappa;
    EigenSequence seq = compute_modes(mp, rc.cfg.eigen.count, rc.cfg.eigen.window_lo,
                                      rc.cfg.eigen.window_hi, rc.cfg.eigen.samples,
                                      rc.cfg.eigen.guided_threshold);
    for (const ModeEntry& e : seq.modes) {
      if (kappa_sweep) f << num17(kappa) << ",";
      f << e.j << "," << num17(e.omega) << "," << (e.guided ? 1 : 0) << ","
        << num17(e.max_prop_trace) << "\n";
    }
    if (static_cast<int>(seq.modes.size()) < rc.cfg.eigen.count)
      rc.warnings.push_back("kappa=" + num17(kappa) + ": only " +
                            std::to_string(seq.modes.size()) + " of " +
                            std::to_string(rc.cfg.eigen.count) + " modes inside the window");
  }
  return 0;
}

int cmd_certify(RunContextCli& rc) {
  const CertifySpec& cs = rc.cfg.certify;
  AdmissibleEnvelope env;
  if (cs.around_structure) {
    CoefficientField f = rc.cfg.build_field();
    env.nx = f.nx;
    env.nz = f.nz;
    env.eps_lo = (f.eps - cs.eps_margin).max(1e-6);
    env.eps_hi = f.eps + cs.eps_margin;
    env.tau_lo = (f.tau - cs.tau_margin).max(1e-6);
    env.tau_hi = f.tau + cs.tau_margin;
  } else {
    env = AdmissibleEnvelope::uniform(rc.cfg.geom, cs.eps_lo, cs.eps_hi, cs.tau_lo, cs.tau_hi);
  }
  Certificate cert = check_nonresonance(rc.cfg.geom, env, rc.cfg.eps0, rc.cfg.tau0,
                                        rc.cfg.kappas.at(0), rc.cfg.effective_m_max(), cs.j,
                                        cs.omega_lo, cs.omega_hi, cs.scan_lo, cs.scan_hi,
                                        cs.samples);
  nlohmann::json j;
  j["ok"] = cert.ok;
  j["j"] = cert.j;
  j["omega_j_eps_lo_tau_hi"] = cert.omega_j_lo_hi;
  j["omega_j1_eps_hi_tau_lo"] = cert.omega_j1_hi_lo;
  j["certified_lo"] = cert.lo;
  j["certified_hi"] = cert.hi;
  j["message"] = cert.message;
  std::ofstream f = open_out(rc, "certify.json");
  f << j.dump(2) << "\n";
  if (!cert.ok) {
    std::cerr << "certify: refusal: " << cert.message << "\n";
    return 2;
  }
  return 0;
}

int cmd_optimize(RunContextCli& rc) {
  const DesignSpec& d = rc.cfg.design;
  DesignProblem prob;
  prob.objective = d.objective == "maximize"  ? Objective::maximize
                   : d.objective == "minimize" ? Objective::minimize
                                               : Objective::match_spectrum;
  prob.omegas = rc.cfg.omegas;
  prob.targets = d.targets;
  prob.kappa = rc.cfg.kappas.at(0);
  prob.eps0 = rc.cfg.eps0;
  prob.tau0 = rc.cfg.tau0;
  prob.m_max = rc.cfg.effective_m_max();
  prob.incident = rc.cfg.incident;
  prob.envelope = AdmissibleEnvelope::uniform(rc.cfg.geom, d.env_eps_lo, d.env_eps_hi,
                                              d.env_tau_lo, d.env_tau_hi);
  prob.step = d.step;
  prob.max_iters = d.max_iters;
  prob.tolerance = d.tolerance;
  prob.optimize_tau = d.optimize_tau;
  prob.threads = rc.cfg.solver.threads;
  prob.design_mask = Eigen::ArrayXd::Ones(rc.cfg.geom.n_cells());
  if (!d.region_all) {
    prob.design_mask.setZero();
    for (int j = 0; j < rc.cfg.geom.nz; ++j)
      for (int i = 0; i < rc.cfg.geom.nx; ++i) {
        double x = rc.cfg.geom.cell_center_x1(i), z = rc.cfg.geom.cell_center_x3(j);
        if (x >= d.region[0] && z >= d.region[1] && x <= d.region[2] && z <= d.region[3])
          prob.design_mask(rc.cfg.geom.cell_index(i, j)) = 1.0;
      }
  }

  CoefficientField init = project(rc.cfg.build_field(), prob.envelope);
  OptResult res = run_design(rc.cfg.geom, prob, init);

  std::ofstream f = open_out(rc, "history.csv");
  csv_banner(f, "optimize-history");
  f << "iter,objective,step,grad_norm,balance_defect_max\n";
  for (const OptRow& row : res.history) {
    f << row.iter << "," << num17(row.objective) << "," << num17(row.step) << ","
      << num17(row.grad_norm) << "," << num17(row.balance_defect_max) << "\n";
    rc.balance_defects.push_back(row.balance_defect_max);
  }
  write_raster_file((rc.outdir / "design_eps.csv").string(), res.final_field.eps, rc.cfg.geom.nx,
                    rc.cfg.geom.nz, "eps");
  write_raster_file((rc.outdir / "design_tau.csv").string(), res.final_field.tau, rc.cfg.geom.nx,
                    rc.cfg.geom.nz, "tau");
  rc.warnings.push_back("optimize stop: " + res.stop_reason);
  return 0;
}

int cmd_fdcheck(RunContextCli& rc) {
  FdProblem p{rc.cfg.geom,
              rc.cfg.build_field(),
              rc.cfg.omegas.at(0),
              rc.cfg.kappas.at(0),
              rc.cfg.eps0,
              rc.cfg.tau0,
              rc.cfg.effective_m_max(),
              rc.cfg.incident};
  Eigen::ArrayXd de = realize_direction(rc.cfg.sensitivity.dir_eps, rc.cfg.geom);
  Eigen::ArrayXd dt = rc.cfg.sensitivity.tau_direction
                          ? realize_direction(rc.cfg.sensitivity.dir_tau, rc.cfg.geom)
                          : Eigen::ArrayXd::Zero(rc.cfg.geom.n_cells()).eval();
  Functional fn =
      rc.cfg.sensitivity.functional == "energy" ? Functional::energy : Functional::order;
  FdReport rep = fd_check(p, de, dt, fn, rc.cfg.sensitivity.order, rc.cfg.sensitivity.steps);

  nlohmann::json j;
  j["steps"] = rep.steps;
  nlohmann::json vals = nlohmann::json::array();
  for (cplx v : rep.fd_values) vals.push_back({v.real(), v.imag()});
  j["fd_values"] = vals;
  j["extrapolated"] = {rep.extrapolated.real(), rep.extrapolated.imag()};
  j["adjoint_value"] = {rep.adjoint_value.real(), rep.adjoint_value.imag()};
  j["rel_error"] = rep.rel_error;
  j["fitted_order"] = rep.fitted_order;
  std::ofstream f = open_out(rc, "fdcheck.json");
  f << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slabscat: periodic-slab Helmholtz scattering, adjoint sensitivities and "
               "guided-mode certificates"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  int threads_override = 0;
  long long seed_override = -1;
  bool orders_flag = false;

  for (const char* name : {"solve", "sweep", "grad", "linearize", "modes", "certify", "optimize",
                           "fdcheck"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--threads", threads_override, "worker threads (overrides config)");
    sub->add_option("--seed", seed_override, "seed override for random directions");
    sub->add_option("--out", out_override, "output directory override");
    sub->add_flag("--orders", orders_flag, "emit per-order amplitude columns");
  }

  CLI11_PARSE(app, argc, argv);

  RunContextCli rc;
  rc.subcommand = app.get_subcommands().at(0)->get_name();
  try {
    rc.cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration invalid:\n";
    for (const std::string& v : e.violations) std::cerr << "  - " << v << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  {
    std::ifstream f(config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    rc.config_dump = ss.str();
  }
  if (threads_override > 0) rc.cfg.solver.threads = threads_override;
  else if (const char* env = std::getenv("SLABSCAT_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) rc.cfg.solver.threads = t;
  }
  if (seed_override >= 0) {
    rc.cfg.seed = static_cast<std::uint64_t>(seed_override);
    rc.cfg.sensitivity.dir_eps.seed = rc.cfg.seed;
    rc.cfg.sensitivity.dir_tau.seed = rc.cfg.seed + 1;
  }
  if (!out_override.empty()) rc.cfg.output.directory = out_override;
  if (orders_flag) rc.cfg.output.orders = true;
  rc.outdir = rc.cfg.output.directory;
  rc.warnings = rc.cfg.warnings;

  int code = 1;
  try {
    if (rc.subcommand == "solve" || rc.subcommand == "sweep") code = cmd_solve_or_sweep(rc);
    else if (rc.subcommand == "grad") code = cmd_grad(rc);
    else if (rc.subcommand == "linearize") code = cmd_linearize(rc);
    else if (rc.subcommand == "modes") code = cmd_modes(rc);
    else if (rc.subcommand == "certify") code = cmd_certify(rc);
    else if (rc.subcommand == "optimize") code = cmd_optimize(rc);
    else if (rc.subcommand == "fdcheck") code = cmd_fdcheck(rc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    rc.warnings.push_back(std::string("fatal: ") + e.what());
    code = 1;
  }
  try {
    fs::create_directories(rc.outdir);
    write_run_json(rc, code);
  } catch (const std::exception& e) {
    std::cerr << "error writing run.json: " << e.what() << "\n";
    if (code == 0) code = 1;
  }
  for (const std::string& w : rc.warnings) std::cerr << "warning: " << w << "\n";
  return code;
}
