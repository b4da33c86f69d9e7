#pragma once
// Projected-gradient design loop on the cellwise coefficients, driven by the
// discrete adjoint gradient of the transmitted efficiency. Plain backtracking
// (halve until the objective improves), box projection onto the admissible
// envelope, eps-only by default.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slabscat/modes.hpp"
#include "slabscat/sensitivity.hpp"

namespace slabscat {

enum class Objective { maximize, minimize, match_spectrum };

struct DesignProblem {
  Objective objective = Objective::maximize;
  std::vector<double> omegas;   // sweep frequencies entering the objective
  std::vector<double> targets;  // per-omega targets for match_spectrum
  double kappa = 0.0;
  double eps0 = 1.0, tau0 = 1.0;
  int m_max = 1;
  IncidentWave incident = IncidentWave::plane_from_left();
  Eigen::ArrayXd design_mask;  // 1 inside the design region
  AdmissibleEnvelope envelope;
  double step = 0.1;  // initial coefficient move, infinity norm
  int max_iters = 100;
  double tolerance = 1e-9;
  bool optimize_tau = false;
  int threads = 1;
};

inline CoefficientField project(const CoefficientField& f, const AdmissibleEnvelope& env) {
  if (f.nx != env.nx || f.nz != env.nz) throw std::invalid_argument("project: grid mismatch");
  CoefficientField out = f;
  out.eps = out.eps.max(env.eps_lo).min(env.eps_hi);
  out.tau = out.tau.max(env.tau_lo).min(env.tau_hi);
  return out;
}

struct OptRow {
  int iter = 0;
  double objective = 0.0;
  double step = 0.0;
  double grad_norm = 0.0;
  double balance_defect_max = 0.0;
};

struct OptResult {
  std::vector<OptRow> history;
  CoefficientField final_field;
  bool converged = false;
  std::string stop_reason;
};

namespace detail {

struct ObjectiveEval {
  double value = 0.0;
  double balance_defect_max = 0.0;
  Eigen::ArrayXd grad_eps, grad_tau;  // of the signed objective, per cell
};

// Signed objective: always ascend. maximize -> sum T; minimize -> -sum T;
// match_spectrum -> -sum (T - target)^2.
inline ObjectiveEval evaluate_design(const CellGeometry& geom, const CoefficientField& field,
                                     const DesignProblem& prob, bool with_gradient) {
  ObjectiveEval ev;
  int ncell = geom.n_cells();
  ev.grad_eps = Eigen::ArrayXd::Zero(ncell);
  ev.grad_tau = Eigen::ArrayXd::Zero(ncell);
  double area = geom.cell_area();

  struct PointOut {
    double value = 0.0, defect = 0.0;
    Eigen::ArrayXd ge, gt;
  };
  std::vector<PointOut> outs(prob.omegas.size());

  parallel_for(static_cast<int>(prob.omegas.size()), prob.threads, [&](int idx) {
    double om = prob.omegas[idx];
    BlochContext ctx(om, prob.kappa, prob.eps0, prob.tau0, prob.m_max);
    Mesh mesh = build_mesh(geom, ctx.kappa);
    DiscreteSystem sys = assemble(mesh, field, ctx);
    Factorized fac(sys.A);
    ScatteringSolution sol = solve_with(sys, fac, prob.incident,
                                        incident_rhs(mesh, ctx, prob.incident),
                                        SolveOptions{1e-8, false, 1e12});
    if (sol.incident_flux <= 0.0)
      throw std::runtime_error("optimize: no incident flux at omega = " + num17(om));
    double T = sol.energy_transmitted / sol.incident_flux;
    PointOut& po = outs[idx];
    po.defect = std::abs(sol.balance_defect) / sol.incident_flux;

    double chain = 0.0;  // d(signed objective)/dT
    switch (prob.objective) {
      case Objective::maximize:
        po.value = T;
        chain = 1.0;
        break;
      case Objective::minimize:
        po.value = -T;
        chain = -1.0;
        break;
      case Objective::match_spectrum: {
        double target = prob.targets.at(idx);
        po.value = -(T - target) * (T - target);
        chain = -2.0 * (T - target);
        break;
      }
    }
    if (with_gradient) {
      GradientField g = gradient_energy_discrete(sys, fac, sol);
      po.ge = (chain / sol.incident_flux) * g.g_eps * area;
      po.gt = (chain / sol.incident_flux) * g.g_tau * area;
    }
  });

  for (const PointOut& po : outs) {
    ev.value += po.value;
    ev.balance_defect_max = std::max(ev.balance_defect_max, po.defect);
    if (with_gradient && po.ge.size() > 0) {
      ev.grad_eps += po.ge;
      ev.grad_tau += po.gt;
    }
  }
  return ev;
}

}  // namespace detail

inline OptResult run_design(const CellGeometry& geom, const DesignProblem& prob,
                            const CoefficientField& initial) {
  if (prob.design_mask.size() != geom.n_cells())
    throw std::invalid_argument("run_design: design mask size mismatch");
  if ((prob.design_mask != 0.0).count() == 0)
    throw std::invalid_argument("run_design: empty design region");
  if (prob.objective == Objective::match_spectrum && prob.targets.size() != prob.omegas.size())
    throw std::invalid_argument("run_design: targets must match the omega sweep");
  if (!check_admissible(initial, prob.envelope).ok)
    throw std::invalid_argument("run_design: initial field is not admissible");

  OptResult res;
  res.final_field = initial;
  CoefficientField x = initial;
  detail::ObjectiveEval cur = detail::evaluate_design(geom, x, prob, true);
  double mult = 0.0;  // gradient multiplier; prob.step fixes the first move's infinity norm
  double last_gnorm = 0.0;

  for (int it = 0; it < prob.max_iters; ++it) {
    Eigen::ArrayXd ge = cur.grad_eps * prob.design_mask;
    Eigen::ArrayXd gt = prob.optimize_tau ? (cur.grad_tau * prob.design_mask).eval()
                                          : Eigen::ArrayXd::Zero(geom.n_cells()).eval();
    double gnorm = std::sqrt((ge * ge).sum() + (gt * gt).sum());
    double ginf = std::max(ge.abs().maxCoeff(), gt.abs().maxCoeff());
    last_gnorm = gnorm;

    if (gnorm <= prob.tolerance) {
      res.history.push_back({it, cur.value, 0.0, gnorm, cur.balance_defect_max});
      res.converged = true;
      res.stop_reason = "gradient norm below tolerance";
      break;
    }
    mult = (it == 0) ? prob.step / ginf : 2.0 * mult;
    double obj_start = cur.value, defect_start = cur.balance_defect_max;

    // backtracking ascent step
    bool accepted = false;
    while (mult * ginf >= 1e-12) {
      CoefficientField cand = x;
      cand.eps += mult * ge;
      cand.tau += mult * gt;
      cand = project(cand, prob.envelope);
      if (!check_admissible(cand, prob.envelope).ok) {
        res.history.push_back({it, obj_start, mult, gnorm, defect_start});
        res.stop_reason = "projected iterate left the envelope";
        res.final_field = x;
        return res;
      }
      detail::ObjectiveEval trial = detail::evaluate_design(geom, cand, prob, false);
      if (trial.value > obj_start) {
        x = cand;
        cur = detail::evaluate_design(geom, x, prob, true);
        accepted = true;
        break;
      }
      mult *= 0.5;
    }
    res.history.push_back({it, obj_start, mult, gnorm, defect_start});
    if (!accepted) {
      res.converged = true;
      res.stop_reason = "no ascent direction above step floor";
      break;
    }
  }
  if (res.stop_reason.empty()) {
    res.stop_reason = "max iterations";
    res.history.push_back({prob.max_iters, cur.value, mult, last_gnorm, cur.balance_defect_max});
  }
  res.final_field = x;
  return res;
}

}  // namespace slabscat
