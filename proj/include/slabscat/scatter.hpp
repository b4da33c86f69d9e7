#pragma once
// Direct solution of the discrete scattering problem, extraction of the
// diffraction-order amplitudes from boundary DFTs, per-order efficiencies,
// transmitted energy E = tau0 * sum_{m in Z_p} eta_m |b_m|^2 and the
// lossless energy-balance defect.
//
// Amplitudes follow the plane-wave conventions
//   x3 <= z-:  u = sum a_inc_m e^{+i eta x3} e^{i(m+k)x1} + sum a_m e^{-i eta x3} e^{i(m+k)x1}
//   x3 >= z+:  u = sum b_inc_m e^{-i eta x3} e^{i(m+k)x1} + sum b_m e^{+i eta x3} e^{i(m+k)x1}
// so a_m, b_m are amplitudes referred to the x3 = 0 plane.

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "slabscat/assembly.hpp"
#include "slabscat/format.hpp"

namespace slabscat {

struct SolveOptions {
  double residual_tol = 1e-10;
  bool estimate_condition = true;
  double condition_warn = 1e12;
};

class Factorized {
 public:
  explicit Factorized(const SpMat& a) : a_(a), lu_(std::make_unique<Eigen::SparseLU<SpMat>>()) {
    lu_->compute(a_);
    ok_ = (lu_->info() == Eigen::Success);
  }
  bool ok() const { return ok_; }
  const SpMat& matrix() const { return a_; }
  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const { return lu_->solve(b); }
  Eigen::VectorXcd solve_transpose(const Eigen::VectorXcd& b) const {
    return lu_->transpose().solve(b);
  }
  Eigen::VectorXcd solve_adjoint(const Eigen::VectorXcd& b) const { return lu_->adjoint().solve(b); }

 private:
  SpMat a_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;  // SparseLU itself is not movable
  bool ok_ = false;
};

// Two-norm condition estimate: power iteration for sigma_max(A), inverse
// iteration through the factorization for sigma_min(A). Deterministic start.
inline double condition_estimate(const Factorized& f, int iters = 8) {
  const SpMat& a = f.matrix();
  Eigen::Index n = a.rows();
  Eigen::VectorXcd v = Eigen::VectorXcd::Ones(n).normalized();
  double smax = 0.0;
  for (int it = 0; it < iters; ++it) {
    v = a.adjoint() * (a * v);
    smax = std::sqrt(v.norm());
    v.normalize();
  }
  Eigen::VectorXcd w = Eigen::VectorXcd::Ones(n).normalized();
  double inv_smin = 0.0;
  for (int it = 0; it < iters; ++it) {
    w = f.solve_adjoint(f.solve(w));
    inv_smin = std::sqrt(w.norm());
    if (!std::isfinite(inv_smin)) return std::numeric_limits<double>::infinity();
    w.normalize();
  }
  return smax * inv_smin;
}

// Boundary DFT of nodal values: u_hat_m = (1/nx) sum_k u(x_k) e^{-i(m+kappa)x_k}.
inline TraceVector boundary_fourier(const DiscreteSystem& sys, const Eigen::VectorXcd& u,
                                    Side side) {
  const Mesh& mesh = sys.mesh;
  TraceVector t(side, sys.ctx.m_max);
  for (int m = -sys.ctx.m_max; m <= sys.ctx.m_max; ++m) {
    cplx acc = 0.0;
    const auto row = sys.bdry_phasor.row(m + sys.ctx.m_max);
    for (int k = 0; k < mesh.nx; ++k) acc += u(mesh.boundary_dof(side, k)) * std::conj(row(k));
    t.at(m) = acc / static_cast<double>(mesh.nx);
  }
  return t;
}

struct ScatteringSolution {
  Eigen::VectorXcd u;
  TraceVector a, b;  // outgoing amplitudes at the x3 = 0 reference plane
  double incident_flux = 0.0;
  double energy_reflected = 0.0;
  double energy_transmitted = 0.0;
  double balance_defect = 0.0;
  double residual = 0.0;
  double condition = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

namespace detail {

inline cplx incident_coeff(const std::vector<std::pair<int, cplx>>& list, int m) {
  cplx s = 0.0;
  for (const auto& [mm, amp] : list)
    if (mm == m) s += amp;
  return s;
}

inline void extract_amplitudes(const DiscreteSystem& sys, const IncidentWave& inc,
                               ScatteringSolution& sol) {
  const BlochContext& ctx = sys.ctx;
  const cplx i_unit(0.0, 1.0);
  TraceVector tm = boundary_fourier(sys, sol.u, Side::gamma_minus);
  TraceVector tp = boundary_fourier(sys, sol.u, Side::gamma_plus);
  sol.a = TraceVector(Side::gamma_minus, ctx.m_max);
  sol.b = TraceVector(Side::gamma_plus, ctx.m_max);
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) {
    const Harmonic& h = sys.harmonic(m);
    cplx ainc = incident_coeff(inc.a, m);
    cplx binc = incident_coeff(inc.b, m);
    // subtract the incident trace in Fourier space, then refer to x3 = 0
    cplx out_minus = tm.at(m) - ainc * std::exp(i_unit * h.eta * sys.mesh.geom.z_minus);
    cplx out_plus = tp.at(m) - binc * std::exp(-i_unit * h.eta * sys.mesh.geom.z_plus);
    sol.a.at(m) = out_minus * std::exp(i_unit * h.eta * sys.mesh.geom.z_minus);
    sol.b.at(m) = out_plus * std::exp(-i_unit * h.eta * sys.mesh.geom.z_plus);
  }
}

inline void fill_energies(const DiscreteSystem& sys, const IncidentWave& inc,
                          ScatteringSolution& sol) {
  const BlochContext& ctx = sys.ctx;
  double in = 0.0, refl = 0.0, trans = 0.0;
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) {
    const Harmonic& h = sys.harmonic(m);
    if (h.cls != HarmonicClass::propagating) continue;
    double eta = h.eta.real();
    in += eta * (std::norm(detail::incident_coeff(inc.a, m)) +
                 std::norm(detail::incident_coeff(inc.b, m)));
    refl += eta * std::norm(sol.a.at(m));
    trans += eta * std::norm(sol.b.at(m));
  }
  sol.incident_flux = ctx.tau0 * in;
  sol.energy_reflected = ctx.tau0 * refl;
  sol.energy_transmitted = ctx.tau0 * trans;
  sol.balance_defect = (sol.energy_reflected + sol.energy_transmitted) - sol.incident_flux;
}

}  // namespace detail

// Solve with an already-computed factorization (reused across right-hand sides).
inline ScatteringSolution solve_with(const DiscreteSystem& sys, const Factorized& fac,
                                     const IncidentWave& inc, const Eigen::VectorXcd& rhs,
                                     const SolveOptions& opts = {}) {
  if (!fac.ok()) throw std::runtime_error("solve: factorization failed (singular system; resonance?)");
  ScatteringSolution sol;
  sol.u = fac.solve(rhs);
  double fn = rhs.norm();
  sol.residual = (sys.A * sol.u - rhs).norm() / (fn > 0.0 ? fn : 1.0);
  if (sys.linear_order_present)
    sol.warnings.push_back("linear harmonic at exact cutoff: outgoing condition is degenerate there");
  if (opts.estimate_condition) {
    sol.condition = condition_estimate(fac);
    if (sol.condition > opts.condition_warn)
      sol.warnings.push_back("condition estimate " + num17(sol.condition) +
                             " exceeds threshold: parameters are close to a guided-mode resonance "
                             "(non-resonance condition violated or nearly so)");
  }
  if (sol.residual > opts.residual_tol)
    sol.warnings.push_back("solve residual " + num17(sol.residual) + " above tolerance " +
                           num17(opts.residual_tol));
  detail::extract_amplitudes(sys, inc, sol);
  detail::fill_energies(sys, inc, sol);
  return sol;
}

inline ScatteringSolution solve_scattering(const DiscreteSystem& sys, const IncidentWave& inc,
                                           const SolveOptions& opts = {}) {
  Factorized fac(sys.A);
  return solve_with(sys, fac, inc, incident_rhs(sys.mesh, sys.ctx, inc), opts);
}

inline ScatteringSolution solve_general(const DiscreteSystem& sys, const IncidentWave& inc,
                                        const SourceTerm& src, const SolveOptions& opts = {}) {
  Factorized fac(sys.A);
  Eigen::VectorXcd rhs = incident_rhs(sys.mesh, sys.ctx, inc) + volume_source_rhs(sys.mesh, src);
  return solve_with(sys, fac, inc, rhs, opts);
}

// E = tau0 sum_{m in Z_p} eta_m |b_m|^2, recomputed from the stored amplitudes.
inline double transmitted_energy(const ScatteringSolution& sol, const BlochContext& ctx) {
  double s = 0.0;
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) {
    Harmonic h = eta_of(ctx, m);
    if (h.cls == HarmonicClass::propagating) s += h.eta.real() * std::norm(sol.b.at(m));
  }
  return ctx.tau0 * s;
}

// Signed defect (reflected + transmitted) - incident flux; ~0 for lossless
// admissible structures.
inline double energy_balance(const ScatteringSolution& sol, const BlochContext& /*ctx*/) {
  return sol.balance_defect;
}

struct SweepRow {
  double omega = 0.0, kappa = 0.0;
  bool ok = false;
  std::string error;
  double incident_flux = 0.0, reflected_flux = 0.0, transmitted_flux = 0.0;
  double balance_defect = 0.0, residual = 0.0;
  std::vector<cplx> a_orders, b_orders;  // |m| <= m_max when requested
};

struct SweepRequest {
  CellGeometry geom;
  CoefficientField field;
  double eps0 = 1.0, tau0 = 1.0;
  int m_max = 1;
  IncidentWave incident;  // orders outside Z_p at a sweep point are dropped there
  std::vector<double> omegas;
  std::vector<double> kappas;
  bool keep_orders = false;
  int threads = 1;
};

inline std::vector<SweepRow> sweep(const SweepRequest& req, const SolveOptions& opts = {}) {
  std::vector<std::pair<double, double>> points;
  for (double om : req.omegas)
    for (double ka : req.kappas) points.push_back({om, ka});
  std::vector<SweepRow> rows(points.size());

  parallel_for(static_cast<int>(points.size()), req.threads, [&](int idx) {
    auto [om, ka] = points[idx];
    SweepRow& row = rows[idx];
    row.omega = om;
    row.kappa = ka;
    try {
      BlochContext ctx(om, ka, req.eps0, req.tau0, req.m_max);
      Mesh mesh = build_mesh(req.geom, ctx.kappa);
      DiscreteSystem sys = assemble(mesh, req.field, ctx);
      // keep only orders that propagate at this sweep point
      IncidentWave inc;
      for (const auto& [m, amp] : req.incident.a)
        if (eta_of(ctx, m).cls == HarmonicClass::propagating) inc.a.push_back({m, amp});
      for (const auto& [m, amp] : req.incident.b)
        if (eta_of(ctx, m).cls == HarmonicClass::propagating) inc.b.push_back({m, amp});
      ScatteringSolution sol = solve_scattering(sys, inc, opts);
      row.ok = true;
      row.incident_flux = sol.incident_flux;
      row.reflected_flux = sol.energy_reflected;
      row.transmitted_flux = sol.energy_transmitted;
      row.balance_defect = sol.balance_defect;
      row.residual = sol.residual;
      if (req.keep_orders) {
        for (int m = -ctx.m_max; m <= ctx.m_max; ++m) {
          row.a_orders.push_back(sol.a.at(m));
          row.b_orders.push_back(sol.b.at(m));
        }
      }
    } catch (const std::exception& ex) {
      row.ok = false;
      row.error = ex.what();
    }
  });
  return rows;
}

}  // namespace slabscat
