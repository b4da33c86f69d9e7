#pragma once
// Discretization of the weak form
//
//   int_Omega ( tau grad u . grad conj(v) - omega^2 eps u conj(v) )
//     + tau0 int_Gamma (T u) conj(v)  =  f_Gamma(v) + int_Omega ( xi . grad conj(v) + h conj(v) )
//
// on the structured pseudoperiodic Q1 mesh. The DtN term is assembled as a
// dense block on each boundary through the unitary boundary DFT with lumped
// weight 2*pi/nx; the incident forcing uses the same quadrature, which is
// what makes the discrete energy balance exact to solver precision.
//
// Assembled objects:
//   A   = K + D_full - omega^2 B   (full complex system)
//   A_r = K + D_r                  (Hermitian part, stiffness + evanescent DtN)
//   B   = eps-weighted mass        (Hermitian positive definite)
//
// Bloch phases are folded into wrapped element entries, so A(kappa)^T equals
// A(-kappa) exactly; the sensitivity module leans on that identity.

#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "slabscat/harmonics.hpp"
#include "slabscat/mesh.hpp"
#include "slabscat/structure.hpp"

namespace slabscat {

using SpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

// Two-sided incident data: coefficients on propagating orders only.
struct IncidentWave {
  std::vector<std::pair<int, cplx>> a;  // from the left, e^{+i eta x3}
  std::vector<std::pair<int, cplx>> b;  // from the right, e^{-i eta x3}

  static IncidentWave plane_from_left(cplx amp = 1.0, int m = 0) {
    IncidentWave w;
    w.a.push_back({m, amp});
    return w;
  }
};

struct DiscreteSystem {
  Mesh mesh;
  BlochContext ctx;
  CoefficientField field;
  std::vector<Harmonic> harmonics;     // |m| <= m_max
  Eigen::MatrixXcd bdry_phasor;        // (2*m_max+1) x nx, E(m,k) = e^{i(m+kappa) x_k}
  SpMat A, A_r, B;
  bool linear_order_present = false;

  DiscreteSystem(const Mesh& m, const BlochContext& c, const CoefficientField& f)
      : mesh(m), ctx(c), field(f) {}

  const Harmonic& harmonic(int m) const { return harmonics[m + ctx.m_max]; }
};

inline Eigen::MatrixXcd boundary_phasors(const Mesh& mesh, const BlochContext& ctx) {
  Eigen::MatrixXcd e(ctx.n_orders(), mesh.nx);
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m)
    for (int k = 0; k < mesh.nx; ++k)
      e(m + ctx.m_max, k) = std::exp(cplx(0.0, (m + ctx.kappa) * mesh.node_x1(k)));
  return e;
}

inline DiscreteSystem assemble(const Mesh& mesh, const CoefficientField& field,
                               const BlochContext& ctx) {
  if (field.nx != mesh.nx || field.nz != mesh.nz)
    throw std::invalid_argument("assemble: coefficient grid does not match mesh");
  if (ctx.m_max > mesh.nx / 2 - 1)
    throw std::invalid_argument("assemble: m_max must be <= nx/2 - 1 (boundary DFT aliasing)");
  if (std::abs(BlochContext::reduce_kappa(mesh.kappa) - ctx.kappa) > 1e-14)
    throw std::invalid_argument("assemble: mesh and context disagree on kappa");

  DiscreteSystem sys(mesh, ctx, field);
  sys.harmonics = classify_orders(ctx);
  sys.bdry_phasor = boundary_phasors(mesh, ctx);
  for (const Harmonic& h : sys.harmonics)
    if (h.cls == HarmonicClass::linear) sys.linear_order_present = true;

  const int n = mesh.n_dofs();
  const double w2 = ctx.omega * ctx.omega;
  const Eigen::Matrix4d ks = q1_stiffness(mesh.h1, mesh.h3);
  const Eigen::Matrix4d ms = q1_mass(mesh.h1, mesh.h3);

  std::vector<Triplet> ta, tr, tb;
  ta.reserve(16 * mesh.nx * mesh.nz + 2 * mesh.nx * mesh.nx);
  tr.reserve(16 * mesh.nx * mesh.nz + 2 * mesh.nx * mesh.nx);
  tb.reserve(16 * mesh.nx * mesh.nz);

  for (int j = 0; j < mesh.nz; ++j) {
    for (int i = 0; i < mesh.nx; ++i) {
      int c = field.nx * j + i;
      double ec = field.eps(c), tc = field.tau(c);
      Mesh::ElemDofs e = mesh.elem_dofs(i, j);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          cplx ph = std::conj(e.phase[a]) * e.phase[b];
          cplx kab = ph * (tc * ks(a, b));
          cplx mab = ph * (ec * ms(a, b));
          ta.emplace_back(e.idx[a], e.idx[b], kab - w2 * mab);
          tr.emplace_back(e.idx[a], e.idx[b], kab);
          tb.emplace_back(e.idx[a], e.idx[b], mab);
        }
      }
    }
  }

  // DtN blocks: D[j,k] = tau0 * (2*pi/nx) * (1/nx) * sum_m mu_m E(m,j) conj(E(m,k)).
  const double cw = ctx.tau0 * two_pi / (static_cast<double>(mesh.nx) * mesh.nx);
  const cplx i_unit(0.0, 1.0);
  for (Side side : {Side::gamma_minus, Side::gamma_plus}) {
    Eigen::MatrixXcd d_full = Eigen::MatrixXcd::Zero(mesh.nx, mesh.nx);
    Eigen::MatrixXcd d_r = Eigen::MatrixXcd::Zero(mesh.nx, mesh.nx);
    for (const Harmonic& h : sys.harmonics) {
      cplx mu = -i_unit * h.eta;
      const auto row = sys.bdry_phasor.row(h.m + ctx.m_max);
      for (int jn = 0; jn < mesh.nx; ++jn) {
        for (int kn = 0; kn < mesh.nx; ++kn) {
          cplx pat = row(jn) * std::conj(row(kn));
          d_full(jn, kn) += mu * pat;
          if (h.cls == HarmonicClass::evanescent) d_r(jn, kn) += mu.real() * pat;
        }
      }
    }
    for (int jn = 0; jn < mesh.nx; ++jn) {
      int rj = mesh.boundary_dof(side, jn);
      for (int kn = 0; kn < mesh.nx; ++kn) {
        int rk = mesh.boundary_dof(side, kn);
        ta.emplace_back(rj, rk, cw * d_full(jn, kn));
        tr.emplace_back(rj, rk, cw * d_r(jn, kn));
      }
    }
  }

  sys.A.resize(n, n);
  sys.A_r.resize(n, n);
  sys.B.resize(n, n);
  sys.A.setFromTriplets(ta.begin(), ta.end());
  sys.A_r.setFromTriplets(tr.begin(), tr.end());
  sys.B.setFromTriplets(tb.begin(), tb.end());
  return sys;
}

// f_Gamma(v) = tau0 int_Gamma ((d_n + T) u_inc) conj(v), lumped with the same
// boundary weight 2*pi/nx as the DtN block. On Gamma_-, (d_n + T) u_inc =
// sum -2 i eta_m a_m e^{i eta_m z_-} e^{i(m+kappa)x1}; analogously on Gamma_+.
inline Eigen::VectorXcd incident_rhs(const Mesh& mesh, const BlochContext& ctx,
                                     const IncidentWave& inc) {
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(mesh.n_dofs());
  Eigen::MatrixXcd e = boundary_phasors(mesh, ctx);
  const cplx i_unit(0.0, 1.0);
  const double w = ctx.tau0 * two_pi / mesh.nx;

  auto add = [&](Side side, int m, cplx amp) {
    if (m < -ctx.m_max || m > ctx.m_max)
      throw std::invalid_argument("incident_rhs: order outside truncation");
    Harmonic h = eta_of(ctx, m);
    if (h.cls != HarmonicClass::propagating && std::abs(amp) > 0.0)
      throw std::invalid_argument("incident_rhs: nonzero coefficient on non-propagating order");
    cplx depth = (side == Side::gamma_minus) ? std::exp(i_unit * h.eta * mesh.geom.z_minus)
                                             : std::exp(-i_unit * h.eta * mesh.geom.z_plus);
    cplx c = w * (-2.0 * i_unit * h.eta) * amp * depth;
    for (int k = 0; k < mesh.nx; ++k) f(mesh.boundary_dof(side, k)) += c * e(m + ctx.m_max, k);
  };

  for (const auto& [m, amp] : inc.a) add(Side::gamma_minus, m, amp);
  for (const auto& [m, amp] : inc.b) add(Side::gamma_plus, m, amp);
  return f;
}

// Midpoint quadrature of int_Omega (xi . grad conj(v) + h conj(v)) against the
// Q1 basis. Basis values at the element midpoint are 1/4; basis gradients are
// +-1/(2 h1), +-1/(2 h3).
inline Eigen::VectorXcd volume_source_rhs(const Mesh& mesh, const SourceTerm& src) {
  if (src.nx != mesh.nx || src.nz != mesh.nz)
    throw std::invalid_argument("volume_source_rhs: source grid does not match mesh");
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(mesh.n_dofs());
  const double area = mesh.h1 * mesh.h3;
  const double gx[4] = {-1, 1, 1, -1};
  const double gz[4] = {-1, -1, 1, 1};
  for (int j = 0; j < mesh.nz; ++j) {
    for (int i = 0; i < mesh.nx; ++i) {
      int c = j * mesh.nx + i;
      Mesh::ElemDofs e = mesh.elem_dofs(i, j);
      for (int a = 0; a < 4; ++a) {
        cplx val = src.xi1(c) * (gx[a] / (2.0 * mesh.h1)) + src.xi3(c) * (gz[a] / (2.0 * mesh.h3)) +
                   src.h(c) * 0.25;
        f(e.idx[a]) += std::conj(e.phase[a]) * val * area;
      }
    }
  }
  return f;
}

// Right-hand side of the linearized problem: -(d_eps, d_tau) applied to u
// through the same exact element integrals as the system matrix, so that the
// linearized field is the exact derivative of the discrete solution map.
inline Eigen::VectorXcd linearized_rhs(const DiscreteSystem& sys, const Eigen::VectorXcd& u,
                                       const Eigen::ArrayXd& d_eps, const Eigen::ArrayXd& d_tau) {
  const Mesh& mesh = sys.mesh;
  if (d_eps.size() != sys.field.eps.size() || d_tau.size() != sys.field.tau.size())
    throw std::invalid_argument("linearized_rhs: direction size mismatch");
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(mesh.n_dofs());
  const double w2 = sys.ctx.omega * sys.ctx.omega;
  const Eigen::Matrix4d ks = q1_stiffness(mesh.h1, mesh.h3);
  const Eigen::Matrix4d ms = q1_mass(mesh.h1, mesh.h3);
  for (int j = 0; j < mesh.nz; ++j) {
    for (int i = 0; i < mesh.nx; ++i) {
      int c = j * mesh.nx + i;
      if (d_eps(c) == 0.0 && d_tau(c) == 0.0) continue;
      Mesh::ElemDofs e = mesh.elem_dofs(i, j);
      cplx uloc[4];
      for (int b = 0; b < 4; ++b) uloc[b] = e.phase[b] * u(e.idx[b]);
      for (int a = 0; a < 4; ++a) {
        cplx s = 0.0;
        for (int b = 0; b < 4; ++b) s += (d_tau(c) * ks(a, b) - w2 * d_eps(c) * ms(a, b)) * uloc[b];
        f(e.idx[a]) -= std::conj(e.phase[a]) * s;
      }
    }
  }
  return f;
}

// Transpose pairings w^T K_c u and w^T M_c u against the unit element
// matrices of one cell, phases included. Used by the adjoint gradients.
struct CellPair {
  cplx stiffness;  // w^T K_hat_c u
  cplx mass;       // w^T M_hat_c u
};

inline CellPair cell_pairing(const Mesh& mesh, const Eigen::VectorXcd& w, const Eigen::VectorXcd& u,
                             int i, int j) {
  static thread_local Eigen::Matrix4d ks, ms;
  static thread_local double cached_h1 = -1.0, cached_h3 = -1.0;
  if (cached_h1 != mesh.h1 || cached_h3 != mesh.h3) {
    ks = q1_stiffness(mesh.h1, mesh.h3);
    ms = q1_mass(mesh.h1, mesh.h3);
    cached_h1 = mesh.h1;
    cached_h3 = mesh.h3;
  }
  Mesh::ElemDofs e = mesh.elem_dofs(i, j);
  cplx uloc[4], wloc[4];
  for (int a = 0; a < 4; ++a) {
    uloc[a] = e.phase[a] * u(e.idx[a]);
    wloc[a] = std::conj(e.phase[a]) * w(e.idx[a]);  // transpose pairing, no conjugation of w itself
  }
  CellPair p{0.0, 0.0};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      p.stiffness += wloc[a] * ks(a, b) * uloc[b];
      p.mass += wloc[a] * ms(a, b) * uloc[b];
    }
  return p;
}

// Discrete H1 norm: sqrt( sum_e v^H (K_hat + M_hat) v ) with unit coefficients.
inline double h1_norm(const Mesh& mesh, const Eigen::VectorXcd& v) {
  const Eigen::Matrix4d ks = q1_stiffness(mesh.h1, mesh.h3);
  const Eigen::Matrix4d ms = q1_mass(mesh.h1, mesh.h3);
  double acc = 0.0;
  for (int j = 0; j < mesh.nz; ++j) {
    for (int i = 0; i < mesh.nx; ++i) {
      Mesh::ElemDofs e = mesh.elem_dofs(i, j);
      cplx vloc[4];
      for (int a = 0; a < 4; ++a) vloc[a] = e.phase[a] * v(e.idx[a]);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          acc += std::real(std::conj(vloc[a]) * (ks(a, b) + ms(a, b)) * vloc[b]);
    }
  }
  return std::sqrt(std::max(acc, 0.0));
}

}  // namespace slabscat
