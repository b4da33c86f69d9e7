#pragma once
// Diffraction-order bookkeeping for a 2D periodic slab (period 2*pi in x1)
// and the Fourier Dirichlet-to-Neumann operators on the artificial
// boundaries Gamma-+ at x3 = z-+.
//
// Each order m carries the transverse exponent eta_m with
//
//     eta_m^2 + (m + kappa)^2 = omega^2 eps0 / tau0,
//
// branch fixed so that eta_m > 0 (propagating), eta_m = 0 (linear, cutoff)
// or -i eta_m > 0 (evanescent). Outgoing fields satisfy d_n u + T u = 0
// with the multiplier (T f)_m = -i eta_m f_m; T splits as T = T_r + i T_i
// with T_r supported on evanescent orders and T_i on propagating ones.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace slabscat {

using cplx = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class HarmonicClass { propagating, linear, evanescent };
enum class Side { gamma_minus, gamma_plus };
enum class DtnVariant { full, real_part, imag_part, adjoint };

struct Harmonic {
  int m = 0;
  cplx eta{0.0, 0.0};
  HarmonicClass cls = HarmonicClass::linear;
};

struct BlochContext {
  double omega = 1.0;
  double kappa = 0.0;  // reduced to [-1/2, 1/2)
  double eps0 = 1.0;
  double tau0 = 1.0;
  int m_max = 1;

  BlochContext(double omega_, double kappa_, double eps0_, double tau0_, int m_max_)
      : omega(omega_), kappa(reduce_kappa(kappa_)), eps0(eps0_), tau0(tau0_), m_max(m_max_) {
    if (!(omega > 0.0)) throw std::invalid_argument("BlochContext: omega must be > 0");
    if (!(eps0 > 0.0)) throw std::invalid_argument("BlochContext: eps0 must be > 0");
    if (!(tau0 > 0.0)) throw std::invalid_argument("BlochContext: tau0 must be > 0");
    if (m_max < 1) throw std::invalid_argument("BlochContext: m_max must be >= 1");
  }

  // Brillouin reduction: any kappa equals integer + reduced value in [-1/2, 1/2).
  static double reduce_kappa(double k) {
    double r = std::remainder(k, 1.0);  // (-1/2, 1/2], ties to even
    if (r >= 0.5) r -= 1.0;
    return r;
  }

  double eta_squared(int m) const {
    double km = static_cast<double>(m) + kappa;
    return omega * omega * eps0 / tau0 - km * km;
  }

  // Cutoff detection is relative to the dispersion scale omega^2 eps0/tau0.
  double cutoff_tol() const { return 1e-12 * omega * omega * eps0 / tau0; }

  int n_orders() const { return 2 * m_max + 1; }

  BlochContext negated() const { return BlochContext(omega, -kappa, eps0, tau0, m_max); }
};

// Boundary Fourier coefficients f_m for |m| <= m_max, index m = 0 centered.
struct TraceVector {
  Side side = Side::gamma_minus;
  int m_max = 0;
  Eigen::VectorXcd coeffs;

  TraceVector() = default;
  TraceVector(Side s, int m_max_) : side(s), m_max(m_max_), coeffs(Eigen::VectorXcd::Zero(2 * m_max_ + 1)) {}

  cplx& at(int m) { return coeffs(m + m_max); }
  cplx at(int m) const { return coeffs(m + m_max); }
  int size() const { return 2 * m_max + 1; }
};

inline Harmonic eta_of(const BlochContext& ctx, int m) {
  Harmonic h;
  h.m = m;
  double e2 = ctx.eta_squared(m);
  if (std::abs(e2) <= ctx.cutoff_tol()) {
    h.eta = cplx(0.0, 0.0);
    h.cls = HarmonicClass::linear;
  } else if (e2 > 0.0) {
    h.eta = cplx(std::sqrt(e2), 0.0);
    h.cls = HarmonicClass::propagating;
  } else {
    h.eta = cplx(0.0, std::sqrt(-e2));  // -i eta = sqrt(-e2) > 0
    h.cls = HarmonicClass::evanescent;
  }
  return h;
}

inline std::vector<Harmonic> classify_orders(const BlochContext& ctx) {
  std::vector<Harmonic> out;
  out.reserve(ctx.n_orders());
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) out.push_back(eta_of(ctx, m));
  return out;
}

inline bool has_linear_order(const BlochContext& ctx) {
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m)
    if (eta_of(ctx, m).cls == HarmonicClass::linear) return true;
  return false;
}

// Apply the chosen DtN variant as a Fourier multiplier:
//   full:      -i eta_m            (T)
//   real_part: -i eta_m on Z_e     (T_r, real positive there)
//   imag_part: -eta_m   on Z_p     (T_i, real nonpositive there)
//   adjoint:   +i conj(eta_m)      (T*)
inline TraceVector apply_dtn(const BlochContext& ctx, const TraceVector& f, DtnVariant variant) {
  if (f.m_max != ctx.m_max)
    throw std::invalid_argument("apply_dtn: trace truncation does not match context m_max");
  TraceVector g(f.side, f.m_max);
  const cplx i_unit(0.0, 1.0);
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) {
    Harmonic h = eta_of(ctx, m);
    cplx mult(0.0, 0.0);
    switch (variant) {
      case DtnVariant::full:
        mult = -i_unit * h.eta;
        break;
      case DtnVariant::real_part:
        if (h.cls == HarmonicClass::evanescent) mult = -i_unit * h.eta;
        break;
      case DtnVariant::imag_part:
        if (h.cls == HarmonicClass::propagating) mult = -h.eta;
        break;
      case DtnVariant::adjoint:
        mult = i_unit * std::conj(h.eta);
        break;
    }
    g.at(m) = mult * f.at(m);
  }
  return g;
}

// l2 norm of d_n u + T u over the truncated orders; ~0 iff outgoing.
inline double outgoing_residual(const BlochContext& ctx, const TraceVector& trace,
                                const TraceVector& normal_deriv) {
  if (trace.side != normal_deriv.side)
    throw std::invalid_argument("outgoing_residual: trace and normal derivative on different sides");
  TraceVector tu = apply_dtn(ctx, trace, DtnVariant::full);
  return (normal_deriv.coeffs + tu.coeffs).norm();
}

}  // namespace slabscat
