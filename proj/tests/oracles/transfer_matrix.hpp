#pragma once
// Independent 1D transfer-matrix oracle for layered media, used to check the
// FEM solver on structures that are uniform in x1. Each diffraction order m
// decouples into a 1D problem with transverse wavenumber beta = m + kappa;
// the state (u, tau u') is propagated across homogeneous layers with
//
//   M(d) = [ cos(k d)              sin(k d)/(tau k) ]
//          [ -tau k sin(k d)       cos(k d)         ]
//
// where k^2 = omega^2 eps/tau - beta^2. All entries are even in k, so the
// square-root branch does not matter. Exterior on both sides is (eps0, tau0).

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

struct Layer {
  double eps = 1.0;
  double tau = 1.0;
  double thickness = 0.0;
};

struct RT {
  cplx r;  // reflected amplitude at the x3 = 0 reference plane convention of the solver
  cplx t;  // transmitted amplitude, same convention
  double R() const { return std::norm(r); }
  double T() const { return std::norm(t); }
};

inline Eigen::Matrix2cd layer_matrix(const Layer& l, double omega, double beta) {
  cplx k2 = cplx(omega * omega * l.eps / l.tau - beta * beta, 0.0);
  cplx k = std::sqrt(k2);
  cplx kd = k * l.thickness;
  Eigen::Matrix2cd m;
  cplx sin_over_k =
      (std::abs(k) < 1e-12) ? cplx(l.thickness, 0.0) : std::sin(kd) / k;  // limit k -> 0
  m(0, 0) = std::cos(kd);
  m(0, 1) = sin_over_k / l.tau;
  m(1, 0) = -l.tau * k * std::sin(kd);
  m(1, 1) = std::cos(kd);
  return m;
}

// Incident unit wave e^{+i eta x3} from the left; slab occupies [z_minus, z_plus]
// with z_plus = z_minus + total thickness. Requires a propagating exterior order.
inline RT reflect_transmit(const std::vector<Layer>& layers, double omega, double beta,
                           double eps0, double tau0, double z_minus) {
  double eta2 = omega * omega * eps0 / tau0 - beta * beta;
  if (!(eta2 > 0.0)) throw std::invalid_argument("transfer_matrix: order is not propagating");
  double eta = std::sqrt(eta2);

  Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
  double z_plus = z_minus;
  for (const Layer& l : layers) {
    m = layer_matrix(l, omega, beta) * m;
    z_plus += l.thickness;
  }

  const cplx i_unit(0.0, 1.0);
  cplx p = i_unit * eta * tau0;
  cplx A = std::exp(i_unit * eta * z_minus);   // incident trace at z-
  cplx B = std::exp(-i_unit * eta * z_minus);  // reflected trace at z-
  cplx C = std::exp(i_unit * eta * z_plus);    // transmitted trace at z+

  // state(z+) = M state(z-):  [C t; p C t] = M [A + r B; p (A - r B)]
  Eigen::Matrix2cd lhs;
  Eigen::Vector2cd rhs;
  lhs(0, 0) = m(0, 0) * B - p * m(0, 1) * B;
  lhs(0, 1) = -C;
  lhs(1, 0) = m(1, 0) * B - p * m(1, 1) * B;
  lhs(1, 1) = -p * C;
  rhs(0) = -(m(0, 0) * A + p * m(0, 1) * A);
  rhs(1) = -(m(1, 0) * A + p * m(1, 1) * A);
  Eigen::Vector2cd sol = lhs.fullPivLu().solve(rhs);
  return {sol(0), sol(1)};
}

// Closed form for a single uniform layer (refractive contrast n = sqrt(eps/tau)
// relative to vacuum exterior): T = 1 / (1 + ((n^2-1)^2 / (4 n^2)) sin^2(n w d)).
inline double uniform_slab_T_closed_form(double eps, double tau, double d, double omega) {
  double n = std::sqrt(eps / tau);
  double s = std::sin(n * omega * d);
  double q = (n * n - 1.0) * (n * n - 1.0) / (4.0 * n * n);
  return 1.0 / (1.0 + q * s * s);
}

}  // namespace oracle
