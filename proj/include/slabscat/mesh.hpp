#pragma once
// Structured pseudoperiodic Q1 mesh on one period cell. Nodes at x1 = 2*pi
// are identified with x1 = 0 carrying the Bloch phase e^{2*pi*i*kappa}, so
// the mesh has nx*(nz+1) independent DOFs. Element matrices are the exact
// bilinear integrals on an h1 x h3 rectangle with constant coefficients.

#include <array>
#include <complex>

#include <Eigen/Dense>

#include "slabscat/harmonics.hpp"
#include "slabscat/structure.hpp"

namespace slabscat {

// Exact Q1 integrals, node order (0,0), (h1,0), (h1,h3), (0,h3).
inline Eigen::Matrix4d q1_stiffness(double h1, double h3) {
  // int grad(phi_a).grad(phi_b) = (h3/h1)/6 * Kxx + (h1/h3)/6 * Kzz
  static const double kxx[4][4] = {{2, -2, -1, 1}, {-2, 2, 1, -1}, {-1, 1, 2, -2}, {1, -1, -2, 2}};
  static const double kzz[4][4] = {{2, 1, -1, -2}, {1, 2, -2, -1}, {-1, -2, 2, 1}, {-2, -1, 1, 2}};
  Eigen::Matrix4d k;
  double cx = h3 / h1 / 6.0, cz = h1 / h3 / 6.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) k(a, b) = cx * kxx[a][b] + cz * kzz[a][b];
  return k;
}

inline Eigen::Matrix4d q1_mass(double h1, double h3) {
  static const double mm[4][4] = {{4, 2, 1, 2}, {2, 4, 2, 1}, {1, 2, 4, 2}, {2, 1, 2, 4}};
  Eigen::Matrix4d m;
  double c = h1 * h3 / 36.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) m(a, b) = c * mm[a][b];
  return m;
}

// (K_e, M_e) with constant eps, tau on the element.
inline std::pair<Eigen::Matrix4d, Eigen::Matrix4d> element_matrices(double h1, double h3,
                                                                    double eps_c, double tau_c) {
  return {tau_c * q1_stiffness(h1, h3), eps_c * q1_mass(h1, h3)};
}

struct Mesh {
  CellGeometry geom;
  double kappa = 0.0;
  int nx = 0, nz = 0;
  double h1 = 0.0, h3 = 0.0;
  cplx bloch_phase{1.0, 0.0};  // e^{2*pi*i*kappa}, carried by wrapped nodes

  int n_dofs() const { return nx * (nz + 1); }
  int dof(int i, int j) const { return j * nx + (i % nx); }
  double node_x1(int i) const { return i * h1; }
  double node_x3(int j) const { return geom.z_minus + j * h3; }

  int boundary_dof(Side s, int i) const {
    return s == Side::gamma_minus ? dof(i, 0) : dof(i, nz);
  }

  // DOF indices and trial-side phases of element (i, j), local node order
  // (i,j), (i+1,j), (i+1,j+1), (i,j+1). The wrapped column i+1 == nx maps to
  // column 0 with the Bloch phase.
  struct ElemDofs {
    std::array<int, 4> idx;
    std::array<cplx, 4> phase;
  };

  ElemDofs elem_dofs(int i, int j) const {
    ElemDofs e;
    bool wrap = (i + 1 == nx);
    cplx pw = wrap ? bloch_phase : cplx(1.0, 0.0);
    e.idx = {dof(i, j), dof(i + 1, j), dof(i + 1, j + 1), dof(i, j + 1)};
    e.phase = {cplx(1.0, 0.0), pw, pw, cplx(1.0, 0.0)};
    return e;
  }

  // Value of the field at the midpoint of cell (i, j), from DOF vector v.
  template <class Vec>
  cplx cell_midpoint_value(const Vec& v, int i, int j) const {
    ElemDofs e = elem_dofs(i, j);
    cplx s = 0.0;
    for (int a = 0; a < 4; ++a) s += e.phase[a] * v(e.idx[a]);
    return 0.25 * s;
  }

  // Gradient of the bilinear interpolant at the cell midpoint.
  template <class Vec>
  std::array<cplx, 2> cell_midpoint_gradient(const Vec& v, int i, int j) const {
    ElemDofs e = elem_dofs(i, j);
    std::array<cplx, 4> u;
    for (int a = 0; a < 4; ++a) u[a] = e.phase[a] * v(e.idx[a]);
    cplx gx = ((u[1] + u[2]) - (u[0] + u[3])) / (2.0 * h1);
    cplx gz = ((u[2] + u[3]) - (u[0] + u[1])) / (2.0 * h3);
    return {gx, gz};
  }
};

inline Mesh build_mesh(const CellGeometry& geom, double kappa) {
  geom.validate();
  Mesh m;
  m.geom = geom;
  m.kappa = BlochContext::reduce_kappa(kappa);
  m.nx = geom.nx;
  m.nz = geom.nz;
  m.h1 = geom.h1();
  m.h3 = geom.h3();
  m.bloch_phase = std::exp(cplx(0.0, two_pi * m.kappa));
  return m;
}

}  // namespace slabscat
