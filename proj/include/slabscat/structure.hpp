#pragma once
// One period cell of the slab: geometry, cell-centered coefficient fields
// eps/tau, homogeneous inclusions, admissibility envelopes and the Lp norm
// used to measure coefficient perturbations. Coefficients are piecewise
// constant over mesh cells; an inclusion claims every cell whose center it
// contains (no sub-cell volume fractions).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "slabscat/harmonics.hpp"

namespace slabscat {

struct CellGeometry {
  double z_minus = 0.0;
  double z_plus = 1.0;
  double period = two_pi;  // fixed, x1 in (0, 2*pi)
  int nx = 4;
  int nz = 2;

  void validate() const {
    if (!(z_minus < z_plus)) throw std::invalid_argument("CellGeometry: z_minus must be < z_plus");
    if (nx < 4 || nx % 2 != 0) throw std::invalid_argument("CellGeometry: nx must be even and >= 4");
    if (nz < 2) throw std::invalid_argument("CellGeometry: nz must be >= 2");
    if (std::abs(period - two_pi) > 1e-14)
      throw std::invalid_argument("CellGeometry: period is fixed at 2*pi");
  }

  double h1() const { return period / nx; }
  double h3() const { return (z_plus - z_minus) / nz; }
  double cell_area() const { return h1() * h3(); }
  int n_cells() const { return nx * nz; }
  int cell_index(int i, int j) const { return j * nx + i; }
  double cell_center_x1(int i) const { return (i + 0.5) * h1(); }
  double cell_center_x3(int j) const { return z_minus + (j + 0.5) * h3(); }
};

struct Disk {
  double cx = 0.0, cz = 0.0, r = 0.0;
  bool contains(double x, double z) const {
    double dx = x - cx, dz = z - cz;
    return dx * dx + dz * dz < r * r;
  }
};

struct RectShape {
  double x_lo = 0.0, z_lo = 0.0, x_hi = 0.0, z_hi = 0.0;
  bool contains(double x, double z) const {
    return x >= x_lo && x <= x_hi && z >= z_lo && z <= z_hi;
  }
};

struct Inclusion {
  std::variant<Disk, RectShape> shape;
  double eps_j = 1.0;
  double tau_j = 1.0;
  int id = 0;

  bool contains(double x, double z) const {
    return std::visit([&](const auto& s) { return s.contains(x, z); }, shape);
  }
  // [x_lo, x_hi] x [z_lo, z_hi]
  std::array<double, 4> bbox() const {
    if (const Disk* d = std::get_if<Disk>(&shape))
      return {d->cx - d->r, d->cx + d->r, d->cz - d->r, d->cz + d->r};
    const RectShape& r = std::get<RectShape>(shape);
    return {r.x_lo, r.x_hi, r.z_lo, r.z_hi};
  }
};

inline bool inclusions_overlap(const Inclusion& a, const Inclusion& b) {
  if (const Disk* da = std::get_if<Disk>(&a.shape)) {
    if (const Disk* db = std::get_if<Disk>(&b.shape)) {
      double dx = da->cx - db->cx, dz = da->cz - db->cz;
      double rr = da->r + db->r;
      return dx * dx + dz * dz < rr * rr;
    }
    const RectShape& rb = std::get<RectShape>(b.shape);
    double px = std::clamp(da->cx, rb.x_lo, rb.x_hi);
    double pz = std::clamp(da->cz, rb.z_lo, rb.z_hi);
    double dx = da->cx - px, dz = da->cz - pz;
    return dx * dx + dz * dz < da->r * da->r;
  }
  if (std::holds_alternative<Disk>(b.shape)) return inclusions_overlap(b, a);
  const RectShape& ra = std::get<RectShape>(a.shape);
  const RectShape& rb = std::get<RectShape>(b.shape);
  return ra.x_lo < rb.x_hi && rb.x_lo < ra.x_hi && ra.z_lo < rb.z_hi && rb.z_lo < ra.z_hi;
}

// Cell-centered piecewise-constant coefficients, index (i, j) -> j*nx + i.
struct CoefficientField {
  int nx = 0, nz = 0;
  Eigen::ArrayXd eps, tau;

  CoefficientField() = default;
  CoefficientField(int nx_, int nz_, double eps0 = 1.0, double tau0 = 1.0)
      : nx(nx_), nz(nz_),
        eps(Eigen::ArrayXd::Constant(nx_ * nz_, eps0)),
        tau(Eigen::ArrayXd::Constant(nx_ * nz_, tau0)) {}

  int n_cells() const { return nx * nz; }
  bool same_grid(const CoefficientField& o) const { return nx == o.nx && nz == o.nz; }
};

struct AdmissibleEnvelope {
  int nx = 0, nz = 0;
  Eigen::ArrayXd eps_lo, eps_hi, tau_lo, tau_hi;

  static AdmissibleEnvelope uniform(const CellGeometry& g, double elo, double ehi, double tlo,
                                    double thi) {
    if (!(elo > 0.0 && tlo > 0.0)) throw std::invalid_argument("envelope: lower bounds must be > 0");
    if (elo > ehi || tlo > thi) throw std::invalid_argument("envelope: lo must be <= hi");
    AdmissibleEnvelope e;
    e.nx = g.nx;
    e.nz = g.nz;
    int n = g.n_cells();
    e.eps_lo = Eigen::ArrayXd::Constant(n, elo);
    e.eps_hi = Eigen::ArrayXd::Constant(n, ehi);
    e.tau_lo = Eigen::ArrayXd::Constant(n, tlo);
    e.tau_hi = Eigen::ArrayXd::Constant(n, thi);
    return e;
  }

  CoefficientField corner_lo_hi() const {  // (eps_-, tau_+)
    CoefficientField f(nx, nz);
    f.eps = eps_lo;
    f.tau = tau_hi;
    return f;
  }
  CoefficientField corner_hi_lo() const {  // (eps_+, tau_-)
    CoefficientField f(nx, nz);
    f.eps = eps_hi;
    f.tau = tau_lo;
    return f;
  }
};

// Midpoint values of the volume sources xi (flux) and h, per cell.
struct SourceTerm {
  int nx = 0, nz = 0;
  Eigen::ArrayXcd xi1, xi3, h;

  SourceTerm() = default;
  SourceTerm(int nx_, int nz_)
      : nx(nx_), nz(nz_),
        xi1(Eigen::ArrayXcd::Zero(nx_ * nz_)),
        xi3(Eigen::ArrayXcd::Zero(nx_ * nz_)),
        h(Eigen::ArrayXcd::Zero(nx_ * nz_)) {}
};

inline CoefficientField rasterize(const CellGeometry& geom, double eps_b, double tau_b,
                                  const std::vector<Inclusion>& inclusions) {
  geom.validate();
  if (!(eps_b > 0.0 && tau_b > 0.0))
    throw std::invalid_argument("rasterize: background coefficients must be > 0");
  for (const Inclusion& inc : inclusions) {
    auto bb = inc.bbox();
    if (!(bb[0] > 0.0 && bb[1] < geom.period && bb[2] > geom.z_minus && bb[3] < geom.z_plus))
      throw std::invalid_argument("rasterize: inclusion " + std::to_string(inc.id) +
                                  " not contained in the open cell");
    if (!(inc.eps_j > 0.0 && inc.tau_j > 0.0))
      throw std::invalid_argument("rasterize: inclusion coefficients must be > 0");
  }
  for (size_t a = 0; a < inclusions.size(); ++a)
    for (size_t b = a + 1; b < inclusions.size(); ++b)
      if (inclusions_overlap(inclusions[a], inclusions[b]))
        throw std::invalid_argument("rasterize: inclusions " + std::to_string(inclusions[a].id) +
                                    " and " + std::to_string(inclusions[b].id) + " overlap");

  CoefficientField f(geom.nx, geom.nz, eps_b, tau_b);
  for (int j = 0; j < geom.nz; ++j) {
    double z = geom.cell_center_x3(j);
    for (int i = 0; i < geom.nx; ++i) {
      double x = geom.cell_center_x1(i);
      for (const Inclusion& inc : inclusions) {
        if (inc.contains(x, z)) {
          int c = geom.cell_index(i, j);
          f.eps(c) = inc.eps_j;
          f.tau(c) = inc.tau_j;
          break;  // disjoint, at most one match
        }
      }
    }
  }
  return f;
}

struct AdmissibilityViolation {
  int i = 0, j = 0;
  char field = 'e';  // 'e' or 't'
  double value = 0.0, lo = 0.0, hi = 0.0;
};

struct AdmissibilityReport {
  bool ok = true;
  std::vector<AdmissibilityViolation> violations;
};

inline AdmissibilityReport check_admissible(const CoefficientField& f,
                                            const AdmissibleEnvelope& env) {
  if (f.nx != env.nx || f.nz != env.nz)
    throw std::invalid_argument("check_admissible: grid mismatch");
  AdmissibilityReport rep;
  for (int j = 0; j < f.nz; ++j) {
    for (int i = 0; i < f.nx; ++i) {
      int c = j * f.nx + i;
      if (f.eps(c) < env.eps_lo(c) || f.eps(c) > env.eps_hi(c))
        rep.violations.push_back({i, j, 'e', f.eps(c), env.eps_lo(c), env.eps_hi(c)});
      if (f.tau(c) < env.tau_lo(c) || f.tau(c) > env.tau_hi(c))
        rep.violations.push_back({i, j, 't', f.tau(c), env.tau_lo(c), env.tau_hi(c)});
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

inline CoefficientField perturb(const CoefficientField& f, const Eigen::ArrayXd& d_eps,
                                const Eigen::ArrayXd& d_tau, double t) {
  if (d_eps.size() != f.eps.size() || d_tau.size() != f.tau.size())
    throw std::invalid_argument("perturb: direction size mismatch");
  CoefficientField out = f;
  out.eps += t * d_eps;
  out.tau += t * d_tau;
  return out;
}

// || (d_eps, d_tau) ||_p = ( sum_cells (|d_eps|^p + |d_tau|^p) dA )^(1/p),
// midpoint quadrature over the cell.
inline double lp_norm(const CellGeometry& geom, const Eigen::ArrayXd& d_eps,
                      const Eigen::ArrayXd& d_tau, double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("lp_norm: p must be finite and >= 1");
  if (d_eps.size() != geom.n_cells() || d_tau.size() != geom.n_cells())
    throw std::invalid_argument("lp_norm: grid mismatch");
  double s = (d_eps.abs().pow(p).sum() + d_tau.abs().pow(p).sum()) * geom.cell_area();
  return std::pow(s, 1.0 / p);
}

}  // namespace slabscat
