#include <catch_amalgamated.hpp>

#include <random>

#include "slabscat/assembly.hpp"
#include "test_common.hpp"

using namespace slabscat;
using Catch::Approx;

namespace {

Eigen::VectorXcd random_vec(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx(d(rng), d(rng));
  return v;
}

}  // namespace

TEST_CASE("mesh identification and counting") {
  CellGeometry g = testutil::default_geom(4, 2, 0.0, 1.0);
  Mesh m = build_mesh(g, 0.3);
  CHECK(m.n_dofs() == 12);  // 4 * 3 after periodic identification
  CHECK(m.dof(4, 0) == m.dof(0, 0));
  CHECK(m.dof(4, 2) == m.dof(0, 2));

  Mesh m0 = build_mesh(g, 0.0);
  CHECK(m0.bloch_phase == cplx(1.0, 0.0));

  auto e = m.elem_dofs(3, 0);  // wrapped element
  CHECK(e.idx[1] == m.dof(0, 0));
  CHECK(e.phase[1] == m.bloch_phase);
  CHECK(e.phase[0] == cplx(1.0, 0.0));
}

TEST_CASE("Q1 element matrices are the exact integrals") {
  Eigen::Matrix4d k = q1_stiffness(1.0, 1.0);
  Eigen::Matrix4d k_expect;
  k_expect << 4, -1, -2, -1, -1, 4, -1, -2, -2, -1, 4, -1, -1, -2, -1, 4;
  CHECK((k - k_expect / 6.0).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::Matrix4d mm = q1_mass(1.0, 1.0);
  Eigen::Matrix4d m_expect;
  m_expect << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
  CHECK((mm - m_expect / 36.0).cwiseAbs().maxCoeff() < 1e-15);

  // constants lie in the stiffness null space for any aspect ratio
  Eigen::Matrix4d ka = q1_stiffness(0.37, 1.93);
  CHECK(ka.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  // total mass equals the element area
  Eigen::Matrix4d ma = q1_mass(0.37, 1.93);
  CHECK(ma.sum() == Approx(0.37 * 1.93).epsilon(1e-14));

  auto [ke, me] = element_matrices(0.5, 0.25, 3.0, 2.0);
  CHECK((ke - 2.0 * q1_stiffness(0.5, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((me - 3.0 * q1_mass(0.5, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("assembled matrices: Hermiticity, definiteness, decomposition") {
  CellGeometry g = testutil::default_geom(8, 4, -0.5, 1.5);
  CoefficientField f = testutil::random_field(g, 21);
  BlochContext ctx(1.1, 0.27, 1.0, 1.0, 3);
  Mesh mesh = build_mesh(g, ctx.kappa);
  DiscreteSystem sys = assemble(mesh, f, ctx);

  Eigen::MatrixXcd A(sys.A), Ar(sys.A_r), B(sys.B);
  double scale = Ar.cwiseAbs().maxCoeff();

  CHECK((Ar - Ar.adjoint()).cwiseAbs().maxCoeff() < 1e-14 * scale);
  CHECK((B - B.adjoint()).cwiseAbs().maxCoeff() < 1e-14 * scale);

  // B positive definite
  Eigen::LLT<Eigen::MatrixXcd> llt(B);
  CHECK(llt.info() == Eigen::Success);

  // A = A_r - w^2 B + i * flux with Hermitian nonpositive flux part
  Eigen::MatrixXcd flux = (A - Ar + ctx.omega * ctx.omega * B) / cplx(0.0, 1.0);
  CHECK((flux - flux.adjoint()).cwiseAbs().maxCoeff() < 1e-13 * scale);
  for (std::uint64_t s : {1u, 2u, 3u}) {
    Eigen::VectorXcd v = random_vec(mesh.n_dofs(), s);
    double q = std::real((v.adjoint() * (flux * v))(0));
    CHECK(q <= 1e-12 * scale * v.squaredNorm());
    // Garding-type coercivity of stiffness + mass
    Eigen::MatrixXcd K = Ar;  // contains T_r >= 0 as well
    double coer = std::real((v.adjoint() * ((K + B) * v))(0));
    CHECK(coer > 0.0);
  }

  // with kappa = 0 and real coefficients, A_r is real symmetric
  BlochContext ctx0(1.1, 0.0, 1.0, 1.0, 3);
  DiscreteSystem sys0 = assemble(build_mesh(g, 0.0), f, ctx0);
  Eigen::MatrixXcd Ar0(sys0.A_r);
  CHECK(Ar0.imag().cwiseAbs().maxCoeff() < 1e-14 * scale);
  CHECK((Ar0 - Ar0.transpose()).cwiseAbs().maxCoeff() < 1e-14 * scale);
}

TEST_CASE("transpose identity A(kappa)^T = A(-kappa)") {
  CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);
  CoefficientField f = testutil::random_field(g, 5);
  BlochContext ctx(1.2, 0.31, 1.0, 1.0, 3);
  DiscreteSystem sp = assemble(build_mesh(g, ctx.kappa), f, ctx);
  BlochContext ctxm = ctx.negated();
  DiscreteSystem sm = assemble(build_mesh(g, ctxm.kappa), f, ctxm);
  Eigen::MatrixXcd d = Eigen::MatrixXcd(sp.A).transpose() - Eigen::MatrixXcd(sm.A);
  CHECK(d.cwiseAbs().maxCoeff() < 1e-13 * Eigen::MatrixXcd(sp.A).cwiseAbs().maxCoeff());
}

TEST_CASE("assembly guards") {
  CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);
  CoefficientField f(4, 4, 1.0, 1.0);  // wrong nx
  BlochContext ctx(1.0, 0.0, 1.0, 1.0, 3);
  Mesh mesh = build_mesh(g, 0.0);
  CHECK_THROWS_AS(assemble(mesh, f, ctx), std::invalid_argument);

  CoefficientField ok(8, 4, 1.0, 1.0);
  BlochContext alias(1.0, 0.0, 1.0, 1.0, 4);  // m_max = nx/2 aliases the boundary DFT
  CHECK_THROWS_AS(assemble(mesh, ok, alias), std::invalid_argument);
}

TEST_CASE("incident load on the boundary rows") {
  CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);
  BlochContext ctx(1.0, 0.0, 1.0, 1.0, 3);
  Mesh mesh = build_mesh(g, 0.0);

  SECTION("unit order-0 incidence from the left, z_- = 0") {
    Eigen::VectorXcd rhs = incident_rhs(mesh, ctx, IncidentWave::plane_from_left());
    // every Gamma_- node carries tau0 * (2 pi / nx) * (-2 i), Gamma_+ rows stay zero
    cplx expect = cplx(0.0, -2.0) * (two_pi / mesh.nx);
    for (int k = 0; k < mesh.nx; ++k) {
      CHECK(std::abs(rhs(mesh.boundary_dof(Side::gamma_minus, k)) - expect) < 1e-15);
      CHECK(std::abs(rhs(mesh.boundary_dof(Side::gamma_plus, k))) == 0.0);
    }
    for (int j = 1; j < mesh.nz; ++j)
      for (int i = 0; i < mesh.nx; ++i) CHECK(std::abs(rhs(mesh.dof(i, j))) == 0.0);
  }

  SECTION("zero coefficients give the zero vector") {
    IncidentWave none;
    CHECK(incident_rhs(mesh, ctx, none).norm() == 0.0);
  }

  SECTION("two-sided incidence superposes linearly") {
    IncidentWave left = IncidentWave::plane_from_left(cplx(0.3, 0.1));
    IncidentWave right;
    right.b.push_back({0, cplx(-0.2, 0.7)});
    IncidentWave both = left;
    both.b = right.b;
    Eigen::VectorXcd sum = incident_rhs(mesh, ctx, left) + incident_rhs(mesh, ctx, right);
    CHECK((incident_rhs(mesh, ctx, both) - sum).norm() < 1e-15);
  }

  SECTION("non-propagating order is rejected") {
    IncidentWave bad;
    bad.a.push_back({3, 1.0});
    CHECK_THROWS_AS(incident_rhs(mesh, ctx, bad), std::invalid_argument);
  }
}

TEST_CASE("volume source quadrature") {
  CellGeometry g = testutil::default_geom(8, 6, 0.0, 1.5);
  Mesh mesh = build_mesh(g, 0.0);

  SECTION("zero source") {
    SourceTerm s(g.nx, g.nz);
    CHECK(volume_source_rhs(mesh, s).norm() == 0.0);
  }

  SECTION("constant h loads each interior node with c * h1 * h3") {
    SourceTerm s(g.nx, g.nz);
    cplx c(0.7, -0.3);
    s.h.setConstant(c);
    Eigen::VectorXcd rhs = volume_source_rhs(mesh, s);
    for (int j = 1; j < mesh.nz; ++j)
      for (int i = 0; i < mesh.nx; ++i)
        CHECK(std::abs(rhs(mesh.dof(i, j)) - c * mesh.h1 * mesh.h3) < 1e-14);
  }

  SECTION("constant flux xi cancels at interior nodes") {
    SourceTerm s(g.nx, g.nz);
    s.xi1.setConstant(cplx(1.0, 0.5));
    s.xi3.setConstant(cplx(-0.4, 0.2));
    Eigen::VectorXcd rhs = volume_source_rhs(mesh, s);
    double interior_max = 0.0, boundary_max = 0.0;
    for (int j = 0; j <= mesh.nz; ++j)
      for (int i = 0; i < mesh.nx; ++i) {
        double v = std::abs(rhs(mesh.dof(i, j)));
        if (j == 0 || j == mesh.nz) boundary_max = std::max(boundary_max, v);
        else interior_max = std::max(interior_max, v);
      }
    CHECK(interior_max < 1e-14);
    CHECK(boundary_max > 1e-3);  // the flux exits through the boundary rows
  }
}
