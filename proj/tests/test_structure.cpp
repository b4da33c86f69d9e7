#include <catch_amalgamated.hpp>

#include <sstream>

#include "slabscat/raster_io.hpp"
#include "slabscat/structure.hpp"
#include "test_common.hpp"

using namespace slabscat;
using Catch::Approx;

TEST_CASE("rasterize backgrounds and inclusions") {
  CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);

  SECTION("no inclusions gives a uniform field") {
    CoefficientField f = rasterize(g, 1.0, 1.0, {});
    CHECK((f.eps == 1.0).all());
    CHECK((f.tau == 1.0).all());
  }

  SECTION("rect covering the left half claims exactly half the cells") {
    Inclusion inc;
    inc.shape = RectShape{1e-9, 0.1, M_PI, 0.9};
    inc.eps_j = 4.0;
    inc.tau_j = 1.0;
    inc.id = 1;
    // cover all rows: z range strictly inside (0,1) still contains every center
    CoefficientField f = rasterize(g, 1.0, 1.0, {inc});
    int count = (f.eps == 4.0).count();
    CHECK(count == g.nx * g.nz / 2);
  }

  SECTION("disk cell count matches direct enumeration") {
    CellGeometry gd = testutil::default_geom(64, 64, 0.0, M_PI);
    Disk d{M_PI, M_PI / 2.0, 0.5};
    Inclusion inc;
    inc.shape = d;
    inc.eps_j = 2.0;
    inc.tau_j = 1.0;
    CoefficientField f = rasterize(gd, 1.0, 1.0, {inc});
    int count = (f.eps == 2.0).count();
    int expect = 0;  // independent enumeration over cell centers
    for (int j = 0; j < gd.nz; ++j)
      for (int i = 0; i < gd.nx; ++i) {
        double dx = gd.cell_center_x1(i) - d.cx, dz = gd.cell_center_x3(j) - d.cz;
        if (dx * dx + dz * dz < d.r * d.r) ++expect;
      }
    CHECK(count == expect);
    // and the count is within a perimeter band of the area estimate
    double cell_area = gd.cell_area();
    double area_cells = M_PI * d.r * d.r / cell_area;
    double perim_cells = 2.0 * M_PI * d.r / std::sqrt(cell_area);
    CHECK(std::abs(count - area_cells) <= perim_cells);
  }

  SECTION("errors: overlap and out-of-cell") {
    Inclusion a, b;
    a.shape = Disk{2.0, 0.5, 0.3};
    a.id = 1;
    b.shape = Disk{2.2, 0.5, 0.3};
    b.id = 2;
    CHECK_THROWS_AS(rasterize(g, 1, 1, {a, b}), std::invalid_argument);
    Inclusion c;
    c.shape = Disk{0.1, 0.5, 0.3};  // pokes out of x1 > 0
    CHECK_THROWS_AS(rasterize(g, 1, 1, {c}), std::invalid_argument);
  }

  SECTION("re-rasterizing its own output is the identity") {
    Inclusion inc;
    inc.shape = Disk{3.0, 0.5, 0.25};
    inc.eps_j = 3.0;
    inc.tau_j = 2.0;
    CoefficientField f = rasterize(g, 1.0, 1.0, {inc});
    CoefficientField f2 = rasterize(g, 1.0, 1.0, {inc});
    CHECK((f.eps == f2.eps).all());
    CHECK((f.tau == f2.tau).all());
  }
}

TEST_CASE("admissibility envelope checks") {
  CellGeometry g = testutil::default_geom(4, 2, 0.0, 1.0);
  AdmissibleEnvelope env = AdmissibleEnvelope::uniform(g, 1.0, 4.0, 1.0, 2.0);

  CoefficientField f(g.nx, g.nz, 1.0, 1.0);  // equals the lower envelope
  CHECK(check_admissible(f, env).ok);

  f.eps(3) = 4.0 + 1e-9;
  auto rep = check_admissible(f, env);
  CHECK_FALSE(rep.ok);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].i == 3);
  CHECK(rep.violations[0].j == 0);
  CHECK(rep.violations[0].field == 'e');

  AdmissibleEnvelope degenerate = AdmissibleEnvelope::uniform(g, 2.0, 2.0, 1.0, 1.0);
  CoefficientField fd(g.nx, g.nz, 2.0, 1.0);
  CHECK(check_admissible(fd, degenerate).ok);

  AdmissibleEnvelope wrong = AdmissibleEnvelope::uniform(testutil::default_geom(8, 2, 0, 1), 1, 2, 1, 2);
  CHECK_THROWS_AS(check_admissible(f, wrong), std::invalid_argument);

  // rasterize into an enclosing envelope is always admissible
  Inclusion inc;
  inc.shape = RectShape{1.0, 0.2, 2.0, 0.8};
  inc.eps_j = 3.5;
  inc.tau_j = 1.5;
  CHECK(check_admissible(rasterize(g, 1.0, 1.0, {inc}), env).ok);
}

TEST_CASE("perturb is affine in t") {
  CellGeometry g = testutil::default_geom(6, 3, 0.0, 2.0);
  CoefficientField f = testutil::random_field(g, 7);
  Eigen::ArrayXd de = testutil::random_direction(g, 8), dt = testutil::random_direction(g, 9);

  CoefficientField same = perturb(f, de, dt, 0.0);
  CHECK((same.eps == f.eps).all());
  CHECK((same.tau == f.tau).all());

  Eigen::ArrayXd one = testutil::zero_direction(g);
  one(5) = 1.0;
  CoefficientField p = perturb(f, one, testutil::zero_direction(g), 0.1);
  CHECK((p.eps - f.eps).abs().maxCoeff() == Approx(0.1));
  CHECK((p.eps != f.eps).count() == 1);

  CoefficientField twice = perturb(f, de, dt, 0.2);
  CoefficientField step = perturb(perturb(f, de, dt, 0.1), de, dt, 0.1);
  CHECK((twice.eps - step.eps).abs().maxCoeff() < 1e-15);
  CHECK((twice.tau - step.tau).abs().maxCoeff() < 1e-15);
}

TEST_CASE("Lp norm of perturbations") {
  CellGeometry g = testutil::default_geom(16, 8, 0.0, 1.0);
  Eigen::ArrayXd zero = testutil::zero_direction(g);
  CHECK(lp_norm(g, zero, zero, 2.0) == 0.0);

  // constant field of 1 on a cell of area A: norm = A^{1/p} for any p
  Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(g.n_cells());
  double area = two_pi * 1.0;
  for (double p : {1.0, 2.0, 4.0, 7.5}) CHECK(lp_norm(g, ones, zero, p) == Approx(std::pow(area, 1.0 / p)).epsilon(1e-12));

  Eigen::ArrayXd de = testutil::random_direction(g, 3), dt = testutil::random_direction(g, 4);
  for (double p : {1.0, 2.0, 3.0}) {
    double n1 = lp_norm(g, de, dt, p);
    CHECK(lp_norm(g, (-2.5 * de).eval(), (-2.5 * dt).eval(), p) == Approx(2.5 * n1).epsilon(1e-12));
    // triangle inequality of the discrete norm
    Eigen::ArrayXd de2 = testutil::random_direction(g, 5), dt2 = testutil::random_direction(g, 6);
    CHECK(lp_norm(g, (de + de2).eval(), (dt + dt2).eval(), p) <=
          n1 + lp_norm(g, de2, dt2, p) + 1e-12);
  }
  CHECK_THROWS_AS(lp_norm(g, de, dt, 0.5), std::invalid_argument);
}

TEST_CASE("raster CSV round trip and validation") {
  CellGeometry g = testutil::default_geom(6, 3, 0.0, 1.0);
  CoefficientField f = testutil::random_field(g, 11);

  std::ostringstream os;
  write_raster(os, f.eps, g.nx, g.nz, "eps");
  std::istringstream is(os.str());
  RasterData d = read_raster(is);
  CHECK(d.nx == g.nx);
  CHECK(d.nz == g.nz);
  CHECK(d.field == "eps");
  CHECK((d.values - f.eps).abs().maxCoeff() == 0.0);  // 17 digits round-trips exactly

  std::istringstream bad("# slabscat-raster nx=2 nz=1 field=eps\n1.0\n");
  CHECK_THROWS_AS(read_raster(bad), std::runtime_error);
  std::istringstream bad2("# other-header\n");
  CHECK_THROWS_AS(read_raster(bad2), std::runtime_error);
}
