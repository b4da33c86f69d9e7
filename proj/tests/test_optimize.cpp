#include <catch_amalgamated.hpp>

#include "slabscat/optimize.hpp"
#include "test_common.hpp"

using namespace slabscat;
using Catch::Approx;

TEST_CASE("projection onto the envelope") {
  CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);
  AdmissibleEnvelope env = AdmissibleEnvelope::uniform(g, 1.0, 4.0, 1.0, 2.0);

  CoefficientField in(g.nx, g.nz, 2.0, 1.5);
  CoefficientField same = project(in, env);
  CHECK((same.eps == in.eps).all());
  CHECK((same.tau == in.tau).all());

  CoefficientField high(g.nx, g.nz, 9.0, 5.0);
  CoefficientField clamped = project(high, env);
  CHECK((clamped.eps == 4.0).all());
  CHECK((clamped.tau == 2.0).all());

  CoefficientField twice = project(project(high, env), env);
  CHECK((twice.eps == clamped.eps).all());
}

TEST_CASE("design loop") {
  SECTION("zero-gradient start terminates immediately with the objective unchanged") {
    // empty slab: T = 1 already, dT/deps vanishes at the lossless maximum
    CellGeometry g = testutil::default_geom(16, 16, 0.0, M_PI);
    CoefficientField f(g.nx, g.nz, 1.0, 1.0);
    DesignProblem prob;
    prob.objective = Objective::maximize;
    prob.omegas = {1.0};
    prob.m_max = 7;
    prob.design_mask = Eigen::ArrayXd::Ones(g.n_cells());
    prob.envelope = AdmissibleEnvelope::uniform(g, 1.0, 4.0, 1.0, 2.0);
    prob.step = 0.5;
    prob.max_iters = 10;
    prob.tolerance = 1e-5;  // the discrete gradient at the lossless maximum is ~1e-6
    OptResult res = run_design(g, prob, f);
    CHECK(res.history.size() == 1);
    CHECK(res.converged);
    CHECK(res.history.front().objective == Approx(1.0).margin(1e-6));
    CHECK((res.final_field.eps == f.eps).all());
  }

  SECTION("monotone objective and admissible iterates on a single-cell region") {
    CellGeometry g = testutil::default_geom(16, 16, 0.0, M_PI / 4.0);
    CoefficientField f(g.nx, g.nz, 4.0, 1.0);  // quarter-wave slab, T = 0.64
    DesignProblem prob;
    prob.objective = Objective::maximize;
    prob.omegas = {1.0};
    prob.m_max = 7;
    prob.design_mask = Eigen::ArrayXd::Zero(g.n_cells());
    prob.design_mask(g.cell_index(7, 7)) = 1.0;
    prob.envelope = AdmissibleEnvelope::uniform(g, 1.0, 6.0, 1.0, 2.0);
    prob.step = 2.0;
    prob.max_iters = 8;
    prob.tolerance = 1e-12;
    OptResult res = run_design(g, prob, f);
    REQUIRE(res.history.size() >= 2);
    for (size_t k = 1; k < res.history.size(); ++k)
      CHECK(res.history[k].objective >= res.history[k - 1].objective - 1e-14);
    CHECK(check_admissible(res.final_field, prob.envelope).ok);
    CHECK(res.history.back().objective > 0.64);
  }

  SECTION("first accepted step agrees with the predicted improvement to ~50%") {
    CellGeometry g = testutil::default_geom(16, 16, 0.0, M_PI / 4.0);
    CoefficientField f(g.nx, g.nz, 4.0, 1.0);
    DesignProblem prob;
    prob.objective = Objective::maximize;
    prob.omegas = {1.0};
    prob.m_max = 7;
    prob.design_mask = Eigen::ArrayXd::Ones(g.n_cells());
    prob.envelope = AdmissibleEnvelope::uniform(g, 1.0, 6.0, 1.0, 2.0);
    prob.step = 1e-2;  // small enough for local linearity
    prob.max_iters = 2;
    prob.tolerance = 1e-12;
    OptResult res = run_design(g, prob, f);
    REQUIRE(res.history.size() >= 2);
    double predicted = res.history[0].step * res.history[0].grad_norm * res.history[0].grad_norm;
    double actual = res.history[1].objective - res.history[0].objective;
    CHECK(actual > 0.0);
    CHECK(std::abs(actual - predicted) <= 0.5 * predicted);
  }

  SECTION("maximize transmission from the quarter-wave slab") {
    CellGeometry g = testutil::default_geom(48, 48, 0.0, M_PI / 4.0);
    CoefficientField f(g.nx, g.nz, 4.0, 1.0);
    DesignProblem prob;
    prob.objective = Objective::maximize;
    prob.omegas = {1.0};
    prob.m_max = 23;
    prob.design_mask = Eigen::ArrayXd::Ones(g.n_cells());
    prob.envelope = AdmissibleEnvelope::uniform(g, 1.0, 8.0, 1.0, 2.0);
    prob.step = 0.5;
    prob.max_iters = 200;
    prob.tolerance = 1e-10;
    prob.threads = 2;
    OptResult res = run_design(g, prob, f);
    CHECK(res.history.back().objective >= 0.9);
    CHECK(check_admissible(res.final_field, prob.envelope).ok);
    for (const OptRow& row : res.history) CHECK(row.balance_defect_max < 1e-8);
  }

  SECTION("guards") {
    CellGeometry g = testutil::default_geom(8, 4, 0.0, 1.0);
    CoefficientField f(g.nx, g.nz, 2.0, 1.5);
    DesignProblem prob;
    prob.omegas = {1.0};
    prob.design_mask = Eigen::ArrayXd::Zero(g.n_cells());
    prob.envelope = AdmissibleEnvelope::uniform(g, 1.0, 4.0, 1.0, 2.0);
    CHECK_THROWS_AS(run_design(g, prob, f), std::invalid_argument);  // empty region
    prob.design_mask.setOnes();
    CoefficientField bad(g.nx, g.nz, 9.0, 1.5);
    CHECK_THROWS_AS(run_design(g, prob, bad), std::invalid_argument);  // inadmissible start
  }
}
