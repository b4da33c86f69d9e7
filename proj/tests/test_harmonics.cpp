#include <catch_amalgamated.hpp>

#include <random>

#include "slabscat/harmonics.hpp"

using namespace slabscat;
using Catch::Approx;

namespace {

TraceVector random_trace(const BlochContext& ctx, std::uint64_t seed, Side side = Side::gamma_plus) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  TraceVector f(side, ctx.m_max);
  for (int m = -ctx.m_max; m <= ctx.m_max; ++m) f.at(m) = cplx(d(rng), d(rng));
  return f;
}

cplx l2_pair(const TraceVector& g, const TraceVector& f) { return (f.coeffs.conjugate().array() * g.coeffs.array()).sum(); }

}  // namespace

TEST_CASE("eta branch and classification") {
  BlochContext ctx(1.0, 0.0, 1.0, 1.0, 2);

  Harmonic h0 = eta_of(ctx, 0);
  CHECK(h0.cls == HarmonicClass::propagating);
  CHECK(h0.eta.real() == Approx(1.0).epsilon(1e-14));
  CHECK(h0.eta.imag() == 0.0);

  Harmonic h1 = eta_of(ctx, 1);  // 1 - 1 = 0, exact cutoff
  CHECK(h1.cls == HarmonicClass::linear);
  CHECK(std::abs(h1.eta) == 0.0);

  Harmonic h2 = eta_of(ctx, 2);  // eta^2 = -3
  CHECK(h2.cls == HarmonicClass::evanescent);
  CHECK(h2.eta.real() == 0.0);
  CHECK((-cplx(0, 1) * h2.eta).real() == Approx(std::sqrt(3.0)).epsilon(1e-14));

  BlochContext ctx_k(1.0, 0.25, 1.0, 1.0, 2);
  Harmonic hk = eta_of(ctx_k, 0);
  CHECK(hk.cls == HarmonicClass::propagating);
  CHECK(hk.eta.real() == Approx(0.96824583655185426).epsilon(1e-14));  // sqrt(0.9375)

  // dispersion relation holds to machine precision for every order
  for (int m = -2; m <= 2; ++m) {
    Harmonic h = eta_of(ctx_k, m);
    cplx lhs = h.eta * h.eta + cplx((m + ctx_k.kappa) * (m + ctx_k.kappa), 0.0);
    CHECK(std::abs(lhs - cplx(1.0, 0.0)) < 1e-13);
  }
}

TEST_CASE("order partition into Z_p, Z_l, Z_e") {
  {
    BlochContext ctx(1.0, 0.0, 1.0, 1.0, 2);
    auto hs = classify_orders(ctx);
    REQUIRE(hs.size() == 5);
    CHECK(hs[2].cls == HarmonicClass::propagating);  // m = 0
    CHECK(hs[1].cls == HarmonicClass::linear);       // m = -1
    CHECK(hs[3].cls == HarmonicClass::linear);       // m = +1
    CHECK(hs[0].cls == HarmonicClass::evanescent);   // m = -2
    CHECK(hs[4].cls == HarmonicClass::evanescent);   // m = +2
  }
  {
    // 0.09 < 0.16: everything evanescent, Z_p empty
    BlochContext ctx(0.3, 0.4, 1.0, 1.0, 1);
    for (const Harmonic& h : classify_orders(ctx)) CHECK(h.cls == HarmonicClass::evanescent);
  }
  {
    BlochContext ctx(2.5, 0.0, 1.0, 1.0, 3);
    int n_prop = 0;
    for (const Harmonic& h : classify_orders(ctx))
      if (h.cls == HarmonicClass::propagating) ++n_prop;
    CHECK(n_prop == 5);  // 6.25 > m^2 for |m| <= 2
  }
}

TEST_CASE("DtN multipliers") {
  BlochContext ctx(1.0, 0.0, 1.0, 1.0, 2);

  TraceVector f(Side::gamma_plus, 2);
  f.at(0) = 1.0;
  TraceVector g = apply_dtn(ctx, f, DtnVariant::full);
  CHECK(g.at(0).real() == Approx(0.0).margin(1e-15));
  CHECK(g.at(0).imag() == Approx(-1.0).epsilon(1e-14));  // -i eta_0 = -i

  TraceVector gr = apply_dtn(ctx, f, DtnVariant::real_part);
  CHECK(gr.coeffs.norm() == 0.0);  // order 0 is propagating

  TraceVector f2(Side::gamma_plus, 2);
  f2.at(2) = 1.0;
  TraceVector g2 = apply_dtn(ctx, f2, DtnVariant::full);
  CHECK(g2.at(2).real() == Approx(std::sqrt(3.0)).epsilon(1e-14));  // -i * i sqrt(3)
  CHECK(g2.at(2).imag() == Approx(0.0).margin(1e-15));

  TraceVector wrong(Side::gamma_plus, 3);
  CHECK_THROWS_AS(apply_dtn(ctx, wrong, DtnVariant::full), std::invalid_argument);
}

TEST_CASE("DtN structure: decomposition, signs, adjoint pairing") {
  BlochContext ctx(1.3, 0.31, 1.0, 1.0, 6);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    TraceVector f = random_trace(ctx, seed);
    TraceVector g = random_trace(ctx, seed + 100);

    // T = T_r + i T_i exactly
    TraceVector full = apply_dtn(ctx, f, DtnVariant::full);
    TraceVector re = apply_dtn(ctx, f, DtnVariant::real_part);
    TraceVector im = apply_dtn(ctx, f, DtnVariant::imag_part);
    CHECK((full.coeffs - (re.coeffs + cplx(0, 1) * im.coeffs)).norm() == 0.0);

    // sign structure of the real/imaginary parts
    CHECK(l2_pair(re, f).real() >= 0.0);
    CHECK(l2_pair(im, f).real() <= 0.0);

    // <T f, g> = <f, T* g>
    cplx lhs = l2_pair(apply_dtn(ctx, f, DtnVariant::full), g);
    cplx rhs = (apply_dtn(ctx, g, DtnVariant::adjoint).coeffs.conjugate().array() * f.coeffs.array()).sum();
    CHECK(std::abs(lhs - rhs) < 1e-13 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("branch consistency and parity in kappa") {
  BlochContext ctx(1.7, 0.37, 2.0, 1.5, 8);
  BlochContext ctx_neg = ctx.negated();
  for (int m = -8; m <= 8; ++m) {
    Harmonic h = eta_of(ctx, m);
    CHECK(h.eta.real() >= 0.0);
    CHECK(h.eta.imag() >= 0.0);
    if (h.cls != HarmonicClass::linear) CHECK(std::abs(h.eta) > 0.0);
    // eta_{-m} at -kappa equals eta_m at kappa
    Harmonic hr = eta_of(ctx_neg, -m);
    CHECK(hr.eta == h.eta);
  }
}

TEST_CASE("conjugation identity: conj(T_k^* f) = T_{-k} conj(f) with index reflection") {
  BlochContext ctx(1.21, 0.17, 1.0, 1.0, 5);
  BlochContext ctx_neg = ctx.negated();
  TraceVector f = random_trace(ctx, 42);
  TraceVector fr(f.side, f.m_max);
  for (int m = -f.m_max; m <= f.m_max; ++m) fr.at(-m) = std::conj(f.at(m));

  TraceVector lhs = apply_dtn(ctx, f, DtnVariant::adjoint);
  TraceVector rhs = apply_dtn(ctx_neg, fr, DtnVariant::full);
  for (int m = -f.m_max; m <= f.m_max; ++m)
    CHECK(std::abs(std::conj(lhs.at(m)) - rhs.at(-m)) < 1e-14);
}

TEST_CASE("outgoing residual") {
  BlochContext ctx(1.0, 0.0, 1.0, 1.0, 3);
  double z_plus = 1.7;

  // trace of e^{i eta_0 x3} on Gamma_+ with its exact outward normal derivative
  TraceVector tr(Side::gamma_plus, 3), dn(Side::gamma_plus, 3);
  cplx phase = std::exp(cplx(0, 1) * z_plus);
  tr.at(0) = phase;
  dn.at(0) = cplx(0, 1) * phase;  // d_n = +d_x3 on Gamma_+
  CHECK(outgoing_residual(ctx, tr, dn) < 1e-14);

  // incoming wave e^{-i eta_0 x3}: (d_n + T) doubles it
  TraceVector tri(Side::gamma_plus, 3), dni(Side::gamma_plus, 3);
  cplx amp(0.7, -0.2);
  tri.at(0) = amp * std::exp(cplx(0, -1) * z_plus);
  dni.at(0) = cplx(0, -1) * amp * std::exp(cplx(0, -1) * z_plus);
  CHECK(outgoing_residual(ctx, tri, dni) == Approx(2.0 * std::abs(amp)).epsilon(1e-12));

  // decaying evanescent pair is outgoing
  Harmonic h3 = eta_of(ctx, 3);
  TraceVector tre(Side::gamma_plus, 3), dne(Side::gamma_plus, 3);
  cplx a(0.3, 1.1);
  tre.at(3) = a * std::exp(cplx(0, 1) * h3.eta * z_plus);
  dne.at(3) = cplx(0, 1) * h3.eta * a * std::exp(cplx(0, 1) * h3.eta * z_plus);
  CHECK(outgoing_residual(ctx, tre, dne) < 1e-12);

  // side mismatch rejected
  TraceVector other(Side::gamma_minus, 3);
  CHECK_THROWS_AS(outgoing_residual(ctx, tr, other), std::invalid_argument);
}

TEST_CASE("kappa reduction to the first Brillouin zone") {
  CHECK(BlochContext::reduce_kappa(0.75) == Approx(-0.25).epsilon(1e-15));
  CHECK(BlochContext::reduce_kappa(0.5) == -0.5);
  CHECK(BlochContext::reduce_kappa(-0.5) == -0.5);
  CHECK(BlochContext::reduce_kappa(3.25) == Approx(0.25).epsilon(1e-15));
  BlochContext ctx(1.0, 0.75, 1.0, 1.0, 1);
  CHECK(ctx.kappa == Approx(-0.25));
  CHECK_THROWS_AS(BlochContext(0.0, 0.0, 1.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(BlochContext(1.0, 0.0, 0.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(BlochContext(1.0, 0.0, 1.0, -1.0, 1), std::invalid_argument);
}
