#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/holder.hpp"
#include "nsr/operators.hpp"
#include "nsr/solver.hpp"
#include "test_util.hpp"

using namespace nsr;

namespace {

// average of |(-Delta)^{gamma/2} v|^2, the instantaneous dissipation density
double dissipation_rate(const VectorField& v, double gamma) {
  double acc = 0;
  for (int c = 0; c < 3; ++c) {
    double l = fractional_laplacian(v.c[c], gamma / 2).l2();
    acc += l * l;
  }
  return acc;
}

double kinetic(const VectorField& v) {
  double l = v.l2();
  return l * l;
}

}  // namespace

TEST_CASE("fns solver basics") {
  const Grid g{16};
  SUBCASE("zero data stays zero") {
    SolverConfig cfg;
    cfg.horizon = 0.02;
    auto s = solve_fns(VectorField::zero(g), 0.5, 0.2, cfg);
    CHECK(s.v.back().sup_norm() < 1e-15);
    CHECK(s.p.back().sup_norm() < 1e-15);
  }
  SUBCASE("steady shear decays by the exact dissipative factor") {
    // v = 0.5 sin(y) e1 transports itself trivially, so the evolution is the
    // pure semigroup e^{-nu t} on the |k| = 1 shell
    const double nu = 0.7, gamma = 0.2, T = 0.05;
    VectorField u0 = VectorField::zero(g);
    u0.c[0] = ScalarField::sample(
        g, [](double, double y, double) { return 0.5 * std::sin(y); });
    SolverConfig cfg;
    cfg.horizon = T;
    auto s = solve_fns(u0, nu, gamma, cfg);
    VectorField expect = std::exp(-nu * T) * u0;
    CHECK((s.v.back() - expect).sup_norm() < 1e-8);
    CHECK(s.p.back().sup_norm() < 1e-10);
  }
  SUBCASE("mean velocity is conserved") {
    nsrtest::Rng rng(77);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 0.3);
    u0.c[1] += ScalarField::constant(g, 0.25);
    SolverConfig cfg;
    cfg.horizon = 0.03;
    auto s = solve_fns(u0, 0.4, 0.2, cfg);
    auto m0 = u0.mean();
    auto mT = s.v.back().mean();
    for (int c = 0; c < 3; ++c) CHECK(std::abs(mT[c] - m0[c]) < 1e-13);
    CHECK(divergence(s.v.back()).sup_norm() < 1e-10);
  }
  SUBCASE("energy identity with fractional dissipation") {
    nsrtest::Rng rng(5);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 0.4);
    const double nu = 0.5, gamma = 0.2, T = 0.05;
    SolverConfig cfg;
    cfg.horizon = T;
    cfg.dt = T / 40;
    auto s = solve_fns(u0, nu, gamma, cfg);
    // Simpson quadrature of 2 nu integral of the dissipation rate
    double diss = 0;
    const int m = int(s.times.size()) - 1;
    for (int i = 0; i <= m; ++i) {
      double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      diss += w * dissipation_rate(s.v[i], gamma);
    }
    diss *= 2.0 * nu * (T / m) / 3.0;
    const double drop = kinetic(s.v.front()) - kinetic(s.v.back());
    CHECK(drop == doctest::Approx(diss).epsilon(1e-6));
  }
  SUBCASE("inviscid mode conserves energy") {
    nsrtest::Rng rng(11);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 0.4);
    SolverConfig cfg;
    cfg.horizon = 0.05;
    auto s = solve_fns(u0, 0.0, 0.2, cfg);
    CHECK(kinetic(s.v.back()) ==
          doctest::Approx(kinetic(s.v.front())).epsilon(1e-5));
  }
  SUBCASE("temporal self-convergence at fourth order") {
    nsrtest::Rng rng(23);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 0.6);
    const double nu = 0.4, gamma = 0.2, T = 0.04;
    auto run = [&](double dt) {
      FnsIntegrator in(u0, nu, gamma, dt);
      while (in.t() < T - dt / 2) in.step();
      return in.v();
    };
    VectorField ref = run(T / 256);
    std::vector<double> dts, errs;
    for (int d : {8, 16, 32}) {
      dts.push_back(T / d);
      errs.push_back((run(T / d) - ref).sup_norm());
    }
    double slope = loglog_slope(dts, errs);
    MESSAGE("temporal order = " << slope);
    CHECK(slope > 3.7);
    CHECK(slope < 4.3);
  }
  SUBCASE("blow-up guard names the last valid time") {
    nsrtest::Rng rng(9);
    VectorField u0 = nsrtest::random_divfree(g, rng, 4, 40.0);
    FnsIntegrator in(u0, 0.0, 0.2, 0.05);
    auto push = [&] {
      for (int s = 0; s < 200; ++s) in.step();
    };
    CHECK_THROWS_WITH_AS(push(), doctest::Contains("last valid time"),
                         std::runtime_error);
  }
  SUBCASE("CFL gate rejects an over-long step") {
    nsrtest::Rng rng(3);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 1.0);
    SolverConfig cfg;
    cfg.horizon = 0.02;
    cfg.cfl = 1e-6;
    CHECK_THROWS_WITH_AS(solve_fns(u0, 0.4, 0.2, cfg),
                         doctest::Contains("CFL"), std::runtime_error);
  }
  SUBCASE("horizon guard reports and optionally enforces") {
    nsrtest::Rng rng(41);
    VectorField u0 = nsrtest::random_divfree(g, rng, 3, 1.0);
    auto guard = horizon_guard(u0, 0.01, 0.1, 10.0);
    CHECK(guard.admissible_T > 0);
    CHECK_FALSE(guard.within);
    auto inf = horizon_guard(VectorField::zero(g), 0.01, 0.1, 10.0);
    CHECK(inf.within);
    SolverConfig cfg;
    cfg.horizon = 10.0 * guard.admissible_T;
    cfg.enforce_horizon = true;
    cfg.dt = cfg.horizon / 4;
    cfg.cfl = 1e9;
    CHECK_THROWS_WITH_AS(solve_fns(u0, 0.4, 0.2, cfg),
                         doctest::Contains("admissible"), std::runtime_error);
  }
}

TEST_CASE("advection-diffusion solver") {
  const Grid g{16};
  SUBCASE("pure fractional diffusion matches the exact semigroup") {
    nsrtest::Rng rng(2);
    ScalarField u0 = nsrtest::random_scalar(g, rng, 4, 1.0);
    const double nu = 0.6, gamma = 0.35, T = 0.1;
    SolverConfig cfg;
    cfg.horizon = T;
    auto s = solve_advection_diffusion(
        u0, [&](double) { return VectorField::zero(g); }, nu, gamma,
        [&](double) { return ScalarField(); }, cfg);
    ScalarField expect = u0.apply_real_symbol([&](int a, int b, int c) {
      double k2 = double(a) * a + double(b) * b + double(c) * c;
      return k2 == 0 ? 1.0 : std::exp(-nu * std::pow(k2, gamma) * T);
    });
    CHECK((s.u.back() - expect).sup_norm() < 1e-12);
  }
  SUBCASE("uniform advection of a single mode is exact") {
    ScalarField u0 =
        ScalarField::sample(g, [](double x, double, double) { return std::sin(x); });
    VectorField v = VectorField::zero(g);
    v.c[0] = ScalarField::constant(g, 1.0);
    const double nu = 0.3, gamma = 0.2, T = 0.05;
    SolverConfig cfg;
    cfg.horizon = T;
    auto s = solve_advection_diffusion(
        u0, [&](double) { return v; }, nu, gamma,
        [&](double) { return ScalarField(); }, cfg);
    ScalarField expect = ScalarField::sample(g, [&](double x, double, double) {
      return std::exp(-nu * T) * std::sin(x - T);
    });
    CHECK((s.u.back() - expect).sup_norm() < 1e-8);
  }
  SUBCASE("steady forcing balances at the fixed point") {
    // with v = 0 and f = nu (-Delta)^gamma u*, u* is a steady state
    nsrtest::Rng rng(8);
    ScalarField ustar = nsrtest::random_scalar(g, rng, 3, 0.8);
    const double nu = 0.5, gamma = 0.2;
    ScalarField f = nu * fractional_laplacian(ustar, gamma);
    SolverConfig cfg;
    cfg.horizon = 0.05;
    auto s = solve_advection_diffusion(
        ustar, [&](double) { return VectorField::zero(g); }, nu, gamma,
        [&](double) { return f; }, cfg);
    CHECK((s.u.back() - ustar).sup_norm() < 1e-10);
  }
}

TEST_CASE("flow maps") {
  const Grid g{16};
  SUBCASE("zero velocity gives the identity map") {
    FlowMapIntegrator fm(g, 0.0, 1e-3);
    for (int s = 0; s < 10; ++s)
      fm.step(VectorField::zero(g), VectorField::zero(g), VectorField::zero(g));
    CHECK(fm.phi_minus_id().sup_norm() < 1e-15);
    CHECK(fm.t() == doctest::Approx(0.02));
  }
  SUBCASE("constant velocity translates labels backwards") {
    VectorField v = VectorField::zero(g);
    v.c[0] = ScalarField::constant(g, 0.3);
    v.c[2] = ScalarField::constant(g, -0.1);
    std::vector<VectorField> frames(21, v);
    VectorField p = flow_map(frames, 5e-3, 0.0);  // to t = 0.1
    CHECK(std::abs(p.c[0].mean() + 0.3 * 0.1) < 1e-12);
    CHECK(std::abs(p.c[2].mean() - 0.1 * 0.1) < 1e-12);
    CHECK(p.minus_mean().sup_norm() < 1e-12);  // spatially constant
  }
  SUBCASE("steady shear has the closed-form label map") {
    VectorField v = VectorField::zero(g);
    v.c[0] = ScalarField::sample(
        g, [](double, double y, double) { return std::sin(y); });
    const double T = 0.1;
    std::vector<VectorField> frames(21, v);
    VectorField p = flow_map(frames, T / 20, 0.0);
    VectorField expect = VectorField::zero(g);
    expect.c[0] = ScalarField::sample(
        g, [&](double, double y, double) { return -T * std::sin(y); });
    CHECK((p - expect).sup_norm() < 1e-10);
  }
  SUBCASE("volume preservation and transport residual for a generic field") {
    const Grid gf{24};
    nsrtest::Rng rng(31);
    VectorField v = nsrtest::random_divfree(gf, rng, 2, 0.1);
    const double h = 1e-3;
    FlowMapIntegrator fm(gf, 0.0, h);
    VectorField prev = fm.phi_minus_id();
    double worst_res = 0;
    for (int s = 0; s < 50; ++s) {
      VectorField before = fm.phi_minus_id();
      fm.step(v, v, v);
      if (s > 0) {
        // centered difference of d_t P at the midpoint of [prev, current]
        VectorField dp = (1.0 / (4 * h)) * (fm.phi_minus_id() - prev);
        VectorField res = dp + v;
        for (int i = 0; i < 3; ++i)
          res.c[i] += dot(v, gradient(before.c[i]));
        worst_res = std::max(worst_res, res.sup_norm());
      }
      prev = before;
    }
    MESSAGE("transport residual = " << worst_res);
    CHECK(worst_res < 1e-6);
    auto grad = phi_gradient(fm.phi_minus_id());
    ScalarField det = mat3_det(grad);
    CHECK((det - ScalarField::constant(gf, 1.0)).sup_norm() < 1e-5);
    CHECK(mat3_dist_id(grad) < 0.5);
  }
}

TEST_CASE("stability estimate harness") {
  const Grid g{24};
  SUBCASE("twenty random transport problems satisfy every estimate") {
    nsrtest::Rng rng(100);
    int mp_cases = 0;
    for (int trial = 0; trial < 20; ++trial) {
      StabilityCase c;
      c.v = nsrtest::random_divfree(g, rng, 3, 0.6);
      c.u0 = nsrtest::random_scalar(g, rng, 3, 1.0);
      if (trial % 2 == 1) c.f = nsrtest::random_scalar(g, rng, 3, 0.5);
      auto rep = stability_harness(c);
      CHECK(rep.trans_est_alpha_applicable);
      bool saw_mp = false;
      for (const auto& p : rep.estimates) {
        CAPTURE(trial);
        CAPTURE(p.id);
        CHECK(p.holds);
        if (p.id == "stability:max_principle") saw_mp = true;
      }
      CHECK(saw_mp == (trial % 2 == 0));
      if (saw_mp) ++mp_cases;
      CHECK(rep.fitted_C3 <= 10.0);
      CHECK(rep.fitted_C1a <= 10.0);
    }
    CHECK(mp_cases == 10);
  }
  SUBCASE("the alpha-norm bound is skipped outside its window") {
    nsrtest::Rng rng(4);
    StabilityCase c;
    c.v = nsrtest::random_divfree(g, rng, 2, 2.0);
    c.u0 = nsrtest::random_scalar(g, rng, 2, 0.5);
    c.t1 = 0.6;
    c.dt = 5e-3;
    auto rep = stability_harness(c);
    CHECK_FALSE(rep.trans_est_alpha_applicable);
    for (const auto& p : rep.estimates)
      CHECK(p.id != std::string("stability:est_alpha"));
  }
}
