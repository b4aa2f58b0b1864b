#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nsr/field.hpp"
#include "nsr/holder.hpp"
#include "nsr/operators.hpp"
#include "test_util.hpp"

using namespace nsr;

namespace {
const Grid g32{32};
const Grid g64{64};

ScalarField single_mode(const Grid& g, int a, int b, int c, cplx amp) {
  std::vector<cplx> m(g.size(), cplx(0, 0));
  m[g.idx((a + g.n) % g.n, (b + g.n) % g.n, (c + g.n) % g.n)] = amp;
  return ScalarField::from_modes(g, std::move(m), false);
}
}  // namespace

TEST_CASE("fractional laplacian") {
  SUBCASE("single-mode multipliers exact") {
    ScalarField f = single_mode(g32, 1, 0, 0, cplx(1, 0));
    ScalarField r = fractional_laplacian(f, 0.25);
    CHECK(std::abs(r.modes()[g32.idx(1, 0, 0)] - cplx(1, 0)) < 1e-12);
    ScalarField f2 = single_mode(g32, 2, 0, 0, cplx(1, 0));
    ScalarField r2 = fractional_laplacian(f2, 0.5);
    CHECK(std::abs(r2.modes()[g32.idx(2, 0, 0)] - cplx(2, 0)) < 1e-12);
  }
  SUBCASE("mean is annihilated") {
    ScalarField f = ScalarField::constant(g32, 5.0);
    CHECK(fractional_laplacian(f, 0.3).sup_norm() < 1e-14);
  }
  SUBCASE("semigroup property to 1e-12") {
    nsrtest::Rng rng(21);
    ScalarField f = nsrtest::random_scalar(g32, rng, 6);
    ScalarField a = fractional_laplacian(fractional_laplacian(f, 0.3), 0.45);
    ScalarField b = fractional_laplacian(f, 0.75);
    double rel = (a - b).sup_norm() / std::max(b.sup_norm(), 1e-300);
    CHECK(rel < 1e-12);
  }
  SUBCASE("fractional energy bounded by Holder seminorm (vlaplv)") {
    nsrtest::Rng rng(22);
    const double gamma = 0.4, eps = 0.2;
    double cworst = 0;
    for (int t = 0; t < 20; ++t) {
      ScalarField f = nsrtest::random_scalar(g32, rng, 5).minus_mean();
      ScalarField hf = fractional_laplacian(f, gamma / 2);
      double lhs = hf.l2() * hf.l2();
      double sem = holder_seminorm(f, gamma + eps).value;
      cworst = std::max(cworst, lhs / (sem * sem));
    }
    MESSAGE("vlaplv fitted constant = " << cworst);
    CHECK(cworst < 10.0);
  }
}

TEST_CASE("pressure solve") {
  SUBCASE("zero input gives zero pressure") {
    VectorField v = VectorField::zero(g32);
    CHECK(pressure_from_velocity(v).sup_norm() < 1e-14);
  }
  SUBCASE("shear flow residual < 1e-10") {
    VectorField v = VectorField::zero(g32);
    v.c[0] = ScalarField::sample(g32,
                                 [](double, double y, double) { return std::sin(y); });
    ScalarField p = pressure_from_velocity(v);
    CHECK(std::abs(p.mean()) < 1e-14);
    // residual Delta p + div div (v x v) = 0
    SymTensorField vv = outer_sym(v, v);
    ScalarField dd = ScalarField::zero(g32);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        std::array<int, 3> th{0, 0, 0};
        th[i] += 1;
        th[j] += 1;
        dd += vv.at(i, j).derivative_multi(th);
      }
    ScalarField lap = p.derivative(0, 2) + p.derivative(1, 2) + p.derivative(2, 2);
    CHECK((lap + dd).sup_norm() < 1e-10);
  }
  SUBCASE("constant shift of the stress leaves p unchanged") {
    nsrtest::Rng rng(23);
    VectorField v = nsrtest::random_divfree(g32, rng, 4);
    SymTensorField R = SymTensorField::zero(g32);
    ScalarField p1 = pressure_from_velocity(v, R);
    for (int i = 0; i < 6; ++i) R.c[i] = ScalarField::constant(g32, 1.7);
    ScalarField p2 = pressure_from_velocity(v, R);
    CHECK((p1 - p2).sup_norm() < 1e-12);
  }
}

TEST_CASE("biot-savart") {
  SUBCASE("constant field maps to zero") {
    VectorField v = VectorField::zero(g32);
    v.c[1] = ScalarField::constant(g32, 3.0);
    CHECK(biot_savart(v).c[0].sup_norm() < 1e-14);
    CHECK(biot_savart(v).c[1].sup_norm() < 1e-14);
    CHECK(biot_savart(v).c[2].sup_norm() < 1e-14);
  }
  SUBCASE("single mode: curl z recovers v exactly") {
    VectorField v = VectorField::zero(g32);
    v.c[2] = ScalarField::sample(g32,
                                 [](double x, double, double) { return std::sin(x); });
    VectorField z = biot_savart(v);
    VectorField cz = curl(z);
    CHECK((cz - v).sup_norm() < 1e-12);
  }
  SUBCASE("div z = 0 and curl z = v - mean(v) for random div-free v") {
    nsrtest::Rng rng(24);
    VectorField v = nsrtest::random_divfree(g32, rng, 6);
    VectorField z = biot_savart(v);
    CHECK(divergence(z).sup_norm() < 1e-10);
    CHECK((curl(z) - v.minus_mean()).sup_norm() < 1e-10);
  }
}

TEST_CASE("inverse divergence") {
  SUBCASE("zero maps to zero") {
    auto r = inverse_divergence(VectorField::zero(g32));
    CHECK(r.R.sup_norm() < 1e-14);
  }
  SUBCASE("single mode residual") {
    VectorField f = VectorField::zero(g32);
    f.c[0] = ScalarField::sample(g32,
                                 [](double, double, double z) { return std::cos(z); });
    auto r = inverse_divergence(f);
    CHECK((divergence(r.R) - f).sup_norm() < 1e-10);
  }
  SUBCASE("div R f = f on random mean-free fields; symmetry; trace") {
    nsrtest::Rng rng(25);
    for (int t = 0; t < 5; ++t) {
      VectorField f = nsrtest::random_vector(g32, rng, 6).minus_mean();
      auto r = inverse_divergence(f);
      double rel = (divergence(r.R) - f).sup_norm() / f.sup_norm();
      CHECK(rel < 1e-10);
      // symmetry is structural (6-component storage); trace sits at zero
      CHECK(r.trace_norm < 1e-12 * std::max(1.0, r.R.sup_norm()));
    }
  }
  SUBCASE("non-mean-free input rejected") {
    VectorField f = VectorField::zero(g32);
    f.c[0] = ScalarField::constant(g32, 1.0);
    CHECK_THROWS(inverse_divergence(f));
  }
  SUBCASE("R commutes with the fractional laplacian") {
    nsrtest::Rng rng(26);
    VectorField f = nsrtest::random_vector(g32, rng, 5).minus_mean();
    auto a = inverse_divergence(fractional_laplacian(f, 0.2));
    auto b = inverse_divergence(f);
    double worst = 0;
    for (int i = 0; i < 6; ++i) {
      ScalarField d = a.R.c[i] - fractional_laplacian(b.R.c[i], 0.2);
      worst = std::max(worst, d.sup_norm());
    }
    CHECK(worst < 1e-12 * std::max(1.0, a.R.sup_norm()));
  }
}

TEST_CASE("leray projection") {
  nsrtest::Rng rng(27);
  VectorField v = nsrtest::random_vector(g32, rng, 6);
  VectorField pv = leray_project(v);
  CHECK(divergence(pv).sup_norm() < 1e-12 * std::max(1.0, v.sup_norm()));
  // idempotent and mean-preserving
  CHECK((leray_project(pv) - pv).sup_norm() < 1e-12);
  auto m1 = v.mean(), m2 = pv.mean();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(m1[i] - m2[i]) < 1e-14);
}

TEST_CASE("calderon-zygmund boundedness probe") {
  nsrtest::Rng rng(28);
  const double alpha = 0.5;
  std::vector<double> cs;
  for (int t = 0; t < 20; ++t) {
    ScalarField f = nsrtest::random_scalar(g32, rng, 5).minus_mean();
    ScalarField tf = czo_second_derivative(f, 0, 1);
    double num = holder_seminorm(tf, alpha).value;
    double den = holder_seminorm(f, alpha).value;
    cs.push_back(num / den);
  }
  double cmax = *std::max_element(cs.begin(), cs.end());
  double cmin = *std::min_element(cs.begin(), cs.end());
  MESSAGE("CZ fitted constant range [" << cmin << ", " << cmax << "]");
  CHECK(cmax < 10.0);
  CHECK(cmax / cmin < 20.0);
}

TEST_CASE("stationary phase probe") {
  SUBCASE("constant amplitude, identity map: orthogonality") {
    ScalarField a = ScalarField::constant(g32, 1.0);
    VectorField phi = VectorField::zero(g32);
    auto s = stationary_phase_probe(a, phi, {1, 0, 0}, {1, 2, 5});
    for (auto& r : s) CHECK(r.integral_abs < 1e-13);
  }
  SUBCASE("single-mode amplitude picks out the exact coefficient") {
    ScalarField a = ScalarField::sample(
        g32, [](double x, double, double) { return 1.0 + 0.1 * std::sin(x); });
    VectorField phi = VectorField::zero(g32);
    auto s = stationary_phase_probe(a, phi, {1, 0, 0}, {1});
    CHECK(s[0].integral_abs == doctest::Approx(0.05).epsilon(1e-10));
  }
  SUBCASE("smooth probe decays with exponent >= 3") {
    ScalarField a = ScalarField::sample(g64, [](double x, double y, double z) {
      return 1.0 + 0.3 * std::sin(x) + 0.2 * std::cos(y + z) +
             0.1 * std::sin(2 * x - y);
    });
    VectorField phi;
    phi.c[0] = ScalarField::sample(g64, [](double x, double y, double) {
      return 0.04 * std::sin(y) + 0.02 * std::cos(x + y);
    });
    phi.c[1] = ScalarField::sample(g64, [](double x, double, double z) {
      return 0.03 * std::cos(x) + 0.02 * std::sin(z);
    });
    phi.c[2] = ScalarField::sample(g64, [](double x, double y, double z) {
      return 0.04 * std::sin(x + y) + 0.02 * std::cos(2 * z);
    });
    std::vector<int> amps = {4, 6, 8, 12, 16};
    auto s = stationary_phase_probe(a, phi, {1, 1, 0}, amps);
    std::vector<double> x, y;
    for (auto& r : s) {
      x.push_back(double(r.k_amp));
      y.push_back(r.integral_abs);
      MESSAGE("|k| = " << r.k_amp << "  integral = " << r.integral_abs);
    }
    double slope = loglog_slope(x, y);
    MESSAGE("stationary phase decay exponent = " << -slope);
    CHECK(-slope >= 3.0);
  }
  SUBCASE("unresolved oscillation raises") {
    ScalarField a = ScalarField::constant(g32, 1.0);
    VectorField phi = VectorField::zero(g32);
    CHECK_THROWS(stationary_phase_probe(a, phi, {1, 0, 0}, {40}));
  }
}
