#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nsr/field.hpp"
#include "nsr/holder.hpp"
#include "nsr/mollify.hpp"
#include "nsr/operators.hpp"
#include "test_util.hpp"

using namespace nsr;

namespace {
const Grid g32{32};
const Grid g48{48};
}  // namespace

TEST_CASE("transform basics") {
  SUBCASE("constant field is a single k=0 mode") {
    ScalarField f = ScalarField::constant(g32, 2.5);
    CHECK(f.modes()[0] == cplx(2.5, 0));
    double off = 0;
    for (std::size_t i = 1; i < f.modes().size(); ++i)
      off = std::max(off, std::abs(f.modes()[i]));
    CHECK(off < 1e-14);
  }
  SUBCASE("sin(x1) hits modes +-(1,0,0) with values -+i/2") {
    ScalarField f =
        ScalarField::sample(g32, [](double x, double, double) { return std::sin(x); });
    CHECK(std::abs(f.modes()[g32.idx(1, 0, 0)] - cplx(0, -0.5)) < 1e-13);
    CHECK(std::abs(f.modes()[g32.idx(31, 0, 0)] - cplx(0, 0.5)) < 1e-13);
  }
  SUBCASE("round trip on a random smooth field") {
    nsrtest::Rng rng(7);
    ScalarField f = nsrtest::random_scalar(g32, rng, 8);
    CHECK(f.roundtrip_residual() < 1e-12);
  }
  SUBCASE("Parseval") {
    nsrtest::Rng rng(8);
    ScalarField f = nsrtest::random_scalar(g32, rng, 8);
    CHECK(parseval_gap(f) < 1e-10);
  }
  SUBCASE("reality enforcement") {
    nsrtest::Rng rng(9);
    ScalarField f = nsrtest::random_scalar(g32, rng, 5);
    const auto& v = f.values();  // would carry imaginary junk otherwise
    ScalarField back = ScalarField::from_values(g32, v);
    double d = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      d = std::max(d, std::abs(back.modes()[i] - f.modes()[i]));
    CHECK(d < 1e-12);
  }
}

TEST_CASE("derivatives") {
  SUBCASE("derivative of constant vanishes") {
    ScalarField f = ScalarField::constant(g32, 3.0);
    CHECK(f.derivative(0).sup_norm() < 1e-14);
  }
  SUBCASE("d/dx sin = cos") {
    ScalarField f =
        ScalarField::sample(g32, [](double x, double, double) { return std::sin(x); });
    ScalarField d = f.derivative(0);
    ScalarField c =
        ScalarField::sample(g32, [](double x, double, double) { return std::cos(x); });
    CHECK((d - c).sup_norm() < 1e-12);
  }
  SUBCASE("mixed derivative of e^{i(x1+x2)} flips sign") {
    std::vector<cplx> m(g32.size(), cplx(0, 0));
    m[g32.idx(1, 1, 0)] = 1.0;
    ScalarField f = ScalarField::from_modes(g32, std::move(m), false);
    ScalarField d = f.derivative_multi({1, 1, 0});
    CHECK(std::abs(d.modes()[g32.idx(1, 1, 0)] - cplx(-1, 0)) < 1e-14);
  }
}

TEST_CASE("mollification") {
  SUBCASE("constants are fixed points (unit mass)") {
    ScalarField f = ScalarField::constant(g32, 1.25);
    auto r = mollify(f, 0.7);
    CHECK(r.field.sup_norm() == doctest::Approx(1.25).epsilon(1e-12));
    CHECK((r.field - f).sup_norm() < 1e-12);
    CHECK_FALSE(r.under_resolved);
  }
  SUBCASE("ell -> 0 convergence at rate ~ 2") {
    ScalarField f =
        ScalarField::sample(g48, [](double x, double, double) { return std::sin(x); });
    std::vector<double> ells = {1.2, 0.9, 0.675, 0.5};
    std::vector<double> errs;
    for (double ell : ells) errs.push_back((mollify(f, ell).field - f).sup_norm());
    double slope = loglog_slope(ells, errs);
    MESSAGE("mollifier convergence slope = " << slope);
    CHECK(slope > 1.6);
    CHECK(slope < 2.4);
  }
  SUBCASE("sup-norm non-expansive over 20 random fields") {
    nsrtest::Rng rng(11);
    for (int t = 0; t < 20; ++t) {
      ScalarField f = nsrtest::random_scalar(g32, rng, 6);
      CHECK(mollify(f, 0.5).field.sup_norm() <= f.sup_norm() * (1 + 1e-10));
    }
  }
  SUBCASE("commutes with derivative") {
    nsrtest::Rng rng(12);
    ScalarField f = nsrtest::random_scalar(g32, rng, 6);
    ScalarField a = mollify(f, 0.6).field.derivative(1);
    ScalarField b = mollify(f.derivative(1), 0.6).field;
    CHECK((a - b).sup_norm() < 1e-10);
  }
  SUBCASE("under-resolved kernel flagged") {
    ScalarField f = ScalarField::constant(g32, 1.0);
    CHECK(mollify(f, 0.5 * g32.dx()).under_resolved);
  }
}

TEST_CASE("commutator probe (quadratic commutator law)") {
  SUBCASE("constant input gives zero commutator") {
    ScalarField f = ScalarField::constant(g32, 2.0);
    nsrtest::Rng rng(13);
    ScalarField h = nsrtest::random_scalar(g32, rng, 5);
    for (auto& s : commutator_probe(f, h, {0.8, 0.5})) CHECK(s.norm < 1e-12);
  }
  SUBCASE("f=g=sin(x1): slope in [1.8, 2.2]") {
    ScalarField f =
        ScalarField::sample(g48, [](double x, double, double) { return std::sin(x); });
    std::vector<double> ells = {1.0, 0.8, 0.64, 0.512, 0.41};
    auto samples = commutator_probe(f, f, ells);
    std::vector<double> norms;
    for (auto& s : samples) {
      CHECK_FALSE(s.under_resolved);
      norms.push_back(s.norm);
    }
    double slope = loglog_slope(ells, norms);
    MESSAGE("commutator slope = " << slope);
    CHECK(slope >= 1.8);
    CHECK(slope <= 2.2);
  }
  SUBCASE("norm <= C ell^2 ||f||_1 ||g||_1 with stable C over 10 pairs") {
    nsrtest::Rng rng(14);
    double cmax = 0, cmin = 1e300;
    for (int t = 0; t < 10; ++t) {
      ScalarField f = nsrtest::random_scalar(g32, rng, 4);
      ScalarField h = nsrtest::random_scalar(g32, rng, 4);
      double n1f = holder_norm(f, 1.0), n1h = holder_norm(h, 1.0);
      for (auto& s : commutator_probe(f, h, {0.7})) {
        double c = s.norm / (s.ell * s.ell * n1f * n1h);
        cmax = std::max(cmax, c);
        cmin = std::min(cmin, c);
      }
    }
    MESSAGE("commutator constant range [" << cmin << ", " << cmax << "]");
    CHECK(cmax < 10.0);         // bounded
    CHECK(cmax / cmin < 50.0);  // stable across pairs
  }
}

TEST_CASE("holder estimators") {
  SUBCASE("exponent 0 equals sup norm exactly") {
    nsrtest::Rng rng(15);
    ScalarField f = nsrtest::random_scalar(g32, rng, 6);
    CHECK(holder_seminorm(f, 0.0).value == f.sup_norm());
  }
  SUBCASE("constant field: zero seminorm") {
    ScalarField f = ScalarField::constant(g32, 4.0);
    CHECK(holder_seminorm(f, 0.5).value == doctest::Approx(0.0));
  }
  SUBCASE("sin(x1), exponent 1 -> 1") {
    ScalarField f =
        ScalarField::sample(g32, [](double x, double, double) { return std::sin(x); });
    CHECK(holder_seminorm(f, 1.0).value == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("unresolvable exponent raises") {
    ScalarField f = ScalarField::constant(g32, 1.0);
    CHECK_THROWS(holder_seminorm(f, 11.0));
  }
  SUBCASE("product inequality with C <= 1.5 on 50 random pairs") {
    nsrtest::Rng rng(16);
    const double r = 0.6;
    double cworst = 0;
    for (int t = 0; t < 50; ++t) {
      ScalarField f = nsrtest::random_scalar(g32, rng, 5);
      ScalarField h = nsrtest::random_scalar(g32, rng, 5);
      double lhs = holder_seminorm(f.times(h), r).value;
      double rhs = holder_seminorm(f, r).value * h.sup_norm() +
                   f.sup_norm() * holder_seminorm(h, r).value;
      cworst = std::max(cworst, lhs / rhs);
    }
    MESSAGE("product inequality worst C = " << cworst);
    CHECK(cworst <= 1.5);
  }
  SUBCASE("interpolation inequality with C <= 1.5 on 50 random fields") {
    nsrtest::Rng rng(17);
    const double s = 0.6, r = 0.9;
    double cworst = 0;
    for (int t = 0; t < 50; ++t) {
      ScalarField f = nsrtest::random_scalar(g32, rng, 5);
      double lhs = holder_seminorm(f, s).value;
      double rhs = std::pow(f.sup_norm(), 1.0 - s / r) *
                   std::pow(holder_seminorm(f, r).value, s / r);
      cworst = std::max(cworst, lhs / rhs);
    }
    MESSAGE("interpolation inequality worst C = " << cworst);
    CHECK(cworst <= 1.5);
  }
}

TEST_CASE("vector and tensor carriers") {
  nsrtest::Rng rng(18);
  VectorField v = nsrtest::random_vector(g32, rng, 5);
  SUBCASE("divergence of a curl vanishes") {
    CHECK(divergence(curl(v)).sup_norm() < 1e-10);
  }
  SUBCASE("curl of a gradient vanishes") {
    ScalarField f = nsrtest::random_scalar(g32, rng, 5);
    VectorField cg = curl(gradient(f));
    CHECK(cg.sup_norm() < 1e-10);
  }
  SUBCASE("outer product trace equals dot product") {
    VectorField w = nsrtest::random_vector(g32, rng, 5);
    ScalarField tr = outer_sym(v, w).trace();
    ScalarField d = dot(v, w);
    CHECK((tr - d).sup_norm() < 1e-10);
    CHECK(outer_traceless(v, w).trace().sup_norm() < 1e-10);
  }
  SUBCASE("kernel backends give matching field algebra") {
    using namespace nsr::kernels;
    if (!avx2_available()) return;
    ScalarField f = nsrtest::random_scalar(g32, rng, 6);
    ScalarField h = nsrtest::random_scalar(g32, rng, 6);
    force_backend(Backend::scalar);
    ScalarField p1 = f.times(h);
    force_backend(Backend::avx2);
    ScalarField p2 = f.times(h);
    reset_backend();
    CHECK((p1 - p2).sup_norm() < 1e-13);
  }
}
