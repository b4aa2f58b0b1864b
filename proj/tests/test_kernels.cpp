#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "nsr/kernels.hpp"
#include "test_util.hpp"

using namespace nsr::kernels;

namespace {

std::vector<double> random_array(nsrtest::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.sym();
  return v;
}

std::vector<cplx> random_carray(nsrtest::Rng& rng, std::size_t n) {
  std::vector<cplx> v(n);
  for (auto& x : v) x = cplx(rng.sym(), rng.sym());
  return v;
}

constexpr std::size_t kSizes[] = {1, 3, 4, 7, 64, 1001, 4096};

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  if (!avx2_available()) {
    MESSAGE("avx2 not available on this host; equivalence suite skipped");
    return;
  }
  const Ops& s = scalar_ops();
  const Ops& v = avx2_ops();
  nsrtest::Rng rng(42);

  for (std::size_t n : kSizes) {
    CAPTURE(n);
    auto a = random_array(rng, n);
    auto b = random_array(rng, n);

    SUBCASE("") {}  // keep rng state shared; subcases not used below

    {  // mul_inplace: identical operations, expect bitwise equality
      auto x = a, y = a;
      s.mul_inplace(x.data(), b.data(), n);
      v.mul_inplace(y.data(), b.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == y[i]);
    }
    {  // mul
      std::vector<double> x(n), y(n);
      s.mul(x.data(), a.data(), b.data(), n);
      v.mul(y.data(), a.data(), b.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == y[i]);
    }
    {  // fmadd: FMA contraction changes rounding; allow tiny relative slack
      auto x = a, y = a;
      s.fmadd(x.data(), b.data(), b.data(), n);
      v.fmadd(y.data(), b.data(), b.data(), n);
      for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(x[i] - y[i]) <= 4e-16 * (1.0 + std::abs(x[i])));
    }
    {  // axpy
      auto x = a, y = a;
      s.axpy(x.data(), 0.37, b.data(), n);
      v.axpy(y.data(), 0.37, b.data(), n);
      for (std::size_t i = 0; i < n; ++i)
        CHECK(std::abs(x[i] - y[i]) <= 4e-16 * (1.0 + std::abs(x[i])));
    }
    {  // scale
      auto x = a, y = a;
      s.scale(x.data(), -1.7, n);
      v.scale(y.data(), -1.7, n);
      for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == y[i]);
    }
    {  // reductions: same 4-lane association, tolerate rounding noise
      double xs = s.sumsq(a.data(), n);
      double vs = v.sumsq(a.data(), n);
      CHECK(std::abs(xs - vs) <= 1e-13 * (1.0 + std::abs(xs)));
      double xd = s.dot(a.data(), b.data(), n);
      double vd = v.dot(a.data(), b.data(), n);
      CHECK(std::abs(xd - vd) <= 1e-13 * (1.0 + std::abs(xd)));
    }
    {  // complex kernels
      auto ca = random_carray(rng, n);
      auto cx = ca, cy = ca;
      s.cmul_real(cx.data(), a.data(), n);
      v.cmul_real(cy.data(), a.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(cx[i] == cy[i]);

      auto cb = random_carray(rng, n);
      cx = ca;
      cy = ca;
      cplx alpha(0.3, -0.8);
      s.caxpy(cx.data(), alpha, cb.data(), n);
      v.caxpy(cy.data(), alpha, cb.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(cx[i].real() - cy[i].real()) <=
              4e-16 * (1.0 + std::abs(cx[i].real())));
        CHECK(std::abs(cx[i].imag() - cy[i].imag()) <=
              4e-16 * (1.0 + std::abs(cx[i].imag())));
      }
    }
  }
}

TEST_CASE("backend dispatch") {
  Backend detected = active_backend();
  force_backend(Backend::scalar);
  CHECK(active_backend() == Backend::scalar);
  CHECK(backend_name() == "scalar");
  reset_backend();
  CHECK(active_backend() == detected);
  if (avx2_available()) CHECK(active_backend() == Backend::avx2);
}
