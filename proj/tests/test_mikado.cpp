#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "nsr/field.hpp"
#include "nsr/mikado.hpp"
#include "test_util.hpp"

using namespace nsr;

namespace {

// thin identity-check family, shared across cases (placement search is the
// expensive part of build)
const MikadoFamily& thin_family() {
  static MikadoFamily fam = MikadoFamily::build(MikadoConfig{});
  return fam;
}

double frob(const SymMat& a, const SymMat& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = a.at(i, j) - b.at(i, j);
      s += d * d;
    }
  return std::sqrt(s);
}

SymMat reconstruct(const MikadoFamily& fam, const SymMat& R) {
  auto g2 = MikadoFamily::gamma_sq(R, fam.config().eps);
  SymMat out;
  out.m = {0, 0, 0, 0, 0, 0};
  const auto& dirs = fam.directions();
  for (int j = 0; j < 9; ++j)
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b)
        out.at(a, b) += g2[j] * dirs[j].dhat[a] * dirs[j].dhat[b];
  return out;
}

}  // namespace

TEST_CASE("coefficient decomposition") {
  const MikadoFamily& fam = thin_family();
  SUBCASE("identity matrix: symmetric coefficients") {
    auto g2 = MikadoFamily::gamma_sq(SymMat::identity(), fam.config().eps);
    double eps = fam.config().eps;
    for (int j = 0; j < 3; ++j)
      CHECK(g2[j] == doctest::Approx(1.0 - 2 * eps).epsilon(1e-12));
    for (int j = 3; j < 9; ++j)
      CHECK(g2[j] == doctest::Approx(eps).epsilon(1e-12));
  }
  SUBCASE("reconstruction over 1000 sampled R, positivity throughout") {
    auto samples = sample_half_ball(1000, 99);
    for (const SymMat& R : samples) {
      auto g2 = MikadoFamily::gamma_sq(R, fam.config().eps);
      for (double v : g2) CHECK(v > 0);
      CHECK(frob(reconstruct(fam, R), R) < 1e-10);
    }
  }
  SUBCASE("matrices outside the half-ball are rejected") {
    SymMat R = SymMat::identity();
    R.at(0, 1) = 0.6;
    CHECK_THROWS(MikadoFamily::gamma_sq(R, fam.config().eps));
  }
  SUBCASE("coefficient smoothness: bounded finite differences") {
    auto samples = sample_half_ball(20, 123);
    double worst = 0;
    for (const SymMat& R : samples) {
      if (R.frob_dist_id() > 0.45) continue;  // keep R+dR inside the ball
      for (int c = 0; c < 6; ++c) {
        SymMat Rp = R;
        Rp.m[c] += 1e-6;
        auto a = fam.gamma(R), b = fam.gamma(Rp);
        for (int j = 0; j < 9; ++j)
          worst = std::max(worst, std::abs(b[j] - a[j]) / 1e-6);
      }
    }
    MESSAGE("max |dGamma/dR| over samples = " << worst);
    CHECK(worst < 100.0);
  }
}

TEST_CASE("pipe placement and analytic coefficients") {
  const MikadoFamily& fam = thin_family();
  SUBCASE("minimal line separation") {
    MESSAGE("min separation = " << fam.min_line_separation());
    CHECK(fam.min_line_separation() > 10.5 * fam.config().sigma);
  }
  SUBCASE("analytic modes match the FFT of the sampled pipe") {
    const Grid g{96};
    for (int j : {0, 4, 7}) {
      ScalarField h = fam.pipe_field(j, g);
      double worst = 0;
      for (const PipeMode& m : fam.directions()[j].modes) {
        double k2 = 0;
        for (int i = 0; i < 3; ++i) k2 += double(m.k[i]) * m.k[i];
        if (k2 > 10 * 10) continue;  // compare the well-resolved range
        cplx got = h.modes()[g.idx((m.k[0] + g.n) % g.n, (m.k[1] + g.n) % g.n,
                                   (m.k[2] + g.n) % g.n)];
        worst = std::max(worst, std::abs(got - m.h));
      }
      MESSAGE("direction " << j << ": coefficient mismatch " << worst);
      CHECK(worst < 1e-8);
    }
  }
  SUBCASE("squared-profile modes match the FFT of the sampled pipe squared") {
    const Grid g{128};
    int j = 3;
    ScalarField h = fam.pipe_field(j, g);
    std::vector<double> sq(h.values());
    for (auto& v : sq) v *= v;
    ScalarField h2 = ScalarField::from_values(g, std::move(sq));
    CHECK(h2.mean() == doctest::Approx(1.0).epsilon(1e-8));
    double worst = 0;
    for (const PipeMode& m : fam.directions()[j].modes) {
      double k2 = 0;
      for (int i = 0; i < 3; ++i) k2 += double(m.k[i]) * m.k[i];
      if (k2 > 10 * 10) continue;
      cplx got = h2.modes()[g.idx((m.k[0] + g.n) % g.n, (m.k[1] + g.n) % g.n,
                                  (m.k[2] + g.n) % g.n)];
      worst = std::max(worst, std::abs(got - m.h2));
    }
    MESSAGE("squared-profile coefficient mismatch " << worst);
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("family identities over 100 sampled R") {
  const MikadoFamily& fam = thin_family();
  const Grid g{168};
  auto pipes = fam.pipe_fields(g);

  // one-time per-direction data
  std::array<double, 9> pipe_mean, divW_norm, diag_div;
  double gram_off = 0;
  std::array<std::array<double, 9>, 9> gram{};
  double wsup = 0, gsup = 0;  // profile and gradient scales
  std::array<ScalarField, 9> gradn;
  for (int j = 0; j < 9; ++j) {
    gradn[j] = fam.pipe_gradnorm_field(j, g);
    pipe_mean[j] = pipes[j].mean();
    wsup = std::max(wsup, pipes[j].sup_norm());
    gsup = std::max(gsup, gradn[j].sup_norm());
  }
  for (int j = 0; j < 9; ++j) {
    // div(h_j dhat_j) = dhat_j . grad h_j, spectrally
    const auto& d = fam.directions()[j].dhat;
    ScalarField dv = d[0] * pipes[j].derivative(0) +
                     d[1] * pipes[j].derivative(1) +
                     d[2] * pipes[j].derivative(2);
    divW_norm[j] = dv.sup_norm();
    // diagonal part of div(W x W): dhat . grad(h_j^2)
    std::vector<double> sq(pipes[j].values());
    for (auto& v : sq) v *= v;
    ScalarField h2 = ScalarField::from_values(g, std::move(sq));
    ScalarField dd = d[0] * h2.derivative(0) + d[1] * h2.derivative(1) +
                     d[2] * h2.derivative(2);
    diag_div[j] = dd.sup_norm();
    for (int i = 0; i <= j; ++i) {
      const auto& vi = pipes[i].values();
      const auto& vj = pipes[j].values();
      double s = 0;
      for (std::size_t p = 0; p < vi.size(); ++p) s += vi[p] * vj[p];
      gram[i][j] = gram[j][i] = s / double(g.size());
      if (i != j) gram_off = std::max(gram_off, std::abs(gram[i][j]));
    }
  }
  // cross part of div(W x W): |div(h_i h_j sym pair)| <= 2(|h_i||grad h_j| +
  // |h_j||grad h_i|) pointwise
  double cross_div = 0;
  for (int i = 0; i < 9; ++i)
    for (int j = i + 1; j < 9; ++j) {
      const auto& hi = pipes[i].values();
      const auto& hj = pipes[j].values();
      const auto& gi = gradn[i].values();
      const auto& gj = gradn[j].values();
      double m = 0;
      for (std::size_t p = 0; p < hi.size(); ++p)
        m = std::max(m, std::abs(hi[p]) * gj[p] + std::abs(hj[p]) * gi[p]);
      cross_div = std::max(cross_div, 2.0 * m);
    }
  MESSAGE("pipe sup = " << wsup << ", grad sup = " << gsup);
  MESSAGE("max |mean h_j| = "
          << *std::max_element(pipe_mean.begin(), pipe_mean.end(),
                               [](double a, double b) {
                                 return std::abs(a) < std::abs(b);
                               }));
  MESSAGE("max off-diagonal gram = " << gram_off);
  MESSAGE("max div(h dhat) = "
          << *std::max_element(divW_norm.begin(), divW_norm.end()));
  MESSAGE("max diagonal div(WW) term = "
          << *std::max_element(diag_div.begin(), diag_div.end()));
  MESSAGE("cross div(WW) bound = " << cross_div);

  auto samples = sample_half_ball(100, 7);
  double worst_mean = 0, worst_ww = 0, worst_div = 0, worst_divww = 0;
  for (const SymMat& R : samples) {
    auto gam = fam.gamma(R);
    auto g2 = MikadoFamily::gamma_sq(R, fam.config().eps);
    // mean of W
    double m0 = 0, m1 = 0, m2 = 0;
    for (int j = 0; j < 9; ++j) {
      const auto& d = fam.directions()[j].dhat;
      m0 += gam[j] * pipe_mean[j] * d[0];
      m1 += gam[j] * pipe_mean[j] * d[1];
      m2 += gam[j] * pipe_mean[j] * d[2];
    }
    worst_mean = std::max(worst_mean, std::sqrt(m0 * m0 + m1 * m1 + m2 * m2));
    // avg W x W via the pipe gram matrix
    SymMat ww;
    ww.m = {0, 0, 0, 0, 0, 0};
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        const auto& di = fam.directions()[i].dhat;
        const auto& dj = fam.directions()[j].dhat;
        double c = gam[i] * gam[j] * gram[i][j];
        for (int a = 0; a < 3; ++a)
          for (int b = a; b < 3; ++b)
            ww.at(a, b) += c * 0.5 * (di[a] * dj[b] + di[b] * dj[a]);
      }
    worst_ww = std::max(worst_ww, frob(ww, R));
    // spectral div bounds, normalized by the natural scales
    double dsum = 0, dwsum = 0;
    for (int j = 0; j < 9; ++j) {
      dsum += gam[j] * divW_norm[j];
      dwsum += g2[j] * diag_div[j];
    }
    double gmax = *std::max_element(gam.begin(), gam.end());
    worst_div = std::max(worst_div, dsum / gsup);
    worst_divww =
        std::max(worst_divww, (dwsum + gmax * gmax * cross_div) / (wsup * gsup));
  }
  MESSAGE("worst |avg W| = " << worst_mean);
  MESSAGE("worst |avg WxW - R| = " << worst_ww);
  MESSAGE("worst relative div W = " << worst_div);
  MESSAGE("worst relative div(WxW) = " << worst_divww);
  CHECK(worst_mean < 1e-8);
  CHECK(worst_ww < 1e-6);
  CHECK(worst_div < 1e-8);
  CHECK(worst_divww < 1e-8);
}

TEST_CASE("fourier data") {
  const MikadoFamily& fam = thin_family();
  SUBCASE("a_k orthogonality and zero mean") {
    auto samples = sample_half_ball(20, 31);
    for (const SymMat& R : samples) {
      auto ak = fam.fourier_a(R);
      for (const auto& e : ak) {
        CHECK(!(e.k[0] == 0 && e.k[1] == 0 && e.k[2] == 0));
        cplx d = double(e.k[0]) * e.a[0] + double(e.k[1]) * e.a[1] +
                 double(e.k[2]) * e.a[2];
        CHECK(std::abs(d) < 1e-10);
      }
    }
  }
  SUBCASE("C_k orthogonality") {
    auto ck = fam.fourier_C(sample_half_ball(5, 77)[3]);
    double worst = 0;
    for (const auto& e : ck)
      for (int a = 0; a < 3; ++a) {
        cplx d = e.C[a][0] * double(e.k[0]) + e.C[a][1] * double(e.k[1]) +
                 e.C[a][2] * double(e.k[2]);
        worst = std::max(worst, std::abs(d));
      }
    CHECK(worst < 1e-10);
  }
  SUBCASE("decay: |a_k| |k|^4 bounded; M finite") {
    auto samples = sample_half_ball(100, 7);
    double mbar = fam.fit_Mbar(samples);
    MESSAGE("Mbar = " << mbar);
    CHECK(mbar > 0);
    CHECK(std::isfinite(mbar));
    auto mres = fam.compute_M(mbar);
    MESSAGE("M = " << mres.M << " (tail bound " << mres.tail_bound << ")");
    CHECK(mres.M > 0);
    // lattice sum of |k|^-4 sits near its infinite value ~16.53
    double latt = mres.M / (64.0 * mbar);
    CHECK(latt > 15.0);
    CHECK(latt < 17.0);
  }
  SUBCASE("M scales linearly in Mbar") {
    auto a = fam.compute_M(1.0);
    auto b = fam.compute_M(3.5);
    CHECK(b.M == doctest::Approx(3.5 * a.M).epsilon(1e-12));
  }
  SUBCASE("smoothness in R: first finite difference decays like |k|^-4") {
    auto samples = sample_half_ball(5, 13);
    double worst = 0;
    for (const SymMat& R : samples) {
      if (R.frob_dist_id() > 0.45) continue;
      SymMat Rp = R;
      Rp.m[1] += 1e-5;
      auto a = fam.fourier_a(R), b = fam.fourier_a(Rp);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        double k2 = 0;
        for (int c = 0; c < 3; ++c) k2 += double(a[i].k[c]) * a[i].k[c];
        double dn = 0;
        for (int c = 0; c < 3; ++c)
          dn += std::abs(b[i].a[c] - a[i].a[c]) / 1e-5;
        worst = std::max(worst, dn * k2 * k2);
      }
    }
    MESSAGE("sup |D_R a_k| |k|^4 (finite difference) = " << worst);
    CHECK(std::isfinite(worst));
    CHECK(worst < 1e7);
  }
}

TEST_CASE("truncated reconstruction against real-space evaluation") {
  const MikadoFamily& fam = thin_family();
  const Grid g{32};
  SymMat R = sample_half_ball(10, 55)[4];
  VectorField W = fam.evaluate_W(R, g);
  auto ak = fam.fourier_a(R);
  // evaluate the truncated series on the same points
  VectorField S = VectorField::zero(g);
  {
    std::array<std::vector<double>, 3> acc;
    for (auto& v : acc) v.assign(g.size(), 0.0);
    std::size_t p = 0;
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        for (int k = 0; k < g.n; ++k, ++p) {
          double x = i * g.dx(), y = j * g.dx(), z = k * g.dx();
          for (const auto& e : ak) {
            cplx ph = std::polar(1.0, e.k[0] * x + e.k[1] * y + e.k[2] * z);
            for (int c = 0; c < 3; ++c) acc[c][p] += (e.a[c] * ph).real();
          }
        }
    for (int c = 0; c < 3; ++c)
      S.c[c] = ScalarField::from_values(g, std::move(acc[c]));
  }
  double mbar = fam.fit_Mbar({R});
  double tail = mbar * 2.0 * two_pi / double(fam.config().k_max - 1);
  double diff = (W - S).sup_norm();
  MESSAGE("truncation sup error = " << diff << " (tail bound " << tail << ")");
  CHECK(diff <= tail);
}

TEST_CASE("potential coefficients") {
  SUBCASE("zero amplitude maps to zero") {
    auto c = potential_coefficients({cplx(0), cplx(0), cplx(0)}, {0, 0, 1});
    for (auto& v : c) CHECK(std::abs(v) == 0);
  }
  SUBCASE("hand example k=(0,0,1), a=(1,0,0)") {
    auto c = potential_coefficients({cplx(1), cplx(0), cplx(0)}, {0, 0, 1});
    CHECK(std::abs(c[0]) < 1e-15);
    CHECK(std::abs(c[1] - cplx(0, 1)) < 1e-15);
    CHECK(std::abs(c[2]) < 1e-15);
  }
  SUBCASE("curl identity on random admissible modes") {
    nsrtest::Rng rng(71);
    const Grid g{16};
    for (int t = 0; t < 10; ++t) {
      std::array<int, 3> k = {int(rng.next() % 5) - 2, int(rng.next() % 5) - 2,
                              int(rng.next() % 5) - 2};
      if (k[0] == 0 && k[1] == 0 && k[2] == 0) k = {1, 0, 0};
      // a perpendicular to k
      std::array<double, 3> raw = {rng.sym(), rng.sym(), rng.sym()};
      double kk = double(k[0]) * k[0] + double(k[1]) * k[1] + double(k[2]) * k[2];
      double rk = raw[0] * k[0] + raw[1] * k[1] + raw[2] * k[2];
      std::array<cplx, 3> a;
      for (int i = 0; i < 3; ++i) a[i] = cplx(raw[i] - rk * k[i] / kk, 0);
      auto c = potential_coefficients(a, k);
      // assemble c e^{ik.x} as a field, take curl, compare a e^{ik.x}
      VectorField pot = VectorField::zero(g), ref = VectorField::zero(g);
      for (int i = 0; i < 3; ++i) {
        std::vector<cplx> mp(g.size(), cplx(0)), mr(g.size(), cplx(0));
        std::size_t id = g.idx((k[0] + g.n) % g.n, (k[1] + g.n) % g.n,
                               (k[2] + g.n) % g.n);
        mp[id] = c[i];
        mr[id] = a[i];
        pot.c[i] = ScalarField::from_modes(g, std::move(mp), true);
        ref.c[i] = ScalarField::from_modes(g, std::move(mr), true);
      }
      CHECK((curl(pot) - ref).sup_norm() < 1e-12);
    }
  }
  SUBCASE("k = 0 rejected") {
    CHECK_THROWS(potential_coefficients({cplx(1), cplx(0), cplx(0)}, {0, 0, 0}));
  }
}
