#include "nsr/mikado.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace nsr {

namespace {

struct Xorshift {
  std::uint64_t s;
  explicit Xorshift(std::uint64_t seed) : s(seed ? seed : 1) {}
  std::uint64_t next() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return s;
  }
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double sym() { return 2.0 * uniform() - 1.0; }
};

constexpr std::array<std::array<int, 3>, 9> kDirs = {{
    {1, 0, 0},
    {0, 1, 0},
    {0, 0, 1},
    {1, 1, 0},
    {1, -1, 0},
    {1, 0, 1},
    {1, 0, -1},
    {0, 1, 1},
    {0, 1, -1},
}};

double wrap_pi(double x) {
  x = std::fmod(x, two_pi);
  if (x < -3.14159265358979323846) x += two_pi;
  if (x >= 3.14159265358979323846) x -= two_pi;
  return x;
}

// orthonormal basis of the plane perpendicular to d
void plane_basis(const std::array<double, 3>& dhat, std::array<double, 3>& b1,
                 std::array<double, 3>& b2) {
  std::array<double, 3> seed = {0, 0, 1};
  if (std::abs(dhat[2]) > 0.9) seed = {1, 0, 0};
  // b1 = normalize(seed - (seed.dhat) dhat)
  double sd = seed[0] * dhat[0] + seed[1] * dhat[1] + seed[2] * dhat[2];
  for (int i = 0; i < 3; ++i) b1[i] = seed[i] - sd * dhat[i];
  double n1 = std::sqrt(b1[0] * b1[0] + b1[1] * b1[1] + b1[2] * b1[2]);
  for (int i = 0; i < 3; ++i) b1[i] /= n1;
  b2 = {dhat[1] * b1[2] - dhat[2] * b1[1], dhat[2] * b1[0] - dhat[0] * b1[2],
        dhat[0] * b1[1] - dhat[1] * b1[0]};
}

// minimal separation between the periodic line families j and j' (skew
// directions): distance reduces to a 1D wrap along the common normal
double pair_separation(const MikadoDirection& a, const MikadoDirection& b) {
  long nx = long(a.d[1]) * b.d[2] - long(a.d[2]) * b.d[1];
  long ny = long(a.d[2]) * b.d[0] - long(a.d[0]) * b.d[2];
  long nz = long(a.d[0]) * b.d[1] - long(a.d[1]) * b.d[0];
  long g = std::gcd(std::gcd(std::abs(nx), std::abs(ny)), std::abs(nz));
  double nn = std::sqrt(double(nx * nx + ny * ny + nz * nz));
  double proj = (b.offset[0] - a.offset[0]) * nx +
                (b.offset[1] - a.offset[1]) * ny +
                (b.offset[2] - a.offset[2]) * nz;
  double period = two_pi * double(g);
  double w = std::fmod(proj, period);
  if (w < -0.5 * period) w += period;
  if (w >= 0.5 * period) w -= period;
  return std::abs(w) / nn;
}

double min_separation(const std::array<MikadoDirection, 9>& dirs) {
  double best = 1e300;
  for (int i = 0; i < 9; ++i)
    for (int j = i + 1; j < 9; ++j)
      best = std::min(best, pair_separation(dirs[i], dirs[j]));
  return best;
}

// 2D Fourier transforms of the cross-section profile and its square
// (convention F(kappa) = int f(|y|) e^{-i kappa.y} dy):
//   h(r)/A = (1 - u) e^{-u},  u = r^2/(2 s^2)
double profile_ft(double sigma, double k2) {
  double s2 = sigma * sigma;
  return two_pi * s2 * (0.5 * s2 * k2) * std::exp(-0.5 * s2 * k2);
}
double profile_sq_ft(double sigma, double k2) {
  double s2 = sigma * sigma;
  double pi = 0.5 * two_pi;
  return pi * s2 * (0.5 + s2 * s2 * k2 * k2 / 64.0) * std::exp(-0.25 * s2 * k2);
}

}  // namespace

double SymMat::frob_dist_id() const {
  const SymMat id = SymMat::identity();
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = at(i, j) - id.at(i, j);
      s += d * d;
    }
  return std::sqrt(s);
}

std::array<double, 9> MikadoFamily::gamma_sq(const SymMat& R, double eps) {
  if (R.frob_dist_id() > 0.5 + 1e-12)
    throw std::runtime_error("mikado: matrix outside the closed half-ball");
  double off2 = R.at(0, 1) * R.at(0, 1) + R.at(0, 2) * R.at(0, 2) +
                R.at(1, 2) * R.at(1, 2);
  double mu = std::sqrt(off2 + eps * eps);
  std::array<double, 9> g2;
  for (int i = 0; i < 3; ++i) g2[i] = R.at(i, i) - 2.0 * mu;
  g2[3] = mu + R.at(0, 1);
  g2[4] = mu - R.at(0, 1);
  g2[5] = mu + R.at(0, 2);
  g2[6] = mu - R.at(0, 2);
  g2[7] = mu + R.at(1, 2);
  g2[8] = mu - R.at(1, 2);
  for (double v : g2)
    if (!(v > 0))
      throw std::runtime_error("mikado: coefficient positivity failed");
  return g2;
}

std::array<double, 9> MikadoFamily::gamma(const SymMat& R) const {
  auto g2 = gamma_sq(R, cfg_.eps);
  std::array<double, 9> g;
  for (int j = 0; j < 9; ++j) g[j] = std::sqrt(g2[j]);
  return g;
}

MikadoFamily MikadoFamily::build(const MikadoConfig& cfg) {
  MikadoFamily fam;
  fam.cfg_ = cfg;
  const double V = two_pi * two_pi * two_pi;

  for (int j = 0; j < 9; ++j) {
    MikadoDirection& dir = fam.dirs_[j];
    dir.d = kDirs[j];
    double dn = std::sqrt(double(dir.d[0] * dir.d[0] + dir.d[1] * dir.d[1] +
                                 dir.d[2] * dir.d[2]));
    for (int i = 0; i < 3; ++i) dir.dhat[i] = dir.d[i] / dn;
    dir.length = two_pi * dn;
    dir.amp = std::sqrt(2.0 * V / (0.5 * two_pi * cfg.sigma * cfg.sigma * dir.length));
    dir.offset = {0, 0, 0};
  }

  // pipe placement: maximize the minimal pairwise line separation by a
  // seeded random search with shrinking local refinement
  std::array<std::array<double, 3>, 9> b1s, b2s;
  for (int j = 0; j < 9; ++j) plane_basis(fam.dirs_[j].dhat, b1s[j], b2s[j]);
  auto set_offsets = [&](const std::array<double, 18>& p) {
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 3; ++i)
        fam.dirs_[j].offset[i] =
            p[2 * j] * b1s[j][i] + p[2 * j + 1] * b2s[j][i];
  };
  std::array<double, 18> gbest{};
  double gbest_sep = -1;
  const int anneal = std::max(1000, cfg.placement_rounds);
  const int restarts = std::max(100, anneal / 30);
  for (int outer = 0; outer < 12; ++outer) {
    Xorshift orng(cfg.seed + 0x9e3779b9u * (outer + 1));
    std::array<double, 18> best{}, cand{};
    double best_sep = -1;
    for (int r = 0; r < restarts; ++r) {
      for (auto& x : cand) x = 3.14159265358979 * orng.sym();
      set_offsets(cand);
      double s = min_separation(fam.dirs_);
      if (s > best_sep) {
        best_sep = s;
        best = cand;
      }
    }
    double step = 1.0;
    for (int r = 0; r < anneal; ++r) {
      cand = best;
      int moves = (orng.uniform() < 0.7) ? 1 : 2 + int(orng.next() % 3);
      for (int m = 0; m < moves; ++m)
        cand[orng.next() % 18] += step * orng.sym();
      set_offsets(cand);
      double s = min_separation(fam.dirs_);
      if (s > best_sep) {
        best_sep = s;
        best = cand;
      }
      step = std::max(step * 0.99996, 0.005);
    }
    if (best_sep > gbest_sep) {
      gbest_sep = best_sep;
      gbest = best;
    }
  }
  set_offsets(gbest);
  fam.min_sep_ = gbest_sep;

  // analytic Fourier data: per direction, modes on the perpendicular plane
  for (int j = 0; j < 9; ++j) {
    MikadoDirection& dir = fam.dirs_[j];
    dir.modes.clear();
    const double scale = dir.length / V;
    for (int a = -cfg.k_max; a <= cfg.k_max; ++a)
      for (int b = -cfg.k_max; b <= cfg.k_max; ++b)
        for (int c = -cfg.k_max; c <= cfg.k_max; ++c) {
          if (a == 0 && b == 0 && c == 0) continue;
          if (a * dir.d[0] + b * dir.d[1] + c * dir.d[2] != 0) continue;
          double k2 = double(a) * a + double(b) * b + double(c) * c;
          if (k2 > double(cfg.k_max) * cfg.k_max) continue;
          double phase = -(a * dir.offset[0] + b * dir.offset[1] +
                           c * dir.offset[2]);
          cplx ph = std::polar(1.0, phase);
          PipeMode m;
          m.k = {a, b, c};
          m.h = scale * dir.amp * profile_ft(cfg.sigma, k2) * ph;
          m.h2 = scale * dir.amp * dir.amp * profile_sq_ft(cfg.sigma, k2) * ph;
          dir.modes.push_back(m);
        }
  }
  return fam;
}

ScalarField MikadoFamily::pipe_field(int j, const Grid& g) const {
  const MikadoDirection& dir = dirs_[j];
  const double s2 = cfg_.sigma * cfg_.sigma;
  return ScalarField::sample(g, [&](double x, double y, double z) {
    double w0 = wrap_pi(x - dir.offset[0]);
    double w1 = wrap_pi(y - dir.offset[1]);
    double w2 = wrap_pi(z - dir.offset[2]);
    double r2min = 1e300;
    for (int mx = -1; mx <= 1; ++mx)
      for (int my = -1; my <= 1; ++my)
        for (int mz = -1; mz <= 1; ++mz) {
          double a = w0 + two_pi * mx;
          double b = w1 + two_pi * my;
          double c = w2 + two_pi * mz;
          double par = a * dir.dhat[0] + b * dir.dhat[1] + c * dir.dhat[2];
          double r2 = a * a + b * b + c * c - par * par;
          r2min = std::min(r2min, r2);
        }
    double u = 0.5 * r2min / s2;
    if (u > 60.0) return 0.0;
    return dir.amp * (1.0 - u) * std::exp(-u);
  });
}

ScalarField MikadoFamily::pipe_gradnorm_field(int j, const Grid& g) const {
  const MikadoDirection& dir = dirs_[j];
  const double s2 = cfg_.sigma * cfg_.sigma;
  return ScalarField::sample(g, [&](double x, double y, double z) {
    double w0 = wrap_pi(x - dir.offset[0]);
    double w1 = wrap_pi(y - dir.offset[1]);
    double w2 = wrap_pi(z - dir.offset[2]);
    double r2min = 1e300;
    for (int mx = -1; mx <= 1; ++mx)
      for (int my = -1; my <= 1; ++my)
        for (int mz = -1; mz <= 1; ++mz) {
          double a = w0 + two_pi * mx;
          double b = w1 + two_pi * my;
          double c = w2 + two_pi * mz;
          double par = a * dir.dhat[0] + b * dir.dhat[1] + c * dir.dhat[2];
          double r2 = a * a + b * b + c * c - par * par;
          r2min = std::min(r2min, r2);
        }
    double u = 0.5 * r2min / s2;
    if (u > 60.0) return 0.0;
    double rho = std::sqrt(r2min);
    return dir.amp * (rho / s2) * std::abs(2.0 - u) * std::exp(-u);
  });
}

std::array<ScalarField, 9> MikadoFamily::pipe_fields(const Grid& g) const {
  return {pipe_field(0, g), pipe_field(1, g), pipe_field(2, g),
          pipe_field(3, g), pipe_field(4, g), pipe_field(5, g),
          pipe_field(6, g), pipe_field(7, g), pipe_field(8, g)};
}

VectorField MikadoFamily::evaluate_W(
    const SymMat& R, const std::array<ScalarField, 9>& pipes) const {
  auto gam = gamma(R);
  const Grid& g = pipes[0].grid();
  VectorField W = VectorField::zero(g);
  for (int j = 0; j < 9; ++j)
    for (int i = 0; i < 3; ++i)
      W.c[i] += (gam[j] * dirs_[j].dhat[i]) * pipes[j];
  return W;
}

VectorField MikadoFamily::evaluate_W(const SymMat& R, const Grid& g) const {
  return evaluate_W(R, pipe_fields(g));
}

std::vector<MikadoFamily::AK> MikadoFamily::fourier_a(const SymMat& R) const {
  auto gam = gamma(R);
  std::map<std::array<int, 3>, std::array<cplx, 3>> acc;
  for (int j = 0; j < 9; ++j)
    for (const PipeMode& m : dirs_[j].modes) {
      auto& a = acc[m.k];
      for (int i = 0; i < 3; ++i) a[i] += gam[j] * m.h * dirs_[j].dhat[i];
    }
  std::vector<AK> out;
  out.reserve(acc.size());
  for (auto& [k, a] : acc) out.push_back({k, a});
  return out;
}

std::vector<MikadoFamily::CK> MikadoFamily::fourier_C(const SymMat& R) const {
  auto g2 = gamma_sq(R, cfg_.eps);
  std::map<std::array<int, 3>, std::array<std::array<cplx, 3>, 3>> acc;
  for (int j = 0; j < 9; ++j)
    for (const PipeMode& m : dirs_[j].modes) {
      auto& C = acc[m.k];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          C[a][b] += g2[j] * m.h2 * dirs_[j].dhat[a] * dirs_[j].dhat[b];
    }
  std::vector<CK> out;
  out.reserve(acc.size());
  for (auto& [k, C] : acc) out.push_back({k, C});
  return out;
}

double MikadoFamily::fit_Mbar(const std::vector<SymMat>& samples) const {
  double mbar = 0;
  auto scan = [&](const SymMat& R) {
    for (const AK& e : fourier_a(R)) {
      double k2 = double(e.k[0]) * e.k[0] + double(e.k[1]) * e.k[1] +
                  double(e.k[2]) * e.k[2];
      double an = std::sqrt(std::norm(e.a[0]) + std::norm(e.a[1]) +
                            std::norm(e.a[2]));
      mbar = std::max(mbar, an * k2 * k2);
    }
  };
  scan(SymMat::identity());
  for (const SymMat& R : samples) scan(R);
  return mbar;
}

MikadoFamily::MResult MikadoFamily::compute_M(double Mbar) const {
  double sum = 0;
  const int K = cfg_.k_max;
  for (int a = -K; a <= K; ++a)
    for (int b = -K; b <= K; ++b)
      for (int c = -K; c <= K; ++c) {
        double k2 = double(a) * a + double(b) * b + double(c) * c;
        if (k2 == 0 || k2 > double(K) * K) continue;
        sum += 1.0 / (k2 * k2);
      }
  // tail: sum over |k| > K bounded by the integral of |x|^-4 over |x| > K-1
  double tail = 4.0 * 0.5 * two_pi / double(K - 1);
  return {Mbar, 64.0 * Mbar * sum, 64.0 * Mbar * tail};
}

std::array<cplx, 3> potential_coefficients(const std::array<cplx, 3>& a,
                                           const std::array<int, 3>& k) {
  double k2 = double(k[0]) * k[0] + double(k[1]) * k[1] + double(k[2]) * k[2];
  if (k2 == 0) throw std::runtime_error("potential_coefficients: k = 0");
  const cplx I(0, 1);
  std::array<cplx, 3> c;
  c[0] = I * (double(k[1]) * a[2] - double(k[2]) * a[1]) / k2;
  c[1] = I * (double(k[2]) * a[0] - double(k[0]) * a[2]) / k2;
  c[2] = I * (double(k[0]) * a[1] - double(k[1]) * a[0]) / k2;
  return c;
}

std::vector<SymMat> sample_half_ball(int count, unsigned seed) {
  Xorshift rng(seed);
  std::vector<SymMat> out;
  out.reserve(count);
  for (int t = 0; t < count; ++t) {
    SymMat R = SymMat::identity();
    if (t == 0) {
      out.push_back(R);
      continue;
    }
    std::array<double, 6> e;
    for (auto& x : e) x = rng.sym();
    double f = std::sqrt(e[0] * e[0] + e[3] * e[3] + e[5] * e[5] +
                         2 * (e[1] * e[1] + e[2] * e[2] + e[4] * e[4]));
    double radius = 0.5 * std::sqrt(rng.uniform());
    if (t == 1) radius = 0.5;  // keep one sample on the boundary
    for (int i = 0; i < 6; ++i) R.m[i] += e[i] * radius / f;
    out.push_back(R);
  }
  return out;
}

}  // namespace nsr
