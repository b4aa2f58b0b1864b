#include "nsr/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

#include "nsr/operators.hpp"

namespace nsr {

namespace {

constexpr double kSuppEps = 0.0;  // eta support is exact (coefficients hit 0)

// ---- smooth step sigma(u): 0 for u <= 0, 1 for u >= 1, C^inf flat ends ----
// sigma = f/(f+g) evaluated through the ratio r = g/f = exp(1/u - 1/(1-u))
// so both sigma and 1 - sigma keep full relative precision in the tails
double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double r = std::exp(1.0 / u - 1.0 / (1.0 - u));
  return 1.0 / (1.0 + r);
}

double smoothstep_d(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double r = std::exp(1.0 / u - 1.0 / (1.0 - u));
  const double s = 1.0 / (1.0 + r), sc = r / (1.0 + r);
  const double iu = 1.0 / (u * u), iv = 1.0 / ((1.0 - u) * (1.0 - u));
  return s * sc * (iu + iv);
}

// sqrt(smoothstep) and its derivative (C^inf: smoothstep vanishes to
// infinite order at 0); the complement branch avoids the 1 - sigma
// cancellation in the tail
void sqrt_step(double u, double sgn, double scale, double& b, double& db) {
  double s;
  if (u <= 0.0)
    s = sgn > 0 ? 0.0 : 1.0;
  else if (u >= 1.0)
    s = sgn > 0 ? 1.0 : 0.0;
  else {
    const double r = std::exp(1.0 / u - 1.0 / (1.0 - u));
    s = sgn > 0 ? 1.0 / (1.0 + r) : r / (1.0 + r);
  }
  b = std::sqrt(s);
  db = (s > 1e-200) ? sgn * smoothstep_d(u) * scale / (2.0 * b) : 0.0;
}

// stripe pattern parameters: active where cos(y) crosses [lo, hi]
constexpr double kStripeLo = 0.05;
constexpr double kStripeHi = 0.60;

Mat3Field mat3_gradient(const VectorField& v) {
  Mat3Field m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = v.c[i].derivative(j);
  return m;
}

Predicate ineq(const std::string& id, double lhs, double rhs) {
  return {id, lhs, rhs, lhs <= rhs, rhs - lhs};
}

// ---- per-direction lattice plan for the separable phase sums ----

struct DirMode {
  std::array<int, 3> k;
  int m, n;
  cplx c0;                      // h_k
  cplx cm, cn, cmm, cmn, cnn;   // h_k / |k|^2 times m^p n^q
  double habs, k4;
};

struct DirPlan {
  std::array<double, 3> dhat, z1, z2;  // z = b x dhat
  std::array<int, 3> b1, b2;
  std::vector<DirMode> modes;
  int mmax = 0, nmax = 0;
};

std::array<DirPlan, 9> make_plans(const MikadoFamily& fam, int k_max_run) {
  std::array<DirPlan, 9> plans;
  for (int j = 0; j < 9; ++j) {
    const MikadoDirection& dir = fam.directions()[j];
    DirPlan& pl = plans[j];
    pl.dhat = dir.dhat;
    // integer orthogonal basis of the plane k . d = 0
    int nz = 0;
    for (int s = 0; s < 3; ++s)
      if (dir.d[s] != 0) ++nz;
    if (nz == 1) {
      int a = 0;
      while (dir.d[a] == 0) ++a;
      pl.b1 = {0, 0, 0};
      pl.b2 = {0, 0, 0};
      pl.b1[(a + 1) % 3] = 1;
      pl.b2[(a + 2) % 3] = 1;
    } else {
      int i0 = -1, j0 = -1, l0 = -1;
      for (int s = 0; s < 3; ++s)
        (dir.d[s] != 0 ? (i0 < 0 ? i0 : j0) : l0) = s;
      pl.b1 = {0, 0, 0};
      pl.b1[l0] = 1;
      pl.b2 = {0, 0, 0};
      pl.b2[i0] = dir.d[j0];
      pl.b2[j0] = -dir.d[i0];
    }
    auto cross = [](const std::array<int, 3>& a,
                    const std::array<double, 3>& b) {
      return std::array<double, 3>{a[1] * b[2] - a[2] * b[1],
                                   a[2] * b[0] - a[0] * b[2],
                                   a[0] * b[1] - a[1] * b[0]};
    };
    pl.z1 = cross(pl.b1, pl.dhat);
    pl.z2 = cross(pl.b2, pl.dhat);
    const int n1sq = pl.b1[0] * pl.b1[0] + pl.b1[1] * pl.b1[1] +
                     pl.b1[2] * pl.b1[2];
    const int n2sq = pl.b2[0] * pl.b2[0] + pl.b2[1] * pl.b2[1] +
                     pl.b2[2] * pl.b2[2];
    for (const PipeMode& mode : dir.modes) {
      const long k2 = long(mode.k[0]) * mode.k[0] +
                      long(mode.k[1]) * mode.k[1] +
                      long(mode.k[2]) * mode.k[2];
      if (k2 > long(k_max_run) * k_max_run) continue;
      const int kb1 = mode.k[0] * pl.b1[0] + mode.k[1] * pl.b1[1] +
                      mode.k[2] * pl.b1[2];
      const int kb2 = mode.k[0] * pl.b2[0] + mode.k[1] * pl.b2[1] +
                      mode.k[2] * pl.b2[2];
      if (kb1 % n1sq != 0 || kb2 % n2sq != 0)
        throw std::logic_error("perturbation: plane basis does not span mode");
      DirMode dm;
      dm.k = mode.k;
      dm.m = kb1 / n1sq;
      dm.n = kb2 / n2sq;
      for (int s = 0; s < 3; ++s)
        if (dm.m * pl.b1[s] + dm.n * pl.b2[s] != mode.k[s])
          throw std::logic_error("perturbation: lattice reconstruction failed");
      const double ik2 = 1.0 / double(k2);
      dm.c0 = mode.h;
      dm.cm = mode.h * (ik2 * dm.m);
      dm.cn = mode.h * (ik2 * dm.n);
      dm.cmm = mode.h * (ik2 * dm.m * dm.m);
      dm.cmn = mode.h * (ik2 * dm.m * dm.n);
      dm.cnn = mode.h * (ik2 * dm.n * dm.n);
      dm.habs = std::abs(mode.h);
      dm.k4 = double(k2) * double(k2);
      pl.modes.push_back(dm);
      pl.mmax = std::max(pl.mmax, std::abs(dm.m));
      pl.nmax = std::max(pl.nmax, std::abs(dm.n));
    }
  }
  return plans;
}

// Gamma_j and d/dt Gamma_j at one point, from Rtilde and d_t Rtilde values
void gamma_and_rate(const std::array<double, 6>& R,
                    const std::array<double, 6>& Rd, double eps,
                    std::array<double, 9>& G, std::array<double, 9>& Gd) {
  // component order xx, xy, xz, yy, yz, zz
  const double mu =
      std::sqrt(R[1] * R[1] + R[2] * R[2] + R[4] * R[4] + eps * eps);
  const double mud = (R[1] * Rd[1] + R[2] * Rd[2] + R[4] * Rd[4]) / mu;
  const std::array<double, 9> g2 = {
      R[0] - 2 * mu, R[3] - 2 * mu, R[5] - 2 * mu, mu + R[1], mu - R[1],
      mu + R[2],     mu - R[2],     mu + R[4],     mu - R[4]};
  const std::array<double, 9> g2d = {
      Rd[0] - 2 * mud, Rd[3] - 2 * mud, Rd[5] - 2 * mud,
      mud + Rd[1],     mud - Rd[1],     mud + Rd[2],
      mud - Rd[2],     mud + Rd[4],     mud - Rd[4]};
  for (int j = 0; j < 9; ++j) {
    if (!(g2[j] > 0))
      throw std::runtime_error(
          "perturbation: flow coefficient positivity failed");
    G[j] = std::sqrt(g2[j]);
    Gd[j] = g2d[j] / (2.0 * G[j]);
  }
}

struct Mat3 {
  double a[3][3];
};

Mat3 mat3_inverse(const Mat3& m) {
  const auto& a = m.a;
  Mat3 r;
  r.a[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
  r.a[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
  r.a[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
  r.a[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
  r.a[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
  r.a[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
  r.a[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
  r.a[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
  r.a[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  const double det =
      a[0][0] * r.a[0][0] + a[0][1] * r.a[1][0] + a[0][2] * r.a[2][0];
  if (!(std::abs(det) > 1e-8))
    throw std::runtime_error("perturbation: flow map gradient is singular");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.a[i][j] /= det;
  return r;
}

}  // namespace

// ---- stripes ----

double stripe_value(double x3, int parity) {
  const double c = std::cos(x3 - (parity ? 3.14159265358979323846 : 0.0));
  return smoothstep((c - kStripeLo) / (kStripeHi - kStripeLo));
}

ScalarField stripe_field(const Grid& g, int parity) {
  return ScalarField::sample(g, [&](double, double, double z) {
    return stripe_value(z, parity);
  });
}

// ---- eta cutoffs ----

EtaCoeff EtaCutoffs::coeff(int i, double t) const {
  if (i < 0 || i >= count) throw std::out_of_range("eta index");
  EtaCoeff c;
  c.parity = i % 2;
  const double tau = part.tau, L3 = 2.0 * tau / 9.0;
  const double rise_s2 = part.t(i + 1) - tau / 3.0 + L3;
  const double rise_s3 = rise_s2 + L3;
  const double rise_s4 = rise_s3 + L3;
  const double fall_f1 = part.t(i + 2) - tau / 3.0;
  const double fall_f2 = fall_f1 + L3;
  const double fall_f3 = fall_f2 + L3;
  if (i > 0) {
    if (t <= rise_s2) return c;  // zero
    if (t < rise_s3) {
      sqrt_step((t - rise_s2) / L3, +1.0, 1.0 / L3, c.b, c.db);
      return c;
    }
    if (t < rise_s4) {
      const double u = (t - rise_s3) / L3;
      c.a = smoothstep(u);
      c.b = 1.0 - c.a;
      c.da = smoothstep_d(u) / L3;
      c.db = -c.da;
      return c;
    }
  }
  if (t < fall_f1) {
    c.a = 1.0;
    return c;
  }
  if (t < fall_f2) {
    const double u = (t - fall_f1) / L3;
    c.b = smoothstep(u);
    c.a = 1.0 - c.b;
    c.db = smoothstep_d(u) / L3;
    c.da = -c.db;
    return c;
  }
  if (t < fall_f3) {
    sqrt_step((t - fall_f2) / L3, -1.0, 1.0 / L3, c.b, c.db);
    return c;
  }
  c.parity = i % 2;
  return c;  // zero
}

double EtaCutoffs::integral_eta_sq(int i, double t) const {
  const EtaCoeff c = coeff(i, t);
  return c.a * c.a + 2.0 * c.a * c.b * mean_G + c.b * c.b * mean_G2;
}

double EtaCutoffs::sum_integral_eta_sq(double t) const {
  double s = 0;
  for (int i = 0; i < count; ++i) s += integral_eta_sq(i, t);
  return s;
}

double EtaCutoffs::sum_integral_eta_sq_dt(double t) const {
  double s = 0;
  for (int i = 0; i < count; ++i) {
    const EtaCoeff c = coeff(i, t);
    s += 2.0 * (c.a * c.da + (c.da * c.b + c.a * c.db) * mean_G +
                c.b * c.db * mean_G2);
  }
  return s;
}

std::vector<int> EtaCutoffs::active(double t) const {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const EtaCoeff c = coeff(i, t);
    if (!c.zero() || c.da != 0.0 || c.db != 0.0) out.push_back(i);
  }
  return out;
}

double EtaCutoffs::support_end(int i) const {
  return part.t(i + 2) - part.tau / 3.0 + 4.0 * part.tau / 9.0;
}

EtaCutoffs build_eta(const TimePartition& part) {
  EtaCutoffs eta;
  eta.part = part;
  eta.count = part.solves();
  const int samples = 1 << 14;
  double mg = 0, mg2 = 0;
  for (int s = 0; s < samples; ++s) {
    const double v = stripe_value(two_pi * s / samples, 0);
    mg += v;
    mg2 += v * v;
  }
  eta.mean_G = mg / samples;
  eta.mean_G2 = mg2 / samples;
  double c0 = 1e300;
  for (int s = 0; s <= 4096; ++s)
    c0 = std::min(c0, eta.sum_integral_eta_sq(part.T * s / 4096.0));
  eta.c0 = c0;
  return eta;
}

ScalarField eta_field(const EtaCutoffs& eta, const Grid& g, int i, double t) {
  const EtaCoeff c = eta.coeff(i, t);
  return ScalarField::sample(g, [&](double, double, double z) {
    return c.a + c.b * stripe_value(z, c.parity);
  });
}

// ---- exact time derivatives of the glued state ----

GlueDerivs glued_time_derivatives(const GluedState& st, std::size_t frame,
                                  const IterationParams& prm) {
  const double t = st.times.at(frame);
  const ChiCutoffs chi = build_chi(st.part);
  const Grid& g = st.v[frame].grid();
  auto F = [&](const VectorField& u) {
    return -1.0 * leray_project(divergence(outer_sym(u, u))) -
           prm.nu * fractional_laplacian(u, prm.gamma);
  };
  auto v_of = [&](int i) -> const VectorField& {
    const LocalSolve& ls = st.solves.at(std::size_t(i));
    return ls.series.v.at(frame - ls.frame_offset);
  };
  GlueDerivs out;
  out.dv = VectorField::zero(g);
  out.dR = SymTensorField::zero(g);
  for (const auto& ls : st.solves) {
    const double w = chi.chi(ls.i, t), dw = chi.chi_dt(ls.i, t);
    if (w == 0.0 && dw == 0.0) continue;
    const VectorField& vi = v_of(ls.i);
    out.dv += dw * vi + w * F(vi);
  }
  const auto loc = st.part.classify(t);
  if (loc.in_I) {
    const int i = loc.idx;
    const VectorField d = v_of(i) - v_of(i + 1);
    const VectorField dd = F(v_of(i)) - F(v_of(i + 1));
    const double c = chi.chi(i, t), dc = chi.chi_dt(i, t);
    // chi'' by Richardson differences of the analytic chi'
    const double h = 1e-5 * st.part.tau;
    const double d1 = (chi.chi_dt(i, t + h) - chi.chi_dt(i, t - h)) / (2 * h);
    const double d2 =
        (chi.chi_dt(i, t + 2 * h) - chi.chi_dt(i, t - 2 * h)) / (4 * h);
    const double ddc = (4 * d1 - d2) / 3.0;
    const auto invd = inverse_divergence(d.minus_mean(), 1e-8);
    const auto invdd = inverse_divergence(dd.minus_mean(), 1e-8);
    out.dR = ddc * invd.R + dc * invdd.R -
             (dc * (1.0 - 2.0 * c)) * outer_traceless(d, d) -
             (2.0 * c * (1.0 - c)) * outer_traceless(dd, d);
  }
  out.denergy = 2.0 * dot(st.v[frame], out.dv).mean();
  return out;
}

// ---- pumping ----

PumpFrame pump_frame(const VectorField& vbar, const SymTensorField& Rbar,
                     const GlueDerivs& der, double t, double e_t, double de_t,
                     const IterationParams& prm, int q, const EtaCutoffs& eta,
                     const PhiAccess& phis) {
  const LevelValues lv = level_values(prm, q);
  const Grid& g = vbar.grid();
  PumpFrame out;
  out.t = t;
  const double ke = vbar.l2();
  out.rho_q = (e_t - 0.5 * lv.delta_q2 - ke * ke) / 3.0;
  if (!(out.rho_q > 0)) {
    std::ostringstream os;
    os << "pump: rho_q = " << out.rho_q << " <= 0 at t = " << t
       << " (energy gap fell below delta_{q+2}/2)";
    throw std::runtime_error(os.str());
  }
  out.drho_q = (de_t - der.denergy) / 3.0;
  out.sum_eta_sq = eta.sum_integral_eta_sq(t);
  const double dsum = eta.sum_integral_eta_sq_dt(t);

  out.checks.push_back(ineq("e:rho_range:lower",
                            lv.delta_q1 / (8.0 * std::pow(lv.lambda_q,
                                                          prm.alpha)),
                            out.rho_q));
  out.checks.push_back(ineq("e:rho_range:upper", out.rho_q, lv.delta_q1));

  const ScalarField G[2] = {stripe_field(g, 0), stripe_field(g, 1)};
  const double mcoef = std::sqrt(out.rho_q / out.sum_eta_sq);
  const double dmcoef =
      0.5 * mcoef * (out.drho_q / out.rho_q - dsum / out.sum_eta_sq);
  const double s_conj = out.sum_eta_sq / out.rho_q;
  const double ds_conj =
      (dsum * out.rho_q - out.sum_eta_sq * out.drho_q) /
      (out.rho_q * out.rho_q);

  double sup_rho_i = 0;
  const int n = g.n;
  for (int i : eta.active(t)) {
    const VectorField* phi = nullptr;
    for (const auto& pr : phis)
      if (pr.first == i) phi = pr.second;
    if (!phi) {
      std::ostringstream os;
      os << "pump: flow map for cutoff i = " << i << " missing at t = " << t;
      throw std::invalid_argument(os.str());
    }
    PumpPerI pi;
    pi.i = i;
    pi.eta = eta.coeff(i, t);
    pi.alpha = pi.eta.a * mcoef;
    pi.beta = pi.eta.b * mcoef;
    pi.dalpha = pi.eta.da * mcoef + pi.eta.a * dmcoef;
    pi.dbeta = pi.eta.db * mcoef + pi.eta.b * dmcoef;
    pi.phi_minus_id = phi;
    pi.dphi = -1.0 * (vbar + advect(vbar, *phi));
    pi.grad_phi = phi_gradient(*phi);
    pi.grad_phi_dt = mat3_gradient(pi.dphi);

    const double* Gv = G[pi.eta.parity].values().data();
    const double* Av[3][3];
    const double* Adv[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Av[r][c] = pi.grad_phi[r][c].values().data();
        Adv[r][c] = pi.grad_phi_dt[r][c].values().data();
      }
    const double* Rv[6];
    const double* Rdv[6];
    for (int c = 0; c < 6; ++c) {
      Rv[c] = Rbar.c[c].values().data();
      Rdv[c] = der.dR.c[c].values().data();
    }
    const std::size_t N = g.size();
    std::vector<double> rho_v(N);
    std::array<std::vector<double>, 6> Rt, Rtd;
    for (auto& v : Rt) v.assign(N, 0.0);
    for (auto& v : Rtd) v.assign(N, 0.0);
    double dist_sup = 0;
    std::size_t worst_p = 0;
    double worst_dist = -1;
    static const int ci[6] = {0, 0, 0, 1, 1, 2};
    static const int cj[6] = {0, 1, 2, 1, 2, 2};
    for (std::size_t p = 0; p < N; ++p) {
      const double ev = pi.eta.a + pi.eta.b * Gv[p];
      const double dev = pi.eta.da + pi.eta.db * Gv[p];
      rho_v[p] = ev * ev * (out.rho_q / out.sum_eta_sq);
      // M = Id - s Rbar, Mdot = -ds Rbar - s dRbar (symmetric)
      double M[3][3], Md[3][3], A[3][3], Ad[3][3];
      for (int c = 0; c < 6; ++c) {
        const double mv = (ci[c] == cj[c] ? 1.0 : 0.0) - s_conj * Rv[c][p];
        const double mdv = -ds_conj * Rv[c][p] - s_conj * Rdv[c][p];
        M[ci[c]][cj[c]] = M[cj[c]][ci[c]] = mv;
        Md[ci[c]][cj[c]] = Md[cj[c]][ci[c]] = mdv;
      }
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          A[r][c] = Av[r][c][p];
          Ad[r][c] = Adv[r][c][p];
        }
      // Rt = A M A^T, Rtd = Ad M A^T + A Md A^T + A M Ad^T
      double MA[3][3], MdA[3][3], MAd[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          double s1 = 0, s2 = 0, s3 = 0;
          for (int s = 0; s < 3; ++s) {
            s1 += M[r][s] * A[c][s];
            s2 += Md[r][s] * A[c][s];
            s3 += M[r][s] * Ad[c][s];
          }
          MA[r][c] = s1;
          MdA[r][c] = s2;
          MAd[r][c] = s3;
        }
      double dist2 = 0;
      for (int c = 0; c < 6; ++c) {
        const int r = ci[c], cc = cj[c];
        double rt = 0, rtd = 0;
        for (int s = 0; s < 3; ++s) {
          rt += A[r][s] * MA[cc][s];
          rtd += Ad[r][s] * MA[cc][s] + A[r][s] * (MdA[cc][s] + MAd[cc][s]);
        }
        Rt[c][p] = rt;
        Rtd[c][p] = rtd;
        const double dd = rt - (r == cc ? 1.0 : 0.0);
        dist2 += (r == cc ? 1.0 : 2.0) * dd * dd;
      }
      const bool on_supp = std::abs(ev) > kSuppEps || std::abs(dev) > 0.0;
      if (on_supp) {
        const double dist = std::sqrt(dist2);
        if (dist > worst_dist) {
          worst_dist = dist;
          worst_p = p;
        }
        double adist2 = 0;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) {
            const double dd = A[r][c] - (r == c ? 1.0 : 0.0);
            adist2 += dd * dd;
          }
        dist_sup = std::max(dist_sup, std::sqrt(adist2));
      }
    }
    if (worst_dist > 0.5 + 1e-12) {
      const std::size_t p = worst_p;
      const int iz = int(p % n), iy = int((p / n) % n), ix = int(p / (n * n));
      std::ostringstream os;
      os << "perturbation: conjugated stress left the closed half-ball "
            "around Id: |Rtilde - Id| = "
         << worst_dist << " at grid point (" << ix << ", " << iy << ", " << iz
         << "), cutoff i = " << i << ", t = " << t;
      throw std::runtime_error(os.str());
    }
    pi.grad_phi_dist_id = dist_sup;
    pi.rho_qi = ScalarField::from_values(g, std::move(rho_v));
    sup_rho_i = std::max(sup_rho_i, pi.rho_qi.sup_norm());
    for (int c = 0; c < 6; ++c) {
      pi.Rtilde.c[c] = ScalarField::from_values(g, std::move(Rt[c]));
      pi.Rtilde_dt.c[c] = ScalarField::from_values(g, std::move(Rtd[c]));
    }
    out.checks.push_back(
        ineq("l:R_in_range:grad_phi", pi.grad_phi_dist_id, 0.5));
    out.active.push_back(std::move(pi));
  }
  out.checks.push_back(
      ineq("e:rho_i_bnd", sup_rho_i, lv.delta_q1 / eta.c0));
  return out;
}

// ---- perturbation fields ----

namespace {

long frequency_multiplier(const IterationParams& prm, int q) {
  return level_values(prm, q + 1).n_q;
}

void check_nyquist(const Grid& g, long lam, int k_max_run) {
  if (lam * k_max_run > g.kcut()) {
    std::ostringstream os;
    os << "perturbation: oscillation frequency n_{q+1} * k_max_run = "
       << lam * k_max_run << " exceeds the grid dealias cutoff " << g.kcut()
       << "; enlarge the grid, lower k_max_run, or reduce the ladder base a";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

WFrame perturbation_frame(const PumpFrame& pf, const MikadoFamily& fam,
                          const IterationParams& prm, int q, int k_max_run) {
  WFrame out;
  out.t = pf.t;
  const LevelValues lv = level_values(prm, q);
  const long lam = frequency_multiplier(prm, q);
  Grid g;
  if (!pf.active.empty())
    g = pf.active.front().rho_qi.grid();
  else
    throw std::invalid_argument("perturbation_frame: no active cutoffs");
  check_nyquist(g, lam, k_max_run);
  const auto plans = make_plans(fam, k_max_run);
  const double eps = fam.config().eps;

  const ScalarField Gs[2] = {stripe_field(g, 0), stripe_field(g, 1)};
  const std::size_t N = g.size();
  const int n = g.n;
  const double dx = g.dx();
  std::array<std::vector<double>, 3> wo, U, dU;
  for (int c = 0; c < 3; ++c) {
    wo[c].assign(N, 0.0);
    U[c].assign(N, 0.0);
    dU[c].assign(N, 0.0);
  }

  std::map<std::array<int, 3>, double> bk_acc;  // k -> sum_j sup|rho^1/2 G_j| |h|
  std::map<std::array<int, 3>, double> bk_k4;

  for (const PumpPerI& pi : pf.active) {
    const double* Gv = Gs[pi.eta.parity].values().data();
    const double* Pv[3];
    const double* dPv[3];
    for (int c = 0; c < 3; ++c) {
      Pv[c] = pi.phi_minus_id->c[c].values().data();
      dPv[c] = pi.dphi.c[c].values().data();
    }
    const double* Av[3][3];
    const double* Adv[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Av[r][c] = pi.grad_phi[r][c].values().data();
        Adv[r][c] = pi.grad_phi_dt[r][c].values().data();
      }
    const double* Rtv[6];
    const double* Rtdv[6];
    for (int c = 0; c < 6; ++c) {
      Rtv[c] = pi.Rtilde.c[c].values().data();
      Rtdv[c] = pi.Rtilde_dt.c[c].values().data();
    }
    std::array<double, 9> supFG{};  // sup_x rho^{1/2} Gamma_j per direction

    std::size_t p = 0;
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy)
        for (int iz = 0; iz < n; ++iz, ++p) {
          const double r = pi.alpha + pi.beta * Gv[p];
          const double dr = pi.dalpha + pi.dbeta * Gv[p];
          if (r == 0.0 && dr == 0.0) continue;

          std::array<double, 6> Rt, Rtd;
          for (int c = 0; c < 6; ++c) {
            Rt[c] = Rtv[c][p];
            Rtd[c] = Rtdv[c][p];
          }
          std::array<double, 9> Gam, Gamd;
          gamma_and_rate(Rt, Rtd, eps, Gam, Gamd);

          Mat3 A, Ad;
          for (int rr = 0; rr < 3; ++rr)
            for (int cc = 0; cc < 3; ++cc) {
              A.a[rr][cc] = Av[rr][cc][p];
              Ad.a[rr][cc] = Adv[rr][cc][p];
            }
          const Mat3 Ainv = mat3_inverse(A);

          const double phi[3] = {ix * dx + Pv[0][p], iy * dx + Pv[1][p],
                                 iz * dx + Pv[2][p]};
          const double dphi[3] = {dPv[0][p], dPv[1][p], dPv[2][p]};

          for (int j = 0; j < 9; ++j) {
            const DirPlan& pl = plans[j];
            if (pl.modes.empty()) continue;
            const double u1 =
                lam * (pl.b1[0] * phi[0] + pl.b1[1] * phi[1] +
                       pl.b1[2] * phi[2]);
            const double u2 =
                lam * (pl.b2[0] * phi[0] + pl.b2[1] * phi[1] +
                       pl.b2[2] * phi[2]);
            const double g1 =
                lam * (pl.b1[0] * dphi[0] + pl.b1[1] * dphi[1] +
                       pl.b1[2] * dphi[2]);
            const double g2 =
                lam * (pl.b2[0] * dphi[0] + pl.b2[1] * dphi[1] +
                       pl.b2[2] * dphi[2]);
            cplx pw1[33], pw2[33];
            const cplx e1 = std::polar(1.0, u1), e2 = std::polar(1.0, u2);
            pw1[pl.mmax] = 1.0;
            for (int m = 1; m <= pl.mmax; ++m) {
              pw1[pl.mmax + m] = pw1[pl.mmax + m - 1] * e1;
              pw1[pl.mmax - m] = std::conj(pw1[pl.mmax + m]);
            }
            pw2[pl.nmax] = 1.0;
            for (int m = 1; m <= pl.nmax; ++m) {
              pw2[pl.nmax + m] = pw2[pl.nmax + m - 1] * e2;
              pw2[pl.nmax - m] = std::conj(pw2[pl.nmax + m]);
            }
            cplx t00 = 0, t10 = 0, t01 = 0, t20 = 0, t11 = 0, t02 = 0;
            for (const DirMode& dm : pl.modes) {
              const cplx ph = pw1[pl.mmax + dm.m] * pw2[pl.nmax + dm.n];
              t00 += dm.c0 * ph;
              t10 += dm.cm * ph;
              t01 += dm.cn * ph;
              t20 += dm.cmm * ph;
              t11 += dm.cmn * ph;
              t02 += dm.cnn * ph;
            }
            const double F = r * Gam[j];
            const double Fd = dr * Gam[j] + r * Gamd[j];
            supFG[j] = std::max(supFG[j], std::abs(F));

            // w_o: F (A^{-1} dhat) Re T00
            const double re00 = t00.real();
            for (int c = 0; c < 3; ++c)
              wo[c][p] += F * re00 *
                          (Ainv.a[c][0] * pl.dhat[0] +
                           Ainv.a[c][1] * pl.dhat[1] +
                           Ainv.a[c][2] * pl.dhat[2]);

            // potential U = F A^T Re[-i (z1 T10 + z2 T01)]; with
            // k x (m z1 + n z2) = -|k|^2 dhat this makes -(1/lam) curl U
            // reproduce +w_o for constant amplitudes
            const double s1 = t10.imag(), s2 = t01.imag();
            // phase part of d_t U:
            //   +F A^T [z1 (g1 Re T20 + g2 Re T11) + z2 (g1 Re T11 + g2 Re T02)]
            const double q1 = g1 * t20.real() + g2 * t11.real();
            const double q2 = g1 * t11.real() + g2 * t02.real();
            for (int c = 0; c < 3; ++c) {
              const double Atz1 = A.a[0][c] * pl.z1[0] + A.a[1][c] * pl.z1[1] +
                                  A.a[2][c] * pl.z1[2];
              const double Atz2 = A.a[0][c] * pl.z2[0] + A.a[1][c] * pl.z2[1] +
                                  A.a[2][c] * pl.z2[2];
              const double Adtz1 = Ad.a[0][c] * pl.z1[0] +
                                   Ad.a[1][c] * pl.z1[1] +
                                   Ad.a[2][c] * pl.z1[2];
              const double Adtz2 = Ad.a[0][c] * pl.z2[0] +
                                   Ad.a[1][c] * pl.z2[1] +
                                   Ad.a[2][c] * pl.z2[2];
              U[c][p] += F * (Atz1 * s1 + Atz2 * s2);
              dU[c][p] += Fd * (Atz1 * s1 + Atz2 * s2) +
                          F * (Adtz1 * s1 + Adtz2 * s2) +
                          F * (Atz1 * q1 + Atz2 * q2);
            }
          }
        }
    for (int j = 0; j < 9; ++j)
      for (const DirMode& dm : plans[j].modes) {
        bk_acc[dm.k] += supFG[j] * dm.habs;
        bk_k4[dm.k] = dm.k4;
      }
  }

  double sup_b = 0;
  for (const auto& kv : bk_acc)
    sup_b = std::max(sup_b, kv.second * bk_k4[kv.first]);
  out.sup_b_k4 = sup_b / std::sqrt(lv.delta_q1);

  for (int c = 0; c < 3; ++c) out.w_o.c[c] = ScalarField::from_values(g, std::move(wo[c]));
  VectorField Uf, dUf;
  for (int c = 0; c < 3; ++c) {
    Uf.c[c] = ScalarField::from_values(g, std::move(U[c]));
    dUf.c[c] = ScalarField::from_values(g, std::move(dU[c]));
  }
  out.w = (-1.0 / double(lam)) * curl(Uf);
  out.dtw = (-1.0 / double(lam)) * curl(dUf);
  out.w_c = out.w - out.w_o;
  return out;
}

VectorField corrector_direct(const PumpFrame& pf, const MikadoFamily& fam,
                             const IterationParams& prm, int q,
                             int k_max_run) {
  const long lam = frequency_multiplier(prm, q);
  if (pf.active.empty())
    throw std::invalid_argument("corrector_direct: no active cutoffs");
  const Grid& g = pf.active.front().rho_qi.grid();
  check_nyquist(g, lam, k_max_run);
  const auto plans = make_plans(fam, k_max_run);
  const double eps = fam.config().eps;
  const ScalarField Gs[2] = {stripe_field(g, 0), stripe_field(g, 1)};
  const std::size_t N = g.size();
  const int n = g.n;
  const double dx = g.dx();

  std::array<std::vector<double>, 3> acc;
  for (auto& a : acc) a.assign(N, 0.0);

  for (const PumpPerI& pi : pf.active) {
    const double* Gv = Gs[pi.eta.parity].values().data();
    // rho^{1/2} Gamma_j fields and A^T z per direction
    std::array<std::vector<double>, 9> FG;
    for (auto& f : FG) f.assign(N, 0.0);
    const double* Rtv[6];
    for (int c = 0; c < 6; ++c) Rtv[c] = pi.Rtilde.c[c].values().data();
    for (std::size_t p = 0; p < N; ++p) {
      const double r = pi.alpha + pi.beta * Gv[p];
      if (r == 0.0) continue;
      std::array<double, 6> Rt, Rtd{};
      for (int c = 0; c < 6; ++c) Rt[c] = Rtv[c][p];
      std::array<double, 9> Gam, Gamd;
      gamma_and_rate(Rt, Rtd, eps, Gam, Gamd);
      for (int j = 0; j < 9; ++j) FG[j][p] = r * Gam[j];
    }
    for (int j = 0; j < 9; ++j) {
      const DirPlan& pl = plans[j];
      for (const DirMode& dm : pl.modes) {
        // real coefficient direction z(k) = m z1 + n z2; complex constant
        // c = -i h / |k|^2 (matching the potential convention)
        const double k2 = std::sqrt(dm.k4);
        const cplx cc = cplx(0.0, -1.0) * dm.c0 / k2;
        std::array<double, 3> zk;
        for (int s = 0; s < 3; ++s) zk[s] = dm.m * pl.z1[s] + dm.n * pl.z2[s];
        VectorField V;
        for (int c = 0; c < 3; ++c) {
          std::vector<double> vv(N);
          for (std::size_t p = 0; p < N; ++p) {
            double atz = 0;
            for (int s = 0; s < 3; ++s)
              atz += pi.grad_phi[s][c].values()[p] * zk[s];
            vv[p] = FG[j][p] * atz;
          }
          V.c[c] = ScalarField::from_values(g, std::move(vv));
        }
        const VectorField cv = curl(V);
        // w_c += -(1/lam) Re[ cc e^{i theta} curl V ]
        std::size_t p = 0;
        for (int ix = 0; ix < n; ++ix)
          for (int iy = 0; iy < n; ++iy)
            for (int iz = 0; iz < n; ++iz, ++p) {
              const double phi0 = ix * dx + pi.phi_minus_id->c[0].values()[p];
              const double phi1 = iy * dx + pi.phi_minus_id->c[1].values()[p];
              const double phi2 = iz * dx + pi.phi_minus_id->c[2].values()[p];
              const double th =
                  lam * (dm.k[0] * phi0 + dm.k[1] * phi1 + dm.k[2] * phi2);
              const double re = (cc * std::polar(1.0, th)).real();
              for (int c = 0; c < 3; ++c)
                acc[c][p] += -(1.0 / double(lam)) * re * cv.c[c].values()[p];
            }
      }
    }
  }
  VectorField out;
  for (int c = 0; c < 3; ++c)
    out.c[c] = ScalarField::from_values(g, std::move(acc[c]));
  return out;
}

// ---- assembly ----

NextFrame assemble_next_frame(const GlueFrame& glued, const PumpFrame& pump,
                              const WFrame& wf, const IterationParams& prm,
                              int q) {
  (void)q;
  const Grid& g = glued.v.grid();
  NextFrame out;
  out.t = pump.t;
  out.v = glued.v + wf.w;

  ScalarField sum_rho = ScalarField::zero(g);
  for (const PumpPerI& pi : pump.active) sum_rho += pi.rho_qi;
  out.p = glued.p - sum_rho + ScalarField::constant(g, pump.rho_q);

  // Rbar_q = sum_i (rho_{q,i} Id - eta_i^2 Rbar); eta_i^2 recovered from
  // rho_{q,i} through the shared normalization
  const ScalarField sum_eta_sq_field =
      (pump.sum_eta_sq / pump.rho_q) * sum_rho;
  SymTensorField Rq = SymTensorField::zero(g);
  for (int c = 0; c < 6; ++c)
    Rq.c[c] = -1.0 * sum_eta_sq_field.times(glued.R.c[c]);
  Rq.c[SymTensorField::index(0, 0)] += sum_rho;
  Rq.c[SymTensorField::index(1, 1)] += sum_rho;
  Rq.c[SymTensorField::index(2, 2)] += sum_rho;

  const std::array<double, 3> mw = wf.dtw.mean();
  out.dtw_mean =
      std::sqrt(mw[0] * mw[0] + mw[1] * mw[1] + mw[2] * mw[2]);
  VectorField arg =
      divergence(2.0 * outer_sym(glued.v, wf.w) + outer_sym(wf.w, wf.w) -
                 Rq) +
      wf.dtw.minus_mean();
  out.RE = inverse_divergence(arg, 1e-8).R;
  out.RD =
      prm.nu * inverse_divergence(fractional_laplacian(wf.w, prm.gamma)).R;
  out.R = out.RE + out.RD;
  return out;
}

double weak_residual(const std::vector<double>& times,
                     const std::vector<VectorField>& v,
                     const std::vector<SymTensorField>& R,
                     const IterationParams& prm, const VectorField& phi,
                     std::size_t f0, std::size_t f1) {
  if (f1 <= f0 || (f1 - f0) % 2 != 0)
    throw std::invalid_argument("weak_residual: need an even frame count");
  const double t0 = times.at(f0), t1 = times.at(f1);
  const double W = 0.3;  // window edge fraction
  auto psi = [&](double t) {
    const double u = (t - t0) / (t1 - t0);
    return smoothstep(u / W) * smoothstep((1.0 - u) / W);
  };
  auto psi_d = [&](double t) {
    const double u = (t - t0) / (t1 - t0);
    return (smoothstep_d(u / W) / W * smoothstep((1.0 - u) / W) -
            smoothstep(u / W) * smoothstep_d((1.0 - u) / W) / W) /
           (t1 - t0);
  };
  auto integrand = [&](std::size_t f) {
    const double t = times[f];
    const VectorField spatial = divergence(outer_sym(v[f], v[f])) +
                                prm.nu * fractional_laplacian(v[f], prm.gamma) -
                                divergence(R[f]);
    return -dot(v[f], phi).mean() * psi_d(t) +
           dot(spatial, phi).mean() * psi(t);
  };
  const double h = times[f0 + 1] - times[f0];
  double sum = integrand(f0) + integrand(f1);
  for (std::size_t f = f0 + 1; f < f1; ++f)
    sum += ((f - f0) % 2 == 1 ? 4.0 : 2.0) * integrand(f);
  return std::abs(sum * h / 3.0);
}

// ---- full series ----

namespace {

void merge_check(std::map<std::string, Predicate>& acc, const Predicate& p) {
  auto it = acc.find(p.id);
  if (it == acc.end() || p.margin < it->second.margin) acc[p.id] = p;
}

}  // namespace

PerturbationSeries perturb_series(const GluedState& glued,
                                  const std::function<double(double)>& e_of_t,
                                  const MikadoFamily& fam,
                                  const IterationParams& prm, int q,
                                  int k_max_run) {
  PerturbationSeries out;
  out.times = glued.times;
  const std::size_t nf = glued.times.size();
  if (nf < 4) throw std::invalid_argument("perturb_series: too few frames");
  const double dt = glued.times[1] - glued.times[0];
  const Grid& g = glued.v.front().grid();
  const EtaCutoffs eta = build_eta(glued.part);

  // flow maps per cutoff, frame-by-frame RK4 with cubic midpoint velocities
  const long S = std::llround(glued.part.tau / dt);
  std::vector<std::size_t> anchor(eta.count);
  std::vector<std::vector<VectorField>> phi(eta.count);
  auto v_mid = [&](std::size_t f) {
    // cubic interpolation of vbar at t_f + dt/2
    if (f == 0)
      return (1.0 / 16.0) * (5.0 * glued.v[0] + 15.0 * glued.v[1] -
                             5.0 * glued.v[2] + glued.v[3]);
    if (f + 2 >= nf)
      return (1.0 / 16.0) * (glued.v[nf - 4] - 5.0 * glued.v[nf - 3] +
                             15.0 * glued.v[nf - 2] + 5.0 * glued.v[nf - 1]);
    return (1.0 / 16.0) * (-1.0 * glued.v[f - 1] + 9.0 * glued.v[f] +
                           9.0 * glued.v[f + 1] - 1.0 * glued.v[f + 2]);
  };
  for (int i = 0; i < eta.count; ++i) {
    anchor[i] = std::size_t(i) * std::size_t(S);
    const std::size_t last = std::min(
        nf - 1, std::size_t(std::ceil(eta.support_end(i) / dt - 1e-9)));
    FlowMapIntegrator fmi(g, glued.times[anchor[i]], dt / 2);
    phi[i].push_back(fmi.phi_minus_id());
    for (std::size_t f = anchor[i]; f < last; ++f) {
      fmi.step(glued.v[f], v_mid(f), glued.v[f + 1]);
      phi[i].push_back(fmi.phi_minus_id());
    }
  }

  std::map<std::string, Predicate> checks;
  const double eh = 1e-6 * std::max(1.0, glued.part.T);
  double div_w_sup = 0;
  for (std::size_t f = 0; f < nf; ++f) {
    const double t = glued.times[f];
    const GlueDerivs der = glued_time_derivatives(glued, f, prm);
    const double de = (e_of_t(t + eh) - e_of_t(t - eh)) / (2.0 * eh);
    PhiAccess phis;
    for (int i : eta.active(t)) {
      if (f < anchor[i] || f - anchor[i] >= phi[i].size()) {
        std::ostringstream os;
        os << "perturb_series: flow map window for i = " << i
           << " does not cover frame " << f;
        throw std::logic_error(os.str());
      }
      phis.push_back({i, &phi[i][f - anchor[i]]});
    }
    PumpFrame pf = pump_frame(glued.v[f], glued.R[f], der, t, e_of_t(t), de,
                              prm, q, eta, phis);
    WFrame wf = perturbation_frame(pf, fam, prm, q, k_max_run);
    GlueFrame gf{glued.v[f], glued.p[f], glued.R[f], false, 0};
    NextFrame nx = assemble_next_frame(gf, pf, wf, prm, q);
    for (const Predicate& p : pf.checks) merge_check(checks, p);
    div_w_sup = std::max(div_w_sup, divergence(wf.w).sup_norm());
    // the flow maps are local to this routine; do not leak borrowed pointers
    for (PumpPerI& pi : pf.active) pi.phi_minus_id = nullptr;
    out.pump.push_back(std::move(pf));
    out.w.push_back(std::move(wf));
    out.next.push_back(std::move(nx));
  }
  merge_check(checks, ineq("perturb:div_w", div_w_sup, 1e-10));
  merge_check(checks, ineq("perturb:c0", 0.1, eta.c0));
  for (const auto& kv : checks) out.checks.push_back(kv.second);
  return out;
}

// ---- step ledger ----

std::uint64_t field_digest(const VectorField& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (int c = 0; c < 3; ++c)
    for (double x : v.c[c].values()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffull;
        h *= 1099511628211ull;
      }
    }
  return h;
}

StepLedger step_ledger(const std::vector<VectorField>& v_q, double prev_R_sup,
                       const PerturbationSeries& series,
                       const std::function<double(double)>& e_of_t,
                       const IterationParams& prm, int q, double M_const) {
  const LevelValues lv = level_values(prm, q);
  const LevelValues lv1 = level_values(prm, q + 1);
  StepLedger led;
  double v_diff = 0, w_sup = 0, energy_err = 0, r_sup = 0;
  for (std::size_t f = 0; f < series.next.size(); ++f) {
    const NextFrame& nx = series.next[f];
    if (f < v_q.size())
      v_diff = std::max(v_diff, (nx.v - v_q[f]).sup_norm());
    w_sup = std::max(w_sup, series.w[f].w.sup_norm());
    const double ke = nx.v.l2();
    energy_err = std::max(
        energy_err,
        std::abs(e_of_t(nx.t) - ke * ke - 0.5 * lv.delta_q2));
    r_sup = std::max(r_sup, nx.R.sup_norm());
  }
  const double sd1 = std::sqrt(lv.delta_q1);
  led.entries.push_back(ineq("e:v_diff_prop_est", v_diff, M_const * sd1));
  led.entries.push_back(ineq("e:w_est", w_sup, 0.5 * M_const * sd1));
  led.entries.push_back(
      ineq("p:energy:constant",
           energy_err / (std::sqrt(lv.delta_q) * sd1 *
                         std::pow(lv.lambda_q, 1.0 + 2.0 * prm.alpha) /
                         lv1.lambda_q),
           10.0));
  led.entries.push_back(
      ineq("p:R_q+1:constant",
           r_sup / (sd1 * std::sqrt(lv.delta_q) * lv.lambda_q /
                    std::pow(lv1.lambda_q, 1.0 - 4.0 * prm.alpha)),
           10.0));
  led.contraction = prev_R_sup > 0 ? r_sup / prev_R_sup : 0.0;
  led.entries.push_back(ineq("perturb:contraction", r_sup, prev_R_sup));
  led.v_next_digest = field_digest(series.next.front().v);
  return led;
}

}  // namespace nsr
