#include "nsr/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nsr/holder.hpp"
#include "nsr/kernels.hpp"
#include "nsr/operators.hpp"

namespace nsr {

namespace {

// e^{-nu |k|^{2 gamma} h} over the full mode cube
std::vector<double> dissipation_factor(const Grid& g, double nu, double gamma,
                                       double h) {
  std::vector<double> m(g.size());
  std::size_t p = 0;
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      for (int k = 0; k < g.n; ++k, ++p) {
        const double ki = g.kof(i), kj = g.kof(j), kk = g.kof(k);
        const double k2 = ki * ki + kj * kj + kk * kk;
        m[p] = k2 == 0.0 ? 1.0 : std::exp(-nu * std::pow(k2, gamma) * h);
      }
  return m;
}

ScalarField mul_real(const ScalarField& f, const std::vector<double>& m) {
  std::vector<cplx> modes = f.modes();
  kernels::ops().cmul_real(modes.data(), m.data(), modes.size());
  return ScalarField::from_modes(f.grid(), std::move(modes), false);
}

double spectral_h1(const VectorField& v) {
  const Grid& g = v.grid();
  double acc = 0;
  for (int c = 0; c < 3; ++c) {
    const auto& m = v.c[c].modes();
    std::size_t p = 0;
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        for (int k = 0; k < g.n; ++k, ++p) {
          const double ki = g.kof(i), kj = g.kof(j), kk = g.kof(k);
          acc += (ki * ki + kj * kj + kk * kk) * std::norm(m[p]);
        }
  }
  return std::sqrt(acc);
}

// -v . grad u (dealiased)
ScalarField transport_rhs(const VectorField& v, const ScalarField& u) {
  return -1.0 * dot(v, gradient(u));
}

Predicate ineq(std::string id, double lhs, double rhs) {
  Predicate p;
  p.id = std::move(id);
  p.lhs = lhs;
  p.rhs = rhs;
  p.holds = lhs <= rhs;
  p.margin = rhs - lhs;
  return p;
}

}  // namespace

HorizonGuard horizon_guard(const VectorField& u0, double alpha, double c,
                           double horizon) {
  HorizonGuard g;
  const double n = holder_norm(u0.c[0], 1.0 + alpha) +
                   holder_norm(u0.c[1], 1.0 + alpha) +
                   holder_norm(u0.c[2], 1.0 + alpha);
  g.admissible_T =
      n == 0.0 ? std::numeric_limits<double>::infinity() : c / n;
  g.horizon = horizon;
  g.within = horizon <= g.admissible_T;
  return g;
}

FnsIntegrator::FnsIntegrator(VectorField u0, double nu, double gamma,
                             double dt, bool dealias, double blowup_factor)
    : v_(std::move(u0)),
      nu_(nu),
      gamma_(gamma),
      dt_(dt),
      dealias_(dealias),
      blowup_factor_(blowup_factor) {
  if (dt_ <= 0) throw std::invalid_argument("FnsIntegrator: dt must be > 0");
  if (dealias_) v_ = v_.dealiased();
  v_ = leray_project(v_);
  ef_full_ = dissipation_factor(v_.grid(), nu_, gamma_, dt_);
  ef_half_ = dissipation_factor(v_.grid(), nu_, gamma_, dt_ / 2);
  h1_ref_ = std::max(spectral_h1(v_), 1e-12);
}

VectorField FnsIntegrator::damp(const VectorField& v,
                                const std::vector<double>& m) const {
  return {mul_real(v.c[0], m), mul_real(v.c[1], m), mul_real(v.c[2], m)};
}

VectorField FnsIntegrator::rhs(const VectorField& v) const {
  // -P div(v x v); the divergence kills the mean, so k = 0 stays untouched
  SymTensorField t = SymTensorField::zero(v.grid());
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      t.c[SymTensorField::index(i, j)] = v.c[i].times(v.c[j], dealias_);
  return -1.0 * leray_project(divergence(t));
}

void FnsIntegrator::step() {
  const double h = dt_;
  const VectorField vf = damp(v_, ef_full_);
  const VectorField vh = damp(v_, ef_half_);
  const VectorField k1 = rhs(v_);
  const VectorField k2 = rhs(vh + (h / 2) * damp(k1, ef_half_));
  const VectorField k3 = rhs(vh + (h / 2) * k2);
  const VectorField k4 = rhs(vf + h * damp(k3, ef_half_));
  VectorField next =
      vf + (h / 6.0) * (damp(k1, ef_full_) + damp(2.0 * (k2 + k3), ef_half_) +
                        k4);
  const double proxy = spectral_h1(next);
  if (!std::isfinite(proxy) || proxy > blowup_factor_ * h1_ref_) {
    std::ostringstream os;
    os << "FnsIntegrator: blow-up detected stepping from t = " << t_
       << " (H1 proxy " << proxy << " vs reference " << h1_ref_
       << "); last valid time is " << t_;
    throw std::runtime_error(os.str());
  }
  v_ = std::move(next);
  t_ += h;
}

ScalarField FnsIntegrator::pressure() const {
  return pressure_from_velocity(v_);
}

double FnsIntegrator::h1() const { return spectral_h1(v_); }

FnsSeries solve_fns(const VectorField& u0, double nu, double gamma,
                    const SolverConfig& cfg) {
  const HorizonGuard guard =
      horizon_guard(u0, cfg.alpha, cfg.local_exist_c, cfg.horizon);
  if (cfg.enforce_horizon && !guard.within) {
    std::ostringstream os;
    os << "solve_fns: requested horizon " << cfg.horizon
       << " exceeds the admissible local-existence time " << guard.admissible_T;
    throw std::runtime_error(os.str());
  }
  const int nsteps = std::max(1, int(std::lround(cfg.horizon / cfg.dt)));
  const double dt = cfg.horizon / nsteps;
  FnsIntegrator integ(u0, nu, gamma, dt, cfg.dealias, cfg.blowup_factor);

  FnsSeries out;
  auto emit = [&] {
    out.times.push_back(integ.t());
    out.v.push_back(integ.v());
    out.p.push_back(integ.pressure());
  };
  auto check_cfl = [&] {
    const double speed = integ.v().sup_norm();
    const double lhs = dt * integ.v().grid().kcut() * speed;
    if (lhs > 2.8 * cfg.cfl) {
      std::ostringstream os;
      os << "solve_fns: CFL violation at t = " << integ.t() << ": dt * kcut * "
         << "max|v| = " << lhs << " > " << 2.8 * cfg.cfl;
      throw std::runtime_error(os.str());
    }
  };
  check_cfl();
  emit();
  for (int s = 0; s < nsteps; ++s) {
    integ.step();
    check_cfl();
    emit();
  }
  return out;
}

AdSeries solve_advection_diffusion(
    const ScalarField& u0, const std::function<VectorField(double)>& v,
    double nu, double gamma, const std::function<ScalarField(double)>& f,
    const SolverConfig& cfg) {
  const Grid& g = u0.grid();
  const int nsteps = std::max(1, int(std::lround(cfg.horizon / cfg.dt)));
  const double h = cfg.horizon / nsteps;
  const auto ef = dissipation_factor(g, nu, gamma, h);
  const auto eh = dissipation_factor(g, nu, gamma, h / 2);

  auto rhs = [&](const ScalarField& u, double t) {
    ScalarField r = transport_rhs(v(t), u);
    if (f) {
      ScalarField src = f(t);
      if (!src.empty()) r += src;
    }
    return r;
  };

  AdSeries out;
  ScalarField u = cfg.dealias ? u0.dealiased() : u0;
  double t = 0;
  out.times.push_back(t);
  out.u.push_back(u);
  for (int s = 0; s < nsteps; ++s) {
    const ScalarField uf = mul_real(u, ef);
    const ScalarField uh = mul_real(u, eh);
    const ScalarField k1 = rhs(u, t);
    const ScalarField k2 = rhs(uh + (h / 2) * mul_real(k1, eh), t + h / 2);
    const ScalarField k3 = rhs(uh + (h / 2) * k2, t + h / 2);
    const ScalarField k4 = rhs(uf + h * mul_real(k3, eh), t + h);
    u = uf + (h / 6.0) * (mul_real(k1, ef) +
                          mul_real(2.0 * (k2 + k3), eh) + k4);
    t += h;
    out.times.push_back(t);
    out.u.push_back(u);
  }
  return out;
}

FlowMapIntegrator::FlowMapIntegrator(const Grid& g, double anchor_t,
                                     double half_dt)
    : p_(VectorField::zero(g)), anchor_(anchor_t), t_(anchor_t), h_(half_dt) {
  if (half_dt <= 0)
    throw std::invalid_argument("FlowMapIntegrator: half_dt must be > 0");
}

void FlowMapIntegrator::step(const VectorField& v0, const VectorField& vh,
                             const VectorField& v1) {
  auto rhs = [](const VectorField& p, const VectorField& v) {
    VectorField r = VectorField::zero(p.grid());
    for (int i = 0; i < 3; ++i)
      r.c[i] = -1.0 * (v.c[i] + dot(v, gradient(p.c[i])));
    return r;
  };
  const double h = h_;
  const VectorField k1 = rhs(p_, v0);
  const VectorField k2 = rhs(p_ + h * k1, vh);
  const VectorField k3 = rhs(p_ + h * k2, vh);
  const VectorField k4 = rhs(p_ + (2 * h) * k3, v1);
  p_ += (h / 3.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  t_ += 2 * h;
}

VectorField flow_map(const std::vector<VectorField>& frames, double frame_dt,
                     double anchor_t) {
  if (frames.size() < 3 || frames.size() % 2 == 0)
    throw std::invalid_argument(
        "flow_map: need an odd number (>= 3) of uniformly spaced frames");
  FlowMapIntegrator fm(frames[0].grid(), anchor_t, frame_dt);
  for (std::size_t i = 0; i + 2 < frames.size(); i += 2)
    fm.step(frames[i], frames[i + 1], frames[i + 2]);
  return fm.phi_minus_id();
}

Mat3Field phi_gradient(const VectorField& phi_minus_id) {
  const Grid& g = phi_minus_id.grid();
  Mat3Field m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      m[i][j] = phi_minus_id.c[i].derivative(j);
      if (i == j) m[i][j] += ScalarField::constant(g, 1.0);
    }
  return m;
}

ScalarField mat3_det(const Mat3Field& m) {
  const Grid& g = m[0][0].grid();
  const double* v[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[i][j] = m[i][j].values().data();
  std::vector<double> d(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    d[p] = v[0][0][p] * (v[1][1][p] * v[2][2][p] - v[1][2][p] * v[2][1][p]) -
           v[0][1][p] * (v[1][0][p] * v[2][2][p] - v[1][2][p] * v[2][0][p]) +
           v[0][2][p] * (v[1][0][p] * v[2][1][p] - v[1][1][p] * v[2][0][p]);
  }
  return ScalarField::from_values(g, std::move(d));
}

double mat3_dist_id(const Mat3Field& m) {
  const Grid& g = m[0][0].grid();
  double worst = 0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    double acc = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double d = m[i][j].values()[p] - (i == j ? 1.0 : 0.0);
        acc += d * d;
      }
    worst = std::max(worst, acc);
  }
  return std::sqrt(worst);
}

StabilityReport stability_harness(const StabilityCase& c) {
  const double T = c.t1 - c.t0;
  if (T <= 0) throw std::invalid_argument("stability_harness: t1 must be > t0");
  SolverConfig cfg;
  cfg.dt = c.dt;
  cfg.horizon = T;

  const bool has_f = !c.f.empty() && c.f.sup_norm() > 0;
  auto vfun = [&](double) { return c.v; };
  auto ffun = [&](double) { return has_f ? c.f : ScalarField(); };
  AdSeries series =
      solve_advection_diffusion(c.u0, vfun, c.nu, c.gamma, ffun, cfg);
  const ScalarField& uT = series.u.back();

  StabilityReport rep;

  // maximum principle: without forcing the space-time max never exceeds the
  // initial max
  if (!has_f) {
    double st_max = -std::numeric_limits<double>::infinity();
    for (const auto& u : series.u)
      for (double x : u.values()) st_max = std::max(st_max, x);
    double init_max = -std::numeric_limits<double>::infinity();
    for (double x : c.u0.values()) init_max = std::max(init_max, x);
    rep.estimates.push_back(
        ineq("stability:max_principle", st_max, init_max + 1e-8));
  }

  const double v1 = holder_seminorm(c.v, 1.0).value;
  const double e1 = std::exp(T * v1);
  // \int_0^T e^{s v1} ds and \int_0^T s e^{s v1} ds
  const double I0 = v1 > 0 ? (e1 - 1.0) / v1 : T;
  const double I1 = v1 > 0 ? (T * e1 - I0) / v1 : T * T / 2;

  const double f0 = has_f ? c.f.sup_norm() : 0.0;
  const double f1 = has_f ? holder_seminorm(c.f, 1.0).value : 0.0;

  // sup-norm growth bound
  rep.estimates.push_back(ineq("stability:est1", uT.sup_norm(),
                               c.u0.sup_norm() + T * f0 + 1e-9));

  // first-seminorm growth bound
  {
    const double lhs = holder_seminorm(uT, 1.0).value;
    const double rhs = holder_seminorm(c.u0, 1.0).value * e1 + f1 * I0;
    rep.estimates.push_back(
        ineq("stability:est2", lhs, rhs * (1 + 1e-9) + 1e-12));
  }

  // N-th seminorm bound with a fitted constant
  {
    const double N = double(c.N);
    const double u0N = holder_seminorm(c.u0, N).value;
    const double u01 = holder_seminorm(c.u0, 1.0).value;
    const double vN = holder_seminorm(c.v, N).value;
    const double fN = has_f ? holder_seminorm(c.f, N).value : 0.0;
    const double lhs = holder_seminorm(uT, N).value;
    auto rhs_of = [&](double C) {
      return (u0N + C * T * vN * u01) * std::exp(C * T * v1) + fN * I0 +
             C * vN * f1 * I1;
    };
    double C = 0;
    if (rhs_of(0) < lhs) {
      double lo = 0, hi = 1.0;
      while (rhs_of(hi) < lhs && hi < 1e6) hi *= 2;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rhs_of(mid) < lhs ? lo : hi) = mid;
      }
      C = hi;
    }
    rep.fitted_C3 = C;
    rep.estimates.push_back(ineq("stability:est3:constant", C, 10.0));
  }

  // alpha-norm transport bound, valid only when (t - t0)[v]_1 <= 1
  rep.trans_est_alpha_applicable = T * v1 <= 1.0;
  if (rep.trans_est_alpha_applicable) {
    const double lhs = holder_norm(uT, c.alpha);
    const double rhs =
        std::exp(c.alpha) *
        (holder_norm(c.u0, c.alpha) + T * (has_f ? holder_norm(c.f, c.alpha)
                                                 : 0.0));
    rep.estimates.push_back(
        ineq("stability:est_alpha", lhs, rhs * (1 + 1e-9) + 1e-12));
  }

  // (1 + alpha)-seminorm transport bound, up to a fitted constant
  {
    const double ex = 1.0 + c.alpha;
    const double lhs = holder_seminorm(uT, ex).value;
    const double vNa = holder_seminorm(c.v, ex).value;
    const double u01 = holder_seminorm(c.u0, 1.0).value;
    const double core = holder_seminorm(c.u0, ex).value + T * vNa * u01 +
                        T * (has_f ? holder_seminorm(c.f, ex).value : 0.0) +
                        T * T / 2 * vNa * f1;
    rep.fitted_C1a = core > 0 ? lhs / core : 0.0;
    rep.estimates.push_back(
        ineq("stability:est_holder_transport:constant", rep.fitted_C1a, 10.0));
  }

  return rep;
}

}  // namespace nsr
