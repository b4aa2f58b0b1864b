#include "nsr/gluing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nsr/holder.hpp"
#include "nsr/operators.hpp"

namespace nsr {

namespace {

constexpr double kEps = 1e-12;

// smooth transition: 0 at u <= 0, 1 at u >= 1
double bump(double u) { return u <= 0 ? 0.0 : std::exp(-1.0 / u); }
double bump_d(double u) {
  return u <= 0 ? 0.0 : std::exp(-1.0 / u) / (u * u);
}
double sigma(double u) {
  const double f = bump(u), g = bump(1.0 - u);
  return f / (f + g);
}
double sigma_d(double u) {
  const double f = bump(u), g = bump(1.0 - u);
  const double s = f + g;
  return (bump_d(u) * g + f * bump_d(1.0 - u)) / (s * s);
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

double vector_holder_norm(const VectorField& v, double ex) {
  return std::max({holder_norm(v.c[0], ex), holder_norm(v.c[1], ex),
                   holder_norm(v.c[2], ex)});
}

}  // namespace

TimePartition::TimePartition(double tau_q, double horizon)
    : tau(tau_q), T(horizon) {
  if (tau <= 0 || T <= 0)
    throw std::invalid_argument("TimePartition: tau and T must be > 0");
}

TimeInterval TimePartition::I(int i) const {
  const double lo = t(i + 1) + tau / 3;
  if (lo >= T) return {T, T};
  return {lo, std::min(t(i + 1) + 2 * tau / 3, T)};
}

TimeInterval TimePartition::J(int i) const {
  if (i == 0) return {0.0, std::min(t(1) + tau / 3, T)};
  const double lo = t(i + 1) - tau / 3;
  if (lo >= T) return {T, T};
  return {lo, std::min(t(i + 1) + tau / 3, T)};
}

int TimePartition::solves() const {
  int m = 1;
  while (t(m) + tau / 3 < T - kEps) ++m;
  return m;
}

int TimePartition::intervals_I() const {
  int m = 0;
  while (t(m + 1) + tau / 3 < T - kEps) ++m;
  return m;
}

TimePartition::Location TimePartition::classify(double t_in) const {
  if (t_in < -kEps || t_in > T + kEps)
    throw std::out_of_range("TimePartition::classify: t outside [0,T]");
  const double t = std::clamp(t_in, 0.0, T);
  const int nI = intervals_I();
  for (int i = 0; i < nI; ++i)
    if (I(i).contains(t)) return {true, i};
  // otherwise t lies in a J interval; J_i straddles t_{i+1}
  int i = std::max(0, int(std::floor(t / tau - 0.5)));
  for (; i < solves(); ++i) {
    TimeInterval j = J(i);
    if (!j.empty() && j.lo - kEps <= t && t <= j.hi + kEps) return {false, i};
  }
  throw std::logic_error("TimePartition::classify: uncovered time");
}

double ChiCutoffs::chi(int i, double t) const {
  const double tau = part.tau;
  const double rise_lo = part.t(i) + tau / 3;       // nominal I_{i-1}
  const double fall_lo = part.t(i + 1) + tau / 3;   // nominal I_i
  const double w = tau / 3;
  if (i > 0 && t < rise_lo + w) {
    if (t <= rise_lo) return 0.0;
    return sigma((t - rise_lo) / w);
  }
  if (t <= fall_lo) return 1.0;
  if (t >= fall_lo + w) return 0.0;
  return 1.0 - sigma((t - fall_lo) / w);
}

double ChiCutoffs::chi_dt(int i, double t) const {
  const double tau = part.tau;
  const double rise_lo = part.t(i) + tau / 3;
  const double fall_lo = part.t(i + 1) + tau / 3;
  const double w = tau / 3;
  if (i > 0 && t > rise_lo && t < rise_lo + w)
    return sigma_d((t - rise_lo) / w) / w;
  if (t > fall_lo && t < fall_lo + w) return -sigma_d((t - fall_lo) / w) / w;
  return 0.0;
}

ChiCutoffs build_chi(const TimePartition& part) {
  ChiCutoffs c{part, part.solves(), 0.0};
  // fitted constant: sup |chi'| tau over a dense sweep of one transition
  double worst = 0;
  for (int s = 1; s < 4096; ++s)
    worst = std::max(worst, std::abs(sigma_d(s / 4096.0)));
  c.fitted_C = worst * 3.0;  // transitions have width tau/3
  return c;
}

GlueFrame assemble_glued_frame(
    const ChiCutoffs& chi, double t,
    const std::function<const VectorField&(int)>& v_of,
    const std::function<const ScalarField&(int)>& p_of) {
  GlueFrame out;
  bool started = false;
  for (int i = 0; i < chi.count; ++i) {
    const double w = chi.chi(i, t);
    if (w == 0.0) continue;
    if (!started) {
      out.v = w * v_of(i);
      out.p = w * p_of(i);
      started = true;
    } else {
      out.v += w * v_of(i);
      out.p += w * p_of(i);
    }
  }
  if (!started)
    throw std::logic_error("assemble_glued_frame: no active cutoff");
  const Grid& g = out.v.grid();

  const auto loc = chi.part.classify(t);
  out.in_I = loc.in_I;
  out.interval = loc.idx;
  if (loc.in_I && loc.idx + 1 < chi.count) {
    const int i = loc.idx;
    const double c = chi.chi(i, t);
    const double dc = chi.chi_dt(i, t);
    VectorField d = v_of(i) - v_of(i + 1);
    // the local solutions share the initial mean of v_ell and the solver
    // conserves it, so the difference must be mean-free
    auto inv = inverse_divergence(d, 1e-10);
    out.R = dc * inv.R - (c * (1.0 - c)) * outer_traceless(d, d);
    // note the + sign: with the traceless product in R, the residual identity
    // requires pbar2 = + chi (1 - chi) (|d|^2 - avg) / 3
    out.p += (c * (1.0 - c) / 3.0) * dot(d, d).minus_mean();
  } else {
    out.R = SymTensorField::zero(g);
  }
  return out;
}

GluedState glue(const std::vector<VectorField>& v_ell, double dt,
                const IterationParams& prm, int q,
                const SolverConfig& solver_cfg) {
  if (v_ell.size() < 2)
    throw std::invalid_argument("glue: need at least two v_ell frames");
  const double T = (v_ell.size() - 1) * dt;
  const auto lv = level_values(prm, q);
  const double tau = lv.tau_q;
  const double sf = tau / dt;
  const long long S = std::llround(sf);
  if (S < 1 || std::abs(sf - double(S)) > 1e-9 * sf)
    throw std::invalid_argument("glue: dt must divide tau_q");

  GluedState st;
  st.part = TimePartition(tau, T);
  const int m = st.part.solves();

  // CFL-like gate, evaluated over the launch frames before any solve
  double v_norm = 0;
  for (int i = 0; i < m; ++i) {
    const std::size_t ai = std::size_t(i) * S;
    if (ai < v_ell.size())
      v_norm = std::max(v_norm, vector_holder_norm(v_ell[ai], 1.0 + prm.alpha));
  }
  st.cfl = ineq("glue:cfl", 2.0 * tau * v_norm, std::pow(lv.ell, prm.alpha));

  for (int i = 0; i < m; ++i) {
    const std::size_t ai = std::size_t(i) * S;
    if (ai >= v_ell.size())
      throw std::logic_error("glue: anchor frame outside the v_ell series");
    const double t0 = st.part.t(i);
    const double t_end = std::min(t0 + 2 * tau, T);
    SolverConfig cfg = solver_cfg;
    cfg.dt = dt;
    cfg.horizon = t_end - t0;
    LocalSolve ls;
    ls.i = i;
    ls.t0 = t0;
    ls.frame_offset = ai;
    try {
      ls.series = solve_fns(v_ell[ai], prm.nu, prm.gamma, cfg);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "glue: local solve i = " << i << " on [" << t0 << ", " << t_end
         << "] failed: " << e.what();
      throw std::runtime_error(os.str());
    }
    st.solves.push_back(std::move(ls));
  }

  const ChiCutoffs chi = build_chi(st.part);
  for (std::size_t gi = 0; gi < v_ell.size(); ++gi) {
    const double t = gi * dt;
    auto v_of = [&](int i) -> const VectorField& {
      return st.solves[i].series.v.at(gi - st.solves[i].frame_offset);
    };
    auto p_of = [&](int i) -> const ScalarField& {
      return st.solves[i].series.p.at(gi - st.solves[i].frame_offset);
    };
    GlueFrame f = assemble_glued_frame(chi, t, v_of, p_of);
    st.times.push_back(t);
    st.v.push_back(std::move(f.v));
    st.p.push_back(std::move(f.p));
    st.R.push_back(std::move(f.R));
  }
  return st;
}

GluingLedger gluing_estimate_ledger(const GluedState& glued,
                                    const std::vector<VectorField>& v_ell,
                                    const IterationParams& prm, int q) {
  if (v_ell.size() != glued.times.size())
    throw std::invalid_argument(
        "gluing_estimate_ledger: v_ell frames must match glued.times");
  const auto lv = level_values(prm, q);
  const double ella = std::pow(lv.ell, prm.alpha);
  const double d1 = lv.delta_q1;
  GluingLedger led;
  led.entries.push_back(glued.cfl);

  const std::size_t n = glued.times.size();
  const std::size_t stride = std::max<std::size_t>(1, n / 16);

  double sup_a = 0, sup_1a = 0, sup_R = 0, sup_E = 0;
  for (std::size_t gi = 0; gi < n; gi += stride) {
    const VectorField diff = glued.v[gi] - v_ell[gi];
    sup_a = std::max(sup_a, vector_holder_norm(diff, prm.alpha));
    sup_1a = std::max(sup_1a, vector_holder_norm(diff, 1.0 + prm.alpha));
    sup_R = std::max(sup_R, glued.R[gi].sup_norm() +
                                holder_seminorm(glued.R[gi], prm.alpha).value);
    const double ev = glued.v[gi].l2(), el = v_ell[gi].l2();
    sup_E = std::max(sup_E, std::abs(ev * ev - el * el));
  }
  led.energy_diff_sup = sup_E;

  led.entries.push_back(
      ineq("e:vq:vell:constant", sup_a / (std::sqrt(d1) * ella), 10.0));
  led.entries.push_back(ineq(
      "e:vq:vell:additional:constant",
      sup_1a / (lv.tau_q * d1 * std::pow(lv.ell, -2.0 + prm.alpha)), 10.0));
  led.entries.push_back(
      ineq("e:Rq:constant", sup_R / (d1 * ella), 10.0));
  led.entries.push_back(
      ineq("e:voverline_vell_energy_diff:constant", sup_E / (d1 * ella), 10.0));

  // per-solve laws: v_i - v_ell at the end of each window, z-potential
  // differences at mid-I, per-solve energy drift
  double sup_vi = 0, sup_z = 0, sup_drift = 0;
  for (const auto& ls : glued.solves) {
    const std::size_t last = ls.frame_offset + ls.series.v.size() - 1;
    if (last < n) {
      const VectorField diff = ls.series.v.back() - v_ell[last];
      sup_vi = std::max(sup_vi, vector_holder_norm(diff, prm.alpha));
      const double ei = ls.series.v.back().l2(), el = v_ell[last].l2();
      sup_drift = std::max(sup_drift, std::abs(ei * ei - el * el));
    }
  }
  for (int i = 0; i + 1 < glued.part.solves(); ++i) {
    const TimeInterval ii = glued.part.I(i);
    if (ii.empty()) continue;
    const auto& a = glued.solves[i];
    const auto& b = glued.solves[i + 1];
    // nearest frame to mid-I
    const std::size_t gi =
        std::size_t(std::llround(ii.mid() / (glued.times[1] - glued.times[0])));
    if (gi < a.frame_offset || gi < b.frame_offset) continue;
    const std::size_t la = gi - a.frame_offset, lb = gi - b.frame_offset;
    if (la >= a.series.v.size() || lb >= b.series.v.size()) continue;
    VectorField d = a.series.v[la] - b.series.v[lb];
    double mean_norm = 0;
    for (double mc : d.mean()) mean_norm += mc * mc;
    if (std::sqrt(mean_norm) > 1e-10)
      throw std::runtime_error(
          "gluing_estimate_ledger: v_i - v_{i+1} is not mean-free");
    sup_z = std::max(sup_z, vector_holder_norm(biot_savart(d), prm.alpha));
  }
  led.entries.push_back(
      ineq("e:z_diff_k:constant",
           sup_vi / (lv.tau_q * d1 * std::pow(lv.ell, -1.0 + prm.alpha)),
           10.0));
  led.entries.push_back(
      ineq("e:z_diff:constant", sup_z / (lv.tau_q * d1 * ella), 10.0));
  led.entries.push_back(
      ineq("glue:vi_energy_drift:constant", sup_drift / (d1 * ella), 10.0));
  return led;
}

}  // namespace nsr
