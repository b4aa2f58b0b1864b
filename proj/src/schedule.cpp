#include "nsr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nsr/holder.hpp"
#include "nsr/mollify.hpp"
#include "nsr/operators.hpp"

namespace nsr {

namespace {

Predicate make_pred(std::string id, double lhs, double rhs) {
  Predicate p;
  p.id = std::move(id);
  p.lhs = lhs;
  p.rhs = rhs;
  p.margin = rhs - lhs;
  p.holds = lhs <= rhs;
  return p;
}

// largest safe value before ceil(a^{b^q}) loses integer exactness
constexpr double kMaxFrequency = 9.0e15;

double raw_frequency(const IterationParams& p, int q) {
  return std::pow(p.a, std::pow(p.b, double(q)));
}

long long int_frequency(const IterationParams& p, int q) {
  double x = raw_frequency(p, q);
  if (!(x < kMaxFrequency)) {
    int qmax = 0;
    while (raw_frequency(p, qmax + 1) < kMaxFrequency) ++qmax;
    throw std::runtime_error(
        "level_values: a^(b^q) exceeds the exact integer range at q = " +
        std::to_string(q) + "; largest feasible q = " + std::to_string(qmax));
  }
  return (long long)(std::ceil(x * (1.0 - 1e-14)));
}

}  // namespace

BBetaCheck check_b_beta(const IterationParams& p) {
  double bound = std::min((1.0 - p.beta) / (2.0 * p.beta), 4.0 / 3.0);
  bool ok = p.b > 1.0 && p.b < bound;
  double margin = std::min(p.b - 1.0, bound - p.b);
  return {ok, bound, margin};
}

std::vector<Predicate> check_params(const IterationParams& p) {
  std::vector<Predicate> out;
  out.push_back(make_pred("params:a_gt_1", 1.0, p.a));
  out.push_back(make_pred("params:beta_upper", p.beta, 1.0 / 3.0));
  out.push_back(make_pred("params:beta_lower", 0.0, p.beta));
  out.push_back(make_pred("params:alpha_range", p.alpha, 1.0));
  out.push_back(make_pred("params:gamma_upper", p.gamma, 1.0 / 3.0));
  auto bb = check_b_beta(p);
  Predicate pb = make_pred("e:b_beta_rel", p.b, bb.bound);
  pb.holds = bb.ok;
  pb.margin = bb.margin;
  out.push_back(pb);
  return out;
}

bool LevelValues::all_hold() const {
  for (const auto& p : predicates)
    if (!p.holds) return false;
  return true;
}

LevelValues level_values(const IterationParams& p, int q) {
  if (q < 0) throw std::runtime_error("level_values: q must be nonnegative");
  LevelValues lv;
  lv.q = q;
  lv.n_q = int_frequency(p, q);
  long long n1 = int_frequency(p, q + 1);
  long long n2 = int_frequency(p, q + 2);
  lv.lambda_q = two_pi * double(lv.n_q);
  double lambda1 = two_pi * double(n1);
  double lambda2 = two_pi * double(n2);
  lv.delta_q = std::pow(lv.lambda_q, -2.0 * p.beta);
  lv.delta_q1 = std::pow(lambda1, -2.0 * p.beta);
  lv.delta_q2 = std::pow(lambda2, -2.0 * p.beta);
  lv.ell = std::sqrt(lv.delta_q1 / lv.delta_q) /
           std::pow(lv.lambda_q, 1.0 + 1.5 * p.alpha);
  lv.tau_q = std::pow(lv.ell, 2.0 * p.alpha) /
             (std::sqrt(lv.delta_q) * lv.lambda_q);

  double ratio = lv.lambda_q / raw_frequency(p, q);
  lv.predicates.push_back(make_pred("e:bloody_integers:lower", two_pi, ratio));
  lv.predicates.push_back(
      make_pred("e:bloody_integers:upper", ratio, 2 * two_pi));
  double mid = std::pow(lv.delta_q / lv.delta_q1, 1.5);
  lv.predicates.push_back(make_pred("e:some_param_ineq:lower",
                                    std::pow(lv.lambda_q, 3.0 * p.alpha), mid));
  lv.predicates.push_back(
      make_pred("e:some_param_ineq:upper", mid, lambda1 / lv.lambda_q));
  lv.predicates.push_back(make_pred("e:compare-lambda-ell:lower",
                                    std::pow(lv.lambda_q, -1.5), lv.ell));
  lv.predicates.push_back(
      make_pred("e:compare-lambda-ell:upper", lv.ell, 1.0 / lv.lambda_q));
  lv.predicates.push_back(
      make_pred("delta_product:lower", 1.0,
                lv.delta_q1 * std::sqrt(lv.delta_q) * lv.lambda_q));
  return lv;
}

// ---- energy profiles ----

EnergyProfile EnergyProfile::from_samples(double t0, double t1,
                                          std::vector<double> samples,
                                          double K) {
  if (samples.size() < 2)
    throw std::runtime_error("EnergyProfile: need at least two samples");
  if (!(t1 > t0)) throw std::runtime_error("EnergyProfile: empty time range");
  EnergyProfile e;
  e.t0_ = t0;
  e.t1_ = t1;
  e.K_ = K;
  e.samples_ = std::move(samples);
  const int n = int(e.samples_.size());
  e.second_.assign(n, 0.0);
  if (n > 2) {
    // natural cubic spline on uniform knots: tridiagonal Thomas solve
    const double h = (t1 - t0) / (n - 1);
    const int m = n - 2;
    std::vector<double> diag(m, 2.0 * h / 3.0);
    std::vector<double> rhs(m);
    for (int i = 0; i < m; ++i)
      rhs[i] = (e.samples_[i + 2] - 2.0 * e.samples_[i + 1] + e.samples_[i]) / h;
    // off-diagonals are h/6
    const double off = h / 6.0;
    for (int i = 1; i < m; ++i) {
      double w = off / diag[i - 1];
      diag[i] -= w * off;
      rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> M(m);
    M[m - 1] = rhs[m - 1] / diag[m - 1];
    for (int i = m - 2; i >= 0; --i)
      M[i] = (rhs[i] - off * M[i + 1]) / diag[i];
    for (int i = 0; i < m; ++i) e.second_[i + 1] = M[i];
  }
  return e;
}

double EnergyProfile::base_value(double t) const {
  const int n = int(samples_.size());
  const double h = (t1_ - t0_) / (n - 1);
  double tc = std::clamp(t, t0_, t1_);
  int i = std::min(int((tc - t0_) / h), n - 2);
  double u = (tc - t0_) / h - i;
  double a = 1.0 - u;
  return samples_[i] * a + samples_[i + 1] * u +
         (h * h / 6.0) * ((a * a * a - a) * second_[i] +
                          (u * u * u - u) * second_[i + 1]);
}

double EnergyProfile::base_derivative(double t) const {
  const int n = int(samples_.size());
  const double h = (t1_ - t0_) / (n - 1);
  double tc = std::clamp(t, t0_, t1_);
  int i = std::min(int((tc - t0_) / h), n - 2);
  double u = (tc - t0_) / h - i;
  double a = 1.0 - u;
  return (samples_[i + 1] - samples_[i]) / h +
         (h / 6.0) * ((1.0 - 3.0 * a * a) * second_[i] +
                      (3.0 * u * u - 1.0) * second_[i + 1]);
}

double EnergyProfile::operator()(double t) const {
  return amp_ * base_value(tscale_ * t);
}

double EnergyProfile::derivative(double t) const {
  return amp_ * tscale_ * base_derivative(tscale_ * t);
}

EnergyProfile EnergyProfile::rescaled(double amp, double tscale) const {
  EnergyProfile e = *this;
  e.amp_ *= amp;
  e.tscale_ *= tscale;
  return e;
}

double EnergyProfile::min_value() const {
  double m = 1e300;
  for (int i = 0; i <= 2048; ++i)
    m = std::min(m, amp_ * base_value(t0_ + (t1_ - t0_) * i / 2048.0));
  return m;
}

double EnergyProfile::max_value() const {
  double m = -1e300;
  for (int i = 0; i <= 2048; ++i)
    m = std::max(m, amp_ * base_value(t0_ + (t1_ - t0_) * i / 2048.0));
  return m;
}

double EnergyProfile::max_abs_derivative() const {
  double m = 0;
  for (int i = 0; i <= 2048; ++i)
    m = std::max(m, std::abs(amp_ * tscale_ *
                             base_derivative(t0_ + (t1_ - t0_) * i / 2048.0)));
  return m;
}

std::vector<Predicate> EnergyProfile::check_hypotheses(
    const IterationParams& p, bool normalized) const {
  std::vector<Predicate> out;
  double lo = 0.5, hi = 1.0, dbound = K();
  if (normalized) {
    auto lv = level_values(p, 0);
    lo = 0.5 * lv.delta_q1;
    hi = lv.delta_q1;
  }
  out.push_back(make_pred("profile:lower", lo, min_value()));
  out.push_back(make_pred("profile:upper", max_value(), hi));
  out.push_back(make_pred("profile:deriv", max_abs_derivative(), dbound));
  return out;
}

NormalizedProfile normalize_profile(const EnergyProfile& e,
                                    const IterationParams& p) {
  for (const auto& pr : e.check_hypotheses(p, false))
    if (!pr.holds)
      throw std::runtime_error("normalize_profile: hypothesis violated: " +
                               pr.id);
  double mu = std::sqrt(level_values(p, 0).delta_q1);
  return {e.rescaled(mu * mu, mu), mu};
}

EnergyProfile unnormalize_profile(const EnergyProfile& e_tilde, double mu) {
  return e_tilde.rescaled(1.0 / (mu * mu), 1.0 / mu);
}

Predicate dissipation_gate(double K, double C) {
  Predicate p = make_pred("e:fine", 1.0 + C * std::pow(K, 8.0 / 9.0), K);
  p.holds = p.margin > 0;
  return p;
}

// ---- seeds ----

SeedTriple zero_seed(const IterationParams& p, const Grid& g, double t0,
                     double t1) {
  SeedTriple s;
  s.v = VectorField::zero(g);
  s.p = ScalarField::zero(g);
  s.R = SymTensorField::zero(g);
  auto lv = level_values(p, 0);
  s.delta_n = std::pow(p.a, -std::pow(p.b, 2.0));
  s.nu_n = std::pow(s.delta_n, 1.0 + p.beta_prime);
  s.e = EnergyProfile::from_samples(t0, t1, {1.0, 1.0}, 1.0);
  s.provenance = "zero_seed";
  s.predicates.push_back(make_pred("seed:R_norm", 0.0, 1.0));
  (void)lv;
  return s;
}

SeedTriple seed_from_euler_field(const std::vector<VectorField>& v_series,
                                 double dt, const IterationParams& p, int n) {
  if (v_series.empty())
    throw std::runtime_error("seed_from_euler_field: empty series");
  const Grid& g = v_series.front().grid();
  SeedTriple s;
  s.provenance = "mollified_euler_seed";
  s.delta_n = std::pow(p.a, -std::pow(p.b, double(n + 2)));
  s.nu_n = std::pow(s.delta_n, 1.0 + p.beta_prime);

  // steady detection: all frames equal to the first
  bool steady = true;
  for (std::size_t i = 1; i < v_series.size() && steady; ++i)
    if ((v_series[i] - v_series.front()).sup_norm() >
        1e-13 * (1.0 + v_series.front().sup_norm()))
      steady = false;

  const std::size_t mid = v_series.size() / 2;
  std::vector<double> w(v_series.size(), 0.0);
  if (steady) {
    w[mid] = 1.0;
  } else {
    if (dt > 0.25 * s.delta_n)
      throw std::runtime_error(
          "seed_from_euler_field: time sampling too coarse for mollification "
          "scale delta_n");
    if (double(v_series.size() - 1) * dt < 2.0 * s.delta_n)
      throw std::runtime_error(
          "seed_from_euler_field: series too short to cover the "
          "time-mollification window");
    double sum = 0;
    for (std::size_t i = 0; i < v_series.size(); ++i) {
      double u = (double(i) - double(mid)) * dt / s.delta_n;
      if (std::abs(u) < 1.0) w[i] = std::exp(-1.0 / (1.0 - u * u));
      sum += w[i];
    }
    for (auto& x : w) x /= sum;
  }

  // space mollification at scale delta_n, then the weighted time average,
  // for v and for the traceless outer product
  VectorField vn = VectorField::zero(g);
  SymTensorField vvn = SymTensorField::zero(g);
  for (std::size_t i = 0; i < v_series.size(); ++i) {
    if (w[i] == 0.0) continue;
    vn += w[i] * mollify(v_series[i], s.delta_n).field;
    vvn +=
        w[i] *
        mollify(outer_traceless(v_series[i], v_series[i]), s.delta_n).field;
  }
  s.v = vn;
  SymTensorField R = outer_traceless(vn, vn) - vvn;
  VectorField diss = fractional_laplacian(vn, p.gamma);
  if (diss.sup_norm() > 0) {
    auto inv = inverse_divergence(diss.minus_mean());
    R += s.nu_n * inv.R;
  }
  s.R = R;
  s.p = pressure_from_velocity(vn, R);

  auto lv = level_values(p, n);
  double kinetic = vn.l2() * vn.l2();
  double pad = lv.delta_q1 * std::pow(lv.lambda_q, -p.alpha);
  s.e = EnergyProfile::from_samples(0.0, 1.0, {kinetic + pad, kinetic + pad},
                                    1.0);

  double rhs = std::pow(s.delta_n, 2.0 * p.beta_prime);
  if (vn.sup_norm() > 0)
    rhs += s.nu_n * holder_seminorm(vn, 1.0).value;
  Predicate pr = make_pred("seed:R_size", s.R.sup_norm(), 10.0 * rhs);
  s.predicates.push_back(pr);
  // sub-grid mollification scales degenerate to the identity; flag them
  s.predicates.push_back(
      make_pred("seed:mollifier_resolved", 2.0 * g.dx(), s.delta_n));
  s.predicates.push_back(make_pred("seed:div_free", divergence(vn).sup_norm(),
                                   1e-10 * (1.0 + vn.sup_norm())));
  s.predicates.push_back(make_pred("seed:energy_gap", 0.0, pad));
  return s;
}

}  // namespace nsr
