#pragma once
// Local-in-time integrators: the fractional Navier-Stokes solver (RK4 with an
// exact integrating factor for the dissipative symbol), the nonlocal
// advection-diffusion solver backing the stability-estimate harness, and
// characteristic flow maps integrated as the periodic field Phi - id.

#include <functional>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/schedule.hpp"

namespace nsr {

struct SolverConfig {
  double dt = 1e-3;
  double horizon = 0.1;
  bool dealias = true;
  double cfl = 1.0;              // advisory gate dt * kcut * max|v| <= 2.8 cfl
  double blowup_factor = 10.0;
  double alpha = 0.01;           // for the local-existence horizon guard
  double local_exist_c = 0.1;
  bool enforce_horizon = false;  // guard is reported; optionally enforced
};

struct HorizonGuard {
  double admissible_T;  // c ||u0||_{1+alpha}^{-1} (infinite for u0 = 0)
  double horizon;
  bool within;
};
HorizonGuard horizon_guard(const VectorField& u0, double alpha, double c,
                           double horizon);

// dv/dt = -P div(v x v) - nu (-Delta)^gamma v, stepped with RK4 on the
// nonlinearity and the exact factor e^{-nu |k|^{2 gamma} dt} on the
// dissipation; the k = 0 mode is conserved exactly
class FnsIntegrator {
 public:
  FnsIntegrator(VectorField u0, double nu, double gamma, double dt,
                bool dealias = true, double blowup_factor = 10.0);
  void step();  // throws on blow-up (H1 proxy growing past the factor)
  const VectorField& v() const { return v_; }
  double t() const { return t_; }
  double dt() const { return dt_; }
  ScalarField pressure() const;
  double h1() const;  // sqrt(sum |k|^2 |vhat|^2), the blow-up proxy

 private:
  VectorField rhs(const VectorField& v) const;
  VectorField damp(const VectorField& v, const std::vector<double>& m) const;
  VectorField v_;
  double nu_, gamma_, dt_, t_ = 0;
  bool dealias_;
  double blowup_factor_, h1_ref_;
  std::vector<double> ef_full_, ef_half_;
};

struct FnsSeries {
  std::vector<double> times;
  std::vector<VectorField> v;
  std::vector<ScalarField> p;
};
// integrates over cfg.horizon, outputting every step; throws on CFL or
// blow-up violations (and on the horizon guard when enforced)
FnsSeries solve_fns(const VectorField& u0, double nu, double gamma,
                    const SolverConfig& cfg);

// u_t + (v.grad) u + nu (-Delta)^gamma u = f with given v(t), f(t)
struct AdSeries {
  std::vector<double> times;
  std::vector<ScalarField> u;
};
AdSeries solve_advection_diffusion(
    const ScalarField& u0, const std::function<VectorField(double)>& v,
    double nu, double gamma, const std::function<ScalarField(double)>& f,
    const SolverConfig& cfg);

// transport of P = Phi - id by (d_t + v.grad) P = -v from P(anchor) = 0;
// each step covers [t, t + 2h] and consumes v at t, t + h, t + 2h
class FlowMapIntegrator {
 public:
  FlowMapIntegrator(const Grid& g, double anchor_t, double half_dt);
  void step(const VectorField& v0, const VectorField& vh,
            const VectorField& v1);
  const VectorField& phi_minus_id() const { return p_; }
  double t() const { return t_; }
  double anchor() const { return anchor_; }

 private:
  VectorField p_;
  double anchor_, t_, h_;
};

// convenience: integrate the flow map across uniformly spaced frames
// starting at the anchor frame; frames.size() must be odd
VectorField flow_map(const std::vector<VectorField>& frames, double frame_dt,
                     double anchor_t);

// gradient of Phi: entry (i,j) = d Phi_i / d x_j = delta_ij + d P_i / d x_j
using Mat3Field = std::array<std::array<ScalarField, 3>, 3>;
Mat3Field phi_gradient(const VectorField& phi_minus_id);
ScalarField mat3_det(const Mat3Field& m);
// sup over x of the Frobenius distance of m to the identity
double mat3_dist_id(const Mat3Field& m);

// ---- stability-estimate harness ----

struct StabilityCase {
  VectorField v;   // steady transporting field
  ScalarField u0;
  ScalarField f;   // steady forcing; empty -> zero
  double nu = 0.4;
  double gamma = 0.2;
  double alpha = 0.5;
  double t0 = 0.0;
  double t1 = 0.05;
  double dt = 2.5e-3;
  int N = 2;
};

struct StabilityReport {
  std::vector<Predicate> estimates;
  bool trans_est_alpha_applicable = false;  // requires (t-t0)[v]_1 <= 1
  double fitted_C3 = 0;   // smallest admissible constant in the [u]_N bound
  double fitted_C1a = 0;  // same for the [u]_{N+alpha} transport bound
};
StabilityReport stability_harness(const StabilityCase& c);

}  // namespace nsr
