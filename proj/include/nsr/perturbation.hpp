#pragma once
// Perturbation stage: space-time cutoffs eta_i, energy pumping rho_q /
// rho_{q,i}, the conjugated stress Rtilde_{q,i}, the principal and corrector
// perturbations w_o / w_c, and assembly of the next Reynolds triple.
//
// eta_i construction: each eta_i equals 1 on I_i and hands over inside the J
// windows through three smooth phases
//   morph    1 -> G_p          (a spatial stripe pattern appears)
//   stripes  sqrt-envelopes on two spatially disjoint stripe patterns (the
//            old cutoff decays while the next grows on the complement)
//   morph    G_p -> 1
// The patterns G_0, G_1 depend on x3 only and have disjoint supports, so
// eta_i eta_j = 0 pointwise for i != j while sum_i avg(eta_i^2) >= c_0 =
// avg(G^2) at every time. During the stripe phase the envelopes are
// sqrt(s) and sqrt(1-s), keeping the sum of integrals exactly constant.
//
// The time derivative of the perturbation is computed exactly: cutoff
// coefficients carry analytic derivatives, flow maps satisfy
// d_t Phi = -(vbar.grad) Phi, and d_t vbar / d_t Rbar follow from the cutoff
// derivatives and the local equations of motion. Finite-difference stencils
// on output frames cannot resolve the cutoff time scales.

#include <functional>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/gluing.hpp"
#include "nsr/mikado.hpp"
#include "nsr/schedule.hpp"
#include "nsr/solver.hpp"

namespace nsr {

// eta_i(x,t) = a_i(t) + b_i(t) G_{p(i)}(x) with p(i) = i mod 2
struct EtaCoeff {
  double a = 0, b = 0;
  double da = 0, db = 0;  // analytic time derivatives
  int parity = 0;
  bool zero() const { return a == 0.0 && b == 0.0; }
};

struct EtaCutoffs {
  TimePartition part{1.0, 1.0};
  int count = 0;
  double c0 = 0;        // min_t sum_i avg eta_i^2 (= avg G^2 by construction)
  double mean_G = 0;    // avg G_p (same for both parities)
  double mean_G2 = 0;   // avg G_p^2

  EtaCoeff coeff(int i, double t) const;
  // avg_x eta_i(x,t)^2 and its time derivative, from the coefficients
  double integral_eta_sq(int i, double t) const;
  double sum_integral_eta_sq(double t) const;
  double sum_integral_eta_sq_dt(double t) const;
  std::vector<int> active(double t) const;  // at most two indices
  // last time any eta_i is nonzero (for sizing flow-map integrations)
  double support_end(int i) const;
};
EtaCutoffs build_eta(const TimePartition& part);

// the stripe pattern (function of x3 only), parity 0 or 1
double stripe_value(double x3, int parity);
ScalarField stripe_field(const Grid& g, int parity);

// sampled eta_i(.,t) on a grid (test/diagnostic path)
ScalarField eta_field(const EtaCutoffs& eta, const Grid& g, int i, double t);

// ---- exact time derivatives of the glued state ----

struct GlueDerivs {
  VectorField dv;     // d_t vbar from cutoff derivatives + local equations
  SymTensorField dR;  // d_t Rbar
  double denergy = 0; // d_t avg |vbar|^2
};
GlueDerivs glued_time_derivatives(const GluedState& st, std::size_t frame,
                                  const IterationParams& prm);

// ---- pumping ----

struct PumpPerI {
  int i = 0;
  EtaCoeff eta;
  // rho_{q,i}^{1/2}(x) = alpha + beta G_p(x); analytic time derivatives
  double alpha = 0, beta = 0, dalpha = 0, dbeta = 0;
  ScalarField rho_qi;  // eta_i^2 rho_q / sum_j avg eta_j^2
  const VectorField* phi_minus_id = nullptr;  // borrowed from the caller
  VectorField dphi;           // d_t Phi = -(vbar.grad) Phi
  Mat3Field grad_phi;         // A = grad Phi
  Mat3Field grad_phi_dt;      // d_t A = grad(d_t Phi)
  SymTensorField Rtilde;      // A [Id - (sum/rho_q) Rbar] A^T
  SymTensorField Rtilde_dt;
  double grad_phi_dist_id = 0;  // sup over supp eta_i of |A - Id|_F
};

struct PumpFrame {
  double t = 0;
  double rho_q = 0;     // (e - delta_{q+2}/2 - avg|vbar|^2) / 3
  double drho_q = 0;
  double sum_eta_sq = 0;  // sum_j avg eta_j^2 at t
  std::vector<PumpPerI> active;
  std::vector<Predicate> checks;  // rho range / bounds, grad Phi closeness
};

// flow maps are supplied by the caller: (index i, Phi_i - id at time t)
using PhiAccess = std::vector<std::pair<int, const VectorField*>>;

// throws if rho_q <= 0 (pumping undefined) or if Rtilde leaves the closed
// half-ball around Id on the support of eta_i (named grid location)
PumpFrame pump_frame(const VectorField& vbar, const SymTensorField& Rbar,
                     const GlueDerivs& der, double t, double e_t, double de_t,
                     const IterationParams& prm, int q, const EtaCutoffs& eta,
                     const PhiAccess& phis);

// ---- perturbation fields ----

struct WFrame {
  double t = 0;
  VectorField w_o;
  VectorField w;    // full perturbation, -curl(potential)/n_{q+1}
  VectorField w_c;  // w - w_o
  VectorField dtw;  // exact d_t w (same curl applied to d_t potential)
  double sup_b_k4 = 0;  // sup_{i,k,x} |b_{i,k}| |k|^4 / delta_{q+1}^{1/2}
};

// k-truncation: modes with |k| <= k_max_run; the Nyquist guard
// n_{q+1} k_max_run <= grid kcut is enforced (throws with a remedy hint)
WFrame perturbation_frame(const PumpFrame& pf, const MikadoFamily& fam,
                          const IterationParams& prm, int q, int k_max_run);

// slow oracle: the corrector from its own definition, with spectral
// derivatives of the coefficient fields (small grids only)
VectorField corrector_direct(const PumpFrame& pf, const MikadoFamily& fam,
                             const IterationParams& prm, int q, int k_max_run);

// ---- assembly ----

struct NextFrame {
  double t = 0;
  VectorField v;      // vbar + w
  ScalarField p;      // pbar - sum_i rho_{q,i} + rho_q
  SymTensorField RE;  // Euler error
  SymTensorField RD;  // dissipative error
  SymTensorField R;   // RE + RD
  double dtw_mean = 0;  // |avg d_t w| removed before inverting
};

NextFrame assemble_next_frame(const GlueFrame& glued, const PumpFrame& pump,
                              const WFrame& wf, const IterationParams& prm,
                              int q);

// weak-form residual of (v, R) on frames [f0, f1] against a steady
// divergence-free test field phi and a smooth time window (integration by
// parts in time; Simpson quadrature; f1 - f0 must be even)
double weak_residual(const std::vector<double>& times,
                     const std::vector<VectorField>& v,
                     const std::vector<SymTensorField>& R,
                     const IterationParams& prm, const VectorField& phi,
                     std::size_t f0, std::size_t f1);

// ---- full-series convenience (test scale) ----

struct PerturbationSeries {
  std::vector<double> times;
  std::vector<PumpFrame> pump;
  std::vector<WFrame> w;
  std::vector<NextFrame> next;
  std::vector<Predicate> checks;  // worst-margin aggregation per id
};

PerturbationSeries perturb_series(const GluedState& glued,
                                  const std::function<double(double)>& e_of_t,
                                  const MikadoFamily& fam,
                                  const IterationParams& prm, int q,
                                  int k_max_run);

// ---- step ledger ----

struct StepLedger {
  std::vector<Predicate> entries;
  double contraction = 0;           // sup|R_{q+1}| / prev_R_sup
  std::uint64_t v_next_digest = 0;  // FNV-1a over v_{q+1}(.,0) values
};

std::uint64_t field_digest(const VectorField& v);

// v_q: the pre-gluing input frames (for the proximity bound); prev_R_sup:
// sup norm of the stress the step started from; M_const: the geometric
// constant of the flow family
StepLedger step_ledger(const std::vector<VectorField>& v_q, double prev_R_sup,
                       const PerturbationSeries& series,
                       const std::function<double(double)>& e_of_t,
                       const IterationParams& prm, int q, double M_const);

}  // namespace nsr
