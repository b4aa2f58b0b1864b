#pragma once
// Temporal gluing: the {t_i, I_i, J_i} partition of [0,T], the smooth cutoff
// family chi_i, exact local solutions launched from v_ell(t_i), and the glued
// triple (vbar, pbar, Rbar) whose stress is supported in the union of the I_i.

#include <functional>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/schedule.hpp"
#include "nsr/solver.hpp"

namespace nsr {

struct TimeInterval {
  double lo = 0, hi = 0;
  bool contains(double t) const { return lo <= t && t <= hi; }
  double mid() const { return 0.5 * (lo + hi); }
  bool empty() const { return hi <= lo; }
};

// t_i = i tau; I_i = [t_{i+1} + tau/3, t_{i+1} + 2 tau/3] cap [0,T];
// J_0 = [0, t_1 + tau/3), J_i = (t_{i+1} - tau/3, t_{i+1} + tau/3) cap [0,T]
struct TimePartition {
  double tau = 0, T = 0;

  TimePartition(double tau_q, double horizon);
  double t(int i) const { return i * tau; }
  TimeInterval I(int i) const;  // empty() when fully outside [0,T]
  TimeInterval J(int i) const;
  int solves() const;      // number of local solutions v_i
  int intervals_I() const; // number of nonempty I_i

  struct Location {
    bool in_I = false;  // else in some J
    int idx = 0;
  };
  Location classify(double t) const;  // throws if t outside [0,T]
};

// smooth partition of unity subordinate to the time partition; chi_i rises
// across I_{i-1}, equals 1 on J_i, falls across I_i
struct ChiCutoffs {
  TimePartition part;
  int count = 0;
  double fitted_C = 0;  // max_i sup_t |d chi_i/dt| * tau

  double chi(int i, double t) const;
  double chi_dt(int i, double t) const;
};
ChiCutoffs build_chi(const TimePartition& part);

// one assembled output frame of the glued state
struct GlueFrame {
  VectorField v;
  ScalarField p;
  SymTensorField R;
  bool in_I = false;
  int interval = 0;  // I- or J-index of the containing interval
};

// assemble the glued fields at time t from the active local solutions,
// fetched by index through the two accessors
GlueFrame assemble_glued_frame(
    const ChiCutoffs& chi, double t,
    const std::function<const VectorField&(int)>& v_of,
    const std::function<const ScalarField&(int)>& p_of);

struct LocalSolve {
  int i = 0;
  double t0 = 0;
  std::size_t frame_offset = 0;  // global frame index of series.times.front()
  FnsSeries series;
};

struct GluedState {
  TimePartition part{1.0, 1.0};
  std::vector<double> times;
  std::vector<VectorField> v;
  std::vector<ScalarField> p;
  std::vector<SymTensorField> R;
  std::vector<LocalSolve> solves;
  Predicate cfl;  // 2 tau ||v_ell||_{1+alpha} <= ell^alpha, reported up front
};

// full-series convenience: v_ell frames uniformly spaced by dt spanning
// [0, (frames-1) dt]; dt must divide tau_q. Throws, naming i, if a local
// solve fails its window.
GluedState glue(const std::vector<VectorField>& v_ell, double dt,
                const IterationParams& prm, int q,
                const SolverConfig& solver_cfg = {});

struct GluingLedger {
  std::vector<Predicate> entries;  // ids ending in :constant carry fitted C
  double energy_diff_sup = 0;      // sup_t |avg|vbar|^2 - avg|v_ell|^2|
};
// discrete evaluation of the gluing estimates (report-only); v_ell frames
// must match glued.times
GluingLedger gluing_estimate_ledger(const GluedState& glued,
                                    const std::vector<VectorField>& v_ell,
                                    const IterationParams& prm, int q);

}  // namespace nsr
