#pragma once
// Orchestration: run configuration, scenario seeding (zero seed or a
// mollified steady Euler field), streaming convex-integration steps for
// q = 0..q_max, binary field snapshots used as checkpoints, run reports with
// the full inequality ledger, per-level CSV series, dissipation audits, and
// two-profile comparison runs.
//
// The level driver is a streaming re-implementation of perturb_series: each
// output frame is assembled, reduced to scalars (CSV row, ledger maxima,
// weak-residual quadrature contributions) and the heavy intermediates are
// released immediately, so a 64^3 step fits in a few GB.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/schedule.hpp"
#include "nsr/solver.hpp"

namespace nsr {

// ---- binary field snapshots (checkpoint format) ----
// Byte layout, little-endian throughout:
//   bytes 0..3   magic "NSRF"
//   u32          version (1)
//   u32          grid size n (cube side)
//   u32          rank: 1 scalar, 3 vector, 6 symmetric tensor
//   u32          reality flag (1: collocation values are real)
//   then rank * n^3 Fourier coefficients as (re, im) f64 pairs in
//   Grid::idx component-major order.
void save_snapshot(std::ostream& os, const ScalarField& f);
void save_snapshot(std::ostream& os, const VectorField& f);
void save_snapshot(std::ostream& os, const SymTensorField& f);
void save_snapshot(const std::string& path, const VectorField& f);

struct Snapshot {
  int rank = 0;  // 1 | 3 | 6
  ScalarField scalar;
  VectorField vector;
  SymTensorField tensor;
};
Snapshot load_snapshot(std::istream& is);  // throws on malformed input
Snapshot load_snapshot(const std::string& path);

// ---- configuration ----

struct RunConfig {
  IterationParams params;
  int grid_n = 64;
  SolverConfig solver;

  std::string scenario = "zero_seed";  // zero_seed | euler_seed
  std::string profile = "constant";    // constant | decreasing
  double profile_rate = 0;             // decreasing-profile decay rate; 0 = auto
  int q_max = 0;
  int dt_per_tau = 24;     // output frame spacing tau_q / dt_per_tau
  double horizon_tau = 1.5;  // output horizon in units of tau_q; kept
                             // inside the first eta plateau (< 5/3)
  int k_max_run = 3;       // clamped per level by the Nyquist guard
  double seed_amp = 0.25;  // ABC amplitude for euler_seed
  double ball_factor = 3.3;  // rho_q floor = ball_factor * sup|Rbar|
  double nu_override = -1;   // < 0: auto (mu for zero seed, nu_n for euler)

  // flow family of the run (wide pipes sized to the k-truncation)
  double family_sigma = 1.3;
  int family_k_max = 2;
  int family_rounds = 4000;

  int oracle_fields = 5;           // random test fields, weak residual
  std::uint64_t oracle_seed = 2024;
  std::string out_dir = "out";
};

// JSON config with optional sections params/grid/solver/run; unknown keys
// are rejected (throws with the key named)
RunConfig config_from_json(const std::string& text);
RunConfig parse_config(const std::string& path);
std::string config_digest_text(const RunConfig& cfg);  // canonical echo

// schedule + profile admissibility, evaluated before any solve
std::vector<Predicate> validate_config(const RunConfig& cfg);

// ---- reports ----

struct LevelReport {
  int q = 0;
  int frames = 0;
  double tau = 0, dt = 0, horizon = 0, nu = 0;
  int k_max_run = 0;  // after the Nyquist clamp
  double prev_R_sup = 0;   // sup_t |Rbar_q| the step started from
  double rho0 = 0;         // pumping at t = 0
  double w_sup = 0;
  double r_next_sup = 0;  // sup_t |R_{q+1}| (all frames, all scales)
  // sup of R_{q+1} restricted to wavenumbers below the perturbation
  // frequency n_{q+1} (the band the step cancels) and to the time window
  // [t0, t0 + 1.5 tau_{q+1}] that level q+1 consumes
  double r_next_low_sup = 0;
  double contraction = 0;  // r_next_low_sup / prev_R_sup
  double weak_residual_rel = 0;
  double worst_div = 0, worst_trace = 0;
  std::vector<Predicate> ledger;
  std::vector<double> kinetic;  // avg |v_{q+1}|^2 per frame (CSV column 2)
  std::uint64_t v0_digest = 0;  // FNV-1a of v_{q+1}(.,0)
  double wall_seconds = 0;      // excluded from the report digest
  bool from_checkpoint = false;
  std::string csv_path;
};

struct RunReport {
  std::vector<LevelReport> levels;
  bool hard_ok = true;          // no hard invariant failed
  std::uint64_t digest = 0;     // over deterministic content only
  std::string text;             // rendered report (written to report.txt)
};

// executes mollify -> glue -> pump -> perturb -> assemble for q = 0..q_max,
// checkpointing each level under out_dir/level_<q>/; levels with a valid
// checkpoint (matching config digest) are loaded instead of recomputed,
// giving a bit-identical continuation
RunReport run(const RunConfig& cfg);

// ---- dissipation audit ----

struct DissipationAudit {
  std::vector<double> t;
  std::vector<double> kinetic;  // avg |v|^2
  std::vector<double> e_tot;    // 0.5 avg|v|^2 + int_0^t nu avg|L^{g/2} v|^2
  double drift = 0;             // max |e_tot - e_tot(0)|
  double max_rise = 0;          // max over steps of e_tot increase
  bool monotone = false;        // e_tot non-increasing on the sample grid
  Predicate energy_inequality;  // worst pairwise Leray-Hopf margin
};

DissipationAudit dissipation_audit(const std::vector<double>& times,
                                   const std::vector<VectorField>& v,
                                   double nu, double gamma);

// audit of a completed run: loads the level-q output frames from
// out_dir/level_<q>/ snapshots; nu and gamma come from the level metadata
DissipationAudit audit_run_output(const std::string& out_dir, int q);

// ---- profile comparison ----

struct ProfileComparison {
  RunReport constant_run;   // out_dir/constant
  RunReport decreasing_run; // out_dir/decreasing
  bool same_initial_digest = false;  // v_{q+1}(.,0) digests equal
  double max_energy_gap = 0;  // max_t |avg|v|^2 difference| for t > 0
  std::string text;
};

// runs the base config twice (profile = constant / decreasing, equal e(0))
ProfileComparison compare_profiles(const RunConfig& base);

// ---- operator verification (CLI verb) ----

std::vector<Predicate> verify_operators(int grid_n);

}  // namespace nsr
