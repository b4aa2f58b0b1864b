// nsr_lab: convex-integration laboratory driver.
//
//   nsr_lab run               [--config c.json] [--out dir] [--qmax n] [--grid n]
//   nsr_lab audit             [--config c.json] [--out dir] [--qmax n]
//   nsr_lab compare-profiles  [--config c.json] [--out dir] [--grid n]
//   nsr_lab verify-operators  [--grid n]
//
// Exit status is 0 unless a hard invariant fails (incompressibility or
// stress tracelessness on a run, the energy inequality on an audit, an
// operator identity on verification) or the configuration is unusable.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nsr/pipeline.hpp"

namespace {

int print_predicates(const std::vector<nsr::Predicate>& preds) {
  int failures = 0;
  for (const auto& p : preds) {
    std::cout << (p.holds ? "pass  " : "FAIL  ") << p.id << "  lhs = " << p.lhs
              << "  rhs = " << p.rhs << "\n";
    if (!p.holds) ++failures;
  }
  return failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-spectral convex-integration laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int qmax = -1, grid = 0;

  auto add_common = [&](CLI::App* sub, bool with_grid, bool with_qmax) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", out_dir, "output directory");
    if (with_qmax) sub->add_option("--qmax", qmax, "last iteration level q");
    if (with_grid) sub->add_option("--grid", grid, "grid size n (n^3 modes)");
  };

  CLI::App* c_run = app.add_subcommand("run", "execute iteration levels");
  add_common(c_run, true, true);
  CLI::App* c_audit =
      app.add_subcommand("audit", "energy-inequality audit of a finished run");
  add_common(c_audit, false, true);
  CLI::App* c_cmp = app.add_subcommand(
      "compare-profiles", "constant vs decreasing profile, shared e(0)");
  add_common(c_cmp, true, false);
  CLI::App* c_ops =
      app.add_subcommand("verify-operators", "spectral operator identities");
  c_ops->add_option("--grid", grid, "grid size n (n^3 modes)");

  CLI11_PARSE(app, argc, argv);

  try {
    nsr::RunConfig cfg;
    if (!config_path.empty()) cfg = nsr::parse_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (qmax >= 0) cfg.q_max = qmax;
    if (grid > 0) cfg.grid_n = grid;

    if (*c_run) {
      const nsr::RunReport rep = nsr::run(cfg);
      std::cout << rep.text;
      if (!rep.hard_ok) {
        std::cerr << "hard invariant failed; see " << cfg.out_dir
                  << "/report.txt\n";
        return 1;
      }
      return 0;
    }
    if (*c_audit) {
      int bad = 0;
      for (int q = 0; q <= cfg.q_max; ++q) {
        const nsr::DissipationAudit a =
            nsr::audit_run_output(cfg.out_dir, q);
        std::cout << "[level " << q << "] e_tot(0) = " << a.e_tot.front()
                  << "  drift = " << a.drift << "  max_rise = " << a.max_rise
                  << "  monotone = " << (a.monotone ? 1 : 0) << "\n";
        bad += print_predicates({a.energy_inequality});
      }
      return bad == 0 ? 0 : 1;
    }
    if (*c_cmp) {
      const nsr::ProfileComparison cmp = nsr::compare_profiles(cfg);
      std::cout << cmp.text;
      return cmp.same_initial_digest ? 0 : 1;
    }
    // verify-operators
    const int n = grid > 0 ? grid : 32;
    return print_predicates(nsr::verify_operators(n)) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
