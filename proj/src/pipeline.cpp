#include "nsr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "nsr/gluing.hpp"
#include "nsr/holder.hpp"
#include "nsr/mikado.hpp"
#include "nsr/mollify.hpp"
#include "nsr/operators.hpp"
#include "nsr/perturbation.hpp"

namespace nsr {

namespace fs = std::filesystem;
using njson = nlohmann::json;

namespace {

Predicate ineq(const std::string& id, double lhs, double rhs) {
  return {id, lhs, rhs, lhs <= rhs, rhs - lhs};
}

void merge_worst(std::map<std::string, Predicate>& acc, const Predicate& p) {
  auto it = acc.find(p.id);
  if (it == acc.end() || p.margin < it->second.margin) acc[p.id] = p;
}

std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t h = 1469598103934665603ull) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// deterministic xorshift for the residual-oracle test fields
struct OracleRng {
  std::uint64_t s;
  explicit OracleRng(std::uint64_t seed) : s(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  double uniform() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return double(s >> 11) * 0x1.0p-53;
  }
  double sym() { return 2.0 * uniform() - 1.0; }
};

VectorField random_divfree(const Grid& g, OracleRng& rng, int kmax,
                           double amp) {
  VectorField v = VectorField::zero(g);
  for (int c = 0; c < 3; ++c) {
    std::vector<cplx> m(g.size());
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        for (int k = 0; k < g.n; ++k) {
          const int kx = g.kof(i), ky = g.kof(j), kz = g.kof(k);
          if (std::abs(kx) > kmax || std::abs(ky) > kmax ||
              std::abs(kz) > kmax)
            continue;
          if (kx == 0 && ky == 0 && kz == 0) continue;
          m[g.idx(i, j, k)] = amp * cplx(rng.sym(), rng.sym());
        }
    v.c[c] = ScalarField::from_modes(g, std::move(m));
  }
  return leray_project(v);
}

// smooth window for the weak-form residual (same shape as the test oracle)
double wstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double r = std::exp(1.0 / u - 1.0 / (1.0 - u));
  return 1.0 / (1.0 + r);
}
double wstep_d(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double r = std::exp(1.0 / u - 1.0 / (1.0 - u));
  const double s = 1.0 / (1.0 + r), sc = r / (1.0 + r);
  return s * sc * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u)));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("snapshot: truncated header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (bits >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("snapshot: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

void write_header(std::ostream& os, int n, int rank) {
  os.write("NSRF", 4);
  put_u32(os, 1);  // version
  put_u32(os, std::uint32_t(n));
  put_u32(os, std::uint32_t(rank));
  put_u32(os, 1);  // reality flag
}

void write_component(std::ostream& os, const ScalarField& f) {
  for (const cplx& c : f.modes()) {
    put_f64(os, c.real());
    put_f64(os, c.imag());
  }
}

ScalarField read_component(std::istream& is, const Grid& g) {
  std::vector<cplx> m(g.size());
  for (auto& c : m) {
    const double re = get_f64(is);
    const double im = get_f64(is);
    c = cplx(re, im);
  }
  // no reality re-symmetrization: the stored modes are taken verbatim so a
  // load reproduces the saved field (and its collocation values) bit-exactly
  return ScalarField::from_modes(g, std::move(m), false);
}

}  // namespace

// ---- snapshots ----

void save_snapshot(std::ostream& os, const ScalarField& f) {
  write_header(os, f.grid().n, 1);
  write_component(os, f);
}

void save_snapshot(std::ostream& os, const VectorField& f) {
  write_header(os, f.grid().n, 3);
  for (int c = 0; c < 3; ++c) write_component(os, f.c[c]);
}

void save_snapshot(std::ostream& os, const SymTensorField& f) {
  write_header(os, f.grid().n, 6);
  for (int c = 0; c < 6; ++c) write_component(os, f.c[c]);
}

void save_snapshot(const std::string& path, const VectorField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open " + path);
  save_snapshot(os, f);
  if (!os) throw std::runtime_error("snapshot: write failed on " + path);
}

Snapshot load_snapshot(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NSRF", 4) != 0)
    throw std::runtime_error("snapshot: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("snapshot: unknown version");
  const int n = int(get_u32(is));
  const int rank = int(get_u32(is));
  get_u32(is);  // reality flag (informational)
  if (n < 2 || (rank != 1 && rank != 3 && rank != 6))
    throw std::runtime_error("snapshot: malformed header");
  const Grid g{n};
  Snapshot out;
  out.rank = rank;
  if (rank == 1) {
    out.scalar = read_component(is, g);
  } else if (rank == 3) {
    for (int c = 0; c < 3; ++c) out.vector.c[c] = read_component(is, g);
  } else {
    for (int c = 0; c < 6; ++c) out.tensor.c[c] = read_component(is, g);
  }
  return out;
}

Snapshot load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open " + path);
  return load_snapshot(is);
}

// ---- configuration ----

namespace {

void read_keys(const njson& j, const std::string& section,
               const std::map<std::string, std::function<void(const njson&)>>&
                   setters) {
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config: unknown key \"" + key +
                                  "\" in section [" + section + "]");
    it->second(value);
  }
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  njson j = njson::parse(text);
  RunConfig c;
  for (const auto& [sec, body] : j.items()) {
    if (sec == "params") {
      IterationParams& p = c.params;
      read_keys(body, sec,
                {{"a", [&](const njson& v) { p.a = v; }},
                 {"b", [&](const njson& v) { p.b = v; }},
                 {"beta", [&](const njson& v) { p.beta = v; }},
                 {"alpha", [&](const njson& v) { p.alpha = v; }},
                 {"gamma", [&](const njson& v) { p.gamma = v; }},
                 {"beta_prime", [&](const njson& v) { p.beta_prime = v; }},
                 {"local_exist_c",
                  [&](const njson& v) { p.local_exist_c = v; }}});
    } else if (sec == "grid") {
      read_keys(body, sec, {{"n", [&](const njson& v) { c.grid_n = v; }}});
    } else if (sec == "solver") {
      SolverConfig& s = c.solver;
      read_keys(body, sec,
                {{"cfl", [&](const njson& v) { s.cfl = v; }},
                 {"blowup_factor",
                  [&](const njson& v) { s.blowup_factor = v; }},
                 {"enforce_horizon",
                  [&](const njson& v) { s.enforce_horizon = v; }}});
    } else if (sec == "run") {
      read_keys(
          body, sec,
          {{"scenario", [&](const njson& v) { c.scenario = v; }},
           {"profile", [&](const njson& v) { c.profile = v; }},
           {"profile_rate", [&](const njson& v) { c.profile_rate = v; }},
           {"q_max", [&](const njson& v) { c.q_max = v; }},
           {"dt_per_tau", [&](const njson& v) { c.dt_per_tau = v; }},
           {"horizon_tau", [&](const njson& v) { c.horizon_tau = v; }},
           {"k_max_run", [&](const njson& v) { c.k_max_run = v; }},
           {"seed_amp", [&](const njson& v) { c.seed_amp = v; }},
           {"ball_factor", [&](const njson& v) { c.ball_factor = v; }},
           {"nu_override", [&](const njson& v) { c.nu_override = v; }},
           {"family_sigma", [&](const njson& v) { c.family_sigma = v; }},
           {"family_k_max", [&](const njson& v) { c.family_k_max = v; }},
           {"family_rounds", [&](const njson& v) { c.family_rounds = v; }},
           {"oracle_fields", [&](const njson& v) { c.oracle_fields = v; }},
           {"oracle_seed", [&](const njson& v) { c.oracle_seed = v; }},
           {"out_dir", [&](const njson& v) { c.out_dir = v; }}});
    } else {
      throw std::invalid_argument("config: unknown section \"" + sec + "\"");
    }
  }
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return config_from_json(os.str());
}

std::string config_digest_text(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "a=" << c.params.a << " b=" << c.params.b
     << " beta=" << c.params.beta << " alpha=" << c.params.alpha
     << " gamma=" << c.params.gamma << " beta_prime=" << c.params.beta_prime
     << " local_exist_c=" << c.params.local_exist_c << "\n";
  os << "grid_n=" << c.grid_n << " cfl=" << c.solver.cfl
     << " blowup_factor=" << c.solver.blowup_factor
     << " enforce_horizon=" << c.solver.enforce_horizon << "\n";
  os << "scenario=" << c.scenario << " profile=" << c.profile
     << " profile_rate=" << c.profile_rate << " q_max=" << c.q_max
     << " dt_per_tau=" << c.dt_per_tau << " horizon_tau=" << c.horizon_tau
     << " k_max_run=" << c.k_max_run << " seed_amp=" << c.seed_amp
     << " ball_factor=" << c.ball_factor
     << " nu_override=" << c.nu_override << "\n";
  os << "family_sigma=" << c.family_sigma
     << " family_k_max=" << c.family_k_max
     << " family_rounds=" << c.family_rounds
     << " oracle_fields=" << c.oracle_fields
     << " oracle_seed=" << c.oracle_seed << "\n";
  return os.str();
}

std::vector<Predicate> validate_config(const RunConfig& cfg) {
  if (cfg.scenario != "zero_seed" && cfg.scenario != "euler_seed")
    throw std::invalid_argument("config: scenario must be zero_seed or "
                                "euler_seed, got \"" + cfg.scenario + "\"");
  if (cfg.profile != "constant" && cfg.profile != "decreasing")
    throw std::invalid_argument("config: profile must be constant or "
                                "decreasing, got \"" + cfg.profile + "\"");
  if (cfg.grid_n < 8) throw std::invalid_argument("config: grid n < 8");
  if (cfg.q_max < 0) throw std::invalid_argument("config: q_max < 0");
  if (cfg.dt_per_tau < 8)
    throw std::invalid_argument("config: dt_per_tau < 8 cannot resolve the "
                                "cutoff time scales");
  if (!(cfg.horizon_tau > 0))
    throw std::invalid_argument("config: horizon_tau must be positive");

  std::vector<Predicate> out = check_params(cfg.params);
  // the output window must stay inside the first eta plateau: the next
  // handover begins at t_2 - tau/9 = (2 - 1/9) tau and the stress-carrying
  // envelope derivatives at t_2 - tau/3; see the report ledger
  out.push_back(ineq("pipeline:plateau_horizon", cfg.horizon_tau,
                     2.0 - 1.0 / 3.0));
  for (int q = 0; q <= cfg.q_max + 1; ++q) {
    const LevelValues lv = level_values(cfg.params, q);
    for (const Predicate& p : lv.predicates) out.push_back(p);
  }
  return out;
}

// ---- level driver ----

namespace {

struct ProfileSpec {
  std::function<double(double)> base;    // configured profile
  std::function<double(double)> base_d;  // its analytic time derivative
  double rate = 0;                       // decay rate actually used (report)
};

// cubic Lagrange resampling of uniformly spaced frames
VectorField resample(const std::vector<VectorField>& v, double dt, double s) {
  const int nf = int(v.size());
  const double x = s / dt;
  int a = int(std::floor(x)) - 1;
  if (a < 0) a = 0;
  if (a > nf - 4) a = nf - 4;
  if (nf < 4) throw std::invalid_argument("resample: need 4 frames");
  double w[4];
  for (int i = 0; i < 4; ++i) {
    w[i] = 1.0;
    for (int j = 0; j < 4; ++j)
      if (j != i) w[i] *= (x - (a + j)) / double(i - j);
  }
  VectorField out = w[0] * v[a];
  for (int i = 1; i < 4; ++i) out += w[i] * v[a + i];
  return out;
}

struct LevelResult {
  LevelReport rep;
  std::vector<double> times;
  std::vector<VectorField> v_next;
};

std::string level_dir(const RunConfig& cfg, int q) {
  return cfg.out_dir + "/level_" + std::to_string(q);
}

void write_level_meta(const RunConfig& cfg, const LevelReport& r,
                      const std::vector<double>& times, double gamma) {
  njson m;
  m["config_digest"] = fnv1a(config_digest_text(cfg));
  m["q"] = r.q;
  m["frames"] = r.frames;
  m["tau"] = r.tau;
  m["dt"] = r.dt;
  m["horizon"] = r.horizon;
  m["nu"] = r.nu;
  m["gamma"] = gamma;
  m["k_max_run"] = r.k_max_run;
  m["prev_R_sup"] = r.prev_R_sup;
  m["rho0"] = r.rho0;
  m["w_sup"] = r.w_sup;
  m["r_next_sup"] = r.r_next_sup;
  m["r_next_low_sup"] = r.r_next_low_sup;
  m["contraction"] = r.contraction;
  m["weak_residual_rel"] = r.weak_residual_rel;
  m["worst_div"] = r.worst_div;
  m["worst_trace"] = r.worst_trace;
  m["v0_digest"] = r.v0_digest;
  m["times"] = times;
  m["kinetic"] = r.kinetic;
  njson led = njson::array();
  for (const Predicate& p : r.ledger)
    led.push_back({{"id", p.id},
                   {"lhs", p.lhs},
                   {"rhs", p.rhs},
                   {"holds", p.holds},
                   {"margin", p.margin}});
  m["ledger"] = led;
  m["done"] = true;
  std::ofstream os(level_dir(cfg, r.q) + "/meta.json");
  os << m.dump(2) << "\n";
}

bool load_level_checkpoint(const RunConfig& cfg, int q, bool need_frames,
                           LevelResult& out) {
  const std::string dir = level_dir(cfg, q);
  std::ifstream is(dir + "/meta.json");
  if (!is) return false;
  njson m;
  try {
    is >> m;
  } catch (...) {
    return false;
  }
  if (!m.value("done", false)) return false;
  if (m.value("config_digest", std::uint64_t(0)) !=
      fnv1a(config_digest_text(cfg)))
    return false;
  LevelReport& r = out.rep;
  r.q = m["q"];
  r.frames = m["frames"];
  r.tau = m["tau"];
  r.dt = m["dt"];
  r.horizon = m["horizon"];
  r.nu = m["nu"];
  r.k_max_run = m["k_max_run"];
  r.prev_R_sup = m["prev_R_sup"];
  r.rho0 = m["rho0"];
  r.w_sup = m["w_sup"];
  r.r_next_sup = m["r_next_sup"];
  r.r_next_low_sup = m["r_next_low_sup"];
  r.contraction = m["contraction"];
  r.weak_residual_rel = m["weak_residual_rel"];
  r.worst_div = m["worst_div"];
  r.worst_trace = m["worst_trace"];
  r.v0_digest = m["v0_digest"];
  out.times = m["times"].get<std::vector<double>>();
  r.kinetic = m["kinetic"].get<std::vector<double>>();
  for (const auto& e : m["ledger"])
    r.ledger.push_back({e["id"].get<std::string>(), e["lhs"].get<double>(),
                        e["rhs"].get<double>(), e["holds"].get<bool>(),
                        e["margin"].get<double>()});
  r.from_checkpoint = true;
  r.csv_path = cfg.out_dir + "/level_" + std::to_string(q) + ".csv";
  out.v_next.clear();
  if (!need_frames) return true;
  for (int f = 0; f < r.frames; ++f) {
    std::ostringstream name;
    name << dir << "/v_" << std::setfill('0') << std::setw(4) << f << ".nsrf";
    Snapshot s = load_snapshot(name.str());
    if (s.rank != 3)
      throw std::runtime_error("checkpoint: " + name.str() +
                               " is not a velocity snapshot");
    out.v_next.push_back(std::move(s.vector));
  }
  return true;
}

// v_in: either nf frames or, when steady_in, a single frame used for all
// times; keep_frames controls whether the assembled v_{q+1} frames are
// retained in memory (they are always written as snapshots)
LevelResult run_level(const RunConfig& cfg, const IterationParams& prm, int q,
                      const std::vector<VectorField>& v_in, int nf,
                      bool steady_in, bool keep_frames,
                      const MikadoFamily& fam, const ProfileSpec& prof) {
  const auto t_start = std::chrono::steady_clock::now();
  LevelResult out;
  LevelReport& rep = out.rep;
  rep.q = q;

  const LevelValues lv = level_values(prm, q);
  const LevelValues lv1 = level_values(prm, q + 1);
  const Grid g = v_in.front().grid();
  const double dt = lv.tau_q / cfg.dt_per_tau;
  rep.frames = nf;
  rep.tau = lv.tau_q;
  rep.dt = dt;
  rep.horizon = (nf - 1) * dt;
  rep.nu = prm.nu;

  // Nyquist clamp of the k-truncation
  int k_eff = cfg.k_max_run;
  while (k_eff > 1 && double(lv1.n_q) * k_eff > g.kcut()) --k_eff;
  if (double(lv1.n_q) * k_eff > g.kcut()) {
    std::ostringstream os;
    os << "pipeline: level " << q << " oscillation frequency n_{q+1} = "
       << lv1.n_q << " does not fit the grid (kcut " << g.kcut()
       << "); increase the grid or reduce q_max";
    throw std::invalid_argument(os.str());
  }
  rep.k_max_run = k_eff;

  std::map<std::string, Predicate> checks;
  if (k_eff < cfg.k_max_run)
    merge_worst(checks, ineq("pipeline:nyquist_clamp",
                             double(cfg.k_max_run), double(k_eff)));

  // mollify -> glue
  std::vector<VectorField> v_ell;
  v_ell.reserve(nf);
  if (steady_in) {
    const VectorField m0 = mollify(v_in.front(), lv.ell).field;
    for (int f = 0; f < nf; ++f) v_ell.push_back(m0);
  } else {
    for (int f = 0; f < nf; ++f)
      v_ell.push_back(mollify(v_in[std::size_t(f)], lv.ell).field);
  }
  GluedState st = glue(v_ell, dt, prm, q, cfg.solver);
  v_ell.clear();
  v_ell.shrink_to_fit();
  merge_worst(checks, st.cfl);

  // the local solves stay alive for the exact time derivatives, but their
  // pressure series is only consumed inside glue itself
  for (LocalSolve& ls : st.solves) {
    ls.series.p.clear();
    ls.series.p.shrink_to_fit();
  }

  double worst_R = 0;
  for (const auto& R : st.R) worst_R = std::max(worst_R, R.sup_norm());
  rep.prev_R_sup = worst_R;

  // energy profile actually used: configured base plus a constant pad that
  // keeps the pumping positive and the conjugated stress inside the
  // half-ball (rho_q >= ball_factor * sup|Rbar|)
  double pad = 0;
  {
    const double rho_floor =
        std::max(cfg.ball_factor * worst_R, 1e-3 * lv.delta_q1);
    for (int f = 0; f < nf; ++f) {
      const double ke = st.v[std::size_t(f)].l2();
      const double floor_f = ke * ke + 0.5 * lv.delta_q2 + 3.0 * rho_floor;
      pad = std::max(pad, floor_f - prof.base(st.times[std::size_t(f)]));
    }
    pad = std::max(pad, 0.0);
  }
  auto e_of_t = [&prof, pad](double t) { return prof.base(t) + pad; };
  merge_worst(checks, ineq("pipeline:profile_pad", pad, 0.0));

  const EtaCutoffs eta = build_eta(st.part);
  const long S = std::llround(st.part.tau / dt);

  // which cutoffs ever become active inside the window
  std::vector<char> needed(std::size_t(eta.count), 0);
  for (int f = 0; f < nf; ++f)
    for (int i : eta.active(st.times[std::size_t(f)]))
      needed[std::size_t(i)] = 1;

  std::map<int, FlowMapIntegrator> maps;

  // residual-oracle test fields and the smooth time window
  OracleRng rng(cfg.oracle_seed);
  std::vector<VectorField> phis_test;
  for (int c = 0; c < cfg.oracle_fields; ++c)
    phis_test.push_back(random_divfree(g, rng, 2, 1.0));
  int f0 = nf / 8, f1 = nf - 1 - nf / 8;
  if ((f1 - f0) % 2 != 0) ++f0;
  const double tw0 = st.times[std::size_t(f0)], tw1 = st.times[std::size_t(f1)];
  const double W = 0.3;
  auto psi = [&](double t) {
    const double u = (t - tw0) / (tw1 - tw0);
    return wstep(u / W) * wstep((1.0 - u) / W);
  };
  auto psi_d = [&](double t) {
    const double u = (t - tw0) / (tw1 - tw0);
    return (wstep_d(u / W) / W * wstep((1.0 - u) / W) -
            wstep(u / W) * wstep_d((1.0 - u) / W) / W) /
           (tw1 - tw0);
  };
  std::vector<double> acc(phis_test.size(), 0.0);
  std::vector<double> phi_sup;
  for (const auto& p : phis_test) phi_sup.push_back(p.sup_norm());

  // CSV
  rep.csv_path = cfg.out_dir + "/level_" + std::to_string(q) + ".csv";
  std::ofstream csv(rep.csv_path);
  csv << "t,kinetic_energy,target_e,dissipation_integral,e_tot,R_norm_0,"
         "v_norm_1\n";
  csv << std::setprecision(12);

  fs::create_directories(level_dir(cfg, q));

  double div_w_sup = 0, v_diff = 0, energy_err = 0, vmax = 0;
  double dint = 0, prev_diss = 0;

  auto v_mid = [&](int f) {
    if (f == 0)
      return (1.0 / 16.0) * (5.0 * st.v[0] + 15.0 * st.v[1] -
                             5.0 * st.v[2] + st.v[3]);
    if (f + 2 >= nf)
      return (1.0 / 16.0) *
             (st.v[std::size_t(nf - 4)] - 5.0 * st.v[std::size_t(nf - 3)] +
              15.0 * st.v[std::size_t(nf - 2)] +
              5.0 * st.v[std::size_t(nf - 1)]);
    return (1.0 / 16.0) *
           (-1.0 * st.v[std::size_t(f - 1)] + 9.0 * st.v[std::size_t(f)] +
            9.0 * st.v[std::size_t(f + 1)] - 1.0 * st.v[std::size_t(f + 2)]);
  };

  for (int f = 0; f < nf; ++f) {
    const double t = st.times[std::size_t(f)];
    // spawn flow maps at their anchors
    for (int i = 0; i < eta.count; ++i)
      if (needed[std::size_t(i)] && long(f) == long(i) * S)
        maps.emplace(i, FlowMapIntegrator(g, t, dt / 2));

    PhiAccess phis;
    for (int i : eta.active(t)) {
      auto it = maps.find(i);
      if (it == maps.end()) {
        std::ostringstream os;
        os << "pipeline: flow map for cutoff i = " << i
           << " missing at frame " << f;
        throw std::logic_error(os.str());
      }
      phis.push_back({i, &it->second.phi_minus_id()});
    }

    const double de = prof.base_d(t);
    const GlueDerivs der = glued_time_derivatives(st, std::size_t(f), prm);
    PumpFrame pf = pump_frame(st.v[std::size_t(f)], st.R[std::size_t(f)], der,
                              t, e_of_t(t), de, prm, q, eta, phis);
    WFrame wf = perturbation_frame(pf, fam, prm, q, k_eff);
    GlueFrame gf{st.v[std::size_t(f)], st.p[std::size_t(f)],
                 st.R[std::size_t(f)], false, 0};
    NextFrame nx = assemble_next_frame(gf, pf, wf, prm, q);

    if (f == 0) {
      rep.rho0 = pf.rho_q;
      rep.v0_digest = field_digest(nx.v);
    }
    for (const Predicate& p : pf.checks) merge_worst(checks, p);
    div_w_sup = std::max(div_w_sup, divergence(wf.w).sup_norm());
    rep.w_sup = std::max(rep.w_sup, wf.w.sup_norm());
    rep.worst_div = std::max(rep.worst_div, divergence(nx.v).sup_norm());
    rep.worst_trace = std::max(rep.worst_trace, nx.R.trace().sup_norm());
    rep.r_next_sup = std::max(rep.r_next_sup, nx.R.sup_norm());
    // stress handed to the next level: modes below the perturbation
    // frequency n_{q+1}, inside the sub-horizon 1.5 tau_{q+1} that level
    // q+1 consumes (half a frame of slack against rounding)
    if (t - st.times[0] <= 1.5 * lv1.tau_q + 0.5 * dt) {
      const double kcut2 = double(lv1.n_q) * double(lv1.n_q) - 0.5;
      SymTensorField low = nx.R;
      for (int c = 0; c < 6; ++c)
        low.c[c] = nx.R.c[c].apply_real_symbol(
            [&](double kx, double ky, double kz) {
              return (kx * kx + ky * ky + kz * kz < kcut2) ? 1.0 : 0.0;
            });
      rep.r_next_low_sup = std::max(rep.r_next_low_sup, low.sup_norm());
    }
    v_diff = std::max(
        v_diff, (nx.v - v_in[std::size_t(steady_in ? 0 : f)]).sup_norm());
    vmax = std::max(vmax, nx.v.sup_norm());

    const double ke = nx.v.l2();
    rep.kinetic.push_back(ke * ke);
    energy_err = std::max(
        energy_err, std::abs(e_of_t(t) - ke * ke - 0.5 * lv.delta_q2));

    // weak-form residual accumulation (Simpson on [f0, f1])
    if (f >= f0 && f <= f1) {
      const VectorField spatial =
          divergence(outer_sym(nx.v, nx.v)) +
          prm.nu * fractional_laplacian(nx.v, prm.gamma) -
          divergence(nx.R);
      const double wgt =
          (f == f0 || f == f1) ? 1.0 : ((f - f0) % 2 == 1 ? 4.0 : 2.0);
      for (std::size_t c = 0; c < phis_test.size(); ++c)
        acc[c] += wgt * (-dot(nx.v, phis_test[c]).mean() * psi_d(t) +
                         dot(spatial, phis_test[c]).mean() * psi(t));
    }

    // CSV row
    const double lam = fractional_laplacian(nx.v, prm.gamma / 2).l2();
    const double diss = prm.nu * lam * lam;
    if (f > 0) dint += 0.5 * (prev_diss + diss) * dt;
    prev_diss = diss;
    const double etot = 0.5 * ke * ke + dint;
    csv << t << ',' << ke * ke << ',' << e_of_t(t) << ',' << dint << ','
        << etot << ',' << nx.R.sup_norm() << ','
        << holder_norm(nx.v, 1.0) << "\n";

    // checkpoint snapshot and output frame
    {
      std::ostringstream name;
      name << level_dir(cfg, q) << "/v_" << std::setfill('0') << std::setw(4)
           << f << ".nsrf";
      save_snapshot(name.str(), nx.v);
    }
    out.times.push_back(t);
    if (keep_frames) out.v_next.push_back(std::move(nx.v));

    // advance the flow maps to frame f+1
    if (f + 1 < nf) {
      const VectorField vm = v_mid(f);
      for (auto& [i, fmi] : maps) {
        if (long(f) < long(i) * S) continue;
        if (st.times[std::size_t(f)] >= eta.support_end(i)) continue;
        fmi.step(st.v[std::size_t(f)], vm, st.v[std::size_t(f + 1)]);
      }
    }

    // release consumed heavy frames
    st.R[std::size_t(f)] = SymTensorField();
    st.p[std::size_t(f)] = ScalarField();
    // keep two v frames behind: the one-sided v_mid stencil at the tail
    // reaches back to f - 2
    if (f >= 2) st.v[std::size_t(f - 2)] = VectorField();
  }

  // ledger
  const double sd1 = std::sqrt(lv.delta_q1);
  merge_worst(checks, ineq("perturb:div_w", div_w_sup, 1e-10));
  merge_worst(checks, ineq("perturb:c0", 0.1, eta.c0));
  merge_worst(checks, ineq("e:v_diff_prop_est", v_diff, prm.M * sd1));
  merge_worst(checks, ineq("e:w_est", rep.w_sup, 0.5 * prm.M * sd1));
  merge_worst(checks,
              ineq("p:energy:constant",
                   energy_err / (std::sqrt(lv.delta_q) * sd1 *
                                 std::pow(lv.lambda_q, 1.0 + 2.0 * prm.alpha) /
                                 lv1.lambda_q),
                   10.0));
  merge_worst(checks,
              ineq("p:R_q+1:constant",
                   rep.r_next_sup /
                       (sd1 * std::sqrt(lv.delta_q) * lv.lambda_q /
                        std::pow(lv1.lambda_q, 1.0 - 4.0 * prm.alpha)),
                   10.0));
  rep.contraction = worst_R > 0 ? rep.r_next_low_sup / worst_R : 0.0;
  merge_worst(checks,
              ineq("perturb:contraction", rep.r_next_low_sup, worst_R));

  rep.weak_residual_rel = 0;
  for (std::size_t c = 0; c < acc.size(); ++c)
    rep.weak_residual_rel =
        std::max(rep.weak_residual_rel,
                 std::abs(acc[c] * dt / 3.0) /
                     ((1.0 + vmax * vmax) * (phi_sup[c] + 1e-12)));
  merge_worst(checks,
              ineq("pipeline:weak_residual", rep.weak_residual_rel, 1e-4));
  merge_worst(checks,
              ineq("pipeline:div_v", rep.worst_div, 1e-10 * (1.0 + vmax)));
  merge_worst(checks, ineq("pipeline:trace_R", rep.worst_trace, 1e-8));

  for (const auto& kv : checks) rep.ledger.push_back(kv.second);

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  write_level_meta(cfg, rep, out.times, prm.gamma);
  return out;
}

void render_level(std::ostream& os, const LevelReport& r) {
  os << std::setprecision(12);
  os << "[level " << r.q << "]\n";
  os << "  frames = " << r.frames << ", tau = " << r.tau << ", dt = " << r.dt
     << ", horizon = " << r.horizon << "\n";
  os << "  nu = " << r.nu << ", k_max_run = " << r.k_max_run << "\n";
  os << "  prev_R_sup = " << r.prev_R_sup << ", rho0 = " << r.rho0
     << ", w_sup = " << r.w_sup << "\n";
  os << "  r_next_sup = " << r.r_next_sup
     << ", r_next_low_sup = " << r.r_next_low_sup
     << ", contraction = " << r.contraction << "\n";
  os << "  weak_residual_rel = " << r.weak_residual_rel << "\n";
  os << "  worst_div = " << r.worst_div
     << ", worst_trace = " << r.worst_trace << "\n";
  os << "  v0_digest = " << std::hex << r.v0_digest << std::dec << "\n";
  os << "  csv = " << r.csv_path << "\n";
  os << "  ledger:\n";
  for (const Predicate& p : r.ledger)
    os << "    " << p.id << ": lhs = " << p.lhs << ", rhs = " << p.rhs
       << ", holds = " << (p.holds ? 1 : 0) << ", margin = " << p.margin
       << "\n";
}

}  // namespace

RunReport run(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const std::vector<Predicate> cfg_checks = validate_config(cfg);

  IterationParams prm = cfg.params;
  const LevelValues lv0 = level_values(prm, 0);
  const Grid g{cfg.grid_n};

  // scenario seed + viscosity
  VectorField seed_v;
  double base_e0 = lv0.delta_q1;
  double nu_auto = std::sqrt(lv0.delta_q1);  // mu of the normalized system
  double seed_ke2 = 0;
  if (cfg.scenario == "zero_seed") {
    seed_v = VectorField::zero(g);
  } else {
    const double A = cfg.seed_amp;
    VectorField abc;
    abc.c[0] = ScalarField::sample(
        g, [&](double, double y, double z) {
          return A * (std::sin(z) + std::cos(y));
        });
    abc.c[1] = ScalarField::sample(
        g, [&](double x, double, double z) {
          return A * (std::sin(x) + std::cos(z));
        });
    abc.c[2] = ScalarField::sample(
        g, [&](double x, double y, double) {
          return A * (std::sin(y) + std::cos(x));
        });
    std::vector<VectorField> series{abc, abc, abc};
    SeedTriple seed =
        seed_from_euler_field(series, lv0.tau_q / cfg.dt_per_tau, prm, 0);
    seed_v = std::move(seed.v);
    nu_auto = seed.nu_n;
    seed_ke2 = seed_v.l2() * seed_v.l2();
    base_e0 = seed.e.empty() ? lv0.delta_q1 : seed.e(seed.e.t0());
  }
  prm.nu = cfg.nu_override >= 0 ? cfg.nu_override : nu_auto;

  // flow family + the geometric constant M
  MikadoConfig mc;
  mc.sigma = cfg.family_sigma;
  mc.k_max = cfg.family_k_max;
  mc.placement_rounds = cfg.family_rounds;
  const MikadoFamily fam = MikadoFamily::build(mc);
  const auto MR = fam.compute_M(fam.fit_Mbar(sample_half_ball(40, 11)));
  prm.M = MR.M;

  // configured profile (normalized units)
  ProfileSpec prof;
  if (cfg.profile == "constant") {
    prof.base = [base_e0](double) { return base_e0; };
    prof.base_d = [](double) { return 0.0; };
  } else {
    double rate = cfg.profile_rate;
    if (rate <= 0) {
      // auto: beat the dissipation of the oscillatory field with margin,
      //   d/dt e_tot ~ 1/2 e' + nu <|L^{g/2} w|^2> < 0
      double wk2 = 0, wsum = 0;
      for (const auto& ak : fam.fourier_a(SymMat::identity())) {
        const double a2 = std::norm(ak.a[0]) + std::norm(ak.a[1]) +
                          std::norm(ak.a[2]);
        const double k2 = double(ak.k[0]) * ak.k[0] +
                          double(ak.k[1]) * ak.k[1] +
                          double(ak.k[2]) * ak.k[2];
        wk2 += a2 * k2;
        wsum += a2;
      }
      const double k_rms = wsum > 0 ? std::sqrt(wk2 / wsum) : 1.0;
      const LevelValues lvn = level_values(prm, 1);
      rate = 2.6 * prm.nu * std::pow(double(lvn.n_q) * k_rms, 2.0 * prm.gamma);
    }
    prof.rate = rate;
    const double floor_e = 0.5 * lv0.delta_q2 + seed_ke2;
    const double amp = base_e0 - floor_e;
    prof.base = [floor_e, amp, rate](double t) {
      return floor_e + amp * std::exp(-rate * t);
    };
    prof.base_d = [amp, rate](double t) {
      return -rate * amp * std::exp(-rate * t);
    };
  }

  RunReport report;
  std::vector<VectorField> v_frames;
  std::vector<double> frame_times;
  bool steady = true;
  for (int q = 0; q <= cfg.q_max; ++q) {
    const LevelValues lv = level_values(prm, q);
    const double dt = lv.tau_q / cfg.dt_per_tau;
    const int nf = int(std::lround(cfg.horizon_tau * cfg.dt_per_tau)) + 1;
    const double T = (nf - 1) * dt;

    std::vector<VectorField> v_in;
    if (q == 0) {
      v_in.push_back(seed_v);
      steady = true;
    } else {
      if (T > frame_times.back() + 1e-12)
        throw std::logic_error(
            "pipeline: level horizon exceeds the previous level's output "
            "window (tau ladder not decreasing?)");
      const double prev_dt = frame_times[1] - frame_times[0];
      for (int f = 0; f < nf; ++f)
        v_in.push_back(resample(v_frames, prev_dt, f * dt));
      steady = false;
    }

    const bool keep_frames = q < cfg.q_max;
    LevelResult res;
    if (!load_level_checkpoint(cfg, q, keep_frames, res)) {
      res = run_level(cfg, prm, q, v_in, nf, steady, keep_frames, fam, prof);
    }
    if (q == 0)
      for (const Predicate& p : cfg_checks) res.rep.ledger.push_back(p);
    v_frames = std::move(res.v_next);
    frame_times = res.times;
    report.levels.push_back(std::move(res.rep));
  }

  // hard invariants: incompressibility and tracelessness of every frame
  for (const LevelReport& r : report.levels)
    for (const Predicate& p : r.ledger)
      if ((p.id == "pipeline:div_v" || p.id == "pipeline:trace_R") && !p.holds)
        report.hard_ok = false;

  // deterministic report body, digest, then the full text
  std::ostringstream det;
  det << "nsr-lab run report\n[config]\n" << config_digest_text(cfg);
  for (const LevelReport& r : report.levels) render_level(det, r);
  det << "[summary]\nhard_invariants = "
      << (report.hard_ok ? "ok" : "FAILED") << "\n";
  report.digest = fnv1a(det.str());

  std::ostringstream full;
  full << det.str();
  full << "report_digest = " << std::hex << report.digest << std::dec << "\n";
  for (const LevelReport& r : report.levels)
    full << "level " << r.q << " wall_seconds = " << r.wall_seconds
         << (r.from_checkpoint ? "  (loaded from checkpoint)" : "") << "\n";
  report.text = full.str();
  std::ofstream os(cfg.out_dir + "/report.txt");
  os << report.text;
  return report;
}

// ---- dissipation audit ----

DissipationAudit dissipation_audit(const std::vector<double>& times,
                                   const std::vector<VectorField>& v,
                                   double nu, double gamma) {
  if (times.size() != v.size() || times.size() < 2)
    throw std::invalid_argument("audit: need matching times and frames");
  DissipationAudit a;
  a.t = times;
  double dint = 0, prev = 0;
  for (std::size_t f = 0; f < v.size(); ++f) {
    const double ke = v[f].l2();
    const double lam = fractional_laplacian(v[f], gamma / 2).l2();
    const double diss = nu * lam * lam;
    if (f > 0) dint += 0.5 * (prev + diss) * (times[f] - times[f - 1]);
    prev = diss;
    a.kinetic.push_back(ke * ke);
    a.e_tot.push_back(0.5 * ke * ke + dint);
  }
  double runmin = a.e_tot.front(), scale = std::abs(a.e_tot.front()) + 1e-12;
  for (std::size_t f = 0; f < a.e_tot.size(); ++f) {
    a.drift = std::max(a.drift, std::abs(a.e_tot[f] - a.e_tot.front()));
    a.max_rise = std::max(a.max_rise, a.e_tot[f] - runmin);
    runmin = std::min(runmin, a.e_tot[f]);
    if (f > 0)
      a.max_rise = std::max(a.max_rise, a.e_tot[f] - a.e_tot[f - 1]);
  }
  a.monotone = a.max_rise <= 1e-10 * scale;
  // Leray-Hopf: for all s < t, 1/2(E(s) - E(t)) >= int_s^t nu D, i.e.
  // e_tot(t) <= e_tot(s); the worst pairwise violation is max_rise
  a.energy_inequality = ineq("e:energy_inequality", a.max_rise, 1e-6 * scale);
  return a;
}

DissipationAudit audit_run_output(const std::string& out_dir, int q) {
  const std::string dir = out_dir + "/level_" + std::to_string(q);
  std::ifstream is(dir + "/meta.json");
  if (!is)
    throw std::runtime_error("audit: no checkpoint metadata at " + dir);
  njson m;
  is >> m;
  const std::vector<double> times = m["times"].get<std::vector<double>>();
  const double nu = m["nu"], gamma = m["gamma"];
  std::vector<VectorField> v;
  for (std::size_t f = 0; f < times.size(); ++f) {
    std::ostringstream name;
    name << dir << "/v_" << std::setfill('0') << std::setw(4) << f << ".nsrf";
    v.push_back(load_snapshot(name.str()).vector);
  }
  return dissipation_audit(times, v, nu, gamma);
}

// ---- profile comparison ----

ProfileComparison compare_profiles(const RunConfig& base) {
  ProfileComparison cmp;
  RunConfig ca = base, cb = base;
  ca.profile = "constant";
  ca.out_dir = base.out_dir + "/constant";
  cb.profile = "decreasing";
  cb.out_dir = base.out_dir + "/decreasing";
  cmp.constant_run = run(ca);
  cmp.decreasing_run = run(cb);
  const LevelReport& ra = cmp.constant_run.levels.front();
  const LevelReport& rb = cmp.decreasing_run.levels.front();
  cmp.same_initial_digest = ra.v0_digest == rb.v0_digest;
  for (std::size_t f = 1;
       f < std::min(ra.kinetic.size(), rb.kinetic.size()); ++f)
    cmp.max_energy_gap = std::max(
        cmp.max_energy_gap, std::abs(ra.kinetic[f] - rb.kinetic[f]));
  std::ostringstream os;
  os << std::setprecision(12);
  os << "profile comparison (shared e(0))\n";
  os << "v(.,0) digests: " << std::hex << ra.v0_digest << " vs "
     << rb.v0_digest << std::dec
     << (cmp.same_initial_digest ? "  [identical]" : "  [DIFFER]") << "\n";
  os << "max kinetic-energy gap for t > 0: " << cmp.max_energy_gap << "\n";
  cmp.text = os.str();
  std::ofstream out(base.out_dir + "/compare.txt");
  out << cmp.text;
  return cmp;
}

// ---- operator verification ----

std::vector<Predicate> verify_operators(int grid_n) {
  const Grid g{grid_n};
  std::vector<Predicate> out;
  OracleRng rng(1234);

  // fractional Laplacian on a single mode
  {
    const double gamma = 0.37;
    std::array<int, 3> k{2, 1, -1};
    std::vector<cplx> m(g.size());
    m[g.idx((k[0] + g.n) % g.n, (k[1] + g.n) % g.n, (k[2] + g.n) % g.n)] =
        cplx(0.4, -0.3);
    ScalarField f = ScalarField::from_modes(g, std::move(m));
    const double k2 = double(k[0]) * k[0] + k[1] * k[1] + k[2] * k[2];
    const ScalarField lf = fractional_laplacian(f, gamma);
    const ScalarField want = std::pow(k2, gamma) * f;
    out.push_back(
        ineq("op:frac_laplacian:mode", (lf - want).sup_norm(), 1e-12));
  }
  // semigroup property
  {
    ScalarField f = random_divfree(g, rng, 3, 1.0).c[0];
    const ScalarField a =
        fractional_laplacian(fractional_laplacian(f, 0.15), 0.25);
    const ScalarField b = fractional_laplacian(f, 0.40);
    out.push_back(ineq("op:frac_laplacian:semigroup",
                       (a - b).sup_norm() / (b.sup_norm() + 1e-12), 1e-12));
  }
  // div o inverse_divergence = identity on mean-free fields
  {
    VectorField u = random_divfree(g, rng, 3, 1.0);
    ScalarField bump = ScalarField::sample(
        g, [](double x, double y, double z) {
          return 1.0 + 0.3 * std::sin(x + 2 * y - z);
        });
    for (int c = 0; c < 3; ++c) u.c[c] = u.c[c].times(bump);
    u = u.minus_mean();
    const auto inv = inverse_divergence(u, 1e-8);
    const double scale = u.sup_norm() + 1e-12;
    out.push_back(ineq("op:inverse_divergence:identity",
                       (divergence(inv.R) - u).sup_norm() / scale, 1e-10));
  }
  // Biot-Savart identities
  {
    VectorField v = random_divfree(g, rng, 3, 1.0);
    const VectorField z = biot_savart(v);
    const double scale = v.sup_norm() + 1e-12;
    out.push_back(ineq("op:biot_savart:curl",
                       (curl(z) - v.minus_mean()).sup_norm() / scale, 1e-10));
    out.push_back(
        ineq("op:biot_savart:div", divergence(z).sup_norm() / scale, 1e-10));
  }
  return out;
}

}  // namespace nsr
