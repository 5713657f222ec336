#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "errors.hpp"
#include "field_io.hpp"
#include "harmonic.hpp"
#include "parallel.hpp"
#include "solvers.hpp"
#include "spectral.hpp"

namespace brwre {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TestResult make_result(std::string name, std::string policy) {
  TestResult r;
  r.name = std::move(name);
  r.policy = std::move(policy);
  return r;
}

// Verdict for |estimate - reference| <= tolerance.
void decide(TestResult& r) {
  r.statistic = r.stderr_ > 0.0 ? (r.estimate - r.reference) / r.stderr_ : r.estimate - r.reference;
  r.pass = std::abs(r.estimate - r.reference) <= r.tolerance;
}

bool flag_budget(TestResult& r, std::size_t flagged, std::size_t total, double budget) {
  r.details["flagged"] = flagged;
  r.details["replicas"] = total;
  if (total > 0 && static_cast<double>(flagged) > budget * static_cast<double>(total)) {
    r.pass = false;
    r.explosion_budget_exceeded = true;
    r.details["invalid"] = "flagged replicas exceed the explosion budget";
    return true;
  }
  return false;
}

json grid_json(const ExperimentSpec& s) {
  return {{"n", s.n}, {"L", s.L}, {"eps", particle_mass(s.n, s.rho)}};
}

std::string cn_policy_name(CnPolicy p) {
  switch (p) {
    case CnPolicy::computed: return "computed";
    case CnPolicy::zero: return "zero";
    case CnPolicy::fixed: return "fixed";
  }
  return "computed";
}

}  // namespace

std::string to_string(Engine e) { return e == Engine::lineage ? "lineage" : "gillespie"; }

Engine parse_engine(std::string_view name) {
  if (name == "gillespie") return Engine::gillespie;
  if (name == "lineage") return Engine::lineage;
  fail(ErrorCode::config, "simulation.engine: unknown engine '" + std::string(name) + "'");
}

std::string to_string(Regime r) { return r == Regime::rho_eq_beta ? "rho_eq_beta" : "rho_lt_beta"; }

Regime parse_regime(std::string_view name) {
  if (name == "rho_eq_beta") return Regime::rho_eq_beta;
  if (name == "rho_lt_beta") return Regime::rho_lt_beta;
  fail(ErrorCode::config, "study.regime: unknown regime '" + std::string(name) + "'");
}

json ExperimentSpec::to_json() const {
  json j;
  j["grid"] = {{"n", n}, {"L", L}};
  j["environment"] = {{"dist", to_string(dist)},
                      {"seed", env_seed},
                      {"truncation", truncation},
                      {"c_n_policy", cn_policy_name(cn_policy)},
                      {"c_n_value", cn_value},
                      {"c_n_ensemble", cn_ensemble}};
  if (env_constant) j["environment"]["constant"] = *env_constant;
  if (!env_bundle.empty()) j["environment"]["bundle"] = env_bundle;
  j["model"] = {{"beta", beta}, {"rho", rho}, {"mechanism", to_string(mechanism.kind)}, {"c_mix", mechanism.c},
                {"K", K}, {"K_inv", K_inv}};
  j["initial"] = {{"kind", initial.kind == InitialSpec::point ? "point" : "uniform_square"},
                  {"center", {initial.cx, initial.cy}},
                  {"side", initial.side},
                  {"mass", initial.mass}};
  if (!initial_file.empty()) j["initial"] = {{"kind", "file"}, {"file", initial_file}};
  j["test_function"] = {{"kind", "bump"}, {"center", {phi.cx, phi.cy}}, {"width", phi.width}, {"height", phi.height}};
  if (!phi_file.empty()) j["test_function"] = {{"kind", "file"}, {"file", phi_file}};
  j["time"] = {{"T", T}, {"dt", dt}};
  j["simulation"] = {{"replicas", replicas}, {"seed", seed}, {"cap", cap}, {"lineage_cap", lineage_cap},
                     {"engine", to_string(engine)}};
  return j;
}

json TestResult::to_json() const {
  return {{"name", name},
          {"policy", policy},
          {"estimate", estimate},
          {"reference", reference},
          {"stderr", stderr_},
          {"statistic", statistic},
          {"tolerance", tolerance},
          {"verdict", verdict()},
          {"details", details}};
}

bool VerificationReport::all_pass() const {
  return std::all_of(tests.begin(), tests.end(), [](const TestResult& t) { return t.pass || t.skipped; });
}

json VerificationReport::to_json() const {
  json j;
  j["suite"] = suite;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["runtime_s"] = runtime_s;
  j["config"] = config;
  j["passed"] = all_pass();
  j["tests"] = json::array();
  for (const auto& t : tests) j["tests"].push_back(t.to_json());
  return j;
}

std::string VerificationReport::to_markdown() const {
  std::ostringstream out;
  out << "# Verification report: " << suite << "\n\n";
  out << "- config hash: `" << config_hash << "`\n";
  out << "- seed: " << seed << "\n";
  out << "- runtime: " << runtime_s << " s\n";
  out << "- overall: " << (all_pass() ? "PASS" : "FAIL") << "\n\n";
  out << "| test | verdict | estimate | reference | stderr | statistic | tolerance | policy |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  char buf[512];
  for (const auto& t : tests) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %.6g | %.6g | %.3g | %.3g | %.3g | %s |\n", t.name.c_str(),
                  t.verdict().c_str(), t.estimate, t.reference, t.stderr_, t.statistic, t.tolerance,
                  t.policy.c_str());
    out << buf;
  }
  return out.str();
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EnvironmentField experiment_environment(const ExperimentSpec& spec) {
  const Grid grid(spec.n, spec.L);
  EnvironmentField env;
  if (!spec.env_bundle.empty()) {
    env = read_environment_bundle(spec.env_bundle);
    if (!(env.grid() == grid)) fail(ErrorCode::config, "environment.bundle: grid differs from grid.n / grid.L");
  } else if (spec.env_constant) {
    env = constant_environment(grid, *spec.env_constant);
  } else {
    env = sample_environment(grid, spec.dist, spec.env_seed, spec.truncation);
  }
  switch (spec.cn_policy) {
    case CnPolicy::computed:
      if (spec.cn_ensemble > 1) env = with_renormalization(env, renormalization_constant(env, spec.cn_ensemble));
      break;
    case CnPolicy::zero: env = with_renormalization(env, 0.0); break;
    case CnPolicy::fixed: env = with_renormalization(env, spec.cn_value); break;
  }
  return env;
}

OffspringLaw experiment_law(const ExperimentSpec& spec) { return OffspringLaw(spec.beta, spec.K, spec.K_inv); }

namespace {

Field field_from_file(const std::string& path, const Grid& grid, const char* key) {
  LoadedField f = read_field(path);
  if (!(f.field.grid() == grid)) fail(ErrorCode::config, std::string(key) + ": field grid differs from grid.n / grid.L");
  return f.field;
}

}  // namespace

Field experiment_initial(const ExperimentSpec& spec, const Grid& grid) {
  if (!spec.initial_file.empty()) return field_from_file(spec.initial_file, grid, "initial.file");
  return initial_measure(grid, spec.initial);
}

Field experiment_phi(const ExperimentSpec& spec, const Grid& grid) {
  if (!spec.phi_file.empty()) return field_from_file(spec.phi_file, grid, "test_function.file");
  return bump_function(grid, spec.phi);
}

ReplicaPairs run_replicas(const ExperimentSpec& spec, const EnvironmentField& env, const BranchingSystem& system,
                          const std::vector<double>& obs_times, const std::vector<const Field*>& functions,
                          StreamTag tag, std::uint64_t stream_offset, JumpLedger* ledger) {
  const auto t0 = Clock::now();
  require(!obs_times.empty(), "run_replicas: no observation times");
  require(std::is_sorted(obs_times.begin(), obs_times.end()) && obs_times.front() > 0.0,
          "run_replicas: observation times must be increasing and > 0");
  const Grid& grid = system.grid();
  require(env.grid() == grid, "run_replicas: environment and system grids differ");
  const double eps = particle_mass(spec.n, spec.rho);
  const Field mu0 = experiment_initial(spec, grid);
  const std::size_t R = spec.replicas;

  ReplicaPairs out;
  out.values.assign(obs_times.size(),
                    std::vector<std::vector<double>>(functions.size(), std::vector<double>(R, 0.0)));
  out.exploded.assign(R, 0);
  std::vector<EventCounters> events(R);
  std::vector<std::uint64_t> peak(R, 0);

  auto one = [&](std::size_t r, JumpLedger* led) {
    CounterRng rng(spec.seed, stream_id(tag, stream_offset + r));
    ParticleState state;
    try {
      state = init_poisson(grid, mu0, eps, rng, spec.cap);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::explosion) throw;
      out.exploded[r] = 1;
      return;
    }
    if (spec.engine == Engine::lineage) {
      LineageOptions opt;
      opt.obs_times = obs_times;
      opt.test_functions = functions;
      opt.cap = spec.lineage_cap;
      opt.ledger = led;
      const LineageResult res = simulate_lineages(state, system, opt, rng);
      out.exploded[r] = res.exploded ? 1 : 0;
      for (std::size_t o = 0; o < obs_times.size(); ++o) {
        for (std::size_t f = 0; f < functions.size(); ++f) out.values[o][f][r] = res.pairings[o][f];
        peak[r] = std::max<std::uint64_t>(peak[r], res.counts[o]);
      }
      events[r] = res.events;
      return;
    }
    for (std::size_t o = 0; o < obs_times.size(); ++o) {
      advance(state, system, obs_times[o], rng, led);
      if (state.exploded) {
        out.exploded[r] = 1;
        break;
      }
      for (std::size_t f = 0; f < functions.size(); ++f) out.values[o][f][r] = pair(state, *functions[f]);
      peak[r] = std::max<std::uint64_t>(peak[r], state.count());
    }
    events[r] = state.events;
  };

  if (ledger) {
    for (std::size_t r = 0; r < R; ++r) one(r, ledger);
  } else {
    parallel_for(R, spec.workers, [&](std::size_t r) { one(r, nullptr); });
  }
  for (std::size_t r = 0; r < R; ++r) {
    out.exploded_count += out.exploded[r];
    out.events.jumps += events[r].jumps;
    out.events.branchings += events[r].branchings;
    out.events.deaths += events[r].deaths;
    out.max_count = std::max(out.max_count, peak[r]);
  }
  out.seconds = seconds_since(t0);
  return out;
}

namespace {

json batch_json(const ReplicaPairs& b) {
  return {{"replicas", b.replicas()},
          {"flagged", b.exploded_count},
          {"jumps", b.events.jumps},
          {"branchings", b.events.branchings},
          {"deaths", b.events.deaths},
          {"max_particles", b.max_count},
          {"seconds", b.seconds}};
}

json field_summary(const Field& f) { return {{"min", f.min()}, {"max", f.max()}, {"sum", f.sum()}}; }

void dump_diagnostics(const ExperimentSpec& spec, const DualCoefficients& dual, const Field& w0, const Field& phi) {
  if (spec.diagnostic_dir.empty()) return;
  namespace fs = std::filesystem;
  const fs::path dir(spec.diagnostic_dir);
  const int every = std::max(1, static_cast<int>(plan_steps(spec.T, spec.dt).count / 10));
  write_trajectory(dir / "dual_U", nonlinear_solve(dual.potential, dual.B, spec.beta, w0, spec.T, spec.dt, every),
                   "U");
  write_trajectory(dir / "first_moment_T", pam_solve(dual.potential, phi, spec.T, spec.dt, every), "T_phi");
}

}  // namespace

SiteIdentities site_system_identities(const ExperimentSpec& spec, const Tolerance& tol) {
  require(spec.mechanism.kind != MechanismKind::auxiliary,
          "site_system_identities: use auxiliary_system_identities for the auxiliary system");
  const auto t0 = Clock::now();
  const EnvironmentField env = experiment_environment(spec);
  const Grid& grid = env.grid();
  const BranchingSystem sys(env, experiment_law(spec), spec.mechanism);
  const double eps = particle_mass(spec.n, spec.rho);
  const Field mu0 = experiment_initial(spec, grid);
  const Field phi = experiment_phi(spec, grid);

  // Fixed-n identities run on the unrenormalized xi.
  const DualCoefficients dual = dual_coefficients(env, spec.beta, eps, spec.mechanism);
  const Field w0 = dual_initial(phi, eps);
  const Trajectory U = nonlinear_solve(dual.potential, dual.B, spec.beta, w0, spec.T, spec.dt);
  const double ref_laplace = std::exp(-pairing(mu0, U.final_state()));
  const Field T_full = pam_solve(env.xi, phi, spec.T, spec.dt).final_state();
  const Field T_half = pam_solve(env.xi, phi, 0.5 * spec.T, spec.dt).final_state();
  const double ref_mean = pairing(mu0, T_full);

  const ReplicaPairs batch =
      run_replicas(spec, env, sys, {0.5 * spec.T, spec.T}, {&phi, &T_half}, StreamTag::replica);

  SiteIdentities out;
  const json common = {{"grid", grid_json(spec)}, {"batch", batch_json(batch)}, {"T", spec.T}, {"dt", spec.dt}};

  out.duality = make_result("laplace_duality", "3sigma+dt");
  {
    auto [m, se] = batch.mean_of(1, 0, [](double x) { return std::exp(-x); });
    auto& r = out.duality;
    r.estimate = m;
    r.reference = ref_laplace;
    r.stderr_ = se;
    r.tolerance = tol.sigmas * se + tol.dt_multiple * spec.dt;
    decide(r);
    r.details = common;
    r.details["mechanism"] = to_string(spec.mechanism.kind);
    r.details["solver_pairing"] = pairing(mu0, U.final_state());
  }
  out.first_moment = make_result("first_moment_site", "3sigma");
  {
    auto [m, se] = batch.mean_of(1, 0, [](double x) { return x; });
    auto& r = out.first_moment;
    r.estimate = m;
    r.reference = ref_mean;
    r.stderr_ = se;
    r.tolerance = tol.sigmas * se;
    decide(r);
    r.details = common;
  }
  out.martingale = make_result("martingale_increment", "3sigma");
  {
    RunningStats inc;
    for (std::size_t i = 0; i < batch.replicas(); ++i) {
      if (!batch.exploded[i]) inc.add(batch.values[1][0][i] - batch.values[0][1][i]);
    }
    auto& r = out.martingale;
    r.estimate = inc.mean;
    r.reference = 0.0;
    r.stderr_ = inc.stderr_mean();
    r.tolerance = tol.sigmas * r.stderr_;
    decide(r);
    auto [mh, seh] = batch.mean_of(0, 1, [](double x) { return x; });
    r.details = common;
    r.details["half_time_pairing"] = {{"mean", mh}, {"stderr", seh}, {"reference", ref_mean}};
  }
  for (TestResult* r : {&out.duality, &out.first_moment, &out.martingale}) {
    flag_budget(*r, batch.exploded_count, batch.replicas(), tol.max_exploded);
  }
  if (out.duality.pass != out.first_moment.pass) {
    const json diag = {{"laplace", {{"mc", out.duality.estimate}, {"solver", ref_laplace}}},
                       {"first_moment", {{"mc", out.first_moment.estimate}, {"solver", ref_mean}}},
                       {"U_T", field_summary(U.final_state())},
                       {"T_phi", field_summary(T_full)},
                       {"dump", spec.diagnostic_dir}};
    out.duality.details["diagnostic"] = diag;
    out.first_moment.details["diagnostic"] = diag;
    dump_diagnostics(spec, dual, w0, phi);
  }
  for (std::size_t i = 0; i < batch.replicas(); ++i) {
    if (!batch.exploded[i]) out.pairs_at_T.push_back(batch.values[1][0][i]);
  }
  out.seconds = seconds_since(t0);
  return out;
}

AuxiliaryIdentities auxiliary_system_identities(const ExperimentSpec& spec, const Tolerance& tol) {
  ExperimentSpec s = spec;
  s.mechanism = {MechanismKind::auxiliary, 0.0};
  const EnvironmentField env = experiment_environment(s);
  const Grid& grid = env.grid();
  const BranchingSystem sys(env, experiment_law(s), s.mechanism);
  const double eps = particle_mass(s.n, s.rho);
  const Field mu0 = experiment_initial(s, grid);
  const Field phi = experiment_phi(s, grid);
  const Field one(grid, 1.0);

  const DualCoefficients dual = dual_coefficients(env, s.beta, eps, s.mechanism);
  const Trajectory U = nonlinear_solve(dual.potential, dual.B, s.beta, dual_initial(phi, eps), s.T, s.dt);
  const double ref_laplace = std::exp(-pairing(mu0, U.final_state()));
  const double ref_heat = pairing(mu0, heat_solve(phi, s.T));
  const double ref_mass = mu0.sum();

  const ReplicaPairs batch = run_replicas(s, env, sys, {s.T}, {&phi, &one}, StreamTag::auxiliary_replica);
  const json common = {{"grid", grid_json(s)}, {"batch", batch_json(batch)}, {"T", s.T}, {"dt", s.dt}};

  AuxiliaryIdentities out;
  auto fill = [&](TestResult& r, std::size_t fn, double ref, auto f, double dt_budget) {
    auto [m, se] = batch.mean_of(0, fn, f);
    r.estimate = m;
    r.reference = ref;
    r.stderr_ = se;
    r.tolerance = tol.sigmas * se + dt_budget;
    decide(r);
    r.details = common;
    flag_budget(r, batch.exploded_count, batch.replicas(), tol.max_exploded);
  };
  auto id = [](double x) { return x; };
  out.first_moment = make_result("first_moment_auxiliary", "3sigma");
  fill(out.first_moment, 0, ref_heat, id, 0.0);
  out.mass = make_result("mass_conservation_auxiliary", "3sigma");
  fill(out.mass, 1, ref_mass, id, 0.0);
  out.duality = make_result("laplace_duality_auxiliary", "3sigma+dt");
  fill(out.duality, 0, ref_laplace, [](double x) { return std::exp(-x); }, tol.dt_multiple * s.dt);
  return out;
}

TestResult laplace_duality_test(const ExperimentSpec& spec, const Tolerance& tol) {
  if (spec.mechanism.kind == MechanismKind::auxiliary) return auxiliary_system_identities(spec, tol).duality;
  return site_system_identities(spec, tol).duality;
}

TestResult first_moment_test(const ExperimentSpec& spec, const Tolerance& tol) {
  if (spec.mechanism.kind == MechanismKind::auxiliary) return auxiliary_system_identities(spec, tol).first_moment;
  return site_system_identities(spec, tol).first_moment;
}

std::vector<TestResult> moment_bound_test(const ExperimentSpec& spec, double theta, const std::vector<int>& n_list,
                                          const std::vector<std::size_t>& replicas, double band_lo,
                                          double band_hi, int obs_points) {
  require(theta >= 0.0 && theta < spec.beta, "moment_bound_test: need 0 <= theta < beta");
  require(!n_list.empty() && n_list.size() == replicas.size(), "moment_bound_test: n_list and replicas differ");
  require(obs_points >= 1, "moment_bound_test: obs_points must be >= 1");
  const double p = 1.0 + theta;
  std::vector<double> obs(obs_points);
  for (int j = 0; j < obs_points; ++j) obs[j] = spec.T * (j + 1) / obs_points;

  TestResult at_T = make_result("moment_bound_T", "trend");
  TestResult sup = make_result("moment_bound_sup", "trend");
  TestResult homog = make_result("moment_homogeneity", "relative");
  json rows = json::array();
  std::vector<double> est_T, est_sup;
  std::size_t flagged = 0, total = 0;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    ExperimentSpec s = spec;
    s.n = n_list[i];
    s.replicas = replicas[i];
    const EnvironmentField env = experiment_environment(s);
    const BranchingSystem sys(env, experiment_law(s), s.mechanism);
    const Field phi = experiment_phi(s, env.grid());
    const Field phi2 = phi * 2.0;
    const ReplicaPairs b = run_replicas(s, env, sys, obs, {&phi, &phi2}, StreamTag::replica);
    flagged += b.exploded_count;
    total += b.replicas();
    RunningStats xt, xs;
    double homog_err = 0.0;
    for (std::size_t r = 0; r < b.replicas(); ++r) {
      if (b.exploded[r]) continue;
      double m = 0.0;
      for (std::size_t j = 0; j < obs.size(); ++j) m = std::max(m, b.values[j][0][r]);
      const double v = std::pow(b.values.back()[0][r], p);
      xt.add(v);
      xs.add(std::pow(m, p));
      const double v2 = std::pow(b.values.back()[1][r], p);
      if (v > 0.0) homog_err = std::max(homog_err, std::abs(v2 / v / std::pow(2.0, p) - 1.0));
    }
    est_T.push_back(xt.mean);
    est_sup.push_back(xs.mean);
    rows.push_back({{"n", s.n},
                    {"replicas", b.replicas()},
                    {"flagged", b.exploded_count},
                    {"moment_T", xt.mean},
                    {"moment_T_stderr", xt.stderr_mean()},
                    {"moment_sup", xs.mean},
                    {"moment_sup_stderr", xs.stderr_mean()},
                    {"seconds", b.seconds}});
    if (i == 0) {
      RunningStats x2;
      for (std::size_t r = 0; r < b.replicas(); ++r) {
        if (!b.exploded[r]) x2.add(std::pow(b.values.back()[1][r], p));
      }
      homog.estimate = xt.mean > 0.0 ? x2.mean / xt.mean : 0.0;
      homog.reference = std::pow(2.0, p);
      homog.stderr_ = 0.0;
      homog.tolerance = 1e-9 * homog.reference;
      decide(homog);
      homog.details = {{"n", s.n}, {"max_pathwise_relative_error", homog_err}};
    }
  }
  auto trend = [&](TestResult& r, const std::vector<double>& est) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    bool ok = est.front() > 0.0;
    for (double e : est) {
      const double ratio = est.front() > 0.0 ? e / est.front() : 0.0;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      ok = ok && ratio >= band_lo && ratio <= band_hi;
    }
    r.estimate = hi;
    r.reference = 1.0;
    r.statistic = lo;
    r.tolerance = band_hi - 1.0;
    r.pass = ok;
    r.details = {{"theta", theta}, {"band", {band_lo, band_hi}}, {"min_ratio", lo}, {"max_ratio", hi},
                 {"rows", rows}};
    flag_budget(r, flagged, total, 0.01);
  };
  trend(at_T, est_T);
  trend(sup, est_sup);
  return {at_T, sup, homog};
}

OffspringTally sampler_ledger(double beta, std::size_t events, std::uint64_t seed, int workers) {
  const OffspringLaw law(beta);
  const EnvironmentField env = constant_environment(Grid(1, 4.0), 1.0);
  const SiteMechanism mech = site_mechanism(env, 0, beta);
  constexpr std::size_t kChunk = 1u << 20;
  const std::size_t chunks = (events + kChunk - 1) / kChunk;
  std::vector<JumpLedger> ledgers;
  ledgers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) ledgers.emplace_back(0);
  parallel_for(chunks, workers, [&](std::size_t c) {
    CounterRng rng(seed, stream_id(StreamTag::sampler, c));
    const std::size_t count = std::min(kChunk, events - c * kChunk);
    for (std::size_t i = 0; i < count; ++i) ledgers[c].record(0.0, 0, sample_offspring(law, mech, rng), 1.0, 1.0);
  });
  JumpLedger all(0);
  for (const auto& l : ledgers) all.merge(l);
  return all.tally_positive();
}

TestResult offspring_tail_test(const OffspringTally& tally, double beta, double slope_tol,
                               std::uint64_t min_events, double m_lo, double m_hi) {
  TestResult r = make_result("offspring_tail_exponent", "absolute");
  r.reference = -(1.0 + beta);
  r.tolerance = slope_tol;
  r.details["events"] = tally.total();
  r.details["compensator_constant"] = beta * (1.0 + beta) / std::tgamma(1.0 - beta);
  if (tally.total() == 0 || tally.exceeding(1) == 0) {
    r.skipped = true;
    r.details["reason"] = "no branching event with k >= 2";
    return r;
  }
  if (tally.total() < min_events) {
    r.pass = false;
    r.details["error"] = "insufficient events";
    r.details["required"] = min_events;
    return r;
  }
  const double total = static_cast<double>(tally.total());
  std::vector<double> x, y, w;
  json points = json::array();
  const int per_decade = 10;
  const int steps = static_cast<int>(std::round(per_decade * std::log10(m_hi / m_lo)));
  for (int j = 0; j <= steps; ++j) {
    const auto m = static_cast<std::int64_t>(std::round(m_lo * std::pow(10.0, static_cast<double>(j) / per_decade)));
    const std::uint64_t c = tally.exceeding(m);
    points.push_back({{"m", m}, {"exceeding", c}});
    if (c == 0) continue;
    x.push_back(std::log(static_cast<double>(m)));
    y.push_back(std::log(static_cast<double>(c) / total));
    w.push_back(static_cast<double>(c));
  }
  const LinearFit fit = weighted_fit(x, y, w);
  r.estimate = fit.slope;
  r.stderr_ = fit.slope_stderr;
  decide(r);
  if (fit.points < 2) r.pass = false;
  r.details["fit"] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"points", fit.points},
                      {"m_range", {m_lo, m_hi}}};
  r.details["ccdf"] = points;
  return r;
}

namespace {

using LD = long double;

// Violation iff lhs exceeds rhs by more than the rounding of the largest term.
bool violates(LD lhs, LD rhs, LD magnitude) {
  return lhs - rhs > 64.0L * std::numeric_limits<LD>::epsilon() * std::max<LD>(1.0L, magnitude);
}

struct Discrete {
  std::vector<LD> x;
  std::vector<LD> p;
};

Discrete random_discrete(CounterRng& rng) {
  Discrete d;
  const int size = 1 + static_cast<int>(rng.uniform() * 8.0);
  LD total = 0.0L;
  for (int i = 0; i < size; ++i) {
    const double u = rng.uniform();
    d.x.push_back(u < 0.15 ? 0.0L : static_cast<LD>(std::pow(10.0, -3.0 + 5.0 * rng.uniform())));
    d.p.push_back(static_cast<LD>(rng.exponential(1.0)));
    total += d.p.back();
  }
  for (auto& q : d.p) q /= total;
  return d;
}

LD h1(LD x) { return 1.0L - x + 0.5L * x * x - std::exp(-x); }

double log_uniform(CounterRng& rng, double lo, double hi) {
  return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
}

}  // namespace

std::vector<TestResult> auxiliary_inequalities_test(std::size_t points, std::uint64_t seed, double beta) {
  require(beta > 0.0 && beta < 1.0, "auxiliary_inequalities_test: beta must lie in (0,1)");
  std::vector<TestResult> out;
  auto finish = [&](const char* name, std::size_t violations, json details) {
    TestResult r = make_result(name, "count");
    r.estimate = static_cast<double>(violations);
    r.reference = 0.0;
    r.statistic = static_cast<double>(violations);
    r.tolerance = 0.0;
    r.pass = violations == 0;
    r.details = std::move(details);
    r.details["points"] = points;
    out.push_back(std::move(r));
  };

  {  // 1 - x + x^2/2 - e^{-x} >= 0, x >= 0
    CounterRng rng(seed, stream_id(StreamTag::property, 1));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const LD x = i % 16 == 0 ? 0.0L : static_cast<LD>(log_uniform(rng, 1e-6, 50.0));
      if (violates(0.0L, h1(x), 1.0L + x + x * x)) ++bad;
    }
    finish("aux_inequality_1", bad, {{"domain", "x >= 0"}});
  }
  {  // x/4 <= 1 - x + x^2/2 - e^{-x}, x >= 2
    CounterRng rng(seed, stream_id(StreamTag::property, 2));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const LD x = i % 16 == 0 ? 2.0L : static_cast<LD>(2.0 * log_uniform(rng, 1.0, 50.0));
      if (violates(x / 4.0L, h1(x), x * x)) ++bad;
    }
    finish("aux_inequality_2", bad, {{"domain", "x >= 2"}});
  }
  {  // 0 <= e^{-x} - 1 + x <= 2 x^{1+b}, x >= 0, 0 < b <= 1
    CounterRng rng(seed, stream_id(StreamTag::property, 3));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const LD x = i % 16 == 0 ? 0.0L : static_cast<LD>(log_uniform(rng, 1e-6, 50.0));
      const LD b = static_cast<LD>(1.0 - rng.uniform());  // (0, 1]
      const LD mid = std::exp(-x) - 1.0L + x;
      if (violates(0.0L, mid, 1.0L + x) || violates(mid, 2.0L * std::pow(x, 1.0L + b), 1.0L + x)) ++bad;
    }
    finish("aux_inequality_3", bad, {{"domain", "x >= 0, 0 < beta <= 1"}});
  }
  {  // 0 <= -log(1 - e x)/e - x <= 2 e x^2, e > 0, x >= 0, e x <= 1/2
    CounterRng rng(seed, stream_id(StreamTag::property, 4));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const LD e = static_cast<LD>(log_uniform(rng, 1e-6, 10.0));
      const LD x = static_cast<LD>(rng.uniform()) * 0.5L / e;
      const LD mid = -std::log1p(-e * x) / e - x;
      if (violates(0.0L, mid, x) || violates(mid, 2.0L * e * x * x, x)) ++bad;
    }
    finish("aux_inequality_4", bad, {{"domain", "eps > 0, x >= 0, eps x <= 1/2"}});
  }
  {  // E[X^{1+t}] <= (1+t) d^{1+t} + (1+t) int_d^inf r^t P[X >= r] dr
    CounterRng rng(seed, stream_id(StreamTag::property, 5));
    std::size_t bad = 0, bad_neg = 0, bad_pos = 0, neg = 0, bad_alt = 0;
    double worst = 0.0;
    json example;
    for (std::size_t i = 0; i < points; ++i) {
      const Discrete X = random_discrete(rng);
      const LD theta = static_cast<LD>(-1.0 + (1.0 + beta) * rng.uniform_open());
      const LD delta = static_cast<LD>(log_uniform(rng, 1e-3, 10.0));
      const LD q = 1.0L + theta;
      LD lhs = 0.0L, integral = 0.0L, mag = 0.0L;
      for (std::size_t j = 0; j < X.x.size(); ++j) {
        if (X.x[j] > 0.0L) lhs += X.p[j] * std::pow(X.x[j], q);
        // int_d^x r^t dr for each atom above d, in closed form
        if (X.x[j] > delta) integral += X.p[j] * (std::pow(X.x[j], q) - std::pow(delta, q)) / q;
        mag += X.p[j] * std::pow(std::max(X.x[j], delta), q);
      }
      const LD rhs = q * std::pow(delta, q) + q * integral;
      if (theta < 0.0L) ++neg;
      if (violates(lhs, rhs, mag)) {
        ++bad;
        (theta < 0.0L ? bad_neg : bad_pos) += 1;
        if (static_cast<double>(lhs - rhs) > worst) {
          worst = static_cast<double>(lhs - rhs);
          example = {{"theta", static_cast<double>(theta)}, {"delta", static_cast<double>(delta)},
                     {"lhs", static_cast<double>(lhs)}, {"rhs", static_cast<double>(rhs)}};
        }
      }
      if (violates(lhs, std::pow(delta, q) + q * integral, mag)) ++bad_alt;
    }
    finish("aux_inequality_5", bad,
           {{"domain", "theta in (-1, beta), delta > 0, discrete X >= 0"},
            {"beta", beta},
            {"points_theta_negative", neg},
            {"violations_theta_negative", bad_neg},
            {"violations_theta_nonnegative", bad_pos},
            {"violations_with_constant_one", bad_alt},
            {"worst", example}});
  }
  {  // P[X >= r] <= 2 r int_0^{2/r} E[e^{-uX} - 1 + uX] du
    CounterRng rng(seed, stream_id(StreamTag::property, 6));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < points; ++i) {
      const Discrete X = random_discrete(rng);
      const LD r = static_cast<LD>(log_uniform(rng, 1e-3, 1e2));
      LD lhs = 0.0L, rhs = 0.0L, mag = 0.0L;
      for (std::size_t j = 0; j < X.x.size(); ++j) {
        if (X.x[j] >= r) lhs += X.p[j];
        if (X.x[j] == 0.0L) continue;
        // r int_0^{2/r} (e^{-ux} - 1 + ux) du = (2/y) h1(y), y = 2x/r
        const LD y = 2.0L * X.x[j] / r;
        rhs += 2.0L * X.p[j] * (2.0L / y) * h1(y);
        mag += 2.0L * X.p[j] * (2.0L / y) * (1.0L + y + y * y);
      }
      if (violates(lhs, rhs, mag)) ++bad;
    }
    finish("aux_inequality_6", bad, {{"domain", "r > 0, discrete X >= 0"}});
  }
  return out;
}

double poisson_cluster_reference(const ClusterToy& toy, double beta) {
  const std::size_t m = toy.intensity.size();
  require(m >= 1 && toy.phi.size() == m && toy.xi_sign.size() == m, "poisson_cluster: inconsistent toy space");
  const OffspringLaw law(beta);
  const EnvironmentField env = constant_environment(Grid(1, 4.0), 1.0);
  const EnvironmentField neg = constant_environment(Grid(1, 4.0), -1.0);
  double exponent = 0.0;
  for (std::size_t x = 0; x < m; ++x) {
    double inner;
    if (toy.deterministic) {
      inner = std::exp(-toy.phi[x]);
    } else {
      const SiteMechanism mech = site_mechanism(toy.xi_sign[x] > 0 ? env : neg, 0, beta);
      const double s = 0.5 * (std::exp(-toy.phi[(x + 1) % m]) + std::exp(-toy.phi[(x + m - 1) % m]));
      inner = pgf_eval(law, mech, s);
    }
    exponent += toy.intensity[x] * (1.0 - inner);
  }
  return std::exp(-exponent);
}

TestResult poisson_cluster_test(const ClusterToy& toy, std::size_t replicas, std::uint64_t seed, double beta,
                                double sigmas) {
  const double ref = poisson_cluster_reference(toy, beta);
  const std::size_t m = toy.intensity.size();
  const OffspringLaw law(beta);
  const EnvironmentField env = constant_environment(Grid(1, 4.0), 1.0);
  const EnvironmentField neg = constant_environment(Grid(1, 4.0), -1.0);
  std::vector<SiteMechanism> mech;
  for (std::size_t x = 0; x < m; ++x) mech.push_back(site_mechanism(toy.xi_sign[x] > 0 ? env : neg, 0, beta));

  RunningStats stats;
  CounterRng rng(seed, stream_id(StreamTag::property, 100));
  for (std::size_t r = 0; r < replicas; ++r) {
    double mass = 0.0;
    for (std::size_t x = 0; x < m; ++x) {
      if (toy.intensity[x] <= 0.0) continue;
      std::poisson_distribution<std::int64_t> draw(toy.intensity[x]);
      const std::int64_t count = draw(rng);
      for (std::int64_t i = 0; i < count; ++i) {
        if (toy.deterministic) {
          mass += toy.phi[x];
          continue;
        }
        const std::int64_t k = sample_offspring(law, mech[x], rng);
        for (std::int64_t c = 0; c < k; ++c) {
          const std::size_t y = (rng() >> 63) ? (x + 1) % m : (x + m - 1) % m;
          mass += toy.phi[y];
        }
      }
    }
    stats.add(std::exp(-mass));
  }
  TestResult r = make_result("poisson_cluster", "3sigma");
  r.estimate = stats.mean;
  r.reference = ref;
  r.stderr_ = stats.stderr_mean();
  r.tolerance = sigmas * r.stderr_;
  decide(r);
  if (r.stderr_ == 0.0) r.pass = std::abs(r.estimate - r.reference) <= 1e-12;
  r.details = {{"sites", m}, {"replicas", replicas}, {"deterministic", toy.deterministic}};
  return r;
}

TestResult feynman_kac_test(const ExperimentSpec& spec, std::size_t paths, double solver_dt, double sigmas) {
  const EnvironmentField env = experiment_environment(spec);
  const Grid& grid = env.grid();
  const Field phi = experiment_phi(spec, grid);
  const std::size_t probe = grid.site_at(0.0, 0.0);
  const std::vector<std::size_t> probes{probe};
  const FeynmanKacResult fk =
      feynman_kac_estimate(env.xi_e, phi, TimeSeries{}, spec.dt, spec.T, probes, paths, spec.seed, spec.workers);
  const double solver = pam_solve(env.xi_e, phi, spec.T, solver_dt).final_state()[probe];
  TestResult r = make_result("feynman_kac_origin", "3sigma");
  r.estimate = fk.mean[0];
  r.reference = solver;
  r.stderr_ = fk.stderr_[0];
  r.tolerance = sigmas * r.stderr_;
  decide(r);
  r.details = {{"n", spec.n}, {"T", spec.T}, {"paths", paths}, {"solver_dt", solver_dt}, {"c_n", env.c_n},
               {"max_log_weight", fk.max_log_weight}};
  return r;
}

std::vector<TestResult> solver_correctness_tests(const SolverTolerances& tol, std::uint64_t seed) {
  std::vector<TestResult> out;
  const double pi = std::acos(-1.0);
  {
    const Grid grid(8, 4.0);
    const int side = grid.side();
    const double n = grid.n();
    const double t = 0.1;
    double err = 0.0;
    for (auto [m1, m2] : {std::pair{3, 1}, std::pair{0, 5}, std::pair{16, 16}, std::pair{7, 2}}) {
      const double lambda = 4.0 * n * n * (std::pow(std::sin(pi * m1 / side), 2) + std::pow(std::sin(pi * m2 / side), 2));
      Field phi(grid), expect(grid);
      for (std::size_t s = 0; s < phi.size(); ++s) {
        const auto [ix, iy] = grid.lattice_coords(s);
        phi[s] = std::cos(2.0 * pi * (m1 * ix + m2 * iy) / side) + 0.5 * std::sin(2.0 * pi * (m1 * ix - m2 * iy) / side);
        expect[s] = phi[s] * std::exp(-lambda * t);
      }
      const Field got = heat_solve(phi, t);
      for (std::size_t s = 0; s < got.size(); ++s) err = std::max(err, std::abs(got[s] - expect[s]));
    }
    TestResult r = make_result("heat_closed_form", "absolute");
    r.estimate = err;
    r.tolerance = tol.heat_abs;
    r.statistic = err;
    r.pass = err <= tol.heat_abs;
    out.push_back(r);
  }
  {
    const Grid grid(8, 4.0);
    const double c = 1.7, T = 0.25;
    const Field phi = bump_function(grid, {});
    const Field got = pam_solve(Field(grid, c), phi, T, 1e-3).final_state();
    const Field expect = heat_solve(phi, T) * std::exp(c * T);
    double err = 0.0;
    for (std::size_t s = 0; s < got.size(); ++s) err = std::max(err, std::abs(got[s] - expect[s]));
    TestResult r = make_result("pam_constant_potential", "relative");
    r.estimate = err / expect.max_abs();
    r.tolerance = tol.constant_potential_rel;
    r.statistic = r.estimate;
    r.pass = r.estimate <= r.tolerance;
    out.push_back(r);
  }
  {
    // Spatially constant data: only the nonlinear flow acts.
    const Grid grid(2, 4.0);
    double err = 0.0;
    json cases = json::array();
    for (auto [B, beta, w0] : {std::tuple{1.0, 0.5, 1.0}, std::tuple{0.3, 0.2, 2.5}, std::tuple{2.0, 0.8, 0.7},
                               std::tuple{5.0, 0.5, 3.0}, std::tuple{0.05, 0.1, 10.0}}) {
      const double T = 0.5;
      const Field got = nonlinear_solve(Field(grid), Field(grid, B), beta, Field(grid, w0), T, 1e-2).final_state();
      // RK4 on dw/dt = -B w^{1+beta}
      const int steps = 20000;
      const double h = T / steps;
      double w = w0;
      auto f = [&](double v) { return -B * std::pow(std::max(v, 0.0), 1.0 + beta); };
      for (int i = 0; i < steps; ++i) {
        const double k1 = f(w), k2 = f(w + 0.5 * h * k1), k3 = f(w + 0.5 * h * k2), k4 = f(w + h * k3);
        w += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      double e = 0.0;
      for (std::size_t s = 0; s < got.size(); ++s) e = std::max(e, std::abs(got[s] - w));
      err = std::max(err, e);
      cases.push_back({{"B", B}, {"beta", beta}, {"w0", w0}, {"oracle", w}, {"error", e}});
    }
    TestResult r = make_result("nonlinear_substep_ode", "absolute");
    r.estimate = err;
    r.tolerance = tol.ode_abs;
    r.statistic = err;
    r.pass = err <= tol.ode_abs;
    r.details["cases"] = cases;
    out.push_back(r);
  }
  {
    const Grid grid(8, 4.0);
    const EnvironmentField env = sample_environment(grid, Distribution::rademacher, seed);
    const Field phi = bump_function(grid, {});
    const double T = 0.25, beta = 0.5, eps = particle_mass(8, beta);
    const DualCoefficients dual = dual_coefficients(env, beta, eps, {});
    const Field w0 = dual_initial(phi, eps);
    // Steps with h * 8n^2 <= 1, around the production dt; coarser steps sit
    // in the stiff pre-asymptotic range of the heat factor.
    const std::vector<double> dts{T / 128, T / 256, T / 512};
    auto order_of = [&](const char* name, auto solve) {
      std::vector<Field> sol;
      for (double dt : dts) sol.push_back(solve(dt));
      auto diff = [](const Field& a, const Field& b) {
        double e = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) e = std::max(e, std::abs(a[s] - b[s]));
        return e;
      };
      const double e1 = diff(sol[0], sol[1]), e2 = diff(sol[1], sol[2]);
      TestResult r = make_result(name, "absolute");
      r.estimate = std::log2(e1 / e2);
      r.reference = tol.order_target;
      r.tolerance = tol.order_tol;
      decide(r);
      r.details = {{"dts", dts}, {"differences", {e1, e2}}};
      out.push_back(r);
    };
    order_of("strang_order_pam", [&](double dt) { return pam_solve(env.xi_e, phi, T, dt).final_state(); });
    order_of("strang_order_nonlinear",
             [&](double dt) { return nonlinear_solve(env.xi, dual.B, beta, w0, T, dt).final_state(); });
  }
  {
    TestResult r = make_result("positivity_violations", "count");
    r.estimate = static_cast<double>(positivity_violations());
    r.statistic = r.estimate;
    r.pass = positivity_violations() == 0;
    out.push_back(r);
  }
  return out;
}

std::vector<TestResult> offspring_exactness_tests(double beta, std::size_t draws, std::uint64_t seed,
                                                  const OffspringTolerances& tol) {
  const OffspringLaw law(beta);
  std::vector<TestResult> out;
  {
    double worst = 0.0;
    json rows = json::array();
    for (int k : {10, 100, 1000}) {
      // |binom(1+beta, k)| / (1+beta) as a running product
      LD prod = 1.0L;
      for (int i = 0; i < k; ++i) prod *= (1.0L + beta - i) / (i + 1.0L);
      const double oracle = static_cast<double>(std::abs(prod) / (1.0L + beta));
      const double rel = std::abs(law.p(k) - oracle) / oracle;
      worst = std::max(worst, rel);
      rows.push_back({{"k", k}, {"table", law.p(k)}, {"oracle", oracle}, {"relative_error", rel}});
    }
    TestResult r = make_result("offspring_table_oracle", "relative");
    r.estimate = worst;
    r.statistic = worst;
    r.tolerance = tol.table_rel;
    r.pass = worst <= tol.table_rel;
    r.details["rows"] = rows;
    out.push_back(r);
  }
  {
    // sum_{k<=K} k p_k plus the tail mean sum_{k>K} k p_k = Gamma(K-beta)/(Gamma(1-beta) Gamma(K)).
    LD mean = 0.0L, mass = 0.0L;
    const auto table = law.table();
    for (std::size_t k = 0; k < table.size(); ++k) {
      mean += static_cast<LD>(k) * table[k];
      mass += table[k];
    }
    const int K = law.K();
    const LD tail_mean = std::exp(std::lgamma(static_cast<LD>(K) - beta) - std::lgamma(1.0L - beta) -
                                  std::lgamma(static_cast<LD>(K)));
    const LD tail_mass = std::exp(std::lgamma(static_cast<LD>(K) - beta) - std::lgamma(static_cast<LD>(K) + 1.0L) -
                                  std::lgamma(1.0L - beta)) *
                         beta / (1.0L + beta);
    TestResult r = make_result("offspring_criticality", "absolute");
    r.estimate = static_cast<double>(mean + tail_mean);
    r.reference = 1.0;
    r.tolerance = tol.criticality;
    decide(r);
    const double mass_err = static_cast<double>(std::abs(mass + law.tail_mass() - 1.0L));
    const double tail_err = static_cast<double>(std::abs(law.tail_mass() - tail_mass) / tail_mass);
    r.pass = r.pass && mass_err <= 1e-12 && tail_err <= 1e-9;
    r.details = {{"K", K}, {"table_mean", static_cast<double>(mean)}, {"tail_mean", static_cast<double>(tail_mean)},
                 {"mass_error", mass_err}, {"tail_mass_relative_error", tail_err}};
    out.push_back(r);
  }
  {
    const EnvironmentField env = constant_environment(Grid(1, 4.0), 1.0);
    const SiteMechanism mech = site_mechanism(env, 0, beta);
    const std::vector<double> s_values{0.2, 0.5, 0.8};
    std::vector<RunningStats> stats(s_values.size());
    CounterRng rng(seed, stream_id(StreamTag::sampler, 1u << 30));
    for (std::size_t i = 0; i < draws; ++i) {
      const std::int64_t k = sample_offspring(law, mech, rng);
      for (std::size_t j = 0; j < s_values.size(); ++j) {
        stats[j].add(std::pow(s_values[j], static_cast<double>(k)));
      }
    }
    TestResult r = make_result("sampler_pgf", "4sigma");
    double worst = 0.0;
    json rows = json::array();
    bool ok = true;
    for (std::size_t j = 0; j < s_values.size(); ++j) {
      const double exact = pgf_eval(law, mech, s_values[j]);
      const double se = stats[j].stderr_mean();
      const double z = (stats[j].mean - exact) / se;
      ok = ok && std::abs(stats[j].mean - exact) <= tol.pgf_sigmas * se;
      if (std::abs(z) >= std::abs(worst)) worst = z;
      rows.push_back({{"s", s_values[j]}, {"empirical", stats[j].mean}, {"exact", exact}, {"stderr", se},
                      {"z", z}});
    }
    r.estimate = worst;
    r.statistic = worst;
    r.tolerance = tol.pgf_sigmas;
    r.pass = ok;
    r.details = {{"draws", draws}, {"rows", rows}};
    out.push_back(r);
  }
  return out;
}

std::vector<TestResult> harmonic_identity_tests(std::size_t fields, std::uint64_t seed, double identity_tol,
                                                double ixi_rel_tol) {
  double lp_err = 0.0, para_err = 0.0;
  for (std::size_t i = 0; i < fields; ++i) {
    const Grid grid(i % 2 == 0 ? 8 : 16, 4.0);
    CounterRng rng(seed, stream_id(StreamTag::property, 1000 + i));
    std::normal_distribution<double> normal;
    Field f(grid), g(grid);
    for (std::size_t s = 0; s < f.size(); ++s) {
      f[s] = normal(rng);
      g[s] = normal(rng);
    }
    Field sum(grid);
    for (const Field& b : lp_blocks(f)) sum += b;
    for (std::size_t s = 0; s < f.size(); ++s) lp_err = std::max(lp_err, std::abs(sum[s] - f[s]));
    const Paraproduct pp = paraproduct(f, g);
    const Field prod = pointwise_product(f, g);
    for (std::size_t s = 0; s < f.size(); ++s) {
      para_err = std::max(para_err, std::abs(pp.less[s] + pp.resonant[s] + pp.greater[s] - prod[s]));
    }
  }
  std::vector<TestResult> out;
  TestResult lp = make_result("lp_reconstruction", "absolute");
  lp.estimate = lp.statistic = lp_err;
  lp.tolerance = identity_tol;
  lp.pass = lp_err <= identity_tol;
  lp.details["fields"] = fields;
  out.push_back(lp);
  TestResult para = make_result("paraproduct_identity", "absolute");
  para.estimate = para.statistic = para_err;
  para.tolerance = identity_tol;
  para.pass = para_err <= identity_tol;
  para.details["fields"] = fields;
  out.push_back(para);

  // -Delta^n I xi against F^{-1}(chi F xi), in real space.
  double worst = 0.0;
  for (int n : {8, 16, 32}) {
    const Grid grid(n, 4.0);
    const EnvironmentField env = sample_environment(grid, Distribution::rademacher, seed + n);
    const Field lhs = apply_laplacian(env.I_xi) * -1.0;
    const Field rhs = apply_multiplier(env.xi, chi_multiplier(grid, {}));
    double e = 0.0;
    for (std::size_t s = 0; s < lhs.size(); ++s) e = std::max(e, std::abs(lhs[s] - rhs[s]));
    worst = std::max(worst, e / rhs.max_abs());
  }
  TestResult ixi = make_result("I_xi_equation", "relative");
  ixi.estimate = ixi.statistic = worst;
  ixi.tolerance = ixi_rel_tol;
  ixi.pass = worst <= ixi_rel_tol;
  out.push_back(ixi);
  return out;
}

int coupling_number(const OffspringLaw& law, int k_max, int n_max) {
  require(k_max >= 2 && k_max <= law.K(), "coupling_number: k_max must lie in [2, K]");
  const double beta = law.beta();
  const std::size_t len = static_cast<std::size_t>(k_max) + 1;
  // Site mechanism at xi > 0; xi < 0 always yields Z0 = 0 and is dominated by any N.
  std::vector<double> z(len, 0.0), a(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) a[k] = law.p(static_cast<std::int64_t>(k));
  z[0] = law.p(0) * (1.0 - beta);
  for (std::size_t k = 2; k < len; ++k) z[k] = 2.0 * a[k];
  std::vector<double> ccdf_z(len);
  double acc = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    ccdf_z[k] = 1.0 - acc;  // P[Z0 >= k]
    acc += z[k];
  }
  std::vector<double> s(len, 0.0);
  s[0] = 1.0;
  for (int N = 1; N <= n_max; ++N) {
    std::vector<double> next(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      if (s[i] == 0.0) continue;
      for (std::size_t j = 0; i + j < len; ++j) next[i + j] += s[i] * a[j];
    }
    s = std::move(next);
    bool ok = true;
    double cum = 0.0;
    for (std::size_t k = 0; k < len && ok; ++k) {
      ok = ccdf_z[k] <= (1.0 - cum) + 1e-13;
      cum += s[k];
    }
    if (ok) return N;
  }
  return -1;
}

TestResult coupling_test(const ExperimentSpec& spec, int N, const std::vector<double>& site_pairs, double alpha) {
  require(N >= 1, "coupling_test: N must be >= 1");
  require(!site_pairs.empty(), "coupling_test: no site-system samples");
  ExperimentSpec s = spec;
  s.mechanism = {MechanismKind::auxiliary, 0.0};
  s.replicas = spec.replicas * static_cast<std::size_t>(N);
  const EnvironmentField env = experiment_environment(s);
  const BranchingSystem sys(env, experiment_law(s), s.mechanism);
  const Field phi = experiment_phi(s, env.grid());
  const ReplicaPairs b = run_replicas(s, env, sys, {s.T}, {&phi}, StreamTag::auxiliary_replica, 1ull << 40);
  std::vector<double> sums;
  for (std::size_t g = 0; g < spec.replicas; ++g) {
    double total = 0.0;
    bool ok = true;
    for (int i = 0; i < N; ++i) {
      const std::size_t r = g * N + i;
      ok = ok && !b.exploded[r];
      total += b.values[0][0][r];
    }
    if (ok) sums.push_back(total);
  }
  std::vector<double> mu = site_pairs;
  std::sort(mu.begin(), mu.end());
  std::sort(sums.begin(), sums.end());
  std::vector<double> pooled = mu;
  pooled.insert(pooled.end(), sums.begin(), sums.end());
  std::sort(pooled.begin(), pooled.end());
  const double band = dkw_halfwidth(mu.size(), alpha) + dkw_halfwidth(sums.size(), alpha);
  double margin = std::numeric_limits<double>::infinity();
  json rows = json::array();
  for (int d = 1; d <= 9; ++d) {
    const double x = quantile_sorted(pooled, d / 10.0);
    const double f_mu = empirical_cdf(mu, x), f_sum = empirical_cdf(sums, x);
    margin = std::min(margin, f_mu - f_sum);
    rows.push_back({{"x", x}, {"F_site", f_mu}, {"F_aux_sum", f_sum}});
  }
  TestResult r = make_result("coupling_domination", "dkw");
  r.estimate = margin;
  r.reference = 0.0;
  r.tolerance = band;
  r.statistic = margin;
  r.pass = margin >= -band;
  r.details = {{"N", N}, {"alpha", alpha}, {"site_samples", mu.size()}, {"aux_samples", sums.size()},
               {"deciles", rows}, {"aux_batch", batch_json(b)}};
  flag_budget(r, b.exploded_count, b.replicas(), 0.01);
  return r;
}

TestResult convergence_study(const ExperimentSpec& spec, const std::vector<int>& n_list,
                             const std::vector<std::size_t>& replicas, Regime regime, const Tolerance& tol) {
  require(!n_list.empty() && n_list.size() == replicas.size(), "convergence_study: n_list and replicas differ");
  require(std::is_sorted(n_list.begin(), n_list.end()), "convergence_study: n_list must be increasing");
  if (regime == Regime::rho_eq_beta) {
    require(std::abs(spec.rho - spec.beta) < 1e-12, "convergence_study: rho_eq_beta needs rho = beta");
  } else {
    require(spec.rho < spec.beta, "convergence_study: rho_lt_beta needs rho < beta");
  }
  TestResult r = make_result(regime == Regime::rho_eq_beta ? "study_duality_rho_eq_beta" : "study_pam_rho_lt_beta",
                             regime == Regime::rho_eq_beta ? "3sigma+dt" : "trend");
  json rows = json::array();
  std::vector<double> gap, se;
  bool ok = true;
  std::size_t flagged = 0, total = 0;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    ExperimentSpec s = spec;
    s.n = n_list[i];
    s.replicas = replicas[i];
    const EnvironmentField env = experiment_environment(s);
    const Grid& grid = env.grid();
    const BranchingSystem sys(env, experiment_law(s), s.mechanism);
    const double eps = particle_mass(s.n, s.rho);
    const Field mu0 = experiment_initial(s, grid);
    const Field phi = experiment_phi(s, grid);
    const DualCoefficients dual = dual_coefficients(env, s.beta, eps, s.mechanism);
    const double ref_dual =
        std::exp(-pairing(mu0, nonlinear_solve(dual.potential, dual.B, s.beta, dual_initial(phi, eps), s.T, s.dt)
                                   .final_state()));
    // The particle rates carry the unrenormalized xi, so the linear prediction does too.
    const double ref_pam = std::exp(-pairing(mu0, pam_solve(env.xi, phi, s.T, s.dt).final_state()));
    const double ref_pam_e = std::exp(-pairing(mu0, pam_solve(env.xi_e, phi, s.T, s.dt).final_state()));
    const ReplicaPairs b = run_replicas(s, env, sys, {s.T}, {&phi}, StreamTag::replica);
    flagged += b.exploded_count;
    total += b.replicas();
    auto [m, e] = b.mean_of(0, 0, [](double x) { return std::exp(-x); });
    const double g_dual = std::abs(m - ref_dual), g_pam = std::abs(m - ref_pam);
    const double budget = tol.sigmas * e + tol.dt_multiple * s.dt;
    if (regime == Regime::rho_eq_beta) ok = ok && g_dual <= budget;
    gap.push_back(regime == Regime::rho_eq_beta ? g_dual : g_pam);
    se.push_back(e);
    rows.push_back({{"n", s.n},
                    {"eps", eps},
                    {"replicas", b.replicas()},
                    {"flagged", b.exploded_count},
                    {"laplace_mc", m},
                    {"stderr", e},
                    {"laplace_dual", ref_dual},
                    {"laplace_pam", ref_pam},
                    {"laplace_pam_renormalized", ref_pam_e},
                    {"c_n", env.c_n},
                    {"gap_dual", g_dual},
                    {"gap_pam", g_pam},
                    {"nonlinear_gap", std::abs(ref_dual - ref_pam)},
                    {"dual_within_budget", g_dual <= budget},
                    {"branchings", b.events.branchings},
                    {"max_particles", b.max_count},
                    {"seconds", b.seconds}});
  }
  double worst = -std::numeric_limits<double>::infinity();
  if (regime == Regime::rho_lt_beta) {
    for (std::size_t i = 0; i + 1 < gap.size(); ++i) {
      const double allowance = tol.sigmas * std::sqrt(se[i] * se[i] + se[i + 1] * se[i + 1]);
      worst = std::max(worst, gap[i + 1] - gap[i] - allowance);
      ok = ok && gap[i + 1] <= gap[i] + allowance;
    }
  }
  r.estimate = gap.back();
  r.reference = 0.0;
  r.stderr_ = se.back();
  r.statistic = regime == Regime::rho_lt_beta ? worst : gap.back() / std::max(se.back(), 1e-300);
  r.tolerance = regime == Regime::rho_eq_beta ? tol.sigmas * se.back() + tol.dt_multiple * spec.dt : 0.0;
  r.pass = ok;
  r.details = {{"regime", to_string(regime)}, {"rho", spec.rho}, {"beta", spec.beta}, {"rows", rows}};
  flag_budget(r, flagged, total, tol.max_exploded);
  return r;
}

namespace {

struct KappaFit {
  double kappa = 0.0;
  double stderr_ = 0.0;
  double mc = 0.0;
  double mc_stderr = 0.0;
  double laplace_dual = 0.0;
  bool bracketed = true;
};

KappaFit fit_kappa(const ExperimentSpec& s) {
  const EnvironmentField env = experiment_environment(s);
  const Grid& grid = env.grid();
  const BranchingSystem sys(env, experiment_law(s), s.mechanism);
  const double eps = particle_mass(s.n, s.rho);
  const Field mu0 = experiment_initial(s, grid);
  const Field phi = experiment_phi(s, grid);
  const Field w0 = dual_initial(phi, eps);
  const double scale = s.n * std::pow(eps, s.beta);
  auto laplace = [&](double kappa) {
    return std::exp(-pairing(mu0, nonlinear_solve(env.xi, Field(grid, kappa * scale), s.beta, w0, s.T, s.dt)
                                      .final_state()));
  };
  const DualCoefficients dual = dual_coefficients(env, s.beta, eps, s.mechanism);
  KappaFit fit;
  fit.laplace_dual =
      std::exp(-pairing(mu0, nonlinear_solve(dual.potential, dual.B, s.beta, w0, s.T, s.dt).final_state()));
  const ReplicaPairs b = run_replicas(s, env, sys, {s.T}, {&phi}, StreamTag::replica);
  std::tie(fit.mc, fit.mc_stderr) = b.mean_of(0, 0, [](double x) { return std::exp(-x); });
  // laplace() increases with kappa.
  double lo = 0.0, hi = 1.0;
  if (laplace(lo) >= fit.mc) {
    fit.bracketed = false;
    return fit;
  }
  while (laplace(hi) < fit.mc && hi < 1e4) hi *= 2.0;
  if (laplace(hi) < fit.mc) {
    fit.bracketed = false;
    fit.kappa = hi;
    return fit;
  }
  for (int it = 0; it < 50 && hi - lo > 1e-7 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (laplace(mid) < fit.mc ? lo : hi) = mid;
  }
  fit.kappa = 0.5 * (lo + hi);
  const double dk = 0.02 * std::max(fit.kappa, 1e-3);
  const double slope = (laplace(fit.kappa + dk) - laplace(std::max(0.0, fit.kappa - dk))) /
                       (fit.kappa + dk - std::max(0.0, fit.kappa - dk));
  fit.stderr_ = slope > 0.0 ? fit.mc_stderr / slope : std::numeric_limits<double>::infinity();
  return fit;
}

}  // namespace

TestResult mixed_fit_test(const ExperimentSpec& spec, double c0, double c1, double target, double rel_tol) {
  require(c1 > c0 && c0 >= 0.0, "mixed_fit_test: need 0 <= c0 < c1");
  std::vector<KappaFit> fits;
  json rows = json::array();
  for (double c : {c0, c1}) {
    ExperimentSpec s = spec;
    s.mechanism = {MechanismKind::mixed, c};
    fits.push_back(fit_kappa(s));
    const auto& f = fits.back();
    rows.push_back({{"c", c}, {"kappa", f.kappa}, {"kappa_stderr", f.stderr_}, {"laplace_mc", f.mc},
                    {"stderr", f.mc_stderr}, {"laplace_dual", f.laplace_dual}, {"bracketed", f.bracketed}});
  }
  TestResult r = make_result("mixed_kappa_ratio", "relative");
  const double ratio = fits[0].kappa > 0.0 ? fits[1].kappa / fits[0].kappa : 0.0;
  r.estimate = ratio;
  r.reference = target;
  r.stderr_ = ratio * std::hypot(fits[0].stderr_ / std::max(fits[0].kappa, 1e-300),
                                 fits[1].stderr_ / std::max(fits[1].kappa, 1e-300));
  r.tolerance = rel_tol * target;
  decide(r);
  r.pass = r.pass && fits[0].bracketed && fits[1].bracketed;
  r.details = {{"n", spec.n}, {"rho", spec.rho}, {"kappa_scale", "B = kappa n eps^beta"}, {"fits", rows}};
  return r;
}

}  // namespace brwre
