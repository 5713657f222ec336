#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "errors.hpp"
#include "field_io.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "solvers.hpp"
#include "suite.hpp"

namespace brwre {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path prepare(const RunConfig& cfg, const fs::path& out, const char* name) {
  const fs::path dir = out / name;
  json resolved = cfg.resolved;
  resolved["subcommand"] = name;
  resolved["output"] = out.string();
  write_text_file(dir / "config.json", resolved.dump(2) + "\n");
  return dir;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int report_exit_code(const VerificationReport& report) {
  for (const auto& t : report.tests) {
    if (t.explosion_budget_exceeded) return exit_explosion;
  }
  return report.all_pass() ? exit_ok : exit_test_failure;
}

void write_report(const fs::path& dir, const VerificationReport& report) {
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text_file(dir / "report.md", report.to_markdown());
}

// CCDF points of the tail tests, the exact input of their weighted fit.
// p_k for k <= K, with the mass beyond the table as the last row.
void write_law_table(const fs::path& path, const OffspringLaw& law) {
  std::ostringstream csv;
  csv << "k,p_k\n";
  for (int k = 0; k <= law.K(); ++k) csv << k << ',' << fmt(law.p(k)) << '\n';
  csv << "tail," << fmt(law.tail_mass()) << '\n';
  write_text_file(path, csv.str());
}

void write_tail_points(const fs::path& dir, const VerificationReport& report) {
  for (const auto& t : report.tests) {
    if (t.name != "offspring_tail_exponent" || !t.details.contains("ccdf")) continue;
    std::ostringstream csv;
    csv << "m,exceeding,total\n";
    for (const auto& p : t.details["ccdf"]) {
      csv << p["m"].get<std::int64_t>() << ',' << p["exceeding"].get<std::uint64_t>() << ','
          << t.details["events"].get<std::uint64_t>() << '\n';
    }
    write_text_file(dir / "tail_ccdf.csv", csv.str());
  }
}

void write_study_rows(const fs::path& path, const TestResult& study) {
  static const char* cols[] = {"n",           "eps",        "replicas", "flagged",  "laplace_mc",
                               "stderr",      "laplace_dual", "laplace_pam", "gap_dual", "gap_pam",
                               "nonlinear_gap"};
  std::ostringstream csv;
  for (std::size_t c = 0; c < std::size(cols); ++c) csv << (c ? "," : "") << cols[c];
  csv << '\n';
  for (const auto& row : study.details["rows"]) {
    for (std::size_t c = 0; c < std::size(cols); ++c) {
      csv << (c ? "," : "") << fmt(row[cols[c]].get<double>());
    }
    csv << '\n';
  }
  write_text_file(path, csv.str());
}

Trajectory heat_trajectory(const Field& phi, double T, double dt, int save_every) {
  const StepPlan plan = plan_steps(T, dt);
  Trajectory traj;
  traj.scheme = "heat-exact";
  traj.dt = plan.h;
  traj.steps = plan.count;
  traj.times.push_back(0.0);
  traj.states.push_back(phi);
  for (std::size_t k = 1; k <= plan.count; ++k) {
    const bool keep = k == plan.count || (save_every > 0 && k % static_cast<std::size_t>(save_every) == 0);
    if (!keep) continue;
    const double t = static_cast<double>(k) * plan.h;
    traj.times.push_back(t);
    traj.states.push_back(heat_solve(phi, t));
  }
  return traj;
}

}  // namespace

CommandResult cmd_gen_env(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = prepare(cfg, out, "gen-env");
  const EnvironmentField env = experiment_environment(cfg.spec);
  write_environment_bundle(dir, env);
  CommandResult r;
  r.output = dir;
  r.summary = {{"c_n", env.c_n}, {"nu_hat", env.nu_hat}, {"sites", env.xi.size()}};
  return r;
}

CommandResult cmd_solve(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = prepare(cfg, out, "solve");
  const ExperimentSpec& s = cfg.spec;
  const EnvironmentField env = experiment_environment(s);
  const Grid& grid = env.grid();
  const Field phi = experiment_phi(s, grid);
  const Field mu0 = experiment_initial(s, grid);
  const double eps = particle_mass(s.n, s.rho);
  const DualCoefficients dual = dual_coefficients(env, s.beta, eps, s.mechanism);
  const Field w0 = dual_initial(phi, eps);

  auto solve = [&](double dt, int save_every) {
    if (cfg.solve.scheme == "heat") return heat_trajectory(phi, s.T, dt, save_every);
    if (cfg.solve.scheme == "pam") return pam_solve(env.xi_e, phi, s.T, dt, save_every);
    return nonlinear_solve(dual.potential, dual.B, s.beta, w0, s.T, dt, save_every);
  };
  const Trajectory traj = solve(s.dt, cfg.solve.save_every);
  write_trajectory(dir / "trajectory", traj, cfg.solve.scheme == "dual" ? "U" : "w");

  CommandResult r;
  r.output = dir;
  const double p = pairing(mu0, traj.final_state());
  r.summary = {{"scheme", cfg.solve.scheme}, {"pairing_mu0", p}, {"laplace", std::exp(-p)},
               {"c_n", env.c_n}, {"steps", traj.steps}, {"dt", traj.dt}};

  if (cfg.solve.order_check) {
    std::vector<double> dts{s.dt, s.dt / 2, s.dt / 4, s.dt / 8};
    std::vector<Field> finals;
    for (double dt : dts) finals.push_back(solve(dt, 0).final_state());
    std::ostringstream csv;
    csv << "dt,difference,order\n";
    json rows = json::array();
    double prev = 0.0;
    for (std::size_t k = 0; k + 1 < finals.size(); ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < finals[k].size(); ++i) d = std::max(d, std::abs(finals[k][i] - finals[k + 1][i]));
      const double order = k > 0 && d > 0.0 ? std::log2(prev / d) : std::nan("");
      csv << fmt(dts[k]) << ',' << fmt(d) << ',' << fmt(order) << '\n';
      rows.push_back({{"dt", dts[k]}, {"difference", d}, {"order", k > 0 ? json(order) : json(nullptr)}});
      prev = d;
    }
    write_text_file(dir / "order_check.csv", csv.str());
    r.summary["order_check"] = rows;
  }
  write_text_file(dir / "summary.json", r.summary.dump(2) + "\n");
  return r;
}

CommandResult cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = prepare(cfg, out, "simulate");
  const ExperimentSpec& s = cfg.spec;
  const EnvironmentField env = experiment_environment(s);
  const Grid& grid = env.grid();
  const BranchingSystem sys(env, experiment_law(s), s.mechanism);
  const Field phi = experiment_phi(s, grid);
  const Field mu0 = experiment_initial(s, grid);
  const double eps = particle_mass(s.n, s.rho);
  std::vector<double> obs = cfg.simulate.obs_times;
  if (obs.empty()) obs.push_back(s.T);

  struct Row {
    double t;
    std::uint64_t count;
    double mass;
    double pair_phi;
    double radius;
  };
  const std::size_t R = s.replicas;
  std::vector<std::vector<Row>> rows(R);
  std::vector<char> exploded(R, 0);
  std::vector<std::string> snapshots(std::min(R, cfg.simulate.snapshot_replicas));
  std::vector<EventCounters> events(R);
  JumpLedger ledger(cfg.simulate.ledger_records, &phi);
  const bool use_ledger = cfg.simulate.ledger;

  auto one = [&](std::size_t r) {
    CounterRng rng(s.seed, stream_id(StreamTag::replica, r));
    ParticleState state;
    try {
      state = init_poisson(grid, mu0, eps, rng, s.cap);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::explosion) throw;
      exploded[r] = 1;
      return;
    }
    const bool snap = r < snapshots.size();
    if (snap) snapshots[r] = snapshot_csv(state, true);
    if (s.engine == Engine::lineage && !snap) {
      const Field one_f(grid, 1.0);
      LineageOptions opt{obs, {&phi, &one_f}, s.lineage_cap, use_ledger ? &ledger : nullptr};
      const LineageResult res = simulate_lineages(state, sys, opt, rng);
      exploded[r] = res.exploded;
      for (std::size_t o = 0; o < obs.size(); ++o) {
        rows[r].push_back({obs[o], res.counts[o], res.pairings[o][1], res.pairings[o][0],
                           o + 1 == obs.size() ? res.support_radius : std::nan("")});
      }
      events[r] = res.events;
      return;
    }
    for (double t : obs) {
      advance(state, sys, t, rng, use_ledger ? &ledger : nullptr);
      if (state.exploded) {
        exploded[r] = 1;
        break;
      }
      rows[r].push_back({t, state.count(), state.mass(), pair(state, phi), support_radius(state)});
      if (snap) snapshots[r] += snapshot_csv(state, false);
    }
    events[r] = state.events;
  };
  if (use_ledger) {
    for (std::size_t r = 0; r < R; ++r) one(r);
  } else {
    parallel_for(R, s.workers, one);
  }

  std::ostringstream csv;
  csv << "replica,time,count,mass,pair_phi,support_radius,exploded\n";
  std::size_t flagged = 0;
  EventCounters total;
  for (std::size_t r = 0; r < R; ++r) {
    flagged += exploded[r];
    total.jumps += events[r].jumps;
    total.branchings += events[r].branchings;
    total.deaths += events[r].deaths;
    for (const Row& row : rows[r]) {
      csv << r << ',' << fmt(row.t) << ',' << row.count << ',' << fmt(row.mass) << ',' << fmt(row.pair_phi) << ','
          << fmt(row.radius) << ',' << int(exploded[r]) << '\n';
    }
  }
  write_text_file(dir / "replicas.csv", csv.str());
  for (std::size_t r = 0; r < snapshots.size(); ++r) {
    char name[64];
    std::snprintf(name, sizeof name, "snapshots/replica_%04zu.csv", r);
    write_text_file(dir / name, snapshots[r]);
  }

  CommandResult res;
  res.output = dir;
  json per_obs = json::array();
  for (std::size_t o = 0; o < obs.size(); ++o) {
    RunningStats mass, pphi;
    for (std::size_t r = 0; r < R; ++r) {
      if (exploded[r] || rows[r].size() <= o) continue;
      mass.add(rows[r][o].mass);
      pphi.add(rows[r][o].pair_phi);
    }
    per_obs.push_back({{"t", obs[o]}, {"mass_mean", mass.mean}, {"mass_stderr", mass.stderr_mean()},
                       {"pair_phi_mean", pphi.mean}, {"pair_phi_stderr", pphi.stderr_mean()}});
  }
  res.summary = {{"replicas", R},
                 {"flagged", flagged},
                 {"eps", eps},
                 {"engine", to_string(s.engine)},
                 {"events", {{"jumps", total.jumps}, {"branchings", total.branchings}, {"deaths", total.deaths}}},
                 {"observations", per_obs}};
  write_law_table(dir / "law_table.csv", sys.law());
  if (use_ledger) {
    write_text_file(dir / "ledger.csv", ledger.to_csv());
    std::ostringstream tally;
    tally << "k,count\n";
    for (const auto& [k, c] : ledger.tally_positive().entries()) tally << k << ',' << c << '\n';
    write_text_file(dir / "offspring_tally.csv", tally.str());
    const TestResult tail = offspring_tail_test(ledger.tally_positive(), s.beta);
    res.summary["ledger"] = {{"events", ledger.events()},
                             {"records", ledger.records().size()},
                             {"truncated", ledger.truncated()},
                             {"tail", tail.to_json()}};
  }
  write_text_file(dir / "summary.json", res.summary.dump(2) + "\n");
  if (static_cast<double>(flagged) > 0.01 * static_cast<double>(R)) res.exit_code = exit_explosion;
  return res;
}

CommandResult cmd_verify(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = prepare(cfg, out, "verify");
  const VerificationReport report = run_suite(cfg, cfg.suite);
  write_report(dir, report);
  write_tail_points(dir, report);
  write_law_table(dir / "law_table.csv", experiment_law(cfg.spec));
  for (const auto& t : report.tests) {
    if (t.name == "study_pam_rho_lt_beta") write_study_rows(dir / "convergence.csv", t);
  }
  CommandResult r;
  r.output = dir;
  r.exit_code = report_exit_code(report);
  r.summary = {{"suite", report.suite}, {"config_hash", report.config_hash}, {"passed", report.all_pass()},
               {"tests", report.tests.size()}, {"runtime_s", report.runtime_s}};
  return r;
}

CommandResult cmd_study(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = prepare(cfg, out, "study");
  const auto t0 = std::chrono::steady_clock::now();
  const SuiteBudget budget = suite_budget(cfg.suite);
  std::vector<std::size_t> replicas = cfg.study.replicas;
  if (replicas.empty()) {
    const auto& table = cfg.study.regime == Regime::rho_lt_beta ? budget.pam_replicas : budget.moment_replicas;
    for (std::size_t i = 0; i < cfg.study.n_list.size(); ++i) replicas.push_back(table[std::min(i, table.size() - 1)]);
  }
  ExperimentSpec s = cfg.spec;
  const bool eq = cfg.study.regime == Regime::rho_eq_beta;
  if (eq ? std::abs(s.rho - s.beta) >= 1e-12 : s.rho >= s.beta) {
    fail(ErrorCode::config, std::string("model.rho: study.regime ") + to_string(cfg.study.regime) +
                                (eq ? " needs rho = beta" : " needs rho < beta"));
  }
  VerificationReport report;
  report.suite = "study";
  report.config = cfg.resolved;
  report.config_hash = config_hash(report.config);
  report.seed = s.seed;
  report.tests.push_back(convergence_study(s, cfg.study.n_list, replicas, cfg.study.regime));
  write_study_rows(dir / "convergence.csv", report.tests.back());
  if (cfg.study.mixed_fit) {
    ExperimentSpec m = s;
    m.rho = m.beta;
    m.replicas = replicas.front();
    report.tests.push_back(mixed_fit_test(m, cfg.study.c0, cfg.study.c1));
  }
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_report(dir, report);
  CommandResult r;
  r.output = dir;
  r.exit_code = report_exit_code(report);
  r.summary = {{"config_hash", report.config_hash}, {"passed", report.all_pass()}, {"runtime_s", report.runtime_s}};
  return r;
}

CommandResult run_command(const std::string& name, const RunConfig& cfg, const fs::path& out) {
  if (name == "gen-env") return cmd_gen_env(cfg, out);
  if (name == "solve") return cmd_solve(cfg, out);
  if (name == "simulate") return cmd_simulate(cfg, out);
  if (name == "verify") return cmd_verify(cfg, out);
  if (name == "study") return cmd_study(cfg, out);
  fail(ErrorCode::invalid_argument, "unknown subcommand '" + name + "'");
}

}  // namespace brwre
