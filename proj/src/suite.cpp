#include "suite.hpp"

#include <algorithm>
#include <chrono>

#include "errors.hpp"
#include "solvers.hpp"

namespace brwre {

SuiteBudget suite_budget(const std::string& suite) {
  if (suite == "quick") {
    return {4000, 2000, 200'000, 20'000'000, 20'000, 20'000, 20'000, 20, {1, 2}, {400, 40}, {1000, 40}, 4000};
  }
  if (suite == "full") {
    return {20'000,  20'000,  1'000'000, 20'000'000,    100'000,
            100'000, 100'000, 100,       {1, 2, 4},     {2000, 200, 12},
            {4000, 200, 12},  20'000};
  }
  fail(ErrorCode::config, "suite: expected quick | full, got '" + suite + "'");
}

const std::vector<std::string>& suite_test_names() {
  static const std::vector<std::string> names{
      "identities",  "offspring_exactness", "offspring_tail", "solvers",  "feynman_kac",  "aux_inequalities",
      "harmonic",    "poisson_cluster",     "coupling",       "moment_bound", "pam_regime", "mixed_fit"};
  return names;
}

VerificationReport run_suite(const RunConfig& cfg, const std::string& suite) {
  const auto t0 = std::chrono::steady_clock::now();
  const SuiteBudget b = suite_budget(suite);
  std::vector<std::string> tests = cfg.verify.tests;
  const auto& known = suite_test_names();
  if (tests.empty()) tests = known;
  for (const auto& t : tests) {
    if (std::find(known.begin(), known.end(), t) == known.end()) {
      fail(ErrorCode::config, "verify.tests: unknown test '" + t + "'");
    }
  }
  auto wanted = [&](const char* name) { return std::find(tests.begin(), tests.end(), name) != tests.end(); };

  VerificationReport report;
  report.suite = suite;
  report.config = cfg.resolved;
  report.config["suite"] = suite;
  report.config_hash = config_hash(report.config);
  report.seed = cfg.spec.seed;
  auto add = [&](TestResult r) { report.tests.push_back(std::move(r)); };
  auto add_all = [&](std::vector<TestResult> rs) {
    for (auto& r : rs) add(std::move(r));
  };

  ExperimentSpec fixed = cfg.spec;
  fixed.replicas = b.identity_replicas;
  std::vector<double> site_pairs;
  if (wanted("identities") || wanted("coupling")) {
    ExperimentSpec s = fixed;
    if (s.mechanism.kind == MechanismKind::auxiliary) s.mechanism = {};
    SiteIdentities site = site_system_identities(s);
    if (wanted("identities")) {
      add(site.duality);
      add(site.first_moment);
      add(site.martingale);
      AuxiliaryIdentities aux = auxiliary_system_identities(s);
      add(aux.first_moment);
      add(aux.mass);
      add(aux.duality);
    }
    site_pairs = std::move(site.pairs_at_T);
  }
  if (wanted("coupling")) {
    ExperimentSpec s = fixed;
    s.replicas = std::min(b.coupling_replicas, site_pairs.size());
    site_pairs.resize(s.replicas);
    const int N = coupling_number(experiment_law(s));
    TestResult r;
    if (N < 0) {
      r.name = "coupling_domination";
      r.policy = "dkw";
      r.details["error"] = "no N found by the single-event search";
    } else {
      r = coupling_test(s, N, site_pairs);
    }
    add(r);
  }
  if (wanted("offspring_exactness")) add_all(offspring_exactness_tests(cfg.spec.beta, b.exactness_draws, cfg.spec.seed));
  if (wanted("offspring_tail")) {
    add(offspring_tail_test(sampler_ledger(cfg.spec.beta, b.tail_events, cfg.spec.seed, cfg.spec.workers),
                            cfg.spec.beta));
  }
  if (wanted("solvers")) add_all(solver_correctness_tests({}, cfg.spec.env_seed));
  if (wanted("feynman_kac")) add(feynman_kac_test(cfg.spec, b.fk_paths, 0.1 * cfg.spec.dt));
  if (wanted("aux_inequalities")) add_all(auxiliary_inequalities_test(b.inequality_points, cfg.spec.seed, cfg.spec.beta));
  if (wanted("harmonic")) add_all(harmonic_identity_tests(b.harmonic_fields, cfg.spec.seed));
  if (wanted("poisson_cluster")) add(poisson_cluster_test({}, b.cluster_replicas, cfg.spec.seed, cfg.spec.beta));

  std::vector<int> ladder;
  for (int m : b.n_multiples) ladder.push_back(cfg.spec.n * m);
  if (wanted("moment_bound")) {
    ExperimentSpec s = cfg.spec;
    s.engine = Engine::lineage;
    add_all(moment_bound_test(s, cfg.verify.theta, ladder, b.moment_replicas));
  }
  if (wanted("pam_regime")) {
    ExperimentSpec s = cfg.spec;
    s.engine = Engine::lineage;
    s.rho = 0.5 * s.beta;
    add(convergence_study(s, ladder, b.pam_replicas, Regime::rho_lt_beta));
  }
  if (wanted("mixed_fit")) {
    ExperimentSpec s = cfg.spec;
    s.engine = Engine::lineage;
    s.rho = s.beta;
    s.replicas = b.mixed_replicas;
    add(mixed_fit_test(s, 0.0, 1.0));
  }
  // Checked last so that it covers every solver call above.
  TestResult pos;
  pos.name = "positivity_violations_suite";
  pos.policy = "count";
  pos.estimate = pos.statistic = static_cast<double>(positivity_violations());
  pos.pass = positivity_violations() == 0;
  add(pos);
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace brwre
