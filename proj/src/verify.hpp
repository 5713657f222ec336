#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "environment.hpp"
#include "model.hpp"
#include "offspring.hpp"
#include "particles.hpp"
#include "stats.hpp"

namespace brwre {

enum class Engine { gillespie, lineage };
std::string to_string(Engine e);
Engine parse_engine(std::string_view name);

// How the PAM-family solvers see the environment across refinements.
enum class CnPolicy { computed, zero, fixed };

struct ExperimentSpec {
  int n = 8;
  double L = 4.0;
  double beta = 0.5;
  double rho = 0.5;
  Distribution dist = Distribution::rademacher;
  std::uint64_t env_seed = 1;
  double truncation = 3.0;
  std::optional<double> env_constant;  // xi ≡ value instead of a random draw
  std::string env_bundle;              // environment bundle directory, overrides the draw
  CnPolicy cn_policy = CnPolicy::computed;
  double cn_value = 0.0;
  int cn_ensemble = 1;
  MechanismSpec mechanism;
  int K = OffspringLaw::kDefaultTable;
  int K_inv = OffspringLaw::kDefaultTable;
  InitialSpec initial;
  std::string initial_file;  // .fld of site masses, overrides `initial`
  BumpSpec phi;
  std::string phi_file;      // .fld test function, overrides `phi`
  double T = 0.25;
  double dt = 1e-3;
  std::size_t replicas = 20000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::size_t cap = 10'000'000;           // alive particles, event engine
  std::size_t lineage_cap = 100'000'000;  // particles ever created, lineage engine
  std::string diagnostic_dir;             // trajectory dump target when identities disagree
  Engine engine = Engine::gillespie;

  nlohmann::json to_json() const;
};

struct TestResult {
  std::string name;
  std::string policy;  // 3sigma | absolute | relative | trend | exact | count
  double estimate = 0.0;
  double reference = 0.0;
  double stderr_ = 0.0;
  double statistic = 0.0;  // z-score, residual or violation count
  double tolerance = 0.0;
  bool pass = false;
  bool skipped = false;
  bool explosion_budget_exceeded = false;
  nlohmann::json details = nlohmann::json::object();

  std::string verdict() const { return skipped ? "skipped" : (pass ? "pass" : "fail"); }
  nlohmann::json to_json() const;
};

struct VerificationReport {
  std::string suite;
  std::string config_hash;
  std::uint64_t seed = 0;
  double runtime_s = 0.0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<TestResult> tests;

  bool all_pass() const;
  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

// FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

// Environment of a spec, with c_n and xi_e = xi - c_n set per the c_n policy.
EnvironmentField experiment_environment(const ExperimentSpec& spec);
OffspringLaw experiment_law(const ExperimentSpec& spec);
Field experiment_initial(const ExperimentSpec& spec, const Grid& grid);
Field experiment_phi(const ExperimentSpec& spec, const Grid& grid);

// Pairings of independent replicas: values[obs][function][replica].
struct ReplicaPairs {
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<char> exploded;
  std::size_t exploded_count = 0;
  EventCounters events;
  std::uint64_t max_count = 0;
  double seconds = 0.0;

  std::size_t replicas() const { return exploded.size(); }
  // Mean and stderr over non-exploded replicas of f(values[obs][fn][r]).
  template <class F>
  std::pair<double, double> mean_of(std::size_t obs, std::size_t fn, F f) const {
    RunningStats s;
    const auto& v = values[obs][fn];
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (!exploded[r]) s.add(f(v[r]));
    }
    return {s.mean, s.stderr_mean()};
  }
};

ReplicaPairs run_replicas(const ExperimentSpec& spec, const EnvironmentField& env, const BranchingSystem& system,
                          const std::vector<double>& obs_times, const std::vector<const Field*>& functions,
                          StreamTag tag, std::uint64_t stream_offset = 0, JumpLedger* ledger = nullptr);

struct Tolerance {
  double sigmas = 3.0;
  double dt_multiple = 5.0;     // duality budget: sigmas * stderr + dt_multiple * dt
  double max_exploded = 0.01;   // fraction of flagged replicas that invalidates a test
};

// Site system at fixed n with the unrenormalized xi: Laplace duality, first
// moment and the martingale increment at T/2. The site pairings at T are
// returned for reuse by the coupling test.
struct SiteIdentities {
  TestResult duality;
  TestResult first_moment;
  TestResult martingale;
  std::vector<double> pairs_at_T;
  double seconds = 0.0;
};
SiteIdentities site_system_identities(const ExperimentSpec& spec, const Tolerance& tol = {});

// Auxiliary system: first moment against the heat semigroup, total-mass
// martingale, and its own Laplace duality (A = Delta, B = |xi| eps^beta/(1+beta)).
struct AuxiliaryIdentities {
  TestResult first_moment;
  TestResult mass;
  TestResult duality;
};
AuxiliaryIdentities auxiliary_system_identities(const ExperimentSpec& spec, const Tolerance& tol = {});

TestResult laplace_duality_test(const ExperimentSpec& spec, const Tolerance& tol = {});
TestResult first_moment_test(const ExperimentSpec& spec, const Tolerance& tol = {});

// E<mu_T,phi>^{1+theta} and E sup_s <mu_s,phi>^{1+theta} across n; the ratio
// max/min over n must stay inside [band_lo, band_hi].
std::vector<TestResult> moment_bound_test(const ExperimentSpec& spec, double theta, const std::vector<int>& n_list,
                                          const std::vector<std::size_t>& replicas, double band_lo = 0.5,
                                          double band_hi = 2.0, int obs_points = 8);

// Offspring sizes of `events` branchings at a xi > 0 site, streamed into a tally.
OffspringTally sampler_ledger(double beta, std::size_t events, std::uint64_t seed, int workers = 1);

// Weighted fit of log P[k > m] against log m over [m_lo, m_hi]; pass iff
// |slope + (1 + beta)| <= slope_tol.
TestResult offspring_tail_test(const OffspringTally& tally, double beta, double slope_tol = 0.1,
                               std::uint64_t min_events = 100000, double m_lo = 1e2, double m_hi = 1e4);

// Items 1-6 of the auxiliary inequalities, one result each, over `points`
// random domain points; `beta` bounds theta in item 5.
std::vector<TestResult> auxiliary_inequalities_test(std::size_t points, std::uint64_t seed, double beta);

// Poisson cluster Laplace formula on a ring of sites. A cluster is the
// offspring of one branching at x, each child stepping to a uniform ring
// neighbour; `deterministic` replaces it by the point mass at x.
struct ClusterToy {
  std::vector<double> intensity{0.5, 1.0, 2.0, 0.25};
  std::vector<double> phi{0.3, 1.0, 0.1, 0.6};
  std::vector<int> xi_sign{1, -1, 1, 1};
  bool deterministic = false;
};
double poisson_cluster_reference(const ClusterToy& toy, double beta);
TestResult poisson_cluster_test(const ClusterToy& toy, std::size_t replicas, std::uint64_t seed, double beta,
                                double sigmas = 3.0);

// Feynman-Kac estimate of T_t phi (potential xi - c_n) at the origin vs pam_solve.
TestResult feynman_kac_test(const ExperimentSpec& spec, std::size_t paths, double solver_dt, double sigmas = 3.0);

struct SolverTolerances {
  double heat_abs = 1e-12;
  double constant_potential_rel = 1e-8;
  double ode_abs = 1e-8;
  double order_target = 2.0;
  double order_tol = 0.2;
};
std::vector<TestResult> solver_correctness_tests(const SolverTolerances& tol, std::uint64_t seed);

struct OffspringTolerances {
  double table_rel = 1e-9;
  double criticality = 1e-10;
  double pgf_sigmas = 4.0;
};
std::vector<TestResult> offspring_exactness_tests(double beta, std::size_t draws, std::uint64_t seed,
                                                  const OffspringTolerances& tol = {});

// LP reconstruction, paraproduct completeness, and the I xi equation.
std::vector<TestResult> harmonic_identity_tests(std::size_t fields, std::uint64_t seed, double identity_tol = 1e-10,
                                                double ixi_rel_tol = 1e-8);

// Smallest N <= n_max with P[Z0 >= k] <= P[Z1 + ... + ZN >= k] for all
// k <= k_max and both signs of xi; -1 if none.
int coupling_number(const OffspringLaw& law, int k_max = 1000, int n_max = 16);

// Empirical CDF of <mu_T,phi> must lie above that of the N-fold auxiliary sum
// minus the two DKW half-widths, at the deciles of the pooled sample.
TestResult coupling_test(const ExperimentSpec& spec, int N, const std::vector<double>& site_pairs,
                         double alpha = 0.0027);

enum class Regime { rho_eq_beta, rho_lt_beta };
std::string to_string(Regime r);
Regime parse_regime(std::string_view name);

// Laplace functional across refinements. rho_eq_beta asserts the fixed-n
// duality at every n; rho_lt_beta asserts that the gap to exp(-<mu0,T_t phi>)
// is non-increasing within CI: gap_{i+1} <= gap_i + sigmas * sqrt(se_i^2 + se_{i+1}^2).
TestResult convergence_study(const ExperimentSpec& spec, const std::vector<int>& n_list,
                             const std::vector<std::size_t>& replicas, Regime regime, const Tolerance& tol = {});

// Fits a homogeneous nonlinear coefficient B = kappa n eps^beta to the
// simulated Laplace functional of the mixed system for each c; pass iff
// kappa(c1)/kappa(c0) is within rel_tol of target.
TestResult mixed_fit_test(const ExperimentSpec& spec, double c0, double c1, double target = 2.0,
                          double rel_tol = 0.25);

}  // namespace brwre
