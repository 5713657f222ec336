// Acceptance run: one PASS/FAIL line per criterion, full budgets, single
// process. Exit status 0 iff every line passes.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "solvers.hpp"
#include "verify.hpp"

using namespace brwre;

namespace {

// Pinned budgets and tolerances.
constexpr std::size_t kReplicas = 20'000;       // duality, first moments, aux mass
constexpr double kSigmas = 3.0;
constexpr double kDtMultiple = 5.0;              // duality: 3 stderr + 5 dt
constexpr std::size_t kExactnessDraws = 1'000'000;
constexpr double kTableRel = 1e-9;
constexpr double kCriticality = 1e-10;
constexpr double kPgfSigmas = 4.0;
constexpr std::size_t kTailEvents05 = 20'000'000;
constexpr std::size_t kTailEvents08 = 100'000'000;
constexpr double kTailSlopeTol = 0.1;
constexpr std::size_t kFkPaths = 100'000;
constexpr std::size_t kInequalityPoints = 100'000;
constexpr std::size_t kHarmonicFields = 100;
constexpr double kHarmonicTol = 1e-10;
constexpr double kIxiRel = 1e-8;
constexpr std::size_t kClusterReplicas = 100'000;
const std::vector<int> kPamLadder{8, 16, 32};
const std::vector<std::size_t> kPamReplicas{4000, 200, 12};
constexpr double kDkwAlpha = 0.0027;

ExperimentSpec base_spec() {
  ExperimentSpec s;
  s.n = 8;
  s.L = 4.0;
  s.beta = 0.5;
  s.rho = 0.5;
  s.dist = Distribution::rademacher;
  s.env_seed = 1;
  s.initial = InitialSpec{InitialSpec::uniform_square, 0.0, 0.0, 1.0, 1.0};
  s.phi = BumpSpec{0.0, 0.0, 1.0, 1.0};
  s.T = 0.25;
  s.dt = 1e-3;
  s.replicas = kReplicas;
  s.seed = 1;
  s.workers = 0;
  return s;
}

struct Line {
  int id;
  std::string title;
  bool pass;
  std::string detail;
};

std::string describe(const TestResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s=%s est %.6g ref %.6g tol %.3g", r.name.c_str(), r.verdict().c_str(), r.estimate,
                r.reference, r.tolerance);
  return buf;
}

Line combine(int id, std::string title, const std::vector<TestResult>& rs) {
  Line l{id, std::move(title), !rs.empty(), ""};
  for (const auto& r : rs) {
    l.pass = l.pass && r.pass && !r.skipped;
    if (!l.detail.empty()) l.detail += "; ";
    l.detail += describe(r);
  }
  return l;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentSpec spec = base_spec();
  const Tolerance tol{kSigmas, kDtMultiple, 0.01};
  std::vector<Line> lines;
  auto stage = [&](const char* what) { std::fprintf(stderr, "[%7.1fs] %s\n", since(t0), what); };

  stage("site and auxiliary identities");
  SiteIdentities site = site_system_identities(spec, tol);
  const AuxiliaryIdentities aux = auxiliary_system_identities(spec, tol);
  lines.push_back(combine(1, "duality at fixed n", {site.duality}));
  lines.push_back(combine(2, "first-moment semigroup identity", {site.first_moment, aux.first_moment}));
  lines.push_back(combine(3, "critical total-mass conservation", {aux.mass}));

  stage("offspring law");
  {
    OffspringTolerances ot;
    ot.table_rel = kTableRel;
    ot.criticality = kCriticality;
    ot.pgf_sigmas = kPgfSigmas;
    lines.push_back(combine(4, "offspring-law exactness", offspring_exactness_tests(0.5, kExactnessDraws, 1, ot)));
  }
  stage("tail exponent");
  lines.push_back(combine(5, "tail exponent",
                          {offspring_tail_test(sampler_ledger(0.5, kTailEvents05, 1, 0), 0.5, kTailSlopeTol),
                           offspring_tail_test(sampler_ledger(0.8, kTailEvents08, 1, 0), 0.8, kTailSlopeTol)}));

  stage("solvers");
  std::vector<TestResult> solver = solver_correctness_tests(SolverTolerances{}, spec.env_seed);

  stage("feynman-kac");
  lines.push_back(combine(7, "feynman-kac cross-check", {feynman_kac_test(spec, kFkPaths, 0.1 * spec.dt, kSigmas)}));

  stage("auxiliary inequalities");
  lines.push_back(combine(8, "auxiliary inequalities", auxiliary_inequalities_test(kInequalityPoints, 1, spec.beta)));

  stage("harmonic identities");
  lines.push_back(combine(9, "paraproduct, LP reconstruction, I xi",
                          harmonic_identity_tests(kHarmonicFields, 1, kHarmonicTol, kIxiRel)));

  stage("poisson cluster");
  lines.push_back(combine(10, "poisson cluster formula", {poisson_cluster_test(ClusterToy{}, kClusterReplicas, 1, 0.5, kSigmas)}));

  stage("pam regime study");
  {
    ExperimentSpec s = spec;
    s.rho = 0.25;
    s.engine = Engine::lineage;
    lines.push_back(combine(11, "pam regime trend", {convergence_study(s, kPamLadder, kPamReplicas, Regime::rho_lt_beta, tol)}));
  }

  stage("coupling");
  {
    const int N = coupling_number(experiment_law(spec));
    if (N < 0) {
      lines.push_back({12, "coupling domination", false, "no N found by the single-event search"});
    } else {
      Line l = combine(12, "coupling domination", {coupling_test(spec, N, site.pairs_at_T, kDkwAlpha)});
      l.detail += "; N=" + std::to_string(N);
      lines.push_back(l);
    }
  }

  // positivity is counted over every solver call above
  TestResult pos;
  pos.name = "positivity_violations_all";
  pos.policy = "count";
  pos.estimate = static_cast<double>(positivity_violations());
  pos.pass = positivity_violations() == 0;
  solver.push_back(pos);
  lines.push_back(combine(6, "solver correctness", solver));

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  int failed = 0;
  for (const auto& l : lines) {
    std::printf("%s  %2d  %-38s %s\n", l.pass ? "PASS" : "FAIL", l.id, l.title.c_str(), l.detail.c_str());
    failed += !l.pass;
  }
  std::printf("%d/%zu criteria pass, %.1f s\n", static_cast<int>(lines.size()) - failed, lines.size(), since(t0));
  return failed == 0 ? 0 : 1;
}
