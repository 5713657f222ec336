#include <doctest.h>

#include <string>

#include "config.hpp"
#include "errors.hpp"

using namespace brwre;
using nlohmann::json;

namespace {

// Message of the config error raised by `raw`, empty if it parses.
std::string config_error_of(const json& raw) {
  try {
    parse_run_config(raw);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
    return e.what();
  }
  return {};
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_CASE("defaults round-trip through the parser") {
  const json d = default_config();
  const RunConfig a = parse_run_config(json::object());
  const RunConfig b = parse_run_config(d);
  CHECK(a.resolved == d);
  CHECK(b.resolved == d);
  CHECK(a.spec.n == 8);
  CHECK(a.spec.beta == 0.5);
  CHECK(a.spec.rho == 0.5);
  CHECK(a.spec.T == 0.25);
  CHECK(a.suite == "quick");
}

TEST_CASE("values reach the experiment settings") {
  const RunConfig c = parse_run_config({{"grid", {{"n", 16}, {"L", 2.0}}},
                                        {"model", {{"beta", 0.8}, {"rho", 0.4}, {"mechanism", "mixed"}, {"c_mix", 1.5}}},
                                        {"time", {{"T", 0.5}, {"dt", 0.01}}},
                                        {"simulation", {{"engine", "lineage"}, {"obs_times", {0.1, 0.5}}}},
                                        {"environment", {{"dist", "truncated-gaussian"}, {"c_n_policy", "zero"}}}});
  CHECK(c.spec.n == 16);
  CHECK(c.spec.L == 2.0);
  CHECK(c.spec.beta == 0.8);
  CHECK(c.spec.rho == 0.4);
  CHECK(c.spec.mechanism.kind == MechanismKind::mixed);
  CHECK(c.spec.mechanism.c == 1.5);
  CHECK(c.spec.engine == Engine::lineage);
  CHECK(c.spec.cn_policy == CnPolicy::zero);
  CHECK(c.spec.dist == Distribution::truncated_gaussian);
  CHECK(c.simulate.obs_times == std::vector<double>{0.1, 0.5});
  // resolved form parses back to itself
  CHECK(parse_run_config(c.resolved).resolved == c.resolved);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(starts_with(config_error_of({{"grid", {{"m", 3}}}}), "grid.m"));
  CHECK(starts_with(config_error_of({{"bogus", 1}}), "bogus"));
}

TEST_CASE("errors name the offending field") {
  CHECK(starts_with(config_error_of({{"environment", {{"dist", "bogus"}}}}), "environment.dist:"));
  CHECK(starts_with(config_error_of({{"grid", {{"n", 0}}}}), "grid.n:"));
  CHECK(starts_with(config_error_of({{"grid", {{"n", "eight"}}}}), "grid.n:"));
  CHECK(starts_with(config_error_of({{"model", {{"beta", 1.2}}}}), "model.beta:"));
  CHECK(starts_with(config_error_of({{"model", {{"rho", 0.7}}}}), "model.rho:"));
  CHECK(starts_with(config_error_of({{"model", {{"K", 100}, {"K_inv", 200}}}}), "model.K_inv:"));
  CHECK(starts_with(config_error_of({{"model", {{"mechanism", "weird"}}}}), "model.mechanism:"));
  CHECK(starts_with(config_error_of({{"time", {{"dt", 1.0}}}}), "time.dt:"));
  CHECK(starts_with(config_error_of({{"simulation", {{"engine", "warp"}}}}), "simulation.engine:"));
  CHECK(starts_with(config_error_of({{"simulation", {{"replicas", 0}}}}), "simulation.replicas:"));
  CHECK(starts_with(config_error_of({{"verify", {{"theta", 0.5}}}}), "verify.theta:"));
  CHECK(starts_with(config_error_of({{"study", {{"regime", "both"}}}}), "study.regime:"));
  CHECK(starts_with(config_error_of({{"study", {{"n_list", {16, 8}}}}}), "study.n_list:"));
  CHECK(starts_with(config_error_of({{"grid", 3}}), "grid:"));
}

TEST_CASE("observation times must be increasing inside (0, T]") {
  CHECK(config_error_of({{"simulation", {{"obs_times", {0.1, 0.2}}}}}).empty());
  CHECK(starts_with(config_error_of({{"simulation", {{"obs_times", {0.2, 0.1}}}}}), "simulation.obs_times:"));
  CHECK(starts_with(config_error_of({{"simulation", {{"obs_times", {0.0}}}}}), "simulation.obs_times:"));
  CHECK(starts_with(config_error_of({{"simulation", {{"obs_times", {0.3}}}}}), "simulation.obs_times:"));
}
