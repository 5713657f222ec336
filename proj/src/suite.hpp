#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "verify.hpp"

namespace brwre {

// Replica and sample budgets of a named suite.
struct SuiteBudget {
  std::size_t identity_replicas;
  std::size_t coupling_replicas;
  std::size_t exactness_draws;
  std::size_t tail_events;
  std::size_t inequality_points;
  std::size_t cluster_replicas;
  std::size_t fk_paths;
  std::size_t harmonic_fields;
  std::vector<int> n_multiples;  // refinement ladder n, 2n, ...
  std::vector<std::size_t> moment_replicas;
  std::vector<std::size_t> pam_replicas;
  std::size_t mixed_replicas;
};

SuiteBudget suite_budget(const std::string& suite);
const std::vector<std::string>& suite_test_names();

// Runs the selected tests (all when cfg.verify.tests is empty).
VerificationReport run_suite(const RunConfig& cfg, const std::string& suite);

}  // namespace brwre
