#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "verify.hpp"

namespace brwre {

struct SolveOptions {
  std::string scheme = "dual";  // heat | pam | dual
  int save_every = 0;
  bool order_check = false;
};

struct SimulateOptions {
  std::vector<double> obs_times;  // empty: T only
  bool ledger = true;
  std::size_t ledger_records = 1'000'000;
  std::size_t snapshot_replicas = 1;
};

struct VerifyOptions {
  std::vector<std::string> tests;  // empty: every test of the suite
  double theta = 0.25;
};

struct StudyOptions {
  Regime regime = Regime::rho_lt_beta;
  std::vector<int> n_list{8, 16, 32};
  std::vector<std::size_t> replicas;  // empty: suite budget
  bool mixed_fit = false;
  double c0 = 0.0;
  double c1 = 1.0;
};

// Parsed and validated run configuration. `resolved` holds every knob with
// defaults filled in and is what gets written next to outputs and hashed.
struct RunConfig {
  ExperimentSpec spec;
  SolveOptions solve;
  SimulateOptions simulate;
  VerifyOptions verify;
  StudyOptions study;
  std::string suite = "quick";
  std::string output = "out";
  nlohmann::json resolved;
};

// Unknown keys and out-of-range values raise Error(config) naming the field.
RunConfig parse_run_config(const nlohmann::json& raw);
nlohmann::json default_config();

}  // namespace brwre
