#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include <json.hpp>

#include "config.hpp"

namespace brwre {

// Process exit codes of the subcommands.
enum ExitCode : int {
  exit_ok = 0,
  exit_test_failure = 1,
  exit_config_error = 2,
  exit_explosion = 3,
  exit_other_error = 4,
};

struct CommandResult {
  int exit_code = exit_ok;
  std::filesystem::path output;
  nlohmann::json summary = nlohmann::json::object();
};

// Each subcommand writes into <out>/<name>/ and refuses to overwrite there.
// The resolved config is written first as config.json.
CommandResult cmd_gen_env(const RunConfig& cfg, const std::filesystem::path& out);
CommandResult cmd_solve(const RunConfig& cfg, const std::filesystem::path& out);
CommandResult cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out);
CommandResult cmd_verify(const RunConfig& cfg, const std::filesystem::path& out);
CommandResult cmd_study(const RunConfig& cfg, const std::filesystem::path& out);

CommandResult run_command(const std::string& name, const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace brwre
