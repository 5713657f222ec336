#include <brwre/brwre.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json scalar_to_json(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "null" || s == "~" || s.empty()) return nullptr;
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  try {
    std::size_t used = 0;
    const long long i = std::stoll(s, &used);
    if (used == s.size()) return i;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  return s;
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      json j = json::object();
      for (const auto& kv : node) j[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return j;
    }
    case YAML::NodeType::Sequence: {
      json j = json::array();
      for (const auto& v : node) j.push_back(yaml_to_json(v));
      return j;
    }
    case YAML::NodeType::Scalar: return scalar_to_json(node);
    default: return nullptr;
  }
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  json j;
  try {
    j = is_json ? json::parse(text) : yaml_to_json(YAML::Load(text));
  } catch (const std::exception& e) {
    throw ConfigError("--config: cannot parse '" + path + "': " + e.what());
  }
  if (j.is_null()) j = json::object();
  if (!j.is_object()) throw ConfigError("--config: top level of '" + path + "' must be a mapping");
  return j;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::string> suite;
  std::optional<double> dt;
  std::optional<double> T;
  bool order_check = false;
  bool quiet = false;
};

int run(const std::string& subcommand, const Options& o) {
  json cfg = o.config.empty() ? json::object() : load_config(o.config);
  if (o.seed) cfg["simulation"]["seed"] = *o.seed;
  if (o.workers) cfg["simulation"]["workers"] = *o.workers;
  if (o.out) cfg["output"] = *o.out;
  if (o.suite) cfg["suite"] = *o.suite;
  if (o.dt) cfg["time"]["dt"] = *o.dt;
  if (o.T) cfg["time"]["T"] = *o.T;
  if (o.order_check) cfg["solve"]["order_check"] = true;
  if (cfg.contains("subcommand") && cfg["subcommand"].is_string() && cfg["subcommand"] != subcommand) {
    throw ConfigError("subcommand: config says '" + cfg["subcommand"].get<std::string>() + "', command line says '" +
                      subcommand + "'");
  }

  brwre_context* ctx = nullptr;
  brwre_status s = brwre_context_create(cfg.dump().c_str(), &ctx);
  if (s != BRWRE_OK) {
    std::cerr << "brwre: " << brwre_last_error() << '\n';
    return brwre_exit_code(s);
  }
  int verdict = BRWRE_EXIT_OK;
  s = brwre_run(ctx, subcommand.c_str(), &verdict);
  if (s != BRWRE_OK) {
    std::cerr << "brwre " << subcommand << ": " << brwre_last_error() << '\n';
    brwre_context_destroy(ctx);
    return brwre_exit_code(s);
  }
  if (!o.quiet) {
    std::cout << "output: " << brwre_last_output(ctx) << '\n' << brwre_last_summary(ctx) << '\n';
  }
  brwre_context_destroy(ctx);
  return verdict;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching random walks in a random lattice environment: environments, dual PDE solves,\n"
               "particle simulation and verification suites."};
  app.require_subcommand(1, 1);
  app.fallthrough();  // global flags may follow the subcommand
  app.footer(std::string("Exit codes: 0 ok, 1 test failure, 2 config error, 3 explosion budget exceeded, "
                         "4 other error.\n\nResolved defaults (every key may be set in --config):\n") +
             brwre_default_config());

  Options o;
  std::uint64_t seed = 0;
  std::string out, suite;
  int workers = 0;
  double dt = 0.0, T = 0.0;
  app.add_option("--config", o.config, "YAML or JSON run configuration (.json parsed as JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed of the simulation streams (simulation.seed, default 1)");
  auto* out_opt = app.add_option("--out", out, "output root; each command writes <out>/<command>/ (default out)");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads, 0 = all cores (default 0)");
  auto* suite_opt =
      app.add_option("--suite", suite, "replica budgets of verify and study (default quick)")->check(
          CLI::IsMember({"quick", "full"}));
  auto* dt_opt = app.add_option("--dt", dt, "solver step (time.dt, default 0.001)");
  auto* T_opt = app.add_option("--T", T, "horizon (time.T, default 0.25)");
  app.add_flag("--scheme-order-check", o.order_check, "solve: emit a step-halving self-convergence table");
  app.add_flag("-q,--quiet", o.quiet, "do not print the run summary");

  app.add_subcommand("gen-env", "sample the environment and write its field bundle");
  app.add_subcommand("solve", "solve the heat, linear (pam) or dual equation and write the trajectory");
  app.add_subcommand("simulate", "simulate particle replicas; writes snapshots, ledger and summaries");
  app.add_subcommand("verify", "run a verification suite; writes report.json and report.md");
  app.add_subcommand("study", "cross-n convergence study; writes convergence.csv and a report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : BRWRE_EXIT_CONFIG;
  }
  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out = out;
  if (*workers_opt) o.workers = workers;
  if (*suite_opt) o.suite = suite;
  if (*dt_opt) o.dt = dt;
  if (*T_opt) o.T = T;

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const ConfigError& e) {
    std::cerr << "brwre: " << e.what() << '\n';
    return BRWRE_EXIT_CONFIG;
  } catch (const std::exception& e) {
    std::cerr << "brwre: " << e.what() << '\n';
    return BRWRE_EXIT_OTHER;
  }
}
