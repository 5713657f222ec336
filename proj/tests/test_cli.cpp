#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / ("brwre_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const fs::path log = scratch() / "last.log";
  const std::string cmd = std::string("\"") + BRWRE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, buf.str()};
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("help lists the resolved defaults") {
  const Run r = cli("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("gen-env") != std::string::npos);
  CHECK(r.out.find("Exit codes") != std::string::npos);
  CHECK(r.out.find("\"beta\": 0.5") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("gen-env --suite huge").code == 2);
  CHECK(cli("gen-env --config " + (scratch() / "missing.yaml").string()).code == 2);
}

TEST_CASE("gen-env from a yaml config") {
  const fs::path cfg = write_file("env.yaml", "grid:\n  n: 4\nenvironment:\n  seed: 7\n  dist: \"rademacher\"\n");
  const fs::path out = scratch() / "genenv";
  const Run r = cli("gen-env --config " + cfg.string() + " --out " + out.string() + " -q");
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "gen-env" / "xi.fld"));
  const json c = read_json(out / "gen-env" / "config.json");
  CHECK(c["grid"]["n"] == 4);
  CHECK(c["environment"]["seed"] == 7);
  CHECK(c["subcommand"] == "gen-env");

  // refusing to overwrite an existing bundle is an io error
  CHECK(cli("gen-env --config " + cfg.string() + " --out " + out.string() + " -q").code == 4);
}

TEST_CASE("invalid config values exit with 2 and name the field") {
  const fs::path cfg = write_file("bad.yaml", "grid:\n  n: 0\n");
  const Run r = cli("gen-env --config " + cfg.string() + " --out " + (scratch() / "bad").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("grid.n") != std::string::npos);

  const fs::path other = write_file("other.json", "{\"subcommand\": \"solve\"}");
  CHECK(cli("gen-env --config " + other.string() + " --out " + (scratch() / "bad2").string()).code == 2);
}

TEST_CASE("solve writes a trajectory and an order table") {
  const fs::path out = scratch() / "solve";
  const fs::path cfg = write_file("solve.yaml", "grid:\n  n: 4\nsolve:\n  scheme: pam\n  save_every: 10\n");
  const Run r = cli("solve --config " + cfg.string() + " --out " + out.string() + " --T 0.05 --dt 0.005 "
                    "--scheme-order-check -q");
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "solve" / "summary.json"));
  CHECK(fs::exists(out / "solve" / "order_check.csv"));
  CHECK(fs::is_directory(out / "solve" / "trajectory"));
}

TEST_CASE("simulate flags an exceeded explosion budget with 3") {
  const fs::path out = scratch() / "boom";
  const fs::path cfg =
      write_file("boom.yaml", "grid:\n  n: 4\nsimulation:\n  replicas: 20\n  cap: 2\n  ledger: false\n  workers: 1\n");
  const Run r = cli("simulate --config " + cfg.string() + " --out " + out.string() + " -q");
  CHECK(r.code == 3);
  CHECK(fs::exists(out / "simulate" / "replicas.csv"));
}

TEST_CASE("simulate writes its outputs") {
  const fs::path out = scratch() / "sim";
  const fs::path cfg = write_file("sim.yaml",
                                  "grid:\n  n: 4\ntime:\n  T: 0.1\nsimulation:\n  replicas: 50\n  workers: 1\n"
                                  "  obs_times: [0.05, 0.1]\n");
  const Run r = cli("simulate --config " + cfg.string() + " --out " + out.string() + " -q");
  CHECK(r.code == 0);
  for (const char* f : {"replicas.csv", "ledger.csv", "offspring_tally.csv", "law_table.csv", "summary.json"}) {
    CHECK(fs::exists(out / "simulate" / f));
  }
  CHECK(fs::exists(out / "simulate" / "snapshots" / "replica_0000.csv"));
}

TEST_CASE("verify exits 0 on pass and 1 on a failed tolerance") {
  const fs::path pass_cfg = write_file("pass.yaml", "verify:\n  tests: [harmonic]\n");
  const fs::path out = scratch() / "vpass";
  CHECK(cli("verify --config " + pass_cfg.string() + " --out " + out.string() + " -q").code == 0);
  const json rep = read_json(out / "verify" / "report.json");
  CHECK(rep["config_hash"].get<std::string>().size() == 16);
  CHECK(fs::exists(out / "verify" / "report.md"));

  // item 5 of the auxiliary inequalities has counterexamples at negative exponents
  const fs::path fail_cfg = write_file("fail.yaml", "verify:\n  tests: [aux_inequalities]\n");
  CHECK(cli("verify --config " + fail_cfg.string() + " --out " + (scratch() / "vfail").string() + " -q").code == 1);
}

TEST_CASE("study writes the convergence table") {
  const fs::path out = scratch() / "study";
  const fs::path cfg = write_file("study.yaml",
                                  "model:\n  rho: 0.25\nsimulation:\n  engine: lineage\n  workers: 1\n"
                                  "study:\n  n_list: [4, 8]\n  replicas: [200, 20]\n");
  const Run r = cli("study --config " + cfg.string() + " --out " + out.string() + " -q");
  CHECK(r.code == 0);  // seeded, so the verdict is reproducible
  CHECK(fs::exists(out / "study" / "convergence.csv"));
  CHECK(fs::exists(out / "study" / "report.json"));

  const fs::path mismatch = write_file("mismatch.yaml", "study:\n  regime: rho_lt_beta\n");
  CHECK(cli("study --config " + mismatch.string() + " --out " + (scratch() / "study2").string()).code == 2);
}
