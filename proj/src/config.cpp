#include "config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "errors.hpp"

namespace brwre {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  fail(ErrorCode::config, path + ": " + what);
}

// Typed reads from one config object; finish() rejects keys nobody asked for.
class Section {
public:
  Section(const json& root, std::string path) : path_(std::move(path)) {
    if (root.is_null()) return;
    if (!root.is_object()) config_error(path_, "expected a mapping");
    j_ = root;
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  double number(const char* key, double def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number()) config_error(at(key), "expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == std::floor(d) && std::abs(d) < 9.0e18) return static_cast<std::int64_t>(d);
    }
    config_error(at(key), "expected an integer");
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    config_error(at(key), "expected a non-negative integer");
  }

  bool boolean(const char* key, bool def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) config_error(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* key, std::string def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) config_error(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key, std::vector<double> def) {
    seen_.insert(key);
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_array()) config_error(at(key), "expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) config_error(at(key), "expected a list of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const char* key) {
    seen_.insert(key);
    if (!has(key)) return {};
    const json& v = j_.at(key);
    if (!v.is_array()) config_error(at(key), "expected a list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) config_error(at(key), "expected a list of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::array<double, 2> point(const char* key, std::array<double, 2> def) {
    auto v = numbers(key, {def[0], def[1]});
    if (v.size() != 2) config_error(at(key), "expected [x, y]");
    return {v[0], v[1]};
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) config_error(path_ + "." + k, "unknown key");
    }
  }

  std::string at(const char* key) const { return path_ + "." + key; }

private:
  std::string path_;
  json j_ = json::object();
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) config_error(path, what);
}

template <class F>
auto as_config(const std::string& path, F f) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind(path + ":", 0) == 0) throw;
    config_error(path, what);
  }
}

}  // namespace

RunConfig parse_run_config(const json& raw) {
  if (!raw.is_object() && !raw.is_null()) config_error("config", "expected a mapping at top level");
  const json root = raw.is_null() ? json::object() : raw;
  static const std::set<std::string> sections{"grid",       "environment", "model", "initial", "test_function",
                                              "time",       "simulation",  "solve", "verify",  "study",
                                              "suite",      "output",      "subcommand"};
  for (const auto& [k, v] : root.items()) {
    if (!sections.count(k)) config_error(k, "unknown section");
  }
  auto section = [&](const char* name) { return Section(root.contains(name) ? root.at(name) : json(), name); };

  RunConfig cfg;
  ExperimentSpec& s = cfg.spec;

  {
    Section g = section("grid");
    const auto n = g.integer("n", s.n);
    check(n >= 1 && n <= 4096, g.at("n"), "must lie in [1, 4096]");
    s.n = static_cast<int>(n);
    s.L = g.number("L", s.L);
    check(s.L > 0.0, g.at("L"), "must be > 0");
    as_config("grid", [&] { return Grid(s.n, s.L); });
    g.finish();
  }
  {
    Section e = section("environment");
    const std::string dist = e.string("dist", to_string(s.dist));
    s.dist = as_config(e.at("dist"), [&] { return parse_distribution(dist); });
    check(s.dist != Distribution::custom, e.at("dist"), "'custom' is only produced by environment bundles");
    s.env_seed = e.unsigned_integer("seed", s.env_seed);
    s.truncation = e.number("truncation", s.truncation);
    check(s.truncation > 0.5, e.at("truncation"), "must be > 0.5");
    if (e.has("constant")) s.env_constant = e.number("constant", 0.0);
    else e.number("constant", 0.0);
    check(s.dist != Distribution::constant || s.env_constant.has_value(), e.at("constant"),
          "required when dist is 'constant'");
    if (s.env_constant) check(std::isfinite(*s.env_constant), e.at("constant"), "must be finite");
    s.env_bundle = e.string("bundle", "");
    const std::string policy = e.string("c_n_policy", "computed");
    if (policy == "computed") s.cn_policy = CnPolicy::computed;
    else if (policy == "zero") s.cn_policy = CnPolicy::zero;
    else if (policy == "fixed") s.cn_policy = CnPolicy::fixed;
    else config_error(e.at("c_n_policy"), "expected computed | zero | fixed, got '" + policy + "'");
    s.cn_value = e.number("c_n_value", 0.0);
    const auto ens = e.integer("c_n_ensemble", 1);
    check(ens >= 1 && ens <= 10000, e.at("c_n_ensemble"), "must lie in [1, 10000]");
    s.cn_ensemble = static_cast<int>(ens);
    e.finish();
  }
  {
    Section m = section("model");
    s.beta = m.number("beta", s.beta);
    check(s.beta > 0.05 && s.beta < 0.95, m.at("beta"), "must lie in (0.05, 0.95)");
    s.rho = m.number("rho", s.beta);
    check(s.rho > 0.0 && s.rho <= s.beta, m.at("rho"), "must lie in (0, beta]");
    const std::string mech = m.string("mechanism", "site");
    s.mechanism.kind = as_config(m.at("mechanism"), [&] { return parse_mechanism(mech); });
    s.mechanism.c = m.number("c_mix", 0.0);
    check(s.mechanism.c >= 0.0, m.at("c_mix"), "must be >= 0");
    const auto K = m.integer("K", s.K);
    check(K >= 10 && K <= 10'000'000, m.at("K"), "must lie in [10, 1e7]");
    s.K = static_cast<int>(K);
    const auto K_inv = m.integer("K_inv", std::min<std::int64_t>(s.K_inv, K));
    check(K_inv >= 2 && K_inv <= K, m.at("K_inv"), "must lie in [2, K]");
    s.K_inv = static_cast<int>(K_inv);
    m.finish();
  }
  {
    Section i = section("initial");
    const std::string kind = i.string("kind", "uniform_square");
    const auto c = i.point("center", {s.initial.cx, s.initial.cy});
    s.initial.cx = c[0];
    s.initial.cy = c[1];
    s.initial.side = i.number("side", s.initial.side);
    s.initial.mass = i.number("mass", s.initial.mass);
    s.initial_file = i.string("file", "");
    if (kind == "uniform_square") s.initial.kind = InitialSpec::uniform_square;
    else if (kind == "point") s.initial.kind = InitialSpec::point;
    else if (kind == "file") check(!s.initial_file.empty(), i.at("file"), "required when kind is 'file'");
    else config_error(i.at("kind"), "expected uniform_square | point | file, got '" + kind + "'");
    if (kind != "file") s.initial_file.clear();
    check(s.initial.side > 0.0, i.at("side"), "must be > 0");
    check(s.initial.mass >= 0.0 && std::isfinite(s.initial.mass), i.at("mass"), "must be >= 0");
    i.finish();
  }
  {
    Section f = section("test_function");
    const std::string kind = f.string("kind", "bump");
    const auto c = f.point("center", {s.phi.cx, s.phi.cy});
    s.phi.cx = c[0];
    s.phi.cy = c[1];
    s.phi.width = f.number("width", s.phi.width);
    s.phi.height = f.number("height", s.phi.height);
    s.phi_file = f.string("file", "");
    if (kind == "file") check(!s.phi_file.empty(), f.at("file"), "required when kind is 'file'");
    else if (kind != "bump") config_error(f.at("kind"), "expected bump | file, got '" + kind + "'");
    if (kind != "file") s.phi_file.clear();
    check(s.phi.width > 0.0, f.at("width"), "must be > 0");
    check(s.phi.height >= 0.0, f.at("height"), "must be >= 0");
    f.finish();
  }
  {
    Section t = section("time");
    s.T = t.number("T", s.T);
    check(s.T > 0.0 && std::isfinite(s.T), t.at("T"), "must be > 0");
    s.dt = t.number("dt", s.dt);
    check(s.dt > 0.0 && s.dt <= s.T, t.at("dt"), "must lie in (0, T]");
    t.finish();
  }
  {
    Section m = section("simulation");
    s.replicas = m.unsigned_integer("replicas", s.replicas);
    check(s.replicas >= 1, m.at("replicas"), "must be >= 1");
    s.seed = m.unsigned_integer("seed", s.seed);
    s.cap = m.unsigned_integer("cap", s.cap);
    check(s.cap >= 1, m.at("cap"), "must be >= 1");
    s.lineage_cap = m.unsigned_integer("lineage_cap", s.lineage_cap);
    check(s.lineage_cap >= 1, m.at("lineage_cap"), "must be >= 1");
    const std::string engine = m.string("engine", to_string(s.engine));
    s.engine = as_config(m.at("engine"), [&] { return parse_engine(engine); });
    const auto workers = m.integer("workers", 0);
    check(workers >= 0 && workers <= 4096, m.at("workers"), "must lie in [0, 4096] (0: all cores)");
    s.workers = static_cast<int>(workers);
    cfg.simulate.obs_times = m.numbers("obs_times", {});
    auto& obs = cfg.simulate.obs_times;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      check(obs[k] > 0.0 && obs[k] <= s.T, m.at("obs_times"), "times must lie in (0, T]");
      check(k == 0 || obs[k] > obs[k - 1], m.at("obs_times"), "times must be increasing");
    }
    cfg.simulate.ledger = m.boolean("ledger", true);
    cfg.simulate.ledger_records = m.unsigned_integer("ledger_records", cfg.simulate.ledger_records);
    cfg.simulate.snapshot_replicas = m.unsigned_integer("snapshot_replicas", cfg.simulate.snapshot_replicas);
    m.finish();
  }
  {
    Section v = section("solve");
    cfg.solve.scheme = v.string("scheme", cfg.solve.scheme);
    check(cfg.solve.scheme == "heat" || cfg.solve.scheme == "pam" || cfg.solve.scheme == "dual", v.at("scheme"),
          "expected heat | pam | dual, got '" + cfg.solve.scheme + "'");
    const auto every = v.integer("save_every", 0);
    check(every >= 0, v.at("save_every"), "must be >= 0");
    cfg.solve.save_every = static_cast<int>(every);
    cfg.solve.order_check = v.boolean("order_check", false);
    v.finish();
  }
  {
    Section v = section("verify");
    cfg.verify.tests = v.strings("tests");
    cfg.verify.theta = v.number("theta", cfg.verify.theta);
    check(cfg.verify.theta >= 0.0 && cfg.verify.theta < s.beta, v.at("theta"), "must lie in [0, beta)");
    v.finish();
  }
  {
    Section st = section("study");
    const std::string regime = st.string("regime", to_string(cfg.study.regime));
    cfg.study.regime = as_config(st.at("regime"), [&] { return parse_regime(regime); });
    std::vector<double> ns = st.numbers("n_list", {8, 16, 32});
    check(!ns.empty(), st.at("n_list"), "must not be empty");
    cfg.study.n_list.clear();
    for (std::size_t k = 0; k < ns.size(); ++k) {
      check(ns[k] >= 1 && ns[k] == std::floor(ns[k]), st.at("n_list"), "entries must be positive integers");
      check(k == 0 || ns[k] > ns[k - 1], st.at("n_list"), "must be increasing");
      cfg.study.n_list.push_back(static_cast<int>(ns[k]));
      as_config(st.at("n_list"), [&] { return Grid(cfg.study.n_list.back(), s.L); });
    }
    for (double r : st.numbers("replicas", {})) {
      check(r >= 1 && r == std::floor(r), st.at("replicas"), "entries must be positive integers");
      cfg.study.replicas.push_back(static_cast<std::size_t>(r));
    }
    check(cfg.study.replicas.empty() || cfg.study.replicas.size() == cfg.study.n_list.size(), st.at("replicas"),
          "needs one entry per n_list entry");
    cfg.study.mixed_fit = st.boolean("mixed_fit", false);
    cfg.study.c0 = st.number("c0", 0.0);
    cfg.study.c1 = st.number("c1", 1.0);
    check(cfg.study.c0 >= 0.0 && cfg.study.c1 > cfg.study.c0, st.at("c1"), "need 0 <= c0 < c1");
    st.finish();
  }
  if (root.contains("suite")) {
    check(root.at("suite").is_string(), "suite", "expected quick | full");
    cfg.suite = root.at("suite").get<std::string>();
  }
  check(cfg.suite == "quick" || cfg.suite == "full", "suite", "expected quick | full, got '" + cfg.suite + "'");
  if (root.contains("output")) {
    check(root.at("output").is_string(), "output", "expected a path");
    cfg.output = root.at("output").get<std::string>();
  }
  if (root.contains("subcommand")) check(root.at("subcommand").is_string(), "subcommand", "expected a string");

  json r = s.to_json();
  r["simulation"]["workers"] = s.workers;
  r["simulation"]["obs_times"] = cfg.simulate.obs_times;
  r["simulation"]["ledger"] = cfg.simulate.ledger;
  r["simulation"]["ledger_records"] = cfg.simulate.ledger_records;
  r["simulation"]["snapshot_replicas"] = cfg.simulate.snapshot_replicas;
  r["solve"] = {{"scheme", cfg.solve.scheme}, {"save_every", cfg.solve.save_every},
                {"order_check", cfg.solve.order_check}};
  r["verify"] = {{"tests", cfg.verify.tests}, {"theta", cfg.verify.theta}};
  r["study"] = {{"regime", to_string(cfg.study.regime)}, {"n_list", cfg.study.n_list},
                {"replicas", cfg.study.replicas}, {"mixed_fit", cfg.study.mixed_fit},
                {"c0", cfg.study.c0}, {"c1", cfg.study.c1}};
  r["suite"] = cfg.suite;
  r["output"] = cfg.output;
  cfg.resolved = std::move(r);
  return cfg;
}

json default_config() { return parse_run_config(json::object()).resolved; }

}  // namespace brwre
