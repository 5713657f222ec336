#include <brwre/brwre.h>

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "offspring.hpp"
#include "verify.hpp"

using nlohmann::json;

struct brwre_context {
  json raw = json::object();
  brwre::RunConfig cfg;
  std::string config_text;
  std::string summary = "{}";
  std::string output;
};

struct brwre_env {
  brwre::EnvironmentField env;
};

struct brwre_law {
  brwre::OffspringLaw law;
};

namespace {

thread_local std::string last_error;
thread_local std::string scratch;

brwre_status status_of(brwre::ErrorCode code) {
  switch (code) {
    case brwre::ErrorCode::invalid_argument: return BRWRE_ERR_INVALID_ARGUMENT;
    case brwre::ErrorCode::config: return BRWRE_ERR_CONFIG;
    case brwre::ErrorCode::io: return BRWRE_ERR_IO;
    case brwre::ErrorCode::numeric: return BRWRE_ERR_NUMERIC;
    case brwre::ErrorCode::explosion: return BRWRE_ERR_EXPLOSION;
    case brwre::ErrorCode::internal: return BRWRE_ERR_INTERNAL;
  }
  return BRWRE_ERR_INTERNAL;
}

template <class F>
brwre_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return BRWRE_OK;
  } catch (const brwre::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    last_error = std::string("config: ") + e.what();
    return BRWRE_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return BRWRE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BRWRE_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return BRWRE_ERR_INTERNAL;
  }
}

json parse_text(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    brwre::fail(brwre::ErrorCode::config, std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) brwre::fail(brwre::ErrorCode::config, "config: expected an object at the top level");
  return j;
}

void need(const void* p, const char* what) {
  if (p == nullptr) brwre::fail(brwre::ErrorCode::invalid_argument, std::string(what) + " is null");
}

// Sets raw[section][key] and revalidates; the context is unchanged on failure.
void update(brwre_context* ctx, const char* section, const char* key, json value) {
  need(ctx, "context");
  json raw = ctx->raw;
  if (section == nullptr) {
    raw[key] = std::move(value);
  } else {
    raw[section][key] = std::move(value);
  }
  brwre::RunConfig cfg = brwre::parse_run_config(raw);
  ctx->raw = std::move(raw);
  ctx->cfg = std::move(cfg);
}

}  // namespace

extern "C" {

const char* brwre_version(void) { return "1.0.0"; }

const char* brwre_last_error(void) { return last_error.c_str(); }

int brwre_exit_code(brwre_status status) {
  switch (status) {
    case BRWRE_OK: return BRWRE_EXIT_OK;
    case BRWRE_ERR_CONFIG: return BRWRE_EXIT_CONFIG;
    case BRWRE_ERR_EXPLOSION: return BRWRE_EXIT_EXPLOSION;
    default: return BRWRE_EXIT_OTHER;
  }
}

const char* brwre_default_config(void) {
  const brwre_status s = guarded([] { scratch = brwre::default_config().dump(2); });
  return s == BRWRE_OK ? scratch.c_str() : "";
}

brwre_status brwre_context_create(const char* config_json, brwre_context** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto ctx = std::make_unique<brwre_context>();
    ctx->raw = parse_text(config_json);
    ctx->cfg = brwre::parse_run_config(ctx->raw);
    *out = ctx.release();
  });
}

void brwre_context_destroy(brwre_context* ctx) { delete ctx; }

brwre_status brwre_set_seed(brwre_context* ctx, uint64_t seed) {
  return guarded([&] { update(ctx, "simulation", "seed", seed); });
}

brwre_status brwre_set_workers(brwre_context* ctx, int workers) {
  return guarded([&] { update(ctx, "simulation", "workers", workers); });
}

brwre_status brwre_set_output(brwre_context* ctx, const char* dir) {
  return guarded([&] {
    need(dir, "dir");
    update(ctx, nullptr, "output", dir);
  });
}

brwre_status brwre_set_suite(brwre_context* ctx, const char* suite) {
  return guarded([&] {
    need(suite, "suite");
    update(ctx, nullptr, "suite", suite);
  });
}

const char* brwre_context_config(brwre_context* ctx) {
  if (ctx == nullptr) return "";
  ctx->config_text = ctx->cfg.resolved.dump(2);
  return ctx->config_text.c_str();
}

brwre_status brwre_run(brwre_context* ctx, const char* subcommand, int* exit_code) {
  return guarded([&] {
    need(ctx, "context");
    need(subcommand, "subcommand");
    const brwre::CommandResult r = brwre::run_command(subcommand, ctx->cfg, ctx->cfg.output);
    ctx->summary = r.summary.dump(2);
    ctx->output = r.output.string();
    if (exit_code != nullptr) *exit_code = r.exit_code;
  });
}

const char* brwre_last_summary(brwre_context* ctx) { return ctx == nullptr ? "{}" : ctx->summary.c_str(); }

const char* brwre_last_output(brwre_context* ctx) { return ctx == nullptr ? "" : ctx->output.c_str(); }

brwre_status brwre_env_create(const char* config_json, brwre_env** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    const brwre::RunConfig cfg = brwre::parse_run_config(parse_text(config_json));
    *out = new brwre_env{brwre::experiment_environment(cfg.spec)};
  });
}

void brwre_env_destroy(brwre_env* env) { delete env; }

size_t brwre_env_side(const brwre_env* env) {
  return env == nullptr ? 0 : static_cast<size_t>(env->env.grid().side());
}

brwre_status brwre_env_values(const brwre_env* env, const char* which, double* buf, size_t len) {
  return guarded([&] {
    need(env, "env");
    need(which, "which");
    need(buf, "buf");
    const std::string w = which;
    const brwre::Field* f = w == "xi"         ? &env->env.xi
                            : w == "xi_e"     ? &env->env.xi_e
                            : w == "I_xi"     ? &env->env.I_xi
                            : w == "resonant" ? &env->env.resonant
                                              : nullptr;
    if (f == nullptr) brwre::fail(brwre::ErrorCode::invalid_argument, "which: unknown field '" + w + "'");
    if (len < f->size()) {
      brwre::fail(brwre::ErrorCode::invalid_argument,
                  "len: buffer holds " + std::to_string(len) + " values, need " + std::to_string(f->size()));
    }
    std::memcpy(buf, f->data().data(), f->size() * sizeof(double));
  });
}

double brwre_env_renormalization(const brwre_env* env) { return env == nullptr ? 0.0 : env->env.c_n; }

brwre_status brwre_law_create(double beta, int64_t K, brwre_law** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    if (!(beta > 0.0 && beta < 1.0)) brwre::fail(brwre::ErrorCode::invalid_argument, "beta: must lie in (0, 1)");
    if (K < 2 || K > 10'000'000) brwre::fail(brwre::ErrorCode::invalid_argument, "K: must lie in [2, 1e7]");
    const int k = static_cast<int>(K);
    *out = new brwre_law{brwre::OffspringLaw(beta, k, k)};
  });
}

void brwre_law_destroy(brwre_law* law) { delete law; }

brwre_status brwre_law_pmf(const brwre_law* law, int64_t k, double* p) {
  return guarded([&] {
    need(law, "law");
    need(p, "p");
    brwre::require(k >= 0, "brwre_law_pmf: k must be >= 0");
    *p = law->law.p(k);
  });
}

brwre_status brwre_law_ccdf(const brwre_law* law, int64_t m, double* p) {
  return guarded([&] {
    need(law, "law");
    need(p, "p");
    brwre::require(m >= 0, "brwre_law_ccdf: m must be >= 0");
    *p = law->law.ccdf(m);
  });
}

}  // extern "C"
