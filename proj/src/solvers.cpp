#include "solvers.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "errors.hpp"
#include "field_io.hpp"
#include "spectral.hpp"

namespace brwre {
namespace {

std::atomic<std::size_t> g_positivity_violations{0};

constexpr double kOverflow = 1e300;
constexpr double kStepGuard = 0.5;

std::vector<double> heat_multiplier(const Grid& grid, double t) {
  auto m = laplacian_symbols(grid);
  for (double& v : m) v = std::exp(-v * t);
  return m;
}

void potential_step(Field& w, std::span<const double> factor) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= factor[i];
}

std::vector<double> exp_factor(const Field& potential, double h) {
  std::vector<double> f(potential.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::exp(h * potential[i]);
  return f;
}

void check_guard(const Field& potential, double h, const char* who) {
  if (h * potential.max_abs() > kStepGuard) {
    fail(ErrorCode::numeric, std::string(who) + ": dt * max|V| = " + std::to_string(h * potential.max_abs()) +
                                 " exceeds 0.5; reduce dt");
  }
}

void check_overflow(const Field& w, const char* who, double t) {
  if (!w.all_finite() || w.max_abs() > kOverflow) {
    fail(ErrorCode::numeric, std::string(who) + ": state overflow (max|w| > 1e300) at t = " + std::to_string(t));
  }
}

// FFT round-off can leave values like -1e-19 where the exact heat flow is
// positive. Those are set to zero; anything larger counts as a violation.
void project_roundoff(Field& w, const char* who) {
  const double scale = w.max_abs();
  const double tol = positivity_roundoff_tolerance() * scale;
  for (double& v : w.values()) {
    if (v >= 0.0) continue;
    if (v < -tol) {
      g_positivity_violations.fetch_add(1);
      fail(ErrorCode::numeric, std::string(who) + ": negative state " + std::to_string(v));
    }
    v = 0.0;
  }
}

void require_nonnegative(const Field& f, const char* what) {
  for (double v : f.values()) {
    if (!(v >= 0.0)) fail(ErrorCode::invalid_argument, std::string(what) + " must be nonnegative");
  }
}

bool should_save(int save_every, std::size_t step, std::size_t count) {
  return step == count || (save_every > 0 && step % static_cast<std::size_t>(save_every) == 0);
}

}  // namespace

std::size_t positivity_violations() { return g_positivity_violations.load(); }
double positivity_roundoff_tolerance() { return 1e-12; }

StepPlan plan_steps(double T, double dt) {
  require(T >= 0.0 && std::isfinite(T), "horizon T must be >= 0");
  require(dt > 0.0 && std::isfinite(dt), "dt must be > 0");
  StepPlan plan;
  if (T == 0.0) return plan;
  plan.count = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  if (plan.count == 0) plan.count = 1;
  plan.h = T / static_cast<double>(plan.count);
  return plan;
}

Field heat_solve(const Field& phi, double t) {
  require(t >= 0.0, "heat_solve: t must be >= 0");
  if (t == 0.0) return phi;
  return apply_multiplier(phi, heat_multiplier(phi.grid(), t));
}

Trajectory pam_solve(const Field& potential, const Field& phi, double T, double dt, int save_every) {
  require_same_grid(potential, phi);
  const auto plan = plan_steps(T, dt);
  check_guard(potential, plan.h, "pam_solve");
  Trajectory traj;
  traj.scheme = "strang(potential/2, heat, potential/2)";
  traj.dt = plan.h;
  traj.steps = plan.count;
  traj.times.push_back(0.0);
  traj.states.push_back(phi);
  const auto half = exp_factor(potential, 0.5 * plan.h);
  const auto heat = heat_multiplier(phi.grid(), plan.h);
  Field w = phi;
  for (std::size_t s = 1; s <= plan.count; ++s) {
    potential_step(w, half);
    w = apply_multiplier(w, heat);
    potential_step(w, half);
    const double t = static_cast<double>(s) * plan.h;
    check_overflow(w, "pam_solve", t);
    if (should_save(save_every, s, plan.count)) {
      traj.times.push_back(t);
      traj.states.push_back(w);
    }
  }
  return traj;
}

Trajectory variant_pam_solve(const Field& potential, const Field& phi, const TimeSeries& extra_potential,
                             const TimeSeries& forcing, double T, double dt, int save_every) {
  require_same_grid(potential, phi);
  require_nonnegative(phi, "variant_pam_solve: initial data");
  for (const auto& f : extra_potential.steps) {
    require_same_grid(potential, f);
    require_nonnegative(f, "variant_pam_solve: potential phi_t");
  }
  for (const auto& g : forcing.steps) {
    require_same_grid(potential, g);
    require_nonnegative(g, "variant_pam_solve: forcing g_t");
  }
  const auto plan = plan_steps(T, dt);
  const Grid& grid = phi.grid();
  Trajectory traj;
  traj.scheme = "strang(potential/2, heat, potential/2) + midpoint forcing";
  traj.dt = plan.h;
  traj.steps = plan.count;
  traj.times.push_back(0.0);
  traj.states.push_back(phi);
  const auto heat = heat_multiplier(grid, plan.h);
  const auto heat_half = heat_multiplier(grid, 0.5 * plan.h);
  Field w = phi;
  for (std::size_t s = 1; s <= plan.count; ++s) {
    Field v = potential;
    if (!extra_potential.empty()) v -= extra_potential.at(s - 1);
    check_guard(v, plan.h, "variant_pam_solve");
    const auto half = exp_factor(v, 0.5 * plan.h);
    potential_step(w, half);
    w = apply_multiplier(w, heat);
    project_roundoff(w, "variant_pam_solve");
    potential_step(w, half);
    if (!forcing.empty()) {
      // h * S(h/2) g with S(h/2) = P(h/4) H(h/2) P(h/4).
      const auto quarter = exp_factor(v, 0.25 * plan.h);
      Field g = forcing.at(s - 1);
      potential_step(g, quarter);
      g = apply_multiplier(g, heat_half);
      project_roundoff(g, "variant_pam_solve");
      potential_step(g, quarter);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += plan.h * g[i];
    }
    const double t = static_cast<double>(s) * plan.h;
    check_overflow(w, "variant_pam_solve", t);
    if (should_save(save_every, s, plan.count)) {
      traj.times.push_back(t);
      traj.states.push_back(w);
    }
  }
  return traj;
}

double nonlinear_decay(double w, double B, double beta, double h) {
  if (w <= 0.0 || B <= 0.0 || h <= 0.0) return w;
  return w * std::pow(1.0 + beta * B * std::pow(w, beta) * h, -1.0 / beta);
}

Trajectory nonlinear_solve(const Field& potential, const Field& B, double beta, const Field& w0, double T,
                           double dt, int save_every) {
  require_same_grid(potential, w0);
  require_same_grid(potential, B);
  require(beta > 0.0 && beta < 1.0, "nonlinear_solve: beta must lie in (0,1)");
  require_nonnegative(w0, "nonlinear_solve: initial data");
  require_nonnegative(B, "nonlinear_solve: coefficient B");
  const auto plan = plan_steps(T, dt);
  check_guard(potential, plan.h, "nonlinear_solve");
  Trajectory traj;
  traj.scheme = "strang(potential/2, decay/2, heat, decay/2, potential/2)";
  traj.dt = plan.h;
  traj.steps = plan.count;
  traj.times.push_back(0.0);
  traj.states.push_back(w0);
  const auto half = exp_factor(potential, 0.5 * plan.h);
  const auto heat = heat_multiplier(w0.grid(), plan.h);
  const double hh = 0.5 * plan.h;
  Field w = w0;
  for (std::size_t s = 1; s <= plan.count; ++s) {
    potential_step(w, half);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = nonlinear_decay(w[i], B[i], beta, hh);
    w = apply_multiplier(w, heat);
    project_roundoff(w, "nonlinear_solve");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = nonlinear_decay(w[i], B[i], beta, hh);
    potential_step(w, half);
    const double t = static_cast<double>(s) * plan.h;
    check_overflow(w, "nonlinear_solve", t);
    if (should_save(save_every, s, plan.count)) {
      traj.times.push_back(t);
      traj.states.push_back(w);
    }
  }
  return traj;
}

Field dual_initial(const Field& phi, double eps) {
  require(eps > 0.0 && std::isfinite(eps), "dual_initial: eps must be > 0");
  Field out(phi.grid());
  for (std::size_t i = 0; i < phi.size(); ++i) out[i] = -std::expm1(-eps * phi[i]) / eps;
  return out;
}

void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj, const std::string& kind) {
  nlohmann::json index;
  index["times"] = traj.times;
  index["dt"] = traj.dt;
  index["steps"] = traj.steps;
  index["scheme"] = traj.scheme;
  index["kind"] = kind;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "state_%04zu.fld", i);
    write_field(dir / name, traj.states[i], kind);
    files.push_back(name);
  }
  index["files"] = files;
  nlohmann::json diag = nlohmann::json::object();
  for (const auto& [k, v] : traj.diagnostics) diag[k] = v;
  index["diagnostics"] = diag;
  write_text_file(dir / "index.json", index.dump(2) + "\n");
}

}  // namespace brwre
