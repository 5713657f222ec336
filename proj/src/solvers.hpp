#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "grid.hpp"

namespace brwre {

// Potential or forcing sampled at step resolution, constant within a step.
// A single entry is a time-independent series; the last entry extends.
struct TimeSeries {
  std::vector<Field> steps;

  bool empty() const { return steps.empty(); }
  const Field& at(std::size_t step) const { return steps[std::min(step, steps.size() - 1)]; }
  static TimeSeries constant(Field f) { return TimeSeries{{std::move(f)}}; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Field> states;
  std::string scheme;
  double dt = 0.0;
  std::size_t steps = 0;
  std::map<std::string, double> diagnostics;

  const Field& final_state() const { return states.back(); }
};

// Uniform step count for horizon T: ceil(T/dt), step T/count.
struct StepPlan {
  std::size_t count = 0;
  double h = 0.0;
};
StepPlan plan_steps(double T, double dt);

// exp(t Delta^n) phi, exact in Fourier space.
Field heat_solve(const Field& phi, double t);

// Strang splitting exp(h/2 V) exp(h Delta) exp(h/2 V). The caller chooses the
// potential (xi for fixed-n identities, xi - c_n across refinements).
// save_every = 0 stores only the initial and final states.
Trajectory pam_solve(const Field& potential, const Field& phi, double T, double dt, int save_every = 0);

// dw = (Delta + V - phi_t) w + g_t, phi_t >= 0, g_t >= 0, w_0 >= 0.
// One step: w <- S(h) w + h S(h/2) g, with S the Strang step of the combined potential.
Trajectory variant_pam_solve(const Field& potential, const Field& phi, const TimeSeries& extra_potential,
                             const TimeSeries& forcing, double T, double dt, int save_every = 0);

// dw = (Delta + V) w - B w^{1+beta}, w_0 >= 0, B >= 0.
// Composition P(h/2) N(h/2) H(h) N(h/2) P(h/2) of exact sub-flows.
Trajectory nonlinear_solve(const Field& potential, const Field& B, double beta, const Field& w0, double T,
                           double dt, int save_every = 0);

// Exact flow of dw/dt = -B w^{1+beta} over time h.
double nonlinear_decay(double w, double B, double beta, double h);

// (1 - exp(-eps phi)) / eps.
Field dual_initial(const Field& phi, double eps);

// Negative values produced by positivity-preserving solvers (beyond FFT
// round-off, which is projected to zero). Process-wide counter.
std::size_t positivity_violations();
double positivity_roundoff_tolerance();

struct FeynmanKacResult {
  std::vector<std::size_t> probes;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::size_t paths = 0;
  double max_log_weight = 0.0;
};

// E[exp(int_0^T (V - phi_{T-s})(X_s) ds) f(X_T) | X_0 = x] for a rate-4n^2
// nearest-neighbour walk. extra_potential may be empty; its steps have length step_dt.
FeynmanKacResult feynman_kac_estimate(const Field& potential, const Field& f, const TimeSeries& extra_potential,
                                      double step_dt, double T, std::span<const std::size_t> probes,
                                      std::size_t n_paths, std::uint64_t seed, int workers = 1);

// states as state_XXXX.fld plus index.json (times, dt, scheme, diagnostics).
void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj, const std::string& kind);

}  // namespace brwre
