#include <doctest.h>

#include <cmath>
#include <numbers>

#include "environment.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "solvers.hpp"
#include "spectral.hpp"

using namespace brwre;

namespace {

Field bump(const Grid& g) { return bump_function(g, BumpSpec{0.0, 0.0, 1.0, 1.0}); }

double max_diff(const Field& a, const Field& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Field random_positive(const Grid& g, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  Field f(g);
  for (double& v : f.values()) v = rng.uniform();
  return f;
}

}  // namespace

TEST_CASE("step plans cover the horizon exactly") {
  const StepPlan p = plan_steps(0.25, 1e-3);
  CHECK(p.count == 250);
  CHECK(p.h * static_cast<double>(p.count) == doctest::Approx(0.25).epsilon(1e-15));
  const StepPlan q = plan_steps(1.0, 0.3);
  CHECK(q.count == 4);
  CHECK(q.h == doctest::Approx(0.25));
}

TEST_CASE("heat: constants are fixed, modes decay by their symbol, mass is conserved") {
  const Grid g(8, 4.0);
  const Field c(g, 1.7);
  CHECK(max_diff(heat_solve(c, 0.3), c) < 1e-14);

  const Field mode = Field::from_function(g, [](double x, double y) {
    return std::cos(2.0 * std::numbers::pi * (0.75 * x + 0.25 * y));
  });
  const double n = 8.0;
  const double lambda = 4.0 * n * n *
                        (std::pow(std::sin(std::numbers::pi * 0.75 / n), 2) +
                         std::pow(std::sin(std::numbers::pi * 0.25 / n), 2));
  const Field out = heat_solve(mode, 0.05);
  for (std::size_t s = 0; s < g.site_count(); ++s) CHECK(std::abs(out[s] - std::exp(-lambda * 0.05) * mode[s]) < 1e-12);

  Field delta(g);
  delta[g.site_at(0.0, 0.0)] = 1.0;
  const Field spread = heat_solve(delta, 0.1);
  CHECK(std::abs(spread.sum() - 1.0) < 1e-10);
  CHECK(spread.min() > -1e-15);
}

TEST_CASE("pam: zero and constant potentials") {
  const Grid g(8, 4.0);
  const Field phi = bump(g);
  const Field heat = heat_solve(phi, 0.25);
  CHECK(max_diff(pam_solve(Field(g), phi, 0.25, 1e-3).final_state(), heat) < 1e-12);
  const double c = 1.7;
  const Field out = pam_solve(Field(g, c), phi, 0.25, 1e-2).final_state();
  for (std::size_t s = 0; s < g.site_count(); ++s) {
    const double ref = std::exp(c * 0.25) * heat[s];
    CHECK(std::abs(out[s] - ref) <= 1e-8 * std::max(std::abs(ref), 1e-300) + 1e-300);
  }
}

TEST_CASE("pam: self-convergence of order two") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 1);
  const Field phi = bump(g);
  const double T = 0.25, dt = T / 128;
  const Field a = pam_solve(env.xi_e, phi, T, dt).final_state();
  const Field b = pam_solve(env.xi_e, phi, T, dt / 2).final_state();
  const Field c = pam_solve(env.xi_e, phi, T, dt / 4).final_state();
  const double ratio = max_diff(a, b) / max_diff(b, c);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("pam: trajectories store the requested states") {
  const Grid g(4, 4.0);
  const Trajectory t = pam_solve(Field(g), bump(g), 0.1, 0.01, 5);
  CHECK(t.steps == 10);
  REQUIRE(t.times.size() == 3);
  CHECK(t.times[1] == doctest::Approx(0.05));
  CHECK(t.times[2] == doctest::Approx(0.1));
  const Trajectory only_ends = pam_solve(Field(g), bump(g), 0.1, 0.01);
  CHECK(only_ends.states.size() == 2);
}

TEST_CASE("variant pam reduces to pam without extra potential and forcing") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 2);
  const Field phi = bump(g);
  const Field a = pam_solve(env.xi, phi, 0.1, 1e-3).final_state();
  const Field b = variant_pam_solve(env.xi, phi, TimeSeries::constant(Field(g)), TimeSeries::constant(Field(g)), 0.1, 1e-3)
                      .final_state();
  CHECK(max_diff(a, b) < 1e-12);
}

TEST_CASE("variant pam comparison principle") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 3);
  const Field phi = bump(g);
  const Field with = variant_pam_solve(env.xi, phi, TimeSeries::constant(Field(g, 1.0)), {}, 0.1, 1e-3).final_state();
  const Field without = variant_pam_solve(env.xi, phi, TimeSeries::constant(Field(g)), {}, 0.1, 1e-3).final_state();
  bool strict = false;
  for (std::size_t s = 0; s < g.site_count(); ++s) {
    CHECK(with[s] <= without[s]);
    strict = strict || with[s] < without[s];
  }
  CHECK(strict);
}

TEST_CASE("variant pam satisfies its mild formulation") {
  const Grid g(4, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 4);
  const Field w0 = bump(g);
  const Field extra = random_positive(g, 1);
  const Field forcing = random_positive(g, 2);
  const double T = 0.1;
  auto residual = [&](double dt) {
    const Trajectory tr =
        variant_pam_solve(env.xi, w0, TimeSeries::constant(extra), TimeSeries::constant(forcing), T, dt, 1);
    const std::size_t N = tr.steps;
    const double h = tr.dt;
    // T_t w0 - int T_{t-s}(extra w_s) ds + int T_{t-s} g ds, trapezoid in s
    Field mild = pam_solve(env.xi, w0, T, dt).final_state();
    for (std::size_t k = 0; k <= N; ++k) {
      const double weight = (k == 0 || k == N) ? 0.5 * h : h;
      Field integrand = forcing - pointwise_product(extra, tr.states[k]);
      const double lag = T - static_cast<double>(k) * h;
      const Field moved = lag > 0.0 ? pam_solve(env.xi, integrand, lag, dt).final_state() : integrand;
      mild += moved * weight;
    }
    return max_diff(tr.final_state(), mild);
  };
  const double r1 = residual(0.01), r2 = residual(0.005);
  CHECK(r1 < 0.01 * 10.0);
  CHECK(r2 < 0.5 * r1);
}

TEST_CASE("nonlinear: closed-form decay") {
  // dw/dt = -w^{3/2}, w0 = 1: w = (1 + t/2)^{-2}
  CHECK(nonlinear_decay(1.0, 1.0, 0.5, 1.0) == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(nonlinear_decay(0.0, 1.0, 0.5, 1.0) == 0.0);
  CHECK(nonlinear_decay(2.0, 0.0, 0.5, 1.0) == 2.0);
  const Grid g(4, 4.0);
  const Field w = nonlinear_solve(Field(g), Field(g, 1.0), 0.5, Field(g, 1.0), 1.0, 0.1).final_state();
  for (double v : w.values()) CHECK(std::abs(v - 4.0 / 9.0) < 1e-12);
}

TEST_CASE("nonlinear: zero coefficient equals pam, and nonlinearity only removes mass") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 5);
  const Field phi = bump(g);
  const Field pam = pam_solve(env.xi, phi, 0.25, 1e-3).final_state();
  CHECK(max_diff(nonlinear_solve(env.xi, Field(g), 0.5, phi, 0.25, 1e-3).final_state(), pam) < 1e-12);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Field B = random_positive(g, seed) * 3.0;
    const Field u = nonlinear_solve(env.xi, B, 0.5, phi * static_cast<double>(seed), 0.25, 1e-3).final_state();
    const Field t = pam_solve(env.xi, phi * static_cast<double>(seed), 0.25, 1e-3).final_state();
    for (std::size_t s = 0; s < g.site_count(); ++s) {
      CHECK(u[s] <= t[s] + 1e-12);
      CHECK(u[s] >= 0.0);
    }
  }
}

TEST_CASE("nonlinear: inputs are validated") {
  const Grid g(4, 4.0);
  CHECK_THROWS_AS(nonlinear_solve(Field(g), Field(g, -1.0), 0.5, Field(g, 1.0), 0.1, 0.01), Error);
  CHECK_THROWS_AS(nonlinear_solve(Field(g), Field(g, 1.0), 0.5, Field(g, -1.0), 0.1, 0.01), Error);
}

TEST_CASE("dual initial condition") {
  const Grid g(4, 4.0);
  CHECK(dual_initial(Field(g), 0.1).max_abs() == 0.0);
  CHECK(std::abs(dual_initial(Field(g, 1.0), 1e-6)[0] - 1.0) < 1e-6);
  CHECK(dual_initial(Field(g, 1e6), 0.1)[0] == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("solvers raise no positivity violations") {
  const std::size_t before = positivity_violations();
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 6);
  nonlinear_solve(env.xi, env.xi_plus, 0.5, bump(g), 0.25, 1e-3);
  CHECK(positivity_violations() == before);
}

TEST_CASE("feynman-kac: heat and constant potential") {
  const Grid g(8, 4.0);
  const Field phi = bump(g);
  const double T = 0.25;
  const std::vector<std::size_t> probes{g.site_at(0, 0), g.site_at(0.25, 0), g.site_at(-0.5, 0.5), g.site_at(0.75, -0.25),
                                        g.site_at(1.0, 1.0)};
  const Field heat = heat_solve(phi, T);
  const auto fk = feynman_kac_estimate(Field(g), phi, {}, 0.0, T, probes, 20000, 1);
  for (std::size_t i = 0; i < probes.size(); ++i) CHECK(std::abs(fk.mean[i] - heat[probes[i]]) <= 3.0 * fk.stderr_[i]);

  const double c = 1.3;
  const auto fc = feynman_kac_estimate(Field(g, c), phi, {}, 0.0, T, probes, 20000, 2);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    CHECK(std::abs(fc.mean[i] - std::exp(c * T) * heat[probes[i]]) <= 3.0 * fc.stderr_[i]);
  }
}

TEST_CASE("feynman-kac: random environment vs splitting solver") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 1);
  const Field phi = bump(g);
  const std::vector<std::size_t> probe{g.site_at(0, 0)};
  const Field ref = pam_solve(env.xi, phi, 0.25, 1e-4).final_state();
  const auto fk = feynman_kac_estimate(env.xi, phi, {}, 0.0, 0.25, probe, 40000, 3);
  CHECK(std::abs(fk.mean[0] - ref[probe[0]]) <= 3.0 * fk.stderr_[0]);
}

TEST_CASE("feynman-kac is reproducible and independent of the worker count") {
  const Grid g(4, 4.0);
  const Field phi = bump(g);
  const std::vector<std::size_t> probe{0, 5};
  const auto a = feynman_kac_estimate(Field(g, 0.5), phi, {}, 0.0, 0.1, probe, 2000, 7, 1);
  const auto b = feynman_kac_estimate(Field(g, 0.5), phi, {}, 0.0, 0.1, probe, 2000, 7, 3);
  CHECK(a.mean == b.mean);
}
