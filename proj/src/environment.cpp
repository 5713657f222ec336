#include "environment.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"
#include "rng.hpp"
#include "spectral.hpp"

namespace brwre {
namespace {

double truncated_gaussian_variance(double b) {
  const double pdf = std::exp(-0.5 * b * b) / std::sqrt(2.0 * std::numbers::pi);
  const double mass = std::erf(b / std::numbers::sqrt2);
  return 1.0 - 2.0 * b * pdf / mass;
}

double draw_standardized(Distribution dist, std::uint64_t seed, std::size_t site, double truncation) {
  CounterRng rng(seed, stream_id(StreamTag::environment, site));
  if (dist == Distribution::rademacher) {
    return (rng() >> 63) ? 1.0 : -1.0;
  }
  const double scale = 1.0 / std::sqrt(truncated_gaussian_variance(truncation));
  for (;;) {
    const double u1 = rng.uniform_open();
    const double u2 = rng.uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    if (std::abs(z) <= truncation) return z * scale;
  }
}

}  // namespace

std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::rademacher: return "rademacher";
    case Distribution::truncated_gaussian: return "truncated-gaussian";
    case Distribution::constant: return "constant";
    case Distribution::custom: return "custom";
  }
  return "custom";
}

Distribution parse_distribution(std::string_view name) {
  if (name == "rademacher") return Distribution::rademacher;
  if (name == "truncated-gaussian" || name == "truncated_gaussian") return Distribution::truncated_gaussian;
  if (name == "constant") return Distribution::constant;
  if (name == "custom") return Distribution::custom;
  fail(ErrorCode::config, "unknown environment distribution '" + std::string(name) + "'");
}

double standardized_bound(Distribution dist, double truncation) {
  if (dist == Distribution::truncated_gaussian) {
    return truncation / std::sqrt(truncated_gaussian_variance(truncation));
  }
  return 1.0;
}

void validate(const ChiSpec& chi) {
  require(chi.inner > 0.0, "chi: cutoff must vanish in a neighbourhood of zero");
  require(chi.outer > chi.inner, "chi: need inner < outer");
}

std::vector<double> chi_multiplier(const Grid& grid, const ChiSpec& chi) {
  validate(chi);
  std::vector<double> m(grid.site_count());
  for (std::size_t b = 0; b < m.size(); ++b) {
    m[b] = 1.0 - smooth_cutoff(frequency_radius(grid, b), chi.inner, chi.outer);
  }
  return m;
}

Field compute_I_xi(const Field& xi, const ChiSpec& chi) {
  const Grid& grid = xi.grid();
  const auto chi_m = chi_multiplier(grid, chi);
  std::vector<double> m(grid.site_count(), 0.0);
  for (std::size_t b = 0; b < m.size(); ++b) {
    if (chi_m[b] == 0.0) continue;
    const double lambda = laplacian_symbol(grid, b);
    if (lambda <= 0.0) fail(ErrorCode::numeric, "compute_I_xi: chi does not vanish at a zero of the symbol");
    m[b] = chi_m[b] / lambda;
  }
  return apply_multiplier(xi, m);
}

EnvironmentField environment_from_values(const Field& xi, Distribution dist, std::uint64_t seed) {
  require(xi.all_finite(), "environment: non-finite values");
  const Grid& grid = xi.grid();
  EnvironmentField env;
  env.xi = xi;
  env.dist = dist;
  env.seed = seed;
  env.xi_plus = Field(grid);
  env.xi_minus = Field(grid);
  env.xi_abs = Field(grid);
  for (std::size_t s = 0; s < xi.size(); ++s) {
    env.xi_plus[s] = xi[s] > 0.0 ? xi[s] : 0.0;
    env.xi_minus[s] = xi[s] < 0.0 ? -xi[s] : 0.0;
    env.xi_abs[s] = std::abs(xi[s]);
  }
  env.I_xi = compute_I_xi(xi);
  env.resonant = resonant_product(env.I_xi, xi);
  env.c_n = env.resonant.mean();
  env.xi_e = xi;
  for (double& v : env.xi_e.values()) v -= env.c_n;
  env.nu_hat = env.xi_plus.mean() / grid.n();
  return env;
}

EnvironmentField sample_environment(const Grid& grid, Distribution dist, std::uint64_t seed, double truncation) {
  require(dist == Distribution::rademacher || dist == Distribution::truncated_gaussian,
          "sample_environment: random distribution required (rademacher | truncated-gaussian)");
  require(truncation > 0.5, "sample_environment: truncation bound too small");
  Field xi(grid);
  const double n = grid.n();
  for (std::size_t s = 0; s < xi.size(); ++s) xi[s] = n * draw_standardized(dist, seed, s, truncation);
  auto env = environment_from_values(xi, dist, seed);
  env.truncation = truncation;
  return env;
}

EnvironmentField constant_environment(const Grid& grid, double value) {
  return environment_from_values(Field(grid, value), Distribution::constant, 0);
}

double renormalization_constant(const EnvironmentField& env, int ensemble) {
  require(ensemble >= 1, "renormalization_constant: ensemble must be >= 1");
  double total = env.resonant.mean();
  if (ensemble == 1) return total;
  require(env.dist == Distribution::rademacher || env.dist == Distribution::truncated_gaussian,
          "renormalization_constant: ensemble averaging needs a random environment");
  for (int e = 1; e < ensemble; ++e) {
    const std::uint64_t seed = splitmix64(env.seed ^ stream_id(StreamTag::environment_ensemble, e));
    const auto other = sample_environment(env.grid(), env.dist, seed, env.truncation);
    total += other.resonant.mean();
  }
  return total / ensemble;
}

EnvironmentField with_renormalization(EnvironmentField env, double c_n) {
  require(std::isfinite(c_n), "with_renormalization: c_n must be finite");
  env.c_n = c_n;
  env.xi_e = env.xi;
  for (double& v : env.xi_e.values()) v -= c_n;
  return env;
}

}  // namespace brwre
