#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "grid.hpp"
#include "harmonic.hpp"

namespace brwre {

enum class Distribution { rademacher, truncated_gaussian, constant, custom };

std::string to_string(Distribution d);
Distribution parse_distribution(std::string_view name);

// Frequency cutoff used to build I xi: zero for |k| <= inner, one for
// |k| >= outer (physical frequencies), smooth in between.
struct ChiSpec {
  double inner = 0.17677669529663687;  // sqrt(2)/8: covers the square (-1/8,1/8)^2
  double outer = 0.25;
};

void validate(const ChiSpec& chi);
std::vector<double> chi_multiplier(const Grid& grid, const ChiSpec& chi);

struct EnvironmentField {
  Field xi;
  Field xi_plus;
  Field xi_minus;
  Field xi_abs;
  double c_n = 0.0;
  Field xi_e;
  Field I_xi;
  Field resonant;
  double nu_hat = 0.0;
  std::uint64_t seed = 0;
  Distribution dist = Distribution::rademacher;
  double truncation = 3.0;

  const Grid& grid() const { return xi.grid(); }
};

// Truncated-gaussian draws are rescaled to unit variance; `truncation` is the
// cutoff in standard-normal units before rescaling.
EnvironmentField sample_environment(const Grid& grid, Distribution dist, std::uint64_t seed,
                                    double truncation = 3.0);

// Environment from explicit site values (xi^n itself, already scaled).
EnvironmentField environment_from_values(const Field& xi, Distribution dist = Distribution::custom,
                                         std::uint64_t seed = 0);
EnvironmentField constant_environment(const Grid& grid, double value);

// -Delta^n I xi = F^{-1}(chi F xi), evaluated spectrally.
Field compute_I_xi(const Field& xi, const ChiSpec& chi = {});

// Spatial mean of (I xi ⊙ xi), averaged with `ensemble - 1` further
// independent draws keyed off env.seed when ensemble > 1.
double renormalization_constant(const EnvironmentField& env, int ensemble = 1);

// Returns a copy with c_n replaced and xi_e = xi - c_n.
EnvironmentField with_renormalization(EnvironmentField env, double c_n);

// Upper bound on |xi^n| / n for the distribution.
double standardized_bound(Distribution dist, double truncation);

}  // namespace brwre
