#pragma once

#include "environment.hpp"
#include "grid.hpp"
#include "particles.hpp"

namespace brwre {

// Smooth bump h * exp(1 - 1 / (1 - r^2)), r = |x - center| / width, zero for r >= 1.
struct BumpSpec {
  double cx = 0.0;
  double cy = 0.0;
  double width = 1.0;
  double height = 1.0;
};
Field bump_function(const Grid& grid, const BumpSpec& b);

// Initial measure as site masses.
//   uniform_square: total mass spread evenly over the sites of a centred square
//   point: total mass on the site nearest to the centre
struct InitialSpec {
  enum Kind { uniform_square, point } kind = uniform_square;
  double cx = 0.0;
  double cy = 0.0;
  double side = 1.0;
  double mass = 1.0;
};
Field initial_measure(const Grid& grid, const InitialSpec& spec);

// Mass per particle eps = n^{-1/rho}.
double particle_mass(int n, double rho);

// Coefficients (A = Delta + potential, B) of the dual equation of each system,
// built from the unrenormalized xi at fixed n.
struct DualCoefficients {
  Field potential;
  Field B;
};
DualCoefficients dual_coefficients(const EnvironmentField& env, double beta, double eps, MechanismSpec spec);

}  // namespace brwre
