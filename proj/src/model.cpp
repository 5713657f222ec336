#include "model.hpp"

#include <cmath>

#include "errors.hpp"

namespace brwre {

Field bump_function(const Grid& grid, const BumpSpec& b) {
  require(b.width > 0.0, "bump: width must be > 0");
  require(b.height >= 0.0, "bump: height must be >= 0");
  return Field::from_function(grid, [&](double x, double y) {
    const double r2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.width * b.width);
    if (r2 >= 1.0) return 0.0;
    return b.height * std::exp(1.0 - 1.0 / (1.0 - r2));
  });
}

Field initial_measure(const Grid& grid, const InitialSpec& spec) {
  require(spec.mass >= 0.0, "initial measure: mass must be >= 0");
  Field mu(grid);
  if (spec.kind == InitialSpec::point) {
    mu[grid.site_at(spec.cx, spec.cy)] = spec.mass;
    return mu;
  }
  require(spec.side > 0.0, "initial measure: square side must be > 0");
  const double h = 0.5 * spec.side;
  std::size_t inside = 0;
  for (std::size_t s = 0; s < mu.size(); ++s) {
    const auto [x, y] = grid.coord(s);
    if (x >= spec.cx - h && x < spec.cx + h && y >= spec.cy - h && y < spec.cy + h) {
      mu[s] = 1.0;
      ++inside;
    }
  }
  require(inside > 0, "initial measure: square contains no lattice site");
  for (double& v : mu.values()) v *= spec.mass / static_cast<double>(inside);
  return mu;
}

double particle_mass(int n, double rho) {
  require(n >= 1, "particle_mass: n must be >= 1");
  require(rho > 0.0, "particle_mass: rho must be > 0");
  return std::pow(static_cast<double>(n), -1.0 / rho);
}

DualCoefficients dual_coefficients(const EnvironmentField& env, double beta, double eps, MechanismSpec spec) {
  const Grid& grid = env.grid();
  const double scale = std::pow(eps, beta) / (1.0 + beta);
  DualCoefficients d{env.xi, Field(grid)};
  switch (spec.kind) {
    case MechanismKind::site:
      for (std::size_t s = 0; s < d.B.size(); ++s) d.B[s] = 2.0 * env.xi_plus[s] * scale;
      break;
    case MechanismKind::auxiliary:
      d.potential = Field(grid);
      for (std::size_t s = 0; s < d.B.size(); ++s) d.B[s] = env.xi_abs[s] * scale;
      break;
    case MechanismKind::mixed:
      for (std::size_t s = 0; s < d.B.size(); ++s) {
        d.B[s] = (2.0 * env.xi_plus[s] + spec.c * env.xi_abs[s]) * scale;
      }
      break;
  }
  return d;
}

}  // namespace brwre
