#include "harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "spectral.hpp"

namespace brwre {

double smooth_cutoff(double r, double inner, double outer) {
  if (r <= inner) return 1.0;
  if (r >= outer) return 0.0;
  auto psi = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  const double a = psi(outer - r);
  const double b = psi(r - inner);
  return a / (a + b);
}

double WeightSpec::operator()(double x, double y) const {
  const double r = std::hypot(x, y);
  if (kind == Kind::polynomial) return std::pow(1.0 + r, a);
  return std::exp(l * std::pow(r, sigma));
}

void validate(const WeightSpec& w) {
  if (w.kind == WeightSpec::Kind::polynomial) {
    require(w.a >= 0.0 && std::isfinite(w.a), "weight: polynomial exponent must be >= 0");
  } else {
    require(std::isfinite(w.l), "weight: exponential rate must be finite");
    require(w.sigma > 0.0 && w.sigma < 1.0, "weight: sigma must lie in (0,1)");
  }
}

void validate(const PartitionSpec& p) {
  require(p.inner > 0.0 && p.outer > p.inner, "partition: need 0 < inner < outer");
  // Supports of rho_j and rho_{j+2} must be disjoint.
  require(p.outer < 2.0 * p.inner, "partition: outer must be < 2*inner");
}

int top_block_index(const Grid& grid, const PartitionSpec& p) {
  validate(p);
  const double boundary = 0.5 * grid.n();
  int j = -1;
  while (p.outer * std::ldexp(1.0, j + 1) < boundary) ++j;
  return j;
}

std::vector<std::vector<double>> partition_multipliers(const Grid& grid, const PartitionSpec& p) {
  const int top = top_block_index(grid, p);
  const std::size_t bins = grid.site_count();
  std::vector<std::vector<double>> rho(static_cast<std::size_t>(top + 2), std::vector<double>(bins));
  for (std::size_t b = 0; b < bins; ++b) {
    const double r = frequency_radius(grid, b);
    double below = 0.0;  // sum of rho_i for i < j
    for (int j = -1; j < top; ++j) {
      double value;
      if (j == -1) {
        value = smooth_cutoff(r, p.inner, p.outer);
      } else {
        value = smooth_cutoff(std::ldexp(r, -(j + 1)), p.inner, p.outer) -
                smooth_cutoff(std::ldexp(r, -j), p.inner, p.outer);
      }
      rho[static_cast<std::size_t>(j + 1)][b] = value;
      below += value;
    }
    rho[static_cast<std::size_t>(top + 1)][b] = 1.0 - below;
  }
  return rho;
}

std::vector<Field> lp_blocks(const Field& f, const std::vector<std::vector<double>>& multipliers) {
  require(!multipliers.empty(), "lp_blocks: empty partition");
  for (std::size_t b = 0; b < f.size(); ++b) {
    double s = 0.0;
    for (const auto& m : multipliers) {
      require(m.size() == f.size(), "lp_blocks: multiplier size mismatch");
      s += m[b];
    }
    require(std::abs(s - 1.0) <= 1e-12, "lp_blocks: partition does not sum to one");
  }
  const Spectrum spec = forward_fft(f);
  std::vector<Field> blocks;
  blocks.reserve(multipliers.size());
  for (const auto& m : multipliers) {
    Spectrum s = spec;
    for (std::size_t b = 0; b < s.size(); ++b) s[b] *= m[b];
    blocks.push_back(inverse_fft(f.grid(), std::move(s)));
  }
  return blocks;
}

std::vector<Field> lp_blocks(const Field& f, const PartitionSpec& p) {
  return lp_blocks(f, partition_multipliers(f.grid(), p));
}

Paraproduct paraproduct(const Field& f, const Field& g, const PartitionSpec& p) {
  require_same_grid(f, g);
  const auto fb = lp_blocks(f, p);
  const auto gb = lp_blocks(g, p);
  const std::size_t J = fb.size();
  const std::size_t N = f.size();
  Paraproduct out{Field(f.grid()), Field(f.grid()), Field(f.grid())};

  // Low-frequency partial sums S_{i} = sum_{l <= i} Delta_l, indexed by block position.
  std::vector<Field> fs;
  std::vector<Field> gs;
  fs.reserve(J);
  gs.reserve(J);
  for (std::size_t i = 0; i < J; ++i) {
    fs.push_back(i == 0 ? fb[0] : fs.back() + fb[i]);
    gs.push_back(i == 0 ? gb[0] : gs.back() + gb[i]);
  }
  for (std::size_t j = 2; j < J; ++j) {
    const Field& fl = fs[j - 2];
    const Field& gl = gs[j - 2];
    for (std::size_t s = 0; s < N; ++s) {
      out.less[s] += fl[s] * gb[j][s];
      out.greater[s] += gl[s] * fb[j][s];
    }
  }
  // Off-diagonal pairs are added as (a b + c d) so that swapping f and g
  // reproduces the same floating-point sum.
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t s = 0; s < N; ++s) {
      double term = fb[i][s] * gb[i][s];
      if (i + 1 < J) term += fb[i][s] * gb[i + 1][s] + fb[i + 1][s] * gb[i][s];
      out.resonant[s] += term;
    }
  }
  return out;
}

Field resonant_product(const Field& f, const Field& g, const PartitionSpec& p) {
  return paraproduct(f, g, p).resonant;
}

double besov_norm(const Field& f, double alpha, double p, double q, const WeightSpec& w,
                  const PartitionSpec& partition) {
  require(p >= 1.0 && q >= 1.0, "besov_norm: p and q must lie in [1, inf]");
  validate(w);
  const Grid& grid = f.grid();
  std::vector<double> inv_weight(f.size());
  for (std::size_t s = 0; s < f.size(); ++s) {
    const auto [x, y] = grid.coord(s);
    inv_weight[s] = 1.0 / w(x, y);
  }
  const auto blocks = lp_blocks(f, partition);
  const double measure = grid.cell_measure();
  double total = 0.0;
  for (std::size_t idx = 0; idx < blocks.size(); ++idx) {
    const int j = static_cast<int>(idx) - 1;
    double lp = 0.0;
    if (std::isinf(p)) {
      for (std::size_t s = 0; s < f.size(); ++s) lp = std::max(lp, std::abs(blocks[idx][s]) * inv_weight[s]);
    } else {
      for (std::size_t s = 0; s < f.size(); ++s) lp += std::pow(std::abs(blocks[idx][s]) * inv_weight[s], p);
      lp = std::pow(lp * measure, 1.0 / p);
    }
    const double term = std::pow(2.0, j * alpha) * lp;
    if (std::isinf(q)) {
      total = std::max(total, term);
    } else {
      total += std::pow(term, q);
    }
  }
  return std::isinf(q) ? total : std::pow(total, 1.0 / q);
}

}  // namespace brwre
