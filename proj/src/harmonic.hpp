#pragma once

#include <vector>

#include "grid.hpp"

namespace brwre {

// C-infinity plateau: 1 for r <= inner, 0 for r >= outer.
double smooth_cutoff(double r, double inner, double outer);

struct WeightSpec {
  enum class Kind { polynomial, exponential };
  Kind kind = Kind::polynomial;
  double a = 0.0;      // polynomial exponent, (1+|x|)^a
  double l = 0.0;      // exponential rate, e^{l |x|^sigma}
  double sigma = 0.5;  // in (0,1)

  static WeightSpec polynomial(double a) { return {Kind::polynomial, a, 0.0, 0.5}; }
  static WeightSpec exponential(double l, double sigma) { return {Kind::exponential, 0.0, l, sigma}; }
  static WeightSpec unit() { return polynomial(0.0); }

  double operator()(double x, double y) const;
};

void validate(const WeightSpec& w);

// Dyadic partition of unity on the frequency torus, radial in the physical
// frequency |k|:  rho_{-1} = theta(|k|),  rho_j = theta(|k|/2^{j+1}) - theta(|k|/2^j),
// where theta is the plateau with (inner, outer). The top block j_n absorbs
// everything above the last full annulus.
struct PartitionSpec {
  double inner = 0.75;
  double outer = 4.0 / 3.0;
};

void validate(const PartitionSpec& p);

// Index of the top block for a grid: smallest j >= -1 whose annulus reaches
// the torus boundary |k_i| = n/2.
int top_block_index(const Grid& grid, const PartitionSpec& p = {});

// Multipliers rho^n_j on the frequency grid, j = -1..j_n (element 0 is j = -1).
std::vector<std::vector<double>> partition_multipliers(const Grid& grid, const PartitionSpec& p = {});

// Delta_j f for j = -1..j_n. Throws if the multipliers do not sum to one
// within 1e-12 on every frequency bin.
std::vector<Field> lp_blocks(const Field& f, const std::vector<std::vector<double>>& multipliers);
std::vector<Field> lp_blocks(const Field& f, const PartitionSpec& p = {});

struct Paraproduct {
  Field less;       // f ⩿ g  = sum_j S_{j-2} f * Delta_j g
  Field resonant;   // f ⊙ g  = sum_{|i-j|<=1} Delta_i f * Delta_j g
  Field greater;    // g ⩿ f
};

Paraproduct paraproduct(const Field& f, const Field& g, const PartitionSpec& p = {});
Field resonant_product(const Field& f, const Field& g, const PartitionSpec& p = {});

// ||(2^{j alpha} ||w^{-1} Delta_j f||_{L^p})_j||_{l^q}, L^p with measure n^{-2}
// per site. p or q = infinity is passed as std::numeric_limits<double>::infinity().
double besov_norm(const Field& f, double alpha, double p, double q, const WeightSpec& w,
                  const PartitionSpec& partition = {});

}  // namespace brwre
