#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "environment.hpp"
#include "rng.hpp"

namespace brwre {

// Critical offspring law with generating function
//   g(s) = (1 - s)^{1+beta} / (1 + beta) + s,
// tabulated up to K. Tail probabilities P[k > m] have the closed form
// |binom(beta, m)| / (1 + beta) for m >= 1, which the sampler inverts exactly
// beyond the table.
class OffspringLaw {
public:
  static constexpr int kDefaultTable = 10000;

  OffspringLaw(double beta, int K = kDefaultTable, int K_inv = kDefaultTable);

  double beta() const { return beta_; }
  int K() const { return K_; }
  int K_inv() const { return K_inv_; }

  std::span<const double> table() const { return p_; }
  double p(std::int64_t k) const;
  // Sum of p_k for k > K.
  double tail_mass() const { return ccdf(K_); }
  // P[k > m].
  double ccdf(std::int64_t m) const;
  // Closed-form g(s), s in [0,1].
  double pgf(double s) const;

  std::string to_csv() const;

private:
  double beta_;
  int K_;
  int K_inv_;
  std::vector<double> p_;     // p_0..p_K
  std::vector<double> ccdf_;  // P[k > m], m = 0..K
  double log_gamma_neg_beta_abs_;  // log |Gamma(-beta)|
};

// Weights of the site-dependent mechanism: q0 multiplies p_0, q_ge2 multiplies
// every p_k with k >= 2 (p_1 = 0, so q_1 never matters).
struct SiteMechanism {
  double q0 = 1.0;
  double q_ge2 = 1.0;
  std::size_t site = 0;
};

SiteMechanism site_mechanism(const EnvironmentField& env, std::size_t site, double beta);
SiteMechanism auxiliary_mechanism(std::size_t site = 0);
// (g^n + c g) / (1 + c): each weight becomes (q + c) / (1 + c).
SiteMechanism mixed_mechanism(const EnvironmentField& env, std::size_t site, double c, double beta);
SiteMechanism mix(const SiteMechanism& m, double c);

// p_0 q0 + q_ge2 (1 - p_0); equals one for every valid mechanism.
double mechanism_total(const OffspringLaw& law, const SiteMechanism& mech);
// Mean offspring sum_k k p_k q_k.
double mechanism_mean(const SiteMechanism& mech);

std::int64_t sample_offspring(const OffspringLaw& law, const SiteMechanism& mech, CounterRng& rng);
// Draw from g conditioned on k >= 2.
std::int64_t sample_branching_size(const OffspringLaw& law, CounterRng& rng);

// Closed form of sum_k p_k q_k s^k.
double pgf_eval(const OffspringLaw& law, const SiteMechanism& mech, double s);
// Same quantity summed from the table (testing aid); the mass beyond K is
// lumped at K+1.
double pgf_table_sum(const OffspringLaw& law, const SiteMechanism& mech, double s);

// log Gamma(m - beta) - log Gamma(m + 1), accurate for large m.
double log_gamma_ratio(double m, double beta);

}  // namespace brwre
