#include "offspring.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace brwre {
namespace {

double stirling_tail(double z) {
  const double z2 = z * z;
  return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z;
}

}  // namespace

double log_gamma_ratio(double m, double beta) {
  if (m < 64.0) return std::lgamma(m - beta) - std::lgamma(m + 1.0);
  const double a = m - beta;
  const double b = m + 1.0;
  const double main = -(1.0 + beta) * std::log(m) + (a - 0.5) * std::log1p(-beta / m) -
                      (b - 0.5) * std::log1p(1.0 / m);
  return main + (1.0 + beta) + stirling_tail(a) - stirling_tail(b);
}

OffspringLaw::OffspringLaw(double beta, int K, int K_inv) : beta_(beta), K_(K), K_inv_(K_inv) {
  require(beta > 0.0 && beta < 1.0, "offspring law: beta must lie in (0,1)");
  require(K >= 2, "offspring law: table cutoff K must be >= 2");
  require(K_inv >= 2 && K_inv <= K, "offspring law: need 2 <= K_inv <= K");
  p_.assign(static_cast<std::size_t>(K) + 1, 0.0);
  p_[0] = 1.0 / (1.0 + beta);
  p_[1] = 0.0;
  p_[2] = 0.5 * beta;
  for (int k = 2; k < K; ++k) p_[k + 1] = p_[k] * (k - 1 - beta) / (k + 1);

  // a_m = |binom(beta, m)|, a_1 = beta, a_{m+1} = a_m (m - beta) / (m + 1).
  ccdf_.assign(static_cast<std::size_t>(K) + 1, 0.0);
  double a = beta;
  ccdf_[0] = beta / (1.0 + beta);
  for (int m = 1; m <= K; ++m) {
    ccdf_[m] = a / (1.0 + beta);
    a *= (m - beta) / (m + 1.0);
  }
  log_gamma_neg_beta_abs_ = std::lgamma(1.0 - beta) - std::log(beta);
}

double OffspringLaw::ccdf(std::int64_t m) const {
  if (m < 0) return 1.0;
  if (m <= K_) return ccdf_[static_cast<std::size_t>(m)];
  return std::exp(log_gamma_ratio(static_cast<double>(m), beta_) - log_gamma_neg_beta_abs_) / (1.0 + beta_);
}

double OffspringLaw::p(std::int64_t k) const {
  if (k < 0) return 0.0;
  if (k <= K_) return p_[static_cast<std::size_t>(k)];
  // binom(1+beta, k) = (1+beta)/k binom(beta, k-1), so p_k = P[k' > k-1] (1+beta) / k.
  return ccdf(k - 1) * (1.0 + beta_) / static_cast<double>(k);
}

double OffspringLaw::pgf(double s) const {
  require(s >= 0.0 && s <= 1.0, "pgf: s must lie in [0,1]");
  return std::pow(1.0 - s, 1.0 + beta_) / (1.0 + beta_) + s;
}

std::string OffspringLaw::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "k,p_k\n";
  for (std::size_t k = 0; k < p_.size(); ++k) out << k << ',' << p_[k] << '\n';
  return out.str();
}

SiteMechanism site_mechanism(const EnvironmentField& env, std::size_t site, double beta) {
  require(site < env.xi.size(), "site_mechanism: site out of range");
  const double x = env.xi[site];
  require(x != 0.0, "site_mechanism: xi(x) = 0 has no branching mechanism");
  const double abs = std::abs(x);
  SiteMechanism m;
  m.q0 = ((1.0 - beta) * env.xi_plus[site] + (1.0 + beta) * env.xi_minus[site]) / abs;
  m.q_ge2 = 2.0 * env.xi_plus[site] / abs;
  m.site = site;
  return m;
}

SiteMechanism auxiliary_mechanism(std::size_t site) { return {1.0, 1.0, site}; }

SiteMechanism mix(const SiteMechanism& m, double c) {
  require(c >= 0.0 && std::isfinite(c), "mixed_mechanism: c must be >= 0");
  return {(m.q0 + c) / (1.0 + c), (m.q_ge2 + c) / (1.0 + c), m.site};
}

SiteMechanism mixed_mechanism(const EnvironmentField& env, std::size_t site, double c, double beta) {
  require(c >= 0.0, "mixed_mechanism: c must be >= 0");
  return mix(site_mechanism(env, site, beta), c);
}

double mechanism_total(const OffspringLaw& law, const SiteMechanism& mech) {
  const double p0 = law.table()[0];
  return p0 * mech.q0 + mech.q_ge2 * (1.0 - p0);
}

double mechanism_mean(const SiteMechanism& mech) { return mech.q_ge2; }

std::int64_t sample_branching_size(const OffspringLaw& law, CounterRng& rng) {
  const double c1 = law.ccdf(1);
  const double v = c1 * (1.0 - rng.uniform());  // uniform on (0, c1]
  const int kinv = law.K_inv();
  if (v > law.ccdf(kinv)) {
    // Smallest m in [2, K_inv] with ccdf(m) < v; ccdf is decreasing.
    int lo = 1;  // ccdf(lo) >= v
    int hi = kinv;
    while (hi - lo > 1) {
      const int mid = lo + (hi - lo) / 2;
      if (law.ccdf(mid) < v) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }
  std::int64_t lo = kinv;  // ccdf(lo) >= v
  std::int64_t hi = 2 * static_cast<std::int64_t>(kinv);
  constexpr std::int64_t kMax = std::int64_t{1} << 62;
  while (law.ccdf(hi) >= v) {
    lo = hi;
    if (hi >= kMax / 2) return kMax;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (law.ccdf(mid) < v) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

std::int64_t sample_offspring(const OffspringLaw& law, const SiteMechanism& mech, CounterRng& rng) {
  const double death = law.table()[0] * mech.q0;
  if (mech.q_ge2 <= 0.0) return 0;
  if (rng.uniform() < death) return 0;
  return sample_branching_size(law, rng);
}

double pgf_eval(const OffspringLaw& law, const SiteMechanism& mech, double s) {
  require(s >= 0.0 && s <= 1.0, "pgf_eval: s must lie in [0,1]");
  const double p0 = law.table()[0];
  return mech.q0 * p0 + mech.q_ge2 * (law.pgf(s) - p0);
}

double pgf_table_sum(const OffspringLaw& law, const SiteMechanism& mech, double s) {
  require(s >= 0.0 && s <= 1.0, "pgf_table_sum: s must lie in [0,1]");
  const auto p = law.table();
  double total = mech.q0 * p[0];
  double power = s;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (k >= 2) total += mech.q_ge2 * p[k] * power;
    power *= s;
  }
  // Mass beyond K, weighted by s^{K+1}; exact at s = 1.
  total += mech.q_ge2 * law.tail_mass() * power;
  return total;
}

}  // namespace brwre
