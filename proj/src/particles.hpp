#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "environment.hpp"
#include "grid.hpp"
#include "offspring.hpp"
#include "rng.hpp"

namespace brwre {

enum class MechanismKind { site, auxiliary, mixed };

struct MechanismSpec {
  MechanismKind kind = MechanismKind::site;
  double c = 0.0;  // mixing weight, mixed kind only
};

std::string to_string(MechanismKind k);
MechanismKind parse_mechanism(std::string_view name);

// Per-site branching rates and mechanisms of one of the three systems:
//   site       rate |xi|,        mechanism g^n(x, .)
//   auxiliary  rate |xi|,        mechanism g
//   mixed(c)   rate (1+c)|xi|,   mechanism (g^n + c g) / (1 + c)
// Every particle also jumps to a uniform neighbour at rate 4 n^2.
class BranchingSystem {
public:
  BranchingSystem(const EnvironmentField& env, OffspringLaw law, MechanismSpec spec);

  const Grid& grid() const { return grid_; }
  const OffspringLaw& law() const { return law_; }
  MechanismSpec spec() const { return spec_; }
  double jump_rate() const { return jump_rate_; }
  double branching_rate(std::size_t site) const { return branch_rate_[site]; }
  double total_rate(std::size_t site) const { return jump_rate_ + branch_rate_[site]; }
  double max_branching_rate() const { return max_branch_rate_; }
  const SiteMechanism& mechanism(std::size_t site) const { return mech_[site]; }
  double xi_sign(std::size_t site) const { return sign_[site]; }
  std::int64_t sample_offspring(std::size_t site, CounterRng& rng) const {
    return brwre::sample_offspring(law_, mech_[site], rng);
  }

private:
  Grid grid_;
  OffspringLaw law_;
  MechanismSpec spec_;
  double jump_rate_;
  double max_branch_rate_ = 0.0;
  std::vector<double> branch_rate_;
  std::vector<SiteMechanism> mech_;
  std::vector<double> sign_;
};

struct EventCounters {
  std::uint64_t jumps = 0;
  std::uint64_t branchings = 0;
  std::uint64_t deaths = 0;
};

// Particle multiset. Each particle keeps its wrapped site and unwrapped
// lattice coordinates, so displacements survive the periodic wrap.
struct ParticleState {
  Grid grid{1, 4.0};
  std::vector<std::uint32_t> site;
  std::vector<std::int64_t> ux;
  std::vector<std::int64_t> uy;
  double t = 0.0;
  double eps = 1.0;
  EventCounters events;
  std::size_t cap = 10'000'000;
  bool exploded = false;

  std::size_t count() const { return site.size(); }
  double mass() const { return eps * static_cast<double>(site.size()); }
  void add(std::size_t s, std::int64_t x, std::int64_t y) {
    site.push_back(static_cast<std::uint32_t>(s));
    ux.push_back(x);
    uy.push_back(y);
  }
  void add_at_site(std::size_t s) {
    const auto [ix, iy] = grid.lattice_coords(s);
    add(s, ix, iy);
  }
  void remove(std::size_t i);  // swap-remove
  std::vector<std::uint64_t> site_counts() const;
};

// Counts of offspring sizes, dense for small k.
class OffspringTally {
public:
  void add(std::int64_t k, std::uint64_t times = 1);
  std::uint64_t total() const { return total_; }
  // Number of recorded k with k > m.
  std::uint64_t exceeding(std::int64_t m) const;
  std::uint64_t count(std::int64_t k) const;
  std::int64_t max_k() const { return max_k_; }
  void merge(const OffspringTally& other);
  std::vector<std::pair<std::int64_t, std::uint64_t>> entries() const;

private:
  static constexpr std::size_t kDense = 1u << 16;
  std::vector<std::uint64_t> dense_ = std::vector<std::uint64_t>(kDense, 0);
  std::map<std::int64_t, std::uint64_t> sparse_;
  std::uint64_t total_ = 0;
  std::int64_t max_k_ = 0;
};

struct LedgerRecord {
  double t;
  std::uint32_t site;
  std::int64_t k;
  double mass_jump;  // eps (k - 1) times the weight at the site
};

// Branching-event ledger. Every event enters the tallies; full records are
// kept up to record_limit.
class JumpLedger {
public:
  explicit JumpLedger(std::size_t record_limit = 1'000'000, const Field* weight = nullptr)
      : limit_(record_limit), weight_(weight) {}

  void record(double t, std::size_t site, std::int64_t k, double eps, double xi_sign);

  const std::vector<LedgerRecord>& records() const { return records_; }
  const OffspringTally& tally_positive() const { return positive_; }  // events at xi > 0
  const OffspringTally& tally_all() const { return all_; }
  std::uint64_t events() const { return all_.total(); }
  bool truncated() const { return all_.total() > records_.size(); }
  void merge(const JumpLedger& other);
  std::string to_csv() const;

private:
  std::size_t limit_;
  const Field* weight_;
  std::vector<LedgerRecord> records_;
  OffspringTally positive_;
  OffspringTally all_;
};

// Poisson(mu0({x}) / eps) particles per site; mu0 holds site masses.
ParticleState init_poisson(const Grid& grid, const Field& mu0, double eps, CounterRng& rng,
                           std::size_t cap = 10'000'000);

struct Event {
  enum Kind { jump, branching } kind;
  double t;
  std::size_t particle;
  std::size_t site;
  std::int64_t k;
};
using EventObserver = std::function<void(const Event&)>;

// Exact Gillespie simulation to t_end with a sum tree over particle rates.
// Stops early with state.exploded set if the population exceeds state.cap.
void advance(ParticleState& state, const BranchingSystem& system, double t_end, CounterRng& rng,
             JumpLedger* ledger = nullptr, const EventObserver* observer = nullptr);

// eps * sum over particles of f(position).
double pair(const ParticleState& state, const Field& f);
// max |position| over particles, using unwrapped coordinates; 0 if empty.
double support_radius(const ParticleState& state);
ParticleState merge_states(const ParticleState& a, const ParticleState& b);

// (time, site, count) rows for occupied sites.
std::string snapshot_csv(const ParticleState& state, bool header = true);

struct LineageOptions {
  std::vector<double> obs_times;              // increasing, > initial time
  std::vector<const Field*> test_functions;   // paired at every observation time
  std::size_t cap = 100'000'000;              // particles ever created
  JumpLedger* ledger = nullptr;
};

struct LineageResult {
  std::vector<std::vector<double>> pairings;  // [obs][function]
  std::vector<std::uint64_t> counts;          // particles alive at each obs time
  EventCounters events;
  double support_radius = 0.0;                // at the final observation time
  bool exploded = false;
};

// Same law as advance(), simulated lineage by lineage: branching candidates
// arrive at the maximal branching rate and are thinned by rate(x)/max, and
// the walk between candidates is drawn exactly in one piece. Only
// observation-time statistics are produced.
LineageResult simulate_lineages(const ParticleState& initial, const BranchingSystem& system,
                                const LineageOptions& options, CounterRng& rng);

}  // namespace brwre
