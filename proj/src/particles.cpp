#include "particles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "errors.hpp"
#include "sum_tree.hpp"

namespace brwre {

std::string to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::site: return "site";
    case MechanismKind::auxiliary: return "auxiliary";
    case MechanismKind::mixed: return "mixed";
  }
  return "site";
}

MechanismKind parse_mechanism(std::string_view name) {
  if (name == "site") return MechanismKind::site;
  if (name == "auxiliary") return MechanismKind::auxiliary;
  if (name == "mixed") return MechanismKind::mixed;
  fail(ErrorCode::config, "unknown mechanism '" + std::string(name) + "' (site | auxiliary | mixed)");
}

BranchingSystem::BranchingSystem(const EnvironmentField& env, OffspringLaw law, MechanismSpec spec)
    : grid_(env.grid()), law_(std::move(law)), spec_(spec), jump_rate_(4.0 * grid_.n() * grid_.n()) {
  require(spec.c >= 0.0 && std::isfinite(spec.c), "mixing weight c must be >= 0");
  const std::size_t sites = grid_.site_count();
  branch_rate_.resize(sites);
  mech_.resize(sites);
  sign_.resize(sites);
  const double beta = law_.beta();
  for (std::size_t s = 0; s < sites; ++s) {
    const double a = env.xi_abs[s];
    sign_[s] = env.xi[s] > 0.0 ? 1.0 : (env.xi[s] < 0.0 ? -1.0 : 0.0);
    switch (spec.kind) {
      case MechanismKind::site:
        branch_rate_[s] = a;
        mech_[s] = a > 0.0 ? site_mechanism(env, s, beta) : auxiliary_mechanism(s);
        break;
      case MechanismKind::auxiliary:
        branch_rate_[s] = a;
        mech_[s] = auxiliary_mechanism(s);
        break;
      case MechanismKind::mixed:
        branch_rate_[s] = (1.0 + spec.c) * a;
        mech_[s] = a > 0.0 ? mixed_mechanism(env, s, spec.c, beta) : auxiliary_mechanism(s);
        break;
    }
    max_branch_rate_ = std::max(max_branch_rate_, branch_rate_[s]);
  }
}

void ParticleState::remove(std::size_t i) {
  const std::size_t last = site.size() - 1;
  site[i] = site[last];
  ux[i] = ux[last];
  uy[i] = uy[last];
  site.pop_back();
  ux.pop_back();
  uy.pop_back();
}

std::vector<std::uint64_t> ParticleState::site_counts() const {
  std::vector<std::uint64_t> c(grid.site_count(), 0);
  for (auto s : site) ++c[s];
  return c;
}

void OffspringTally::add(std::int64_t k, std::uint64_t times) {
  if (k < static_cast<std::int64_t>(kDense)) {
    dense_[static_cast<std::size_t>(k)] += times;
  } else {
    sparse_[k] += times;
  }
  total_ += times;
  max_k_ = std::max(max_k_, k);
}

std::uint64_t OffspringTally::count(std::int64_t k) const {
  if (k < 0) return 0;
  if (k < static_cast<std::int64_t>(kDense)) return dense_[static_cast<std::size_t>(k)];
  const auto it = sparse_.find(k);
  return it == sparse_.end() ? 0 : it->second;
}

std::uint64_t OffspringTally::exceeding(std::int64_t m) const {
  std::uint64_t below = 0;
  const std::int64_t dense_top = std::min<std::int64_t>(m, static_cast<std::int64_t>(kDense) - 1);
  for (std::int64_t k = 0; k <= dense_top; ++k) below += dense_[static_cast<std::size_t>(k)];
  if (m >= static_cast<std::int64_t>(kDense)) {
    for (auto it = sparse_.begin(); it != sparse_.end() && it->first <= m; ++it) below += it->second;
  }
  return total_ - below;
}

void OffspringTally::merge(const OffspringTally& other) {
  for (std::size_t k = 0; k < kDense; ++k) dense_[k] += other.dense_[k];
  for (const auto& [k, c] : other.sparse_) sparse_[k] += c;
  total_ += other.total_;
  max_k_ = std::max(max_k_, other.max_k_);
}

std::vector<std::pair<std::int64_t, std::uint64_t>> OffspringTally::entries() const {
  std::vector<std::pair<std::int64_t, std::uint64_t>> out;
  for (std::size_t k = 0; k < kDense; ++k) {
    if (dense_[k] != 0) out.emplace_back(static_cast<std::int64_t>(k), dense_[k]);
  }
  for (const auto& kv : sparse_) out.push_back(kv);
  return out;
}

void JumpLedger::record(double t, std::size_t site, std::int64_t k, double eps, double xi_sign) {
  all_.add(k);
  if (xi_sign > 0.0) positive_.add(k);
  if (records_.size() < limit_) {
    const double w = weight_ ? (*weight_)[site] : 1.0;
    records_.push_back({t, static_cast<std::uint32_t>(site), k, eps * static_cast<double>(k - 1) * w});
  }
}

void JumpLedger::merge(const JumpLedger& other) {
  all_.merge(other.all_);
  positive_.merge(other.positive_);
  for (const auto& r : other.records_) {
    if (records_.size() >= limit_) break;
    records_.push_back(r);
  }
}

std::string JumpLedger::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "t,site,k,mass_jump\n";
  for (const auto& r : records_) out << r.t << ',' << r.site << ',' << r.k << ',' << r.mass_jump << '\n';
  return out.str();
}

ParticleState init_poisson(const Grid& grid, const Field& mu0, double eps, CounterRng& rng, std::size_t cap) {
  require(mu0.grid() == grid, "init_poisson: mu0 lives on a different grid");
  require(eps > 0.0 && std::isfinite(eps), "init_poisson: eps must be > 0");
  ParticleState state;
  state.grid = grid;
  state.eps = eps;
  state.cap = cap;
  for (std::size_t s = 0; s < mu0.size(); ++s) {
    const double m = mu0[s];
    if (!(m >= 0.0) || !std::isfinite(m)) fail(ErrorCode::invalid_argument, "init_poisson: mu0 must be >= 0");
    if (m == 0.0) continue;
    std::poisson_distribution<std::int64_t> draw(m / eps);
    const std::int64_t c = draw(rng);
    if (state.count() + static_cast<std::size_t>(c) > cap) {
      fail(ErrorCode::explosion, "init_poisson: initial population exceeds the particle cap");
    }
    for (std::int64_t i = 0; i < c; ++i) state.add_at_site(s);
  }
  return state;
}

void advance(ParticleState& state, const BranchingSystem& system, double t_end, CounterRng& rng,
             JumpLedger* ledger, const EventObserver* observer) {
  require(state.grid == system.grid(), "advance: state and system grids differ");
  require(t_end >= state.t, "advance: t_end is before the current time");
  if (state.exploded) return;
  const Grid& grid = state.grid;
  const double jump_rate = system.jump_rate();
  SumTree tree;
  for (auto s : state.site) tree.push(system.total_rate(s));
  std::uint64_t since_rebuild = 0;

  while (state.count() > 0) {
    const double total = tree.total();
    const double dt = rng.exponential(total);
    if (state.t + dt >= t_end) break;
    state.t += dt;
    const std::size_t i = tree.find(rng.uniform());
    const std::size_t x = state.site[i];
    if (rng.uniform() * system.total_rate(x) < jump_rate) {
      const int dir = static_cast<int>(rng() >> 62);
      const std::size_t y = grid.neighbors(x)[dir];
      static constexpr int dx[4] = {1, -1, 0, 0};
      static constexpr int dy[4] = {0, 0, 1, -1};
      state.site[i] = static_cast<std::uint32_t>(y);
      state.ux[i] += dx[dir];
      state.uy[i] += dy[dir];
      tree.set(i, system.total_rate(y));
      ++state.events.jumps;
      if (observer) (*observer)({Event::jump, state.t, i, y, 1});
    } else {
      const std::int64_t k = system.sample_offspring(x, rng);
      ++state.events.branchings;
      if (ledger) ledger->record(state.t, x, k, state.eps, system.xi_sign(x));
      if (observer) (*observer)({Event::branching, state.t, i, x, k});
      if (k == 0) {
        ++state.events.deaths;
        const std::size_t last = state.count() - 1;
        tree.set(i, tree.weight(last));
        tree.pop();
        state.remove(i);
      } else {
        if (state.count() + static_cast<std::size_t>(k - 1) > state.cap) {
          state.exploded = true;
          return;
        }
        const double r = system.total_rate(x);
        const std::int64_t px = state.ux[i];
        const std::int64_t py = state.uy[i];
        for (std::int64_t c = 1; c < k; ++c) {
          state.add(x, px, py);
          tree.push(r);
        }
      }
    }
    if (++since_rebuild == (1u << 20)) {
      tree.rebuild();
      since_rebuild = 0;
    }
  }
  state.t = t_end;
}

double pair(const ParticleState& state, const Field& f) {
  require(f.grid() == state.grid, "pair: test function lives on a different grid");
  double total = 0.0;
  for (auto s : state.site) total += f[s];
  return state.eps * total;
}

double support_radius(const ParticleState& state) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < state.count(); ++i) {
    const double x = state.grid.coord_of_lattice(state.ux[i]);
    const double y = state.grid.coord_of_lattice(state.uy[i]);
    r2 = std::max(r2, x * x + y * y);
  }
  return std::sqrt(r2);
}

ParticleState merge_states(const ParticleState& a, const ParticleState& b) {
  require(a.grid == b.grid && a.eps == b.eps, "merge_states: incompatible states");
  ParticleState out = a;
  for (std::size_t i = 0; i < b.count(); ++i) out.add(b.site[i], b.ux[i], b.uy[i]);
  out.t = std::max(a.t, b.t);
  return out;
}

std::string snapshot_csv(const ParticleState& state, bool header) {
  std::ostringstream out;
  out.precision(17);
  if (header) out << "time,site,count\n";
  const auto counts = state.site_counts();
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] != 0) out << state.t << ',' << s << ',' << counts[s] << '\n';
  }
  return out.str();
}

namespace {

struct Frame {
  std::int64_t x;
  std::int64_t y;
  double t;
  std::int64_t copies;
};

// Displacement of the rate-4n^2 walk over time h: the jump count is
// Poisson(4 n^2 h) and each jump spends two uniform bits on its direction
// (axis bit, sign bit), counted 64 jumps at a time.
class Walker {
public:
  explicit Walker(double n2) : rate_(4.0 * n2) {}

  void displace(double h, std::int64_t& x, std::int64_t& y, CounterRng& rng) const {
    if (h <= 0.0) return;
    std::poisson_distribution<std::int64_t> d(rate_ * h);
    std::int64_t jumps = d(rng);
    while (jumps > 0) {
      const int take = static_cast<int>(std::min<std::int64_t>(jumps, 64));
      const std::uint64_t mask = take == 64 ? ~0ull : ((1ull << take) - 1);
      const std::uint64_t axis = rng() & mask;
      const std::uint64_t sign = rng();
      const int x_jumps = take - std::popcount(axis);
      const int x_plus = std::popcount(~axis & sign & mask);
      const int y_plus = std::popcount(axis & sign);
      x += 2 * x_plus - x_jumps;
      y += 2 * y_plus - std::popcount(axis);
      jumps -= take;
    }
  }

private:
  double rate_;
};

}  // namespace

LineageResult simulate_lineages(const ParticleState& initial, const BranchingSystem& system,
                                const LineageOptions& options, CounterRng& rng) {
  require(initial.grid == system.grid(), "simulate_lineages: state and system grids differ");
  require(!options.obs_times.empty(), "simulate_lineages: at least one observation time is required");
  for (std::size_t j = 0; j < options.obs_times.size(); ++j) {
    require(options.obs_times[j] >= initial.t && (j == 0 || options.obs_times[j] > options.obs_times[j - 1]),
            "simulate_lineages: observation times must be increasing and >= the initial time");
  }
  for (const Field* f : options.test_functions) {
    require(f && f->grid() == system.grid(), "simulate_lineages: test function on a different grid");
  }
  const Grid& grid = system.grid();
  const double n = grid.n();
  const Walker walker(n * n);
  const double amax = system.max_branching_rate();
  const double horizon = options.obs_times.back();
  const std::size_t m = options.obs_times.size();
  const std::size_t nf = options.test_functions.size();

  LineageResult result;
  result.pairings.assign(m, std::vector<double>(nf, 0.0));
  result.counts.assign(m, 0);
  std::vector<std::vector<double>> raw(m, std::vector<double>(nf, 0.0));
  double r2_max = 0.0;
  std::uint64_t created = initial.count();
  if (created > options.cap) {
    result.exploded = true;
    return result;
  }

  auto observe = [&](std::size_t j, std::int64_t x, std::int64_t y) {
    const std::size_t s = grid.index(grid.wrap(x), grid.wrap(y));
    ++result.counts[j];
    for (std::size_t f = 0; f < nf; ++f) raw[j][f] += (*options.test_functions[f])[s];
    if (j + 1 == m) {
      const double px = grid.coord_of_lattice(x);
      const double py = grid.coord_of_lattice(y);
      r2_max = std::max(r2_max, px * px + py * py);
    }
  };

  std::vector<Frame> stack;
  for (std::size_t i = 0; i < initial.count(); ++i) stack.push_back({initial.ux[i], initial.uy[i], initial.t, 1});

  while (!stack.empty()) {
    Frame& top = stack.back();
    std::int64_t x = top.x;
    std::int64_t y = top.y;
    double t = top.t;
    if (--top.copies == 0) stack.pop_back();

    // Follow one particle until it dies or reaches the horizon.
    std::size_t next_obs = static_cast<std::size_t>(
        std::upper_bound(options.obs_times.begin(), options.obs_times.end(), t) - options.obs_times.begin());
    if (next_obs > 0 && options.obs_times[next_obs - 1] == t) --next_obs;
    for (;;) {
      const double candidate = amax > 0.0 ? t + rng.exponential(amax) : INFINITY;
      const double seg_end = std::min(candidate, horizon);
      while (next_obs < m && options.obs_times[next_obs] <= seg_end) {
        const double to = options.obs_times[next_obs];
        walker.displace(to - t, x, y, rng);
        t = to;
        observe(next_obs, x, y);
        ++next_obs;
      }
      if (candidate >= horizon) break;
      walker.displace(candidate - t, x, y, rng);
      t = candidate;
      const std::size_t s = grid.index(grid.wrap(x), grid.wrap(y));
      if (rng.uniform() * amax >= system.branching_rate(s)) continue;
      const std::int64_t k = system.sample_offspring(s, rng);
      ++result.events.branchings;
      if (options.ledger) {
        options.ledger->record(t, s, k, initial.eps, system.xi_sign(s));
      }
      if (k == 0) {
        ++result.events.deaths;
        break;
      }
      if (k > 1) {
        created += static_cast<std::uint64_t>(k - 1);
        if (created > options.cap) {
          result.exploded = true;
          return result;
        }
        stack.push_back({x, y, t, k - 1});
      }
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t f = 0; f < nf; ++f) result.pairings[j][f] = initial.eps * raw[j][f];
  }
  result.support_radius = std::sqrt(r2_max);
  return result;
}

}  // namespace brwre
