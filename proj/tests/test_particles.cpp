#include <doctest.h>

#include <cmath>
#include <sstream>

#include "environment.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "particles.hpp"
#include "rng.hpp"
#include "solvers.hpp"
#include "stats.hpp"

using namespace brwre;

namespace {

Field unit_square(const Grid& g) { return initial_measure(g, InitialSpec{}); }
Field bump(const Grid& g) { return bump_function(g, BumpSpec{0.0, 0.0, 1.0, 1.0}); }

}  // namespace

TEST_CASE("initial measures") {
  const Grid g(8, 4.0);
  const Field sq = unit_square(g);
  CHECK(sq.sum() == doctest::Approx(1.0).epsilon(1e-14));
  std::size_t occupied = 0;
  for (double v : sq.values()) occupied += v > 0.0;
  CHECK(occupied == 64);  // 8 x 8 sites in the unit square
  const Field pt = initial_measure(g, InitialSpec{InitialSpec::point, 0.0, 0.0, 1.0, 2.5});
  CHECK(pt[g.site_at(0, 0)] == 2.5);
  CHECK(pt.sum() == 2.5);
  CHECK(particle_mass(8, 0.5) == doctest::Approx(1.0 / 64.0));
  CHECK(particle_mass(16, 0.25) == doctest::Approx(std::pow(16.0, -4.0)));
}

TEST_CASE("poisson initial conditions") {
  const Grid g(4, 4.0);
  CounterRng rng(1, 0);
  CHECK(init_poisson(g, Field(g), 0.1, rng).count() == 0);

  Field mu0(g);
  const std::size_t x = g.site_at(0, 0);
  mu0[x] = 0.3;
  const double eps = 0.01;
  RunningStats count;
  for (int r = 0; r < 10000; ++r) {
    CounterRng rr(2, r);
    const auto s = init_poisson(g, mu0, eps, rr);
    for (auto site : s.site) CHECK(site == x);
    count.add(static_cast<double>(s.count()));
  }
  const double mean = 0.3 / eps;
  CHECK(std::abs(count.mean - mean) <= 3.0 * std::sqrt(mean / 10000.0));
}

TEST_CASE("poisson laplace functional") {
  const Grid g(4, 4.0);
  const Field mu0 = unit_square(g) * 2.0;
  const Field phi = bump(g);
  const double eps = 0.05;
  RunningStats lap;
  for (int r = 0; r < 20000; ++r) {
    CounterRng rng(3, r);
    lap.add(std::exp(-pair(init_poisson(g, mu0, eps, rng), phi)));
  }
  const double ref = std::exp(-pairing(mu0, dual_initial(phi, eps)));
  CHECK(std::abs(lap.mean - ref) <= 3.0 * lap.stderr_mean());
}

TEST_CASE("initial population cap") {
  const Grid g(4, 4.0);
  CounterRng rng(1, 0);
  try {
    init_poisson(g, unit_square(g), 1e-4, rng, 100);
    FAIL("cap was not enforced");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::explosion);
  }
}

TEST_CASE("pairing and support radius") {
  const Grid g(4, 4.0);
  ParticleState empty;
  empty.grid = g;
  empty.eps = 0.1;
  CHECK(pair(empty, Field(g, 1.0)) == 0.0);
  CHECK(support_radius(empty) == 0.0);

  ParticleState one = empty;
  const std::size_t x = g.site_at(1.0, 0.0);
  one.add_at_site(x);
  Field ind(g);
  ind[x] = 1.0;
  CHECK(pair(one, ind) == doctest::Approx(0.1));
  CHECK(support_radius(one) == doctest::Approx(1.0));

  ParticleState many = empty;
  CounterRng rng(4, 0);
  for (int i = 0; i < 20; ++i) many.add_at_site(static_cast<std::size_t>(rng() % g.site_count()));
  const Field a = bump(g);
  Field b(g);
  for (double& v : b.values()) v = rng.uniform();
  CHECK(pair(many, a * 2.0 + b * -3.0) == doctest::Approx(2.0 * pair(many, a) - 3.0 * pair(many, b)).epsilon(1e-12));
  const ParticleState both = merge_states(many, one);
  CHECK(both.count() == 21);
  CHECK(support_radius(both) >= support_radius(many));
  CHECK(support_radius(both) >= support_radius(one));
}

TEST_CASE("zero environment: no branching and diffusive spread") {
  const Grid g(4, 8.0);
  const auto env = constant_environment(g, 0.0);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  CHECK(sys.max_branching_rate() == 0.0);
  CHECK(sys.jump_rate() == 64.0);
  Field delta(g);
  const std::size_t origin = g.site_at(0, 0);
  delta[origin] = 1.0;
  const double t = 0.1;
  // heat-kernel second moment per axis from the spectral solver
  const Field kernel = heat_solve(delta, t);
  double var_x = 0.0;
  for (std::size_t s = 0; s < g.site_count(); ++s) var_x += kernel[s] * std::pow(g.coord(s)[0], 2);
  RunningStats msd;
  for (int r = 0; r < 4000; ++r) {
    ParticleState st;
    st.grid = g;
    st.eps = 1.0;
    st.add_at_site(origin);
    st.add_at_site(origin);
    CounterRng rng(5, r);
    advance(st, sys, t, rng);
    CHECK(st.count() == 2);
    CHECK(st.events.branchings == 0);
    CHECK(st.t == t);
    const double x0 = static_cast<double>(st.ux[0] - g.lattice_coords(origin)[0]) / g.n();
    msd.add(x0 * x0);
  }
  CHECK(std::abs(msd.mean - var_x) <= 3.0 * msd.stderr_mean());
  CHECK(var_x == doctest::Approx(2.0 * t).epsilon(0.01));
}

TEST_CASE("negative environment only removes particles") {
  const Grid g(4, 4.0);
  const auto env = constant_environment(g, -4.0);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  CounterRng rng(6, 0);
  ParticleState st = init_poisson(g, unit_square(g), 1.0 / 200.0, rng);
  std::size_t last = st.count();
  for (int k = 1; k <= 20; ++k) {
    advance(st, sys, 0.02 * k, rng);
    CHECK(st.count() <= last);
    last = st.count();
  }
  CHECK(st.events.branchings == st.events.deaths);
}

TEST_CASE("auxiliary total mass is a martingale") {
  const Grid g(4, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 1);
  const BranchingSystem sys(env, OffspringLaw(0.5), {MechanismKind::auxiliary, 0.0});
  const double eps = particle_mass(4, 0.5);
  const Field mu0 = unit_square(g);
  RunningStats mass;
  for (int r = 0; r < 10000; ++r) {
    CounterRng rng(7, r);
    ParticleState st = init_poisson(g, mu0, eps, rng);
    advance(st, sys, 0.25, rng);
    REQUIRE(!st.exploded);
    mass.add(st.mass());
  }
  CHECK(std::abs(mass.mean - 1.0) <= 3.0 * mass.stderr_mean());
}

TEST_CASE("population cap flags explosion") {
  const Grid g(4, 4.0);
  const auto env = constant_environment(g, 4.0);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  CounterRng rng(8, 0);
  ParticleState st = init_poisson(g, unit_square(g), 1.0 / 50.0, rng);
  st.cap = st.count() + 5;
  advance(st, sys, 10.0, rng);
  CHECK(st.exploded);
}

TEST_CASE("ledger records every branching") {
  const Grid g(4, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 2);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  const Field phi = bump(g);
  JumpLedger ledger(100000, &phi);
  CounterRng rng(9, 0);
  ParticleState st = init_poisson(g, unit_square(g), 1.0 / 16.0, rng);
  const double eps = st.eps;
  advance(st, sys, 0.25, rng, &ledger);
  CHECK(ledger.events() == st.events.branchings);
  CHECK(!ledger.truncated());
  for (const auto& rec : ledger.records()) {
    CHECK(rec.k != 1);
    CHECK(rec.mass_jump == doctest::Approx(eps * (rec.k - 1) * phi[rec.site]));
    if (env.xi[rec.site] < 0.0) CHECK(rec.k == 0);
  }
  std::uint64_t positive = 0;
  for (const auto& rec : ledger.records()) positive += env.xi[rec.site] > 0.0;
  CHECK(ledger.tally_all().total() == ledger.events());
  CHECK(ledger.tally_positive().total() == positive);
  const std::string csv = ledger.to_csv();
  CHECK(csv.rfind("t,site,k,mass_jump\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == ledger.records().size() + 1);
}

TEST_CASE("offspring tally") {
  OffspringTally t;
  t.add(0, 3);
  t.add(2);
  t.add(100000, 2);
  CHECK(t.total() == 6);
  CHECK(t.exceeding(1) == 3);
  CHECK(t.exceeding(99999) == 2);
  CHECK(t.count(100000) == 2);
  CHECK(t.max_k() == 100000);
  OffspringTally u;
  u.add(2, 4);
  t.merge(u);
  CHECK(t.count(2) == 5);
}

TEST_CASE("snapshots") {
  const Grid g(4, 4.0);
  ParticleState st;
  st.grid = g;
  st.t = 0.5;
  st.add_at_site(3);
  st.add_at_site(3);
  st.add_at_site(7);
  CHECK(snapshot_csv(st) == "time,site,count\n0.5,3,2\n0.5,7,1\n");
  CHECK(snapshot_csv(st, false) == "0.5,3,2\n0.5,7,1\n");
}

TEST_CASE("simulation is reproducible per seed") {
  const Grid g(4, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 3);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  auto run = [&](std::uint64_t seed) {
    CounterRng rng(seed, 0);
    ParticleState st = init_poisson(g, unit_square(g), 1.0 / 16.0, rng);
    advance(st, sys, 0.25, rng);
    return st.site;
  };
  CHECK(run(1) == run(1));
  CHECK(run(1) != run(2));
}

TEST_CASE("event and lineage engines agree in law") {
  const Grid g(8, 4.0);
  const auto env = sample_environment(g, Distribution::rademacher, 1);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  const Field phi = bump(g);
  const Field one(g, 1.0);
  const Field mu0 = unit_square(g);
  const double eps = particle_mass(8, 0.5);
  const std::vector<double> obs{0.1, 0.25};
  RunningStats gl[2], ll[2], gm, lm;
  for (int r = 0; r < 3000; ++r) {
    CounterRng a(10, r);
    ParticleState s = init_poisson(g, mu0, eps, a);
    const ParticleState start = s;
    for (std::size_t o = 0; o < obs.size(); ++o) {
      advance(s, sys, obs[o], a);
      gl[o].add(std::exp(-pair(s, phi)));
    }
    gm.add(s.mass());
    CounterRng b(11, r);
    const ParticleState s2 = init_poisson(g, mu0, eps, b);
    const LineageResult lr = simulate_lineages(s2, sys, LineageOptions{obs, {&phi, &one}}, b);
    for (std::size_t o = 0; o < obs.size(); ++o) ll[o].add(std::exp(-lr.pairings[o][0]));
    lm.add(lr.pairings[1][1]);
    CHECK(lr.counts[1] * eps == doctest::Approx(lr.pairings[1][1]));
  }
  for (int o = 0; o < 2; ++o) {
    const double se = std::hypot(gl[o].stderr_mean(), ll[o].stderr_mean());
    CHECK(std::abs(gl[o].mean - ll[o].mean) <= 3.0 * se);
  }
  CHECK(std::abs(gm.mean - lm.mean) <= 3.0 * std::hypot(gm.stderr_mean(), lm.stderr_mean()));
}

TEST_CASE("lineage engine: ledger and cap") {
  const Grid g(4, 4.0);
  const auto env = constant_environment(g, 4.0);
  const BranchingSystem sys(env, OffspringLaw(0.5), {});
  const Field phi = bump(g);
  JumpLedger ledger(1000);
  CounterRng rng(12, 0);
  const ParticleState s = init_poisson(g, unit_square(g), 1.0 / 16.0, rng);
  const LineageResult r = simulate_lineages(s, sys, LineageOptions{{0.25}, {&phi}, 100'000'000, &ledger}, rng);
  CHECK(ledger.events() == r.events.branchings);
  const LineageResult capped = simulate_lineages(s, sys, LineageOptions{{5.0}, {&phi}, s.count() + 3}, rng);
  CHECK(capped.exploded);
}
