#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "solvers.hpp"
#include "stats.hpp"

namespace brwre {
namespace {

// int_a^b phi_tau(x) d tau for a step series with steps of length dt.
double extra_integral(const TimeSeries& extra, double dt, std::size_t site, double a, double b) {
  if (extra.empty() || b <= a) return 0.0;
  double total = 0.0;
  auto step = static_cast<std::size_t>(std::floor(a / dt));
  double lo = a;
  while (lo < b) {
    const double hi = std::min(b, static_cast<double>(step + 1) * dt);
    total += extra.at(step)[site] * (hi - lo);
    lo = hi;
    ++step;
  }
  return total;
}

}  // namespace

FeynmanKacResult feynman_kac_estimate(const Field& potential, const Field& f, const TimeSeries& extra_potential,
                                      double step_dt, double T, std::span<const std::size_t> probes,
                                      std::size_t n_paths, std::uint64_t seed, int workers) {
  require_same_grid(potential, f);
  require(!probes.empty(), "feynman_kac_estimate: probe list is empty");
  require(n_paths >= 2, "feynman_kac_estimate: need at least two paths");
  require(T >= 0.0, "feynman_kac_estimate: T must be >= 0");
  require(extra_potential.empty() || step_dt > 0.0, "feynman_kac_estimate: step_dt must be > 0");
  const Grid& grid = potential.grid();
  const double jump_rate = 4.0 * grid.n() * grid.n();

  FeynmanKacResult result;
  result.probes.assign(probes.begin(), probes.end());
  result.paths = n_paths;
  std::vector<double> log_weights(probes.size() * n_paths);
  std::vector<double> values(probes.size() * n_paths);

  parallel_for(probes.size() * n_paths, workers, [&](std::size_t job) {
    const std::size_t probe = job / n_paths;
    require(probes[probe] < grid.site_count(), "feynman_kac_estimate: probe site out of range");
    CounterRng rng(seed, stream_id(StreamTag::feynman_kac, job));
    std::size_t x = probes[probe];
    double s = 0.0;
    double logw = 0.0;
    for (;;) {
      const double hold = rng.exponential(jump_rate);
      const double end = std::min(T, s + hold);
      // The path sits at x on [s, end); phi is evaluated at time T - r.
      logw += potential[x] * (end - s) - extra_integral(extra_potential, step_dt, x, T - end, T - s);
      s = end;
      if (s >= T) break;
      x = grid.neighbors(x)[rng() >> 62];
    }
    log_weights[job] = logw;
    values[job] = f[x];
  });

  result.mean.resize(probes.size());
  result.stderr_.resize(probes.size());
  double max_log = -INFINITY;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    RunningStats st;
    for (std::size_t i = 0; i < n_paths; ++i) {
      const double lw = log_weights[p * n_paths + i];
      max_log = std::max(max_log, lw);
      st.add(std::exp(lw) * values[p * n_paths + i]);
    }
    result.mean[p] = st.mean;
    result.stderr_[p] = st.stderr_mean();
    if (!std::isfinite(st.mean) || !std::isfinite(st.stderr_mean())) {
      fail(ErrorCode::numeric, "feynman_kac_estimate: path weights overflow (max log-weight " +
                                   std::to_string(max_log) + ")");
    }
  }
  result.max_log_weight = max_log;
  return result;
}

}  // namespace brwre
