#include "spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>

#include "errors.hpp"

namespace brwre {
namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  ~PlanPair() {
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(int side) {
  static std::map<int, std::unique_ptr<PlanPair>> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(side);
  if (it != cache.end()) return *it->second;
  auto pair = std::make_unique<PlanPair>();
  const std::size_t count = static_cast<std::size_t>(side) * side;
  auto* scratch_in = fftw_alloc_complex(count);
  auto* scratch_out = fftw_alloc_complex(count);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  pair->forward = fftw_plan_dft_2d(side, side, scratch_in, scratch_out, FFTW_FORWARD, flags);
  pair->backward = fftw_plan_dft_2d(side, side, scratch_in, scratch_out, FFTW_BACKWARD, flags);
  fftw_free(scratch_in);
  fftw_free(scratch_out);
  if (!pair->forward || !pair->backward) fail(ErrorCode::internal, "fftw planning failed");
  return *cache.emplace(side, std::move(pair)).first->second;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

std::array<double, 2> physical_frequency(const Grid& grid, std::size_t bin) {
  const int side = grid.side();
  const int mx = centered_mode(static_cast<int>(bin % side), side);
  const int my = centered_mode(static_cast<int>(bin / side), side);
  return {mx / grid.L(), my / grid.L()};
}

double frequency_radius(const Grid& grid, std::size_t bin) {
  const auto [kx, ky] = physical_frequency(grid, bin);
  return std::hypot(kx, ky);
}

double laplacian_symbol(const Grid& grid, std::size_t bin) {
  const int side = grid.side();
  const double n2 = static_cast<double>(grid.n()) * grid.n();
  const double sx = std::sin(std::numbers::pi * centered_mode(static_cast<int>(bin % side), side) / side);
  const double sy = std::sin(std::numbers::pi * centered_mode(static_cast<int>(bin / side), side) / side);
  return 4.0 * n2 * (sx * sx + sy * sy);
}

std::vector<double> laplacian_symbols(const Grid& grid) {
  std::vector<double> out(grid.site_count());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = laplacian_symbol(grid, b);
  return out;
}

Spectrum forward_fft(const Field& f) {
  const auto& plans = plans_for(f.grid().side());
  Spectrum in(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) in[i] = f[i];
  Spectrum out(f.size());
  fftw_execute_dft(plans.forward, as_fftw(in.data()), as_fftw(out.data()));
  return out;
}

Field inverse_fft(const Grid& grid, Spectrum spectrum) {
  require(spectrum.size() == grid.site_count(), "inverse_fft: size mismatch");
  const auto& plans = plans_for(grid.side());
  Spectrum out(spectrum.size());
  fftw_execute_dft(plans.backward, as_fftw(spectrum.data()), as_fftw(out.data()));
  Field f(grid);
  const double norm = 1.0 / static_cast<double>(spectrum.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = out[i].real() * norm;
  return f;
}

Field apply_multiplier(const Field& f, std::span<const double> multiplier) {
  require(multiplier.size() == f.size(), "apply_multiplier: size mismatch");
  Spectrum s = forward_fft(f);
  for (std::size_t b = 0; b < s.size(); ++b) s[b] *= multiplier[b];
  return inverse_fft(f.grid(), std::move(s));
}

}  // namespace brwre
