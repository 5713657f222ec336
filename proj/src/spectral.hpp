#pragma once

#include <complex>
#include <span>
#include <vector>

#include "grid.hpp"

namespace brwre {

using Spectrum = std::vector<std::complex<double>>;

// Centered integer frequency index of FFT bin m, in (-side/2, side/2].
inline int centered_mode(int m, int side) { return m <= side / 2 ? m : m - side; }

// Physical frequency (cycles per unit length) of bin (mx, my) on the torus.
std::array<double, 2> physical_frequency(const Grid& grid, std::size_t bin);
double frequency_radius(const Grid& grid, std::size_t bin);

// Fourier symbol of -Delta^n: 4 n^2 sum_i sin^2(pi k_i / n).
double laplacian_symbol(const Grid& grid, std::size_t bin);
std::vector<double> laplacian_symbols(const Grid& grid);

// Unnormalized forward DFT and normalized inverse (real part). FFTW-backed;
// plans are cached per side length and safe to use from several threads.
Spectrum forward_fft(const Field& f);
Field inverse_fft(const Grid& grid, Spectrum spectrum);

// F^{-1}(m * F f) for a real, even multiplier given per bin.
Field apply_multiplier(const Field& f, std::span<const double> multiplier);

}  // namespace brwre
