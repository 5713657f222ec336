#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace brwre {

// Periodic lattice with spacing 1/n on the box [-L/2, L/2)^2.
class Grid {
public:
  // Throws Error(invalid_argument) unless n >= 1 and L*n is an even integer >= 4.
  Grid(int n, double L);

  int n() const { return n_; }
  double L() const { return static_cast<double>(side_) / n_; }
  int side() const { return side_; }
  std::size_t site_count() const { return static_cast<std::size_t>(side_) * side_; }
  double spacing() const { return 1.0 / n_; }
  // Lattice measure of a single site.
  double cell_measure() const { return 1.0 / (static_cast<double>(n_) * n_); }

  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(wrap(iy)) * side_ + static_cast<std::size_t>(wrap(ix));
  }
  std::array<int, 2> lattice_coords(std::size_t site) const {
    return {static_cast<int>(site % side_), static_cast<int>(site / side_)};
  }
  double coord_of_lattice(std::int64_t i) const {
    return -0.5 * L() + static_cast<double>(i) / n_;
  }
  std::array<double, 2> coord(std::size_t site) const {
    const auto [ix, iy] = lattice_coords(site);
    return {coord_of_lattice(ix), coord_of_lattice(iy)};
  }
  // Nearest site to a physical point, periodically wrapped.
  std::size_t site_at(double x, double y) const;

  int wrap(std::int64_t i) const {
    const std::int64_t m = i % side_;
    return static_cast<int>(m < 0 ? m + side_ : m);
  }

  std::array<std::size_t, 4> neighbors(std::size_t site) const {
    const auto [ix, iy] = lattice_coords(site);
    return {index(ix + 1, iy), index(ix - 1, iy), index(ix, iy + 1), index(ix, iy - 1)};
  }

  bool operator==(const Grid& other) const { return n_ == other.n_ && side_ == other.side_; }

private:
  int n_;
  int side_;
};

// Real grid function, row-major (x fastest).
class Field {
public:
  Field() = default;
  explicit Field(const Grid& grid, double fill = 0.0);
  Field(const Grid& grid, std::vector<double> values);

  static Field from_function(const Grid& grid, const std::function<double(double, double)>& f);

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double sum() const;
  double mean() const { return sum() / static_cast<double>(values_.size()); }
  double max_abs() const;
  double min() const;
  double max() const;
  bool all_finite() const;

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s);

private:
  Grid grid_{1, 4.0};
  std::vector<double> values_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(Field a, double s);
Field pointwise_product(const Field& a, const Field& b);

// <mu, f> for a site-mass field mu.
double pairing(const Field& mass, const Field& f);

// Real-space discrete Laplacian n^2 * sum_{y~x} (f(y) - f(x)).
Field apply_laplacian(const Field& f);

void require_same_grid(const Field& a, const Field& b);

}  // namespace brwre
