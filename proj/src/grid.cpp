#include "grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "errors.hpp"

namespace brwre {

Grid::Grid(int n, double L) : n_(n), side_(0) {
  require(n >= 1, "grid: n must be >= 1, got " + std::to_string(n));
  require(std::isfinite(L) && L > 0.0, "grid: L must be positive");
  const double side = L * n;
  const double rounded = std::round(side);
  require(std::abs(side - rounded) < 1e-9, "grid: L*n must be an integer");
  require(rounded >= 4.0, "grid: L*n must be >= 4");
  require(static_cast<long long>(rounded) % 2 == 0, "grid: L*n must be even");
  require(rounded <= 1 << 15, "grid: L*n too large");
  side_ = static_cast<int>(rounded);
}

std::size_t Grid::site_at(double x, double y) const {
  const auto ix = static_cast<std::int64_t>(std::llround((x + 0.5 * L()) * n_));
  const auto iy = static_cast<std::int64_t>(std::llround((y + 0.5 * L()) * n_));
  return index(wrap(ix), wrap(iy));
}

Field::Field(const Grid& grid, double fill) : grid_(grid), values_(grid.site_count(), fill) {}

Field::Field(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  require(values_.size() == grid.site_count(), "field: value count does not match grid");
}

Field Field::from_function(const Grid& grid, const std::function<double(double, double)>& f) {
  Field out(grid);
  for (std::size_t s = 0; s < out.size(); ++s) {
    const auto [x, y] = grid.coord(s);
    out[s] = f(x, y);
  }
  return out;
}

double Field::sum() const {
  // Pairwise-ish accumulation is unnecessary at these sizes; Kahan keeps
  // conservation checks at the 1e-12 level.
  double s = 0.0;
  double c = 0.0;
  for (double v : values_) {
    const double y = v - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

double Field::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }

bool Field::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_grid(const Field& a, const Field& b) {
  require(a.grid() == b.grid() && a.size() == b.size(), "field: grid mismatch");
}

Field& Field::operator+=(const Field& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Field& Field::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(Field a, double s) { return a *= s; }

Field pointwise_product(const Field& a, const Field& b) {
  require_same_grid(a, b);
  Field out(a.grid());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double pairing(const Field& mass, const Field& f) {
  require_same_grid(mass, f);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += mass[i] * f[i];
  return s;
}

Field apply_laplacian(const Field& f) {
  const Grid& g = f.grid();
  const double n2 = static_cast<double>(g.n()) * g.n();
  Field out(g);
  for (std::size_t s = 0; s < f.size(); ++s) {
    double acc = 0.0;
    for (std::size_t y : g.neighbors(s)) acc += f[y] - f[s];
    out[s] = n2 * acc;
  }
  return out;
}

}  // namespace brwre
