#include "nlpl/grid.hpp"

#include <cmath>

#include "nlpl/common.hpp"

namespace nlpl {

std::string to_string(GridShape s) { return s == GridShape::box ? "box" : "ball"; }

GridShape grid_shape_from_string(const std::string& s) {
  if (s == "box") return GridShape::box;
  if (s == "ball") return GridShape::ball;
  throw InvalidInput("unknown grid shape '" + s + "'");
}

Grid::Grid(int d, double L, double h, GridShape shape, std::size_t budget)
    : d_(d), L_(L), h_(h), shape_(shape) {
  if (d < 1) throw InvalidInput("grid dimension must be positive");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidInput("grid spacing must be positive");
  if (!(L > 0.0) || !std::isfinite(L)) throw InvalidInput("grid half-width must be positive");
  const double ratio = L / h;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw InvalidInput("grid half-width L must be a positive integer multiple of h");
  n_ = static_cast<std::int64_t>(rounded);
  w_ = std::pow(h, d);

  const std::int64_t side = 2 * n_ + 1;
  double box_count = std::pow(static_cast<double>(side), d);
  if (box_count >= static_cast<double>(budget))
    throw InvalidInput("grid point count " + format_double(box_count) + " exceeds budget " +
                       std::to_string(budget));
  const auto total = static_cast<std::size_t>(box_count);
  if (shape_ == GridShape::ball) box_to_index_.assign(total, -1);

  std::vector<std::int64_t> k(static_cast<std::size_t>(d), -n_);
  coords_.reserve(total * static_cast<std::size_t>(d));
  for (std::size_t b = 0; b < total; ++b) {
    bool keep = true;
    if (shape_ == GridShape::ball) {
      std::int64_t r2 = 0;
      for (auto v : k) r2 += v * v;
      keep = r2 <= n_ * n_;
    }
    if (keep) {
      if (shape_ == GridShape::ball) box_to_index_[b] = static_cast<std::int64_t>(count_);
      coords_.insert(coords_.end(), k.begin(), k.end());
      ++count_;
    }
    for (int a = d - 1; a >= 0; --a) {
      if (++k[static_cast<std::size_t>(a)] <= n_) break;
      k[static_cast<std::size_t>(a)] = -n_;
    }
  }
}

void Grid::point(std::size_t i, std::span<double> out) const {
  const auto k = lattice(i);
  for (int a = 0; a < d_; ++a) out[static_cast<std::size_t>(a)] = static_cast<double>(k[static_cast<std::size_t>(a)]) * h_;
}

std::vector<double> Grid::point(std::size_t i) const {
  std::vector<double> x(static_cast<std::size_t>(d_));
  point(i, x);
  return x;
}

bool Grid::contains_lattice(std::span<const std::int64_t> k) const {
  std::int64_t r2 = 0;
  for (auto v : k) {
    if (v < -n_ || v > n_) return false;
    r2 += v * v;
  }
  return shape_ == GridShape::box || r2 <= n_ * n_;
}

std::int64_t Grid::index_of(std::span<const std::int64_t> k) const {
  if (static_cast<int>(k.size()) != d_ || !contains_lattice(k)) return -1;
  const std::int64_t side = 2 * n_ + 1;
  std::int64_t b = 0;
  for (auto v : k) b = b * side + (v + n_);
  return shape_ == GridShape::box ? b : box_to_index_[static_cast<std::size_t>(b)];
}

}  // namespace nlpl
