#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlpl/common.hpp"

namespace nlpl {

enum class GridShape { box, ball };

std::string to_string(GridShape s);
GridShape grid_shape_from_string(const std::string& s);

inline constexpr std::size_t kDefaultGridBudget = 4'000'000;

/// Uniform lattice {-L, -L+h, ..., L}^d, optionally restricted to |x| <= L.
/// Points are stored by integer coordinates k with x = k*h; ordering is
/// lexicographic with the last axis fastest.
class Grid {
 public:
  Grid(int d, double L, double h, GridShape shape = GridShape::box,
       std::size_t budget = kDefaultGridBudget);

  int dimension() const { return d_; }
  double half_width() const { return L_; }
  double spacing() const { return h_; }
  GridShape shape() const { return shape_; }
  std::int64_t half_count() const { return n_; }  // L / h
  std::size_t size() const { return count_; }
  double cell_volume() const { return w_; }

  std::span<const std::int64_t> lattice(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  void point(std::size_t i, std::span<double> out) const;
  std::vector<double> point(std::size_t i) const;

  /// True when the lattice point k lies in the grid.
  bool contains_lattice(std::span<const std::int64_t> k) const;
  /// Index of lattice point k, or -1 when absent.
  std::int64_t index_of(std::span<const std::int64_t> k) const;

 private:
  int d_;
  double L_;
  double h_;
  GridShape shape_;
  std::int64_t n_;
  double w_;
  std::size_t count_ = 0;
  std::vector<std::int64_t> coords_;
  std::vector<std::int64_t> box_to_index_;  // ball grids only
};

}  // namespace nlpl
