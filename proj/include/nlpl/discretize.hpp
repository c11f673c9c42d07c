#pragma once

#include <cstdint>
#include <cmath>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nlpl/grid.hpp"
#include "nlpl/kernel.hpp"

namespace nlpl {

/// Grid samples of a function that is zero outside the grid.
struct Field {
  std::shared_ptr<const Grid> grid;
  std::vector<double> values;

  Field(std::shared_ptr<const Grid> g, std::vector<double> v);
  explicit Field(std::shared_ptr<const Grid> g);  // zero field

  std::size_t size() const { return values.size(); }
};

/// Discrete L^r norm with cell weight h^d; r = infinity gives the max norm.
double lr_norm(const Field& field, double r);
double lr_norm(std::span<const double> values, double cell_volume, double r);

/// Kernel weights for one (kernel, grid) pair.
///
/// exterior[i] = h^d * sum over lattice points y outside the grid of K(x_i, y),
/// which is the weight of the zero-extended partners of node i.
struct InteractionTable {
  std::shared_ptr<const Grid> grid;
  double cell_volume = 0.0;
  std::vector<IndexPair> pairs;
  std::vector<double> pair_weight;  // K(x_i, x_j)

  // Symmetric adjacency in CSR form (both directions).
  std::vector<std::size_t> row_start;
  std::vector<std::uint32_t> neighbour;
  std::vector<double> neighbour_weight;

  std::vector<double> exterior;

  std::size_t size() const { return exterior.size(); }
};

InteractionTable build_interactions(const KernelSpec& spec, std::shared_ptr<const Grid> grid);

struct GridQuadrature {};
struct MonteCarloQuadrature {
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 0;
};
using QuadratureBackend = std::variant<GridQuadrature, MonteCarloQuadrature>;

struct QuadratureEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// |s|^p with fast paths for p = 1, 2.
inline double pow_abs(double s, double p) {
  const double a = s < 0 ? -s : s;
  if (p == 2.0) return a * a;
  if (p == 1.0) return a;
  return a == 0.0 ? 0.0 : std::pow(a, p);
}

/// Double integral of K(x,y)|u(x) - u(y)|^p over R^d x R^d for the
/// zero-extended field.
QuadratureEstimate double_integral_p(const Field& field, const KernelSpec& spec, double p,
                                     const QuadratureBackend& backend = GridQuadrature{});
double double_integral_p(std::span<const double> values, const InteractionTable& table, double p);

/// Piecewise-constant value of the field at an arbitrary point (0 off-grid).
double field_value_at(const Field& field, std::span<const double> x);

void write_grid_json(std::ostream& out, const Grid& grid);
void write_field_csv(std::ostream& out, const Field& field);
Field read_field_csv(std::istream& in, std::shared_ptr<const Grid> grid);

}  // namespace nlpl
