#include "nlpl/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nlpl/common.hpp"

namespace nlpl {

namespace {

constexpr std::size_t kChunk = 4096;

// Calls f(k) for every integer point in the box [lo, hi] (inclusive, per axis).
template <class F>
void for_each_lattice(const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi, F&& f) {
  const std::size_t d = lo.size();
  for (std::size_t a = 0; a < d; ++a)
    if (lo[a] > hi[a]) return;
  std::vector<std::int64_t> k(lo);
  while (true) {
    f(std::span<const std::int64_t>(k));
    std::size_t a = d;
    while (a > 0) {
      --a;
      if (++k[a] <= hi[a]) break;
      k[a] = lo[a];
      if (a == 0) return;
    }
    if (d == 0) return;
  }
}

bool box_inside_grid(const Grid& grid, const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi) {
  const std::int64_t n = grid.half_count();
  std::int64_t r2 = 0;
  for (std::size_t a = 0; a < lo.size(); ++a) {
    if (lo[a] < -n || hi[a] > n) return false;
    const std::int64_t m = std::max(std::abs(lo[a]), std::abs(hi[a]));
    r2 += m * m;
  }
  return grid.shape() == GridShape::box || r2 <= n * n;
}

double exterior_weight(const KernelSpec& spec, const Grid& grid, std::span<const double> x) {
  const std::size_t d = x.size();
  const double h = grid.spacing();
  std::vector<double> ax(d), c(d), y(d), ay(d);
  std::vector<std::int64_t> lo(d), hi(d);
  spec.map.apply(x, ax);
  spec.map.apply_inverse(x, c);
  const Eigen::MatrixXd& inv = spec.map.inverse();

  double total = 0.0;
  // Partners with |y - Ax| <= 1.
  for (std::size_t a = 0; a < d; ++a) {
    lo[a] = static_cast<std::int64_t>(std::floor((ax[a] - 1.0) / h)) - 1;
    hi[a] = static_cast<std::int64_t>(std::ceil((ax[a] + 1.0) / h)) + 1;
  }
  if (!box_inside_grid(grid, lo, hi)) {
    for_each_lattice(lo, hi, [&](std::span<const std::int64_t> k) {
      if (grid.contains_lattice(k)) return;
      double r2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double z = static_cast<double>(k[a]) * h - ax[a];
        r2 += z * z;
      }
      total += spec.psi.at_r2(r2);
    });
  }
  // Partners with |x - Ay| <= 1, i.e. y in A^-1(B_1(x)).
  for (std::size_t a = 0; a < d; ++a) {
    const double half = inv.row(static_cast<Eigen::Index>(a)).norm();
    lo[a] = static_cast<std::int64_t>(std::floor((c[a] - half) / h)) - 1;
    hi[a] = static_cast<std::int64_t>(std::ceil((c[a] + half) / h)) + 1;
  }
  if (!box_inside_grid(grid, lo, hi)) {
    for_each_lattice(lo, hi, [&](std::span<const std::int64_t> k) {
      if (grid.contains_lattice(k)) return;
      for (std::size_t a = 0; a < d; ++a) y[a] = static_cast<double>(k[a]) * h;
      spec.map.apply(y, ay);
      double r2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double z = x[a] - ay[a];
        r2 += z * z;
      }
      total += spec.psi.at_r2(r2);
    });
  }
  return total * grid.cell_volume();
}

}  // namespace

Field::Field(std::shared_ptr<const Grid> g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
  if (!grid) throw InvalidInput("field needs a grid");
  if (values.size() != grid->size())
    throw InvalidInput("field has " + std::to_string(values.size()) + " values for " + std::to_string(grid->size()) +
                       " grid points");
  for (double x : values)
    if (!std::isfinite(x)) throw InvalidInput("field values must be finite");
}

Field::Field(std::shared_ptr<const Grid> g) : grid(std::move(g)) {
  if (!grid) throw InvalidInput("field needs a grid");
  values.assign(grid->size(), 0.0);
}

double lr_norm(std::span<const double> values, double cell_volume, double r) {
  if (std::isinf(r) && r > 0) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  if (!(r >= 1.0)) throw InvalidInput("lr_norm needs r >= 1");
  const double s = deterministic_reduce(values.size(), kChunk, [&](std::size_t b, std::size_t e) {
    std::vector<double> part(e - b);
    for (std::size_t i = b; i < e; ++i) part[i - b] = pow_abs(values[i], r);
    return pairwise_sum(part);
  });
  return std::pow(s * cell_volume, 1.0 / r);
}

double lr_norm(const Field& field, double r) { return lr_norm(field.values, field.grid->cell_volume(), r); }

InteractionTable build_interactions(const KernelSpec& spec, std::shared_ptr<const Grid> grid) {
  if (!grid) throw InvalidInput("build_interactions needs a grid");
  if (grid->dimension() != spec.dimension()) throw InvalidInput("grid dimension does not match kernel");
  InteractionTable t;
  t.grid = grid;
  t.cell_volume = grid->cell_volume();
  t.pairs = active_pairs(spec, *grid);
  const std::size_t N = grid->size();
  const auto d = static_cast<std::size_t>(grid->dimension());

  std::vector<double> pts(N * d);
  for (std::size_t i = 0; i < N; ++i) grid->point(i, {pts.data() + i * d, d});

  t.pair_weight.resize(t.pairs.size());
  parallel_for(t.pairs.size(), kChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto [i, j] = t.pairs[k];
      t.pair_weight[k] = kernel_eval(spec, {pts.data() + i * d, d}, {pts.data() + j * d, d});
    }
  });

  t.row_start.assign(N + 1, 0);
  for (const auto& pr : t.pairs) {
    ++t.row_start[pr.i + 1];
    ++t.row_start[pr.j + 1];
  }
  for (std::size_t i = 0; i < N; ++i) t.row_start[i + 1] += t.row_start[i];
  t.neighbour.resize(t.row_start[N]);
  t.neighbour_weight.resize(t.row_start[N]);
  std::vector<std::size_t> fill(t.row_start.begin(), t.row_start.end() - 1);
  for (std::size_t k = 0; k < t.pairs.size(); ++k) {
    const auto [i, j] = t.pairs[k];
    t.neighbour[fill[i]] = j;
    t.neighbour_weight[fill[i]++] = t.pair_weight[k];
    t.neighbour[fill[j]] = i;
    t.neighbour_weight[fill[j]++] = t.pair_weight[k];
  }

  t.exterior.assign(N, 0.0);
  parallel_for(N, 256, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) t.exterior[i] = exterior_weight(spec, *grid, {pts.data() + i * d, d});
  });
  return t;
}

double double_integral_p(std::span<const double> u, const InteractionTable& t, double p) {
  if (!(p >= 1.0)) throw InvalidInput("double_integral_p needs p >= 1");
  if (u.size() != t.size()) throw InvalidInput("field size does not match interaction table");
  const double w = t.cell_volume;
  const double inner = deterministic_reduce(t.pairs.size(), kChunk, [&](std::size_t b, std::size_t e) {
    std::vector<double> part(e - b);
    for (std::size_t k = b; k < e; ++k)
      part[k - b] = t.pair_weight[k] * pow_abs(u[t.pairs[k].i] - u[t.pairs[k].j], p);
    return pairwise_sum(part);
  });
  const double outer = deterministic_reduce(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
    std::vector<double> part(e - b);
    for (std::size_t i = b; i < e; ++i) part[i - b] = t.exterior[i] * pow_abs(u[i], p);
    return pairwise_sum(part);
  });
  return 2.0 * w * w * inner + 2.0 * w * outer;
}

double field_value_at(const Field& field, std::span<const double> x) {
  const Grid& g = *field.grid;
  const auto d = static_cast<std::size_t>(g.dimension());
  std::int64_t kbuf[16];
  std::vector<std::int64_t> heap;
  std::int64_t* k = kbuf;
  if (d > 16) {
    heap.resize(d);
    k = heap.data();
  }
  for (std::size_t a = 0; a < d; ++a) {
    const double s = std::floor(x[a] / g.spacing() + 0.5);
    if (std::abs(s) > static_cast<double>(g.half_count())) return 0.0;
    k[a] = static_cast<std::int64_t>(s);
  }
  const std::int64_t idx = g.index_of({k, d});
  return idx < 0 ? 0.0 : field.values[static_cast<std::size_t>(idx)];
}

namespace {

QuadratureEstimate monte_carlo_integral(const Field& field, const KernelSpec& spec, double p,
                                        const MonteCarloQuadrature& mc) {
  if (mc.samples == 0) throw InvalidInput("monte carlo backend needs samples > 0");
  const Grid& g = *field.grid;
  const auto d = static_cast<std::size_t>(g.dimension());
  const double h = g.spacing();

  // Bounding box of the nonzero cells.
  std::vector<double> slo(d, std::numeric_limits<double>::infinity());
  std::vector<double> shi(d, -std::numeric_limits<double>::infinity());
  bool any = false;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field.values[i] == 0.0) continue;
    any = true;
    const auto k = g.lattice(i);
    for (std::size_t a = 0; a < d; ++a) {
      slo[a] = std::min(slo[a], (static_cast<double>(k[a]) - 0.5) * h);
      shi[a] = std::max(shi[a], (static_cast<double>(k[a]) + 0.5) * h);
    }
  }
  if (!any) return {0.0, 0.0};

  // x ranges over supp u and A^-1(supp u + B_1).
  const Eigen::MatrixXd& inv = spec.map.inverse();
  std::vector<double> lo(d), hi(d);
  for (std::size_t a = 0; a < d; ++a) {
    double centre = 0.0;
    double half = 0.0;
    for (std::size_t b = 0; b < d; ++b) {
      const double m = inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      centre += m * 0.5 * (slo[b] + shi[b]);
      half += std::abs(m) * (0.5 * (shi[b] - slo[b]) + 1.0);
    }
    lo[a] = std::min(slo[a], centre - half);
    hi[a] = std::max(shi[a], centre + half);
  }
  double volume = 1.0;
  for (std::size_t a = 0; a < d; ++a) volume *= hi[a] - lo[a];
  const double scale = 2.0 * volume * unit_ball_volume(g.dimension());

  const auto acc = sharded_monte_carlo(mc.samples, mc.seed, [&](CounterRng& rng) {
    std::vector<double> x(d), z(d), y(d);
    for (std::size_t a = 0; a < d; ++a) x[a] = lo[a] + rng.uniform() * (hi[a] - lo[a]);
    rng.unit_ball(z);
    double r2 = 0.0;
    for (double v : z) r2 += v * v;
    spec.map.apply(x, y);
    for (std::size_t a = 0; a < d; ++a) y[a] += z[a];
    const double diff = field_value_at(field, x) - field_value_at(field, y);
    if (diff == 0.0) return 0.0;
    return scale * spec.psi.at_r2(r2) * pow_abs(diff, p);
  });
  return {acc.mean, acc.standard_error()};
}

}  // namespace

QuadratureEstimate double_integral_p(const Field& field, const KernelSpec& spec, double p,
                                     const QuadratureBackend& backend) {
  if (!(p >= 1.0)) throw InvalidInput("double_integral_p needs p >= 1");
  if (field.grid->dimension() != spec.dimension()) throw InvalidInput("field dimension does not match kernel");
  if (const auto* mc = std::get_if<MonteCarloQuadrature>(&backend)) return monte_carlo_integral(field, spec, p, *mc);
  const auto table = build_interactions(spec, field.grid);
  return {double_integral_p(field.values, table, p), 0.0};
}

void write_grid_json(std::ostream& out, const Grid& grid) {
  out << "{\"d\": " << grid.dimension() << ", \"L\": " << format_double(grid.half_width())
      << ", \"h\": " << format_double(grid.spacing()) << ", \"shape\": \"" << to_string(grid.shape()) << "\"}\n";
}

void write_field_csv(std::ostream& out, const Field& field) {
  const Grid& g = *field.grid;
  const auto d = static_cast<std::size_t>(g.dimension());
  for (std::size_t a = 0; a < d; ++a) out << "x_" << (a + 1) << ',';
  out << "value\n";
  std::vector<double> x(d);
  for (std::size_t i = 0; i < field.size(); ++i) {
    g.point(i, x);
    for (double v : x) out << format_double(v) << ',';
    out << format_double(field.values[i]) << '\n';
  }
}

Field read_field_csv(std::istream& in, std::shared_ptr<const Grid> grid) {
  const auto d = static_cast<std::size_t>(grid->dimension());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("field csv is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() != d + 1 || header.back() != "value") throw InvalidInput("field csv header does not match grid");
  Field f(grid);
  std::vector<std::int64_t> k(d);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> nums;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        nums.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidInput("field csv row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (nums.size() != d + 1) throw InvalidInput("field csv row " + std::to_string(row) + ": wrong column count");
    for (std::size_t a = 0; a < d; ++a) {
      const double s = nums[a] / grid->spacing();
      k[a] = static_cast<std::int64_t>(std::llround(s));
      if (std::abs(s - static_cast<double>(k[a])) > 1e-6)
        throw InvalidInput("field csv row " + std::to_string(row) + ": point is not on the lattice");
    }
    const std::int64_t idx = grid->index_of(k);
    if (idx < 0) throw InvalidInput("field csv row " + std::to_string(row) + ": point outside grid");
    if (!std::isfinite(nums[d])) throw InvalidInput("field csv row " + std::to_string(row) + ": value not finite");
    f.values[static_cast<std::size_t>(idx)] = nums[d];
  }
  return f;
}

}  // namespace nlpl
