#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nlpl/discretize.hpp"

using namespace nlpl;

namespace {

KernelSpec doubling_1d() {
  return KernelSpec(PsiProfile(PsiShape::box, 0.5, 1), LinearMapSpec(Eigen::MatrixXd::Constant(1, 1, 2.0)));
}

Field random_field(std::shared_ptr<const Grid> grid, std::uint64_t seed, double support = 1e9) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Field f(grid);
  for (std::size_t i = 0; i < f.size(); ++i)
    f.values[i] = norm2(grid->point(i)) <= support ? U(gen) : 0.0;
  return f;
}

// Sum of h^2 K(x,y)|u(x)-u(y)|^p over every 1-d lattice pair (x, y) with |x|, |y| <= reach.
double brute_force_1d(const Field& f, const KernelSpec& spec, double p, double reach) {
  const double h = f.grid->spacing();
  const auto m = static_cast<long>(std::llround(reach / h));
  double acc = 0.0;
  for (long a = -m; a <= m; ++a)
    for (long b = -m; b <= m; ++b) {
      const double x[] = {a * h}, y[] = {b * h};
      const double k = kernel_eval(spec, x, y);
      if (k == 0.0) continue;
      acc += k * std::pow(std::abs(field_value_at(f, x) - field_value_at(f, y)), p);
    }
  return acc * h * h;
}

}  // namespace

TEST_CASE("lr norms") {
  auto g1 = std::make_shared<const Grid>(1, 1.0, 0.5);
  Field zero(g1);
  CHECK(lr_norm(zero, 2.0) == 0.0);
  CHECK(lr_norm(zero, INFINITY) == 0.0);
  Field spike(g1);
  spike.values[2] = 2.0;
  CHECK(lr_norm(spike, 2.0) == doctest::Approx(std::sqrt(2.0)));
  auto g2 = std::make_shared<const Grid>(1, 1.0, 1.0);
  Field ones(g2, {1.0, 1.0, 1.0});
  CHECK(lr_norm(ones, INFINITY) == 1.0);
  CHECK(lr_norm(ones, 1.0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(lr_norm(ones, 0.5), InvalidInput);
}

TEST_CASE("double integral hand value on the 5-point grid") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 1.0, 0.5);
  Field u(g);
  u.values[2] = 1.0;
  CHECK(double_integral_p(u, spec, 2.0).value == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(double_integral_p(Field(g), spec, 2.0).value == 0.0);
}

TEST_CASE("grid quadrature matches a brute-force lattice double sum") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 2.0, 0.25);
  for (double p : {1.0, 2.0, 3.5}) {
    const auto u = random_field(g, 11);
    // Partners of grid points lie within |A| L + 1 = 5.
    CHECK(double_integral_p(u, spec, p).value == doctest::Approx(brute_force_1d(u, spec, p, 6.0)).epsilon(1e-12));
  }
}

TEST_CASE("interaction table is symmetric and complete") {
  Eigen::MatrixXd A(2, 2);
  A << 1.2, 0.3, -0.1, 0.8;
  KernelSpec spec(PsiProfile(PsiShape::cone, 1.0, 2), LinearMapSpec(A));
  auto g = std::make_shared<const Grid>(2, 1.5, 0.25);
  const auto t = build_interactions(spec, g);
  REQUIRE(t.size() == g->size());
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k) {
      const auto j = t.neighbour[k];
      bool back = false;
      for (std::size_t q = t.row_start[j]; q < t.row_start[j + 1]; ++q)
        back |= t.neighbour[q] == i && t.neighbour_weight[q] == t.neighbour_weight[k];
      CHECK(back);
      CHECK(t.neighbour_weight[k] == kernel_eval(spec, g->point(i), g->point(j)));
    }
}

TEST_CASE("homogeneity and sign symmetry") {
  Eigen::MatrixXd A(2, 2);
  A << 0.0, -1.5, 1.0, 0.2;
  KernelSpec spec(PsiProfile(PsiShape::smooth_bump, 2.0, 2), LinearMapSpec(A));
  auto g = std::make_shared<const Grid>(2, 2.0, 0.25);
  const auto u = random_field(g, 5);
  for (double p : {1.0, 2.0, 3.0}) {
    const double base = double_integral_p(u, spec, p).value;
    for (double c : {-3.0, 0.25, 7.0}) {
      Field cu(g);
      for (std::size_t i = 0; i < u.size(); ++i) cu.values[i] = c * u.values[i];
      CHECK(double_integral_p(cu, spec, p).value == doctest::Approx(std::pow(std::abs(c), p) * base).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero extension: enlarging the box leaves the integral unchanged") {
  const auto spec = doubling_1d();
  auto small = std::make_shared<const Grid>(1, 4.0, 0.125);
  auto large = std::make_shared<const Grid>(1, 8.0, 0.125);
  const auto u = random_field(small, 3, 1.0);
  Field v(large);
  for (std::size_t i = 0; i < large->size(); ++i) v.values[i] = field_value_at(u, large->point(i));
  for (double p : {1.5, 2.0, 4.0})
    CHECK(double_integral_p(v, spec, p).value == doctest::Approx(double_integral_p(u, spec, p).value).epsilon(1e-12));
}

TEST_CASE("monte carlo backend agrees with the grid backend up to an O(h) term") {
  const auto spec = doubling_1d();
  // Hand example: the two backends integrate different objects (lattice sum vs
  // piecewise-constant continuum), so agreement is measured against h.
  auto g = std::make_shared<const Grid>(1, 1.0, 0.5);
  Field u(g);
  u.values[2] = 1.0;
  const auto mc = double_integral_p(u, spec, 2.0, MonteCarloQuadrature{1'000'000, 42});
  CHECK(mc.standard_error > 0.0);
  CHECK(std::abs(mc.value - 1.5) <= 4.0 * mc.standard_error + 0.5);

  // The discrepancy shrinks with h on a fixed smooth-ish profile.
  auto gap = [&](double h) {
    auto grid = std::make_shared<const Grid>(1, 2.0, h);
    Field f(grid);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double x = grid->point(i)[0];
      f.values[i] = std::max(0.0, 1.0 - x * x);
    }
    const auto est = double_integral_p(f, spec, 2.0, MonteCarloQuadrature{2'000'000, 9});
    return std::abs(est.value - double_integral_p(f, spec, 2.0).value) - 4.0 * est.standard_error;
  };
  const double coarse = gap(0.25);
  const double fine = gap(0.0625);
  CHECK(fine < coarse);
  CHECK(fine < 0.05);

  for (std::uint64_t s = 0; s < 10; ++s) {
    auto grid = std::make_shared<const Grid>(1, 1.0, 0.0625);
    const auto f = random_field(grid, 100 + s);
    const auto est = double_integral_p(f, spec, 2.0, MonteCarloQuadrature{200'000, s});
    const double exact = double_integral_p(f, spec, 2.0).value;
    // Random piecewise-constant fields jump at every cell: allowance C h with C = 8 * int u^2.
    CHECK(std::abs(est.value - exact) <= 4.0 * est.standard_error + 8.0 * 0.0625 * exact);
  }
}

TEST_CASE("field csv round trip is exact") {
  auto g = std::make_shared<const Grid>(2, 1.0, 0.25, GridShape::ball);
  const auto u = random_field(g, 77);
  std::stringstream s;
  write_field_csv(s, u);
  const auto back = read_field_csv(s, g);
  CHECK(back.values == u.values);

  std::stringstream bad("x_1,value\n0.1,1\n");
  CHECK_THROWS_AS(read_field_csv(bad, std::make_shared<const Grid>(1, 1.0, 0.25)), InvalidInput);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(Grid(1, 1.0, 0.3), InvalidInput);
  CHECK_THROWS_AS(Grid(0, 1.0, 0.5), InvalidInput);
  CHECK_THROWS_AS(Grid(3, 64.0, 0.0625), InvalidInput);  // over the point budget
  Grid ball(2, 1.0, 0.5, GridShape::ball);
  CHECK(ball.size() == 13);
  Grid box(2, 1.0, 0.5);
  CHECK(box.size() == 25);
  const std::int64_t k[] = {1, -2};
  CHECK(box.index_of(k) >= 0);
  CHECK(ball.index_of(k) < 0);
}
