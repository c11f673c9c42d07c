#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "nlpl/evolution.hpp"
#include "nlpl/spectral.hpp"

using namespace nlpl;

namespace {

KernelSpec doubling_1d() {
  return KernelSpec(PsiProfile(PsiShape::box, 0.5, 1), LinearMapSpec(Eigen::MatrixXd::Constant(1, 1, 2.0)));
}

Field indicator(std::shared_ptr<const Grid> g, double radius, double value = 1.0) {
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f.values[i] = norm2(g->point(i)) <= radius ? value : 0.0;
  return f;
}

// Linear p = 2 generator with a zero exterior, assembled straight from kernel_eval
// on the 1-d lattice: (M u)_i = h sum_{y in lattice} K(x_i, y) (u(y) - u_i).
Eigen::MatrixXd dense_generator(const KernelSpec& spec, const Grid& g, double reach) {
  const auto N = static_cast<Eigen::Index>(g.size());
  const double h = g.spacing();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
  const auto m = static_cast<long>(std::llround(reach / h));
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto xi = g.point(static_cast<std::size_t>(i));
    for (long b = -m; b <= m; ++b) {
      const double y[] = {b * h};
      const double k = kernel_eval(spec, xi, y);
      if (k == 0.0) continue;
      M(i, i) -= h * k;
      const std::int64_t lat[] = {b};
      const auto j = g.index_of(lat);
      if (j >= 0) M(i, j) += h * k;
    }
  }
  return M;
}

}  // namespace

TEST_CASE("rhs hand values on the 5-point grid") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 1.0, 0.5);
  Field u(g);
  u.values[2] = 1.0;
  const auto rhs = nonlocal_rhs(u, spec, 2.0);
  CHECK(rhs.values[2] == doctest::Approx(-1.5));
  CHECK(rhs.values[3] == doctest::Approx(0.5));
  double total = 0.0;
  for (double v : rhs.values) total += v * 0.5;
  CHECK(std::abs(total) < 1e-15);
}

TEST_CASE("rhs conservation and constants") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 4.0, 0.125);
  const auto table = build_interactions(spec, g);
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  std::vector<double> u(g->size()), out(g->size());
  for (auto& v : u) v = U(gen);
  for (double p : {1.5, 2.0, 3.0}) {
    nonlocal_rhs(u, table, p, Truncation::closed, out);
    double total = 0.0, scale = 0.0;
    for (double v : out) {
      total += v;
      scale += std::abs(v);
    }
    CHECK(std::abs(total) <= 1e-12 * scale);
  }
  std::vector<double> ones(g->size(), 3.0);
  nonlocal_rhs(ones, table, 3.0, Truncation::closed, out);
  for (double v : out) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  nonlocal_rhs(ones, table, 3.0, Truncation::absorbing, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (table.exterior[i] == 0.0) CHECK(std::abs(out[i]) < 1e-12);
    else CHECK(out[i] < 0.0);
  }
}

TEST_CASE("stability dt") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 1.0, 0.5);
  Field zero(g);
  // Column sums h * sum_j K(x_i, x_j) on the 5-point grid; node 0 has the largest, 1.5.
  CHECK(stability_dt(zero, spec, 2.0, 0.5) == doctest::Approx(0.5 / 1.5));
  Field u(g);
  u.values[2] = 1.0;
  CHECK(stability_dt(u, spec, 3.0, 0.5) == doctest::Approx(0.5 / (2.0 * 1.5)));
  Field u2(g);
  u2.values[2] = 2.0;
  CHECK(stability_dt(u2, spec, 3.0, 0.5) == doctest::Approx(0.5 * stability_dt(u, spec, 3.0, 0.5)));
  CHECK_THROWS_AS(stability_dt(u, spec, 1.5, 0.5), InvalidInput);
}

TEST_CASE("zero data stays zero") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 2.0, 0.125);
  SolverConfig cfg;
  cfg.T = 2.0;
  const auto traj = evolve(Field(g), spec, cfg);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    CHECK(traj.l1[k] == 0.0);
    CHECK(traj.linf[k] == 0.0);
  }
  CHECK_THROWS_WITH_AS(fit_decay(traj, 2.0, DecayRegime::exponential), doctest::Contains("nonpositive norms"),
                       InvalidInput);
}

TEST_CASE("invariants along closed and absorbing runs") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 4.0, 0.0625);
  for (auto trunc : {Truncation::closed, Truncation::absorbing})
    for (double p : {2.0, 3.0, 4.0}) {
      SolverConfig cfg;
      cfg.p = p;
      cfg.T = 10.0;
      cfg.truncation = trunc;
      const auto traj = evolve(indicator(g, 1.0), spec, cfg);
      const double m0 = traj.mass.front();
      for (std::size_t k = 1; k < traj.size(); ++k) {
        CHECK(std::abs(traj.mass[k] + traj.outflow[k] - m0) <= 1e-10 * m0 + 1e-14);
        CHECK(traj.linf[k] <= traj.linf[k - 1]);
        CHECK(traj.l1[k] <= traj.l1[k - 1] * (1.0 + 1e-14));
      }
      if (trunc == Truncation::closed) CHECK(traj.outflow.back() == 0.0);
      else CHECK(traj.outflow.back() > 0.0);
    }
}

TEST_CASE("energy dissipation at p = 2") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 3.0, 0.0625);
  const auto table = build_interactions(spec, g);
  SolverConfig cfg;
  cfg.T = 5.0;
  cfg.truncation = Truncation::absorbing;
  cfg.snapshot_every = 1;
  const auto traj = evolve(indicator(g, 1.0), table, cfg);
  REQUIRE(traj.snapshots.size() > 10);
  double prev = INFINITY;
  for (const auto& snap : traj.snapshots) {
    const double e = double_integral_p(snap.values, table, 2.0);
    CHECK(e <= prev * (1.0 + 1e-12));
    prev = e;
  }
}

TEST_CASE("comparison principle on random ordered pairs") {
  Eigen::MatrixXd A(1, 1);
  A(0, 0) = 1.5;
  KernelSpec spec(PsiProfile(PsiShape::cone, 1.0, 1), LinearMapSpec(A));
  auto g = std::make_shared<const Grid>(1, 2.0, 0.0625);  // 65 points
  REQUIRE(g->size() <= 65);
  const auto table = build_interactions(spec, g);
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> U(-1.0, 1.0), V(0.0, 1.0);
  for (int pair = 0; pair < 20; ++pair) {
    const double p = pair % 2 == 0 ? 2.0 : 3.0;
    Field u(g), v(g);
    for (std::size_t i = 0; i < u.size(); ++i) {
      u.values[i] = U(gen);
      v.values[i] = u.values[i] + V(gen) * (pair % 3 == 0 ? 0.0 : 1.0);
    }
    // Shared dt from the larger field.
    SolverConfig cfg;
    cfg.p = p;
    cfg.T = 3.0;
    cfg.truncation = pair % 4 < 2 ? Truncation::closed : Truncation::absorbing;
    cfg.snapshot_every = 1;
    double top = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) top = std::max({top, std::abs(u.values[i]), std::abs(v.values[i])});
    Field big(g, std::vector<double>(g->size(), top));
    cfg.dt = stability_dt(big.values, table, p, 0.5, cfg.truncation, cfg.flux_floor);
    const auto tu = evolve(u, table, cfg);
    const auto tv = evolve(v, table, cfg);
    REQUIRE(tu.snapshots.size() == tv.snapshots.size());
    for (std::size_t k = 0; k < tu.snapshots.size(); ++k)
      for (std::size_t i = 0; i < u.size(); ++i) CHECK(tu.snapshots[k].values[i] <= tv.snapshots[k].values[i] + 1e-14);
  }
}

TEST_CASE("p = 2 run matches a dense exponential integrator") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 4.0, 0.125);
  const auto M = dense_generator(spec, *g, 12.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  REQUIRE(eig.info() == Eigen::Success);
  const auto u0 = indicator(g, 1.0);
  const Eigen::Map<const Eigen::VectorXd> U0(u0.values.data(), static_cast<Eigen::Index>(u0.size()));
  auto exact = [&](double t) -> Eigen::VectorXd {
    const Eigen::VectorXd c = eig.eigenvectors().transpose() * U0;
    return eig.eigenvectors() * (eig.eigenvalues().array() * t).exp().matrix().cwiseProduct(c);
  };
  SolverConfig cfg;
  cfg.T = 10.0;
  cfg.dt = 0.01;
  cfg.scheme = Scheme::heun;
  cfg.truncation = Truncation::absorbing;
  cfg.snapshot_every = 100;
  const auto traj = evolve(u0, spec, cfg);
  REQUIRE(!traj.snapshots.empty());
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    const Eigen::VectorXd ref = exact(traj.snapshot_times[k]);
    const Eigen::Map<const Eigen::VectorXd> got(traj.snapshots[k].values.data(), ref.size());
    CHECK((got - ref).lpNorm<Eigen::Infinity>() <= 1e-5 * ref.lpNorm<Eigen::Infinity>());
  }
  // Top eigenvalue of M is the asymptotic decay rate of the truncated problem;
  // the L2 rate must exceed the whole-space floor lambda/2.
  const double lambda = lambda_closed_form(2.0, spec.map, spec.psi).value;
  CHECK(-eig.eigenvalues().maxCoeff() >= lambda / 2.0);
}

TEST_CASE("euler and heun agree") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 3.0, 0.0625);
  SolverConfig a;
  a.p = 3.0;
  a.T = 5.0;
  a.dt = 0.005;
  SolverConfig b = a;
  b.scheme = Scheme::heun;
  const auto ta = evolve(indicator(g, 1.0), spec, a);
  const auto tb = evolve(indicator(g, 1.0), spec, b);
  CHECK(ta.l2.back() == doctest::Approx(tb.l2.back()).epsilon(1e-3));
}

TEST_CASE("p < 2 needs a user step and keeps the invariants") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 2.0, 0.125);
  SolverConfig cfg;
  cfg.p = 1.5;
  cfg.T = 2.0;
  CHECK_THROWS_AS(evolve(indicator(g, 1.0), spec, cfg), InvalidInput);
  cfg.dt = 0.05;
  const auto traj = evolve(indicator(g, 1.0), spec, cfg);
  for (std::size_t k = 1; k < traj.size(); ++k) {
    CHECK(traj.linf[k] <= traj.linf[k - 1]);
    CHECK(std::abs(traj.mass[k] - traj.mass[0]) <= 1e-10 * traj.mass[0] + 1e-14);
  }
}

TEST_CASE("non-finite data is rejected") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 1.0, 0.5);
  CHECK_THROWS_AS(Field(g, {0.0, 0.0, NAN, 0.0, 0.0}), InvalidInput);
}

TEST_CASE("boundary mass warning") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 2.0, 0.125);
  SolverConfig cfg;
  cfg.T = 1.0;
  const auto traj = evolve(indicator(g, 1.0), spec, cfg);
  REQUIRE(traj.warnings.size() == 1);
  CHECK(traj.warnings[0].find("boundary mass") != std::string::npos);
  auto wide = std::make_shared<const Grid>(1, 16.0, 0.25);
  SolverConfig quick;
  quick.T = 0.01;
  quick.dt = 0.01;
  Field spot(wide);
  spot.values[wide->size() / 2] = 1.0;
  CHECK(evolve(spot, spec, quick).warnings.empty());
}

TEST_CASE("decay fits on synthetic data") {
  std::vector<double> t, poly, expo;
  for (int k = 1; k <= 200; ++k) {
    t.push_back(k * 0.5);
    poly.push_back(3.0 / t.back());
    expo.push_back(2.0 * std::exp(-0.1 * t.back()));
  }
  const auto lp = fit_decay(t, poly, DecayRegime::polynomial, {1.0, 100.0});
  CHECK(lp.value == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(lp.constant == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(lp.residual < 1e-10);
  const auto le = fit_decay(t, expo, DecayRegime::exponential, {1.0, 100.0});
  CHECK(le.value == doctest::Approx(0.1).epsilon(1e-8));
  CHECK(le.constant == doctest::Approx(2.0).epsilon(1e-8));
  CHECK_THROWS_AS(fit_decay(t, poly, DecayRegime::polynomial, {1.0, 3.0}), InvalidInput);  // < 10 samples
  expo[50] = 0.0;
  CHECK_THROWS_WITH_AS(fit_decay(t, expo, DecayRegime::exponential, {1.0, 100.0}),
                       doctest::Contains("nonpositive norms"), InvalidInput);
}

TEST_CASE("default window covers the last half in log time") {
  Trajectory traj;
  for (int k = 0; k <= 100; ++k) traj.times.push_back(k * 1.0);
  const auto w = default_fit_window(traj);
  CHECK(w.first == doctest::Approx(10.0));
  CHECK(w.second == 100.0);
}

TEST_CASE("p = 2 decay rate on the standard recipe") {
  const auto spec = doubling_1d();
  auto g = std::make_shared<const Grid>(1, 8.0, 0.0625);
  SolverConfig cfg;
  cfg.T = 50.0;
  cfg.truncation = Truncation::absorbing;
  const auto traj = evolve(indicator(g, 1.0), spec, cfg);
  const auto law = fit_decay(traj, 2.0, DecayRegime::exponential);
  CHECK(law.value >= 0.08);
}
