// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nlpl/evolution.hpp"
#include "nlpl/minimizers.hpp"
#include "nlpl/spectral.hpp"

using namespace nlpl;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

KernelSpec doubling() {
  return KernelSpec(PsiProfile(PsiShape::box, 0.5, 1), LinearMapSpec(Eigen::MatrixXd::Constant(1, 1, 2.0)));
}

// 2 * int psi * | |det A|^{-1/p} - 1 |^p with int psi = 1, det A = 2.
double closed_form(double p) { return 2.0 * std::pow(std::abs(std::pow(2.0, -1.0 / p) - 1.0), p); }

Field indicator(std::shared_ptr<const Grid> g, double radius) {
  Field u(g);
  for (std::size_t i = 0; i < u.size(); ++i) u.values[i] = std::abs(g->point(i)[0]) <= radius + 1e-12 ? 1.0 : 0.0;
  return u;
}

// Ordinary least squares slope and intercept of y on x.
std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

Trajectory decay_run(double p, double T) {
  auto g = std::make_shared<const Grid>(1, 8.0, 1.0 / 16.0);
  SolverConfig cfg;
  cfg.p = p;
  cfg.T = T;
  cfg.truncation = Truncation::absorbing;
  cfg.dt_max = 0.25;
  return evolve(indicator(g, 1.0), doubling(), cfg, 2.0);
}

Outcome eigen_sweep() {
  const auto spec = doubling();
  const double exact = closed_form(2.0);
  MinimizeOptions opts;
  const auto sweep = expanding_domain_sweep(spec, 2.0, {4.0, 8.0, 16.0}, 1.0 / 16.0, opts);
  const double tol = quadrature_tolerance(spec, 2.0, 4.0, 1.0 / 16.0, opts);
  bool monotone = true, lower = true, upper = true;
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    if (k > 0) monotone &= sweep[k].value <= sweep[k - 1].value + 1e-12;
    lower &= sweep[k].value >= exact - tol;
    upper &= sweep[k].value <= 1.5 * exact;
  }
  return {monotone && lower && upper,
          fmt("lambda(R=4,8,16) = %.6f %.6f %.6f, closed form %.6f, tol_quad %.2e, upper %.6f; monotone=%d lower=%d "
              "upper=%d",
              sweep[0].value, sweep[1].value, sweep[2].value, exact, tol, 1.5 * exact, monotone, lower, upper)};
}

Outcome theta_fuzz() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ab(-10.0, 10.0), e(1e-3, 1.0 - 1e-3), pp(1.0, 6.0);
  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    const double a = ab(gen), b = ab(gen), eta = e(gen), p = pp(gen);
    const double theta = theta_constant(eta, p).theta;
    const double lhs = std::pow(std::abs(a - b), p);
    const double rhs = eta * std::pow(std::abs(a), p) + theta * std::pow(std::abs(b), p);
    violations += lhs < rhs - 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0});
  }
  // Certificate: theta equals min_{x >= 0} |x-1|^p - eta x^p, searched on a fine grid then a zoomed one.
  double worst = 0.0;
  for (int k = 0; k < 30; ++k) {
    const double eta = e(gen), p = pp(gen);
    const double theta = theta_constant(eta, p).theta;
    auto f = [&](double x) { return std::pow(std::abs(x - 1.0), p) - eta * std::pow(x, p); };
    const int m = 200000;
    const double top = p > 1.0 ? 2.0 / (1.0 - std::pow(eta, 1.0 / (p - 1.0))) + 4.0 : 4.0;
    double lo = 0.0, step = top / m, best_x = 0.0, best = f(0.0);
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j <= m; ++j) {
        const double x = lo + step * j;
        if (f(x) < best) best = f(x), best_x = x;
      }
      lo = std::max(0.0, best_x - step);
      step = 2.0 * step / m;
    }
    worst = std::max(worst, std::abs(best - theta) / std::max(1.0, std::abs(theta)));
  }
  return {violations == 0 && worst <= 1e-6, fmt("%d violations in 10^4 tuples, certificate gap %.2e", violations, worst)};
}

Outcome minimizing_sequence() {
  const double exact = closed_form(2.0);
  VerifyOptions opts;
  opts.mc_samples = 1'000'000;
  opts.seed = 1;
  const auto row = verify_upper_bound(doubling(), 2.0, {100}, opts).front();
  // r = sigma^2 / D with sigma = sqrt(2) - 1/n, D = 2: R(n) = (1 - r) + r (1/sigma - 1)^2.
  const double sigma = std::sqrt(2.0) - 0.01, r = sigma * sigma / 2.0;
  const double oracle = (1.0 - r) + r * std::pow(1.0 / sigma - 1.0, 2.0);
  const double rel = std::abs(row.upper_bound - exact) / exact;
  const bool closed_ok = std::abs(row.quotient_closed - oracle) <= 1e-12 * oracle;
  const bool mc_ok = std::abs(row.quotient_mc - row.quotient_closed) <= 3.0 * row.mc_stderr;
  return {closed_ok && mc_ok && rel <= 0.02,
          fmt("n=100 bound %.6f vs %.6f (gap %.2f%%, gate 2%%); closed R(n) matches oracle=%d; MC %.6f +- %.1e within "
              "3 se=%d",
              row.upper_bound, exact, 100.0 * rel, closed_ok, row.quotient_mc, row.mc_stderr, mc_ok)};
}

Outcome shear_quotient() {
  bool ok = true;
  std::string detail;
  for (int n : {1, 10, 100}) {
    const auto fn = build_shear(JordanBlockSpec::real(1.0, 2), n, 2.0);
    const double closed = fn.closed_form_quotient();
    const auto mc = fn.monte_carlo_displacement(1'000'000, 40 + n);
    const double q = mc.value / fn.norm_p(), se = mc.standard_error / fn.norm_p();
    const bool good = std::abs(closed - 2.0 / n) <= 1e-12 && std::abs(q - 2.0 / n) <= 3.0 * se + 1e-12;
    ok &= good;
    detail += fmt("%sn=%d closed %.6g MC %.6g +- %.1e ok=%d", detail.empty() ? "" : "; ", n, closed, q, se, good);
  }
  return {ok, detail};
}

// sup over [t0, t1] of ||u||_2 t^{(r-1)/(p-2)}, read from the recorded samples.
double bound_sup(const Trajectory& tr, double p, double t0, double t1) {
  double s = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k)
    if (tr.times[k] >= t0 && tr.times[k] <= t1) s = std::max(s, tr.l2[k] * std::pow(tr.times[k], 1.0 / (p - 2.0)));
  return s;
}

Outcome decay_polynomial() {
  const auto a = decay_run(3.0, 200.0);
  const auto b = decay_run(3.0, 400.0);
  const double sa = bound_sup(a, 3.0, 50.0, 200.0), sb = bound_sup(b, 3.0, 50.0, 400.0);
  const double change = std::abs(sb - sa) / sa;
  std::vector<double> x, y;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.times[k] >= 50.0 && a.times[k] <= 200.0) {
      x.push_back(std::log(a.times[k]));
      y.push_back(std::log(a.l2[k]));
    }
  const double slope = ols(x, y).first;
  const bool finite = std::isfinite(sa) && std::isfinite(sb);
  return {finite && change < 0.10 && slope <= -0.85,
          fmt("sup %.5f (T=200) vs %.5f (T=400), change %.1f%% (gate 10%%); slope on [50,200] %.3f (gate -0.85)", sa, sb,
              100.0 * change, slope)};
}

Outcome decay_exponential() {
  const auto tr = decay_run(2.0, 50.0);
  const double t0 = std::sqrt(tr.times[1] * 50.0);
  std::vector<double> x, y;
  for (std::size_t k = 0; k < tr.size(); ++k)
    if (tr.times[k] >= t0) {
      x.push_back(tr.times[k]);
      y.push_back(std::log(tr.l2[k]));
    }
  const double rate = -ols(x, y).first;
  return {rate >= 0.08, fmt("rate %.4f on [%.2f, 50] (floor 0.08, energy bound %.4f)", rate, t0, closed_form(2.0) / 2.0)};
}

Outcome invariants() {
  std::vector<std::string> bad;
  const auto spec = doubling();
  auto g = std::make_shared<const Grid>(1, 2.0, 1.0 / 16.0);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0), V(0.0, 1.0);

  double worst_mass = 0.0;
  for (double p : {2.0, 3.0, 4.0}) {
    Field u(g);
    for (auto& v : u.values) v = U(gen);
    SolverConfig cfg;
    cfg.p = p;
    cfg.T = 5.0;
    const auto tr = evolve(u, spec, cfg);
    for (std::size_t k = 1; k < tr.size(); ++k) {
      worst_mass = std::max(worst_mass, std::abs(tr.mass[k] - tr.mass[0]) / tr.l1[0]);
      if (tr.linf[k] > tr.linf[k - 1] * (1 + 1e-12) || tr.l1[k] > tr.l1[k - 1] * (1 + 1e-12))
        bad.push_back(fmt("norm increase at p=%g", p));
    }
  }
  if (worst_mass > 1e-10) bad.push_back(fmt("mass drift %.1e", worst_mass));

  const auto table = build_interactions(spec, g);
  int order_violations = 0;
  for (int pair = 0; pair < 20; ++pair) {
    Field u(g), v(g);
    for (std::size_t i = 0; i < u.size(); ++i) {
      u.values[i] = U(gen);
      v.values[i] = u.values[i] + V(gen);
    }
    SolverConfig cfg;
    cfg.p = pair % 2 ? 3.0 : 2.0;
    cfg.T = 3.0;
    cfg.snapshot_every = 1;
    cfg.dt = std::min(stability_dt(u.values, table, cfg.p, 0.5, cfg.truncation, cfg.flux_floor),
                      stability_dt(v.values, table, cfg.p, 0.5, cfg.truncation, cfg.flux_floor));
    const auto tu = evolve(u, table, cfg), tv = evolve(v, table, cfg);
    for (std::size_t k = 0; k < std::min(tu.snapshots.size(), tv.snapshots.size()); ++k)
      for (std::size_t i = 0; i < u.size(); ++i) order_violations += tu.snapshots[k].values[i] > tv.snapshots[k].values[i];
  }
  if (order_violations) bad.push_back(fmt("%d comparison violations", order_violations));

  int asym = 0;
  std::uniform_real_distribution<double> X(-3.0, 3.0);
  for (int k = 0; k < 10000; ++k) {
    const double x[] = {X(gen)}, y[] = {X(gen)};
    asym += kernel_eval(spec, x, y) != kernel_eval(spec, y, x);
  }
  if (asym) bad.push_back(fmt("%d asymmetric kernel values", asym));

  // Pruning completeness: every pair with K > 0 from a dense scan appears in the pruned list, and nothing else.
  std::set<std::pair<std::size_t, std::size_t>> dense, pruned;
  for (std::size_t i = 0; i < g->size(); ++i)
    for (std::size_t j = i + 1; j < g->size(); ++j)
      if (kernel_eval(spec, g->point(i), g->point(j)) > 0.0) dense.insert({i, j});
  for (const auto& pr : active_pairs(spec, *g)) pruned.insert({std::min<std::size_t>(pr.i, pr.j), std::max<std::size_t>(pr.i, pr.j)});
  for (auto it = pruned.begin(); it != pruned.end();) it = it->first == it->second ? pruned.erase(it) : std::next(it);
  if (dense != pruned) bad.push_back(fmt("pruned %zu pairs vs dense %zu", pruned.size(), dense.size()));

  std::string detail = fmt("mass drift %.1e, %zu kernel pairs, 20 ordered pairs", worst_mass, dense.size());
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

Outcome p_infinity() {
  const auto spec = doubling();
  const std::vector<double> ps{2, 4, 8, 16, 32};
  const auto table = pinf_limit_table(spec.map, spec.psi, ps);
  bool ok = table.size() == ps.size();
  for (std::size_t k = 0; ok && k < ps.size(); ++k) {
    const double root = std::pow(closed_form(ps[k]), 1.0 / ps[k]);
    ok &= std::abs(table[k].lambda_root - root) <= 1e-12 * std::max(root, 1e-300);
    if (k > 0) ok &= table[k].lambda_root < table[k - 1].lambda_root;
  }
  ok &= table.back().lambda_root < 0.25;
  std::string detail = fmt("lambda^(1/p) at p=32: %.4f", table.back().lambda_root);

  const double h = 1.0 / 16.0;
  for (double eps : {0.5, 0.25}) {
    const auto plan = staircase_plan(spec.map, eps);
    const double L = std::ceil(plan.required_half_width() / h - 1e-9) * h;
    auto g = std::make_shared<const Grid>(1, L, h);
    const auto w = staircase_witness(spec, eps, g);
    const auto m = static_cast<long>(std::llround(3.0 * L / h));
    double jump = 0.0, top = 0.0;
    for (long a = -m; a <= m; ++a) {
      const double x[] = {a * h};
      top = std::max(top, std::abs(field_value_at(w, x)));
      for (long b = -m; b <= m; ++b) {
        const double y[] = {b * h};
        if (kernel_eval(spec, x, y) > 0.0) jump = std::max(jump, std::abs(field_value_at(w, x) - field_value_at(w, y)));
      }
    }
    const double q = jump / top;
    ok &= q <= eps + 1e-12;
    detail += fmt("; eps=%g: %d levels, Q_inf %.4f", eps, plan.levels, q);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  report(1, "eigenvalue sweep vs closed form", eigen_sweep);
  report(2, "theta inequality", theta_fuzz);
  report(3, "minimizing-sequence convergence", minimizing_sequence);
  report(4, "shear-block quotient 2/n", shear_quotient);
  report(5, "polynomial decay p=3", decay_polynomial);
  report(6, "exponential decay p=2", decay_exponential);
  report(7, "structural invariants", invariants);
  report(8, "p to infinity", p_infinity);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures ? 1 : 0;
}
