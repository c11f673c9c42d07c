#include "nlpl/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "nlpl/common.hpp"

namespace nlpl {

std::string to_string(EigenMethod m) {
  switch (m) {
    case EigenMethod::closed_form: return "closed_form";
    case EigenMethod::p2_eigensolve: return "p2_eigensolve";
    case EigenMethod::descent: return "descent";
  }
  return "?";
}

EigenEstimate lambda_closed_form(double p, const LinearMapSpec& map, const PsiProfile& psi) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidInput("lambda_closed_form needs finite p >= 1");
  EigenEstimate e;
  e.p = p;
  e.method = EigenMethod::closed_form;
  const double D = map.abs_det();
  e.value = D == 1.0 ? 0.0 : 2.0 * psi_integral(psi) * std::pow(std::abs(std::pow(D, -1.0 / p) - 1.0), p);
  return e;
}

ThetaConstant theta_constant(double eta, double p) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidInput("theta_constant needs 0 < eta < 1");
  if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidInput("theta_constant needs finite p >= 1");
  if (p == 1.0) return {eta, p, -eta};
  const double q = p - 1.0;
  return {eta, p, -eta / std::pow(1.0 - std::pow(eta, 1.0 / q), q)};
}

double rayleigh_quotient(std::span<const double> values, const InteractionTable& table, double p) {
  const double denom = std::pow(lr_norm(values, table.cell_volume, p), p);
  if (!(denom > 0.0)) throw InvalidInput("rayleigh quotient of the zero field is undefined");
  return double_integral_p(values, table, p) / denom;
}

double rayleigh_quotient(const Field& field, const KernelSpec& spec, double p, const QuadratureBackend& backend) {
  if (!(p >= 1.0)) throw InvalidInput("rayleigh_quotient needs p >= 1");
  const double denom = std::pow(lr_norm(field, p), p);
  if (!(denom > 0.0)) throw InvalidInput("rayleigh quotient of the zero field is undefined");
  return double_integral_p(field, spec, p, backend).value / denom;
}

namespace {

constexpr std::size_t kChunk = 4096;

double dot(std::span<const double> a, std::span<const double> b) {
  return deterministic_reduce(a.size(), kChunk, [&](std::size_t s, std::size_t e) {
    std::vector<double> part(e - s);
    for (std::size_t i = s; i < e; ++i) part[i - s] = a[i] * b[i];
    return pairwise_sum(part);
  });
}

// (L u)_i = 2 (w sum_j K_ij (u_i - u_j) + m_i u_i); u^T L u / u^T u is the p = 2 quotient.
void apply_operator(const InteractionTable& t, std::span<const double> u, std::span<double> out) {
  const double w = t.cell_volume;
  parallel_for(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double s = 0.0;
      for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k)
        s += t.neighbour_weight[k] * (u[i] - u[t.neighbour[k]]);
      out[i] = 2.0 * (w * s + t.exterior[i] * u[i]);
    }
  });
}

double gershgorin_bound(const InteractionTable& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double row = 0.0;
    for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k) row += t.neighbour_weight[k];
    s = std::max(s, 2.0 * (2.0 * t.cell_volume * row + t.exterior[i]));
  }
  return s;
}

struct RunResult {
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> u;
};

void normalize2(std::vector<double>& u) {
  const double n = std::sqrt(dot(u, u));
  if (n > 0.0)
    for (auto& v : u) v /= n;
}

// Shifted power iteration on sI - L; the Rayleigh quotient never increases.
RunResult power_iteration(const InteractionTable& t, std::vector<double> u, const MinimizeOptions& opts) {
  const std::size_t N = u.size();
  const double s = gershgorin_bound(t);
  std::vector<double> Lu(N);
  normalize2(u);
  RunResult r;
  for (int it = 1; it <= opts.max_iters; ++it) {
    apply_operator(t, u, Lu);
    const double lambda = dot(u, Lu);
    if (it % 10 == 1 || it == opts.max_iters) {
      double res2 = 0.0;
      for (std::size_t i = 0; i < N; ++i) res2 += (Lu[i] - lambda * u[i]) * (Lu[i] - lambda * u[i]);
      r.value = lambda;
      r.iterations = it;
      r.residual = std::sqrt(res2) / s;
      if (r.residual <= opts.tol) {
        r.converged = true;
        break;
      }
    }
    for (std::size_t i = 0; i < N; ++i) u[i] = s * u[i] - Lu[i];
    normalize2(u);
  }
  apply_operator(t, u, Lu);
  r.value = dot(u, Lu);
  r.u = std::move(u);
  return r;
}

// Quotient and its gradient for general p.
double quotient_and_gradient(const InteractionTable& t, std::span<const double> u, double p, std::vector<double>* grad) {
  const double w = t.cell_volume;
  const double num = double_integral_p(u, t, p);
  const double den = w * deterministic_reduce(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
                       std::vector<double> part(e - b);
                       for (std::size_t i = b; i < e; ++i) part[i - b] = pow_abs(u[i], p);
                       return pairwise_sum(part);
                     });
  const double q = num / den;
  if (grad) {
    grad->resize(u.size());
    auto flux = [p](double s) {
      if (s == 0.0) return 0.0;
      return p == 2.0 ? s : std::copysign(std::pow(std::abs(s), p - 1.0), s);
    };
    parallel_for(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        double s = 0.0;
        for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k)
          s += t.neighbour_weight[k] * flux(u[i] - u[t.neighbour[k]]);
        const double fi = flux(u[i]);
        const double dn = p * (2.0 * w * w * s + 2.0 * w * t.exterior[i] * fi);
        const double dd = p * w * fi;
        (*grad)[i] = (dn - q * dd) / den;
      }
    });
  }
  return q;
}

void normalize_p(std::vector<double>& u, double w, double p) {
  const double n = lr_norm(u, w, p);
  if (n > 0.0)
    for (auto& v : u) v /= n;
}

// Normalized gradient descent with backtracking.
RunResult descent(const InteractionTable& t, std::vector<double> u, double p, const MinimizeOptions& opts) {
  const std::size_t N = u.size();
  const double w = t.cell_volume;
  normalize_p(u, w, p);
  std::vector<double> g, trial(N);
  double q = quotient_and_gradient(t, u, p, &g);
  double alpha = 0.05;
  double checkpoint = q;
  RunResult r;
  r.residual = std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= opts.max_iters; ++it) {
    const double gn = std::sqrt(dot(g, g));
    const double un = std::sqrt(dot(u, u));
    if (!(gn > 0.0)) {
      r.converged = true;
      r.residual = 0.0;
      break;
    }
    bool accepted = false;
    while (alpha > 1e-14) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] - alpha * un * g[i] / gn;
      const double tn = lr_norm(trial, w, p);
      if (tn > 0.0) {
        const double qt = quotient_and_gradient(t, trial, p, nullptr);
        if (qt < q - 1e-4 * alpha * un * gn) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      r.converged = true;
      r.residual = 0.0;
      break;
    }
    u.swap(trial);
    normalize_p(u, w, p);
    q = quotient_and_gradient(t, u, p, &g);
    alpha = std::min(1.0, alpha * 2.0);
    if (it % 50 == 0) {
      r.residual = std::abs(checkpoint - q) / std::max(std::abs(q), 1e-300);
      checkpoint = q;
      if (r.residual < opts.tol) {
        r.converged = true;
        break;
      }
    }
  }
  r.iterations = std::min(it, opts.max_iters);
  r.value = q;
  r.u = std::move(u);
  return r;
}

}  // namespace

BallMinimum minimize_on_ball(const KernelSpec& spec, double p, double R, double h, const MinimizeOptions& opts,
                             const Field* previous) {
  if (!(p >= 1.0)) throw InvalidInput("minimize_rayleigh_on_ball needs p >= 1");
  if (!(R >= 1.0)) throw InvalidInput("minimize_rayleigh_on_ball needs R >= 1");
  if (opts.max_iters < 1) throw InvalidInput("max_iters must be positive");
  if (!(opts.tol > 0.0)) throw InvalidInput("tol must be positive");
  if (opts.restarts < 0) throw InvalidInput("restarts must be nonnegative");
  auto grid = std::make_shared<const Grid>(spec.dimension(), R, h, GridShape::ball);
  const auto table = build_interactions(spec, grid);
  const std::size_t N = grid->size();
  const auto d = static_cast<std::size_t>(grid->dimension());

  const bool eigensolve = opts.solver == SolverChoice::eigensolve ||
                          (opts.solver == SolverChoice::automatic && p == 2.0);
  if (eigensolve && p != 2.0) throw InvalidInput("the eigensolve path requires p = 2");

  // Candidate starts in a fixed order: previous minimizer, warm starts,
  // indicator of the ball, seeded random fields.
  std::vector<std::vector<double>> starts;
  if (previous) {
    if (previous->grid->spacing() != h || previous->grid->dimension() != grid->dimension())
      throw InvalidInput("previous minimizer lives on a non-nested grid");
    std::vector<double> u(N, 0.0);
    for (std::size_t i = 0; i < previous->size(); ++i) {
      const auto idx = grid->index_of(previous->grid->lattice(i));
      if (idx < 0) throw InvalidInput("previous minimizer lives on a non-nested grid");
      u[static_cast<std::size_t>(idx)] = previous->values[i];
    }
    starts.push_back(std::move(u));
  }
  std::vector<double> x(d);
  for (const auto& ws : opts.warm_starts) {
    std::vector<double> u(N);
    for (std::size_t i = 0; i < N; ++i) {
      grid->point(i, x);
      for (auto& v : x) v /= R;
      u[i] = ws(x);
    }
    starts.push_back(std::move(u));
  }
  starts.emplace_back(N, 1.0);
  for (int k = 0; k < (eigensolve ? 0 : opts.restarts); ++k) {
    CounterRng rng(opts.seed, static_cast<std::uint64_t>(k));
    std::vector<double> u(N);
    for (auto& v : u) v = rng.uniform();
    starts.push_back(std::move(u));
  }
  std::erase_if(starts, [&](const std::vector<double>& u) { return !(lr_norm(u, 1.0, 2.0) > 0.0); });

  std::vector<RunResult> runs(starts.size());
  parallel_for(starts.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      runs[k] = eigensolve ? power_iteration(table, starts[k], opts) : descent(table, starts[k], p, opts);
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].value < runs[best].value) best = k;

  BallMinimum out;
  auto& e = out.estimate;
  e.value = std::max(0.0, runs[best].value);
  e.p = p;
  e.domain_radius = R;
  e.spacing = h;
  e.method = eigensolve ? EigenMethod::p2_eigensolve : EigenMethod::descent;
  e.iterations = runs[best].iterations;
  e.residual = runs[best].residual;
  e.converged = runs[best].converged;
  out.minimizer = std::make_shared<Field>(grid, std::move(runs[best].u));
  return out;
}

EigenEstimate minimize_rayleigh_on_ball(const KernelSpec& spec, double p, double R, double h,
                                        const MinimizeOptions& opts) {
  return minimize_on_ball(spec, p, R, h, opts).estimate;
}

std::vector<EigenEstimate> expanding_domain_sweep(const KernelSpec& spec, double p, const std::vector<double>& radii,
                                                  double h, const MinimizeOptions& opts) {
  if (radii.empty()) throw InvalidInput("sweep needs at least one radius");
  if (!(h > 0.0)) throw InvalidInput("sweep needs h > 0");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double ratio = radii[k] / h;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
      throw InvalidInput("radius " + format_double(radii[k]) + " is not a multiple of h (grids not nested)");
    if (k > 0 && !(radii[k] > radii[k - 1])) throw InvalidInput("radii must be strictly increasing (grids not nested)");
  }
  std::vector<EigenEstimate> out;
  std::shared_ptr<Field> prev;
  for (double R : radii) {
    auto res = minimize_on_ball(spec, p, R, h, opts, prev.get());
    out.push_back(res.estimate);
    prev = res.minimizer;
  }
  return out;
}

double quadrature_tolerance(const KernelSpec& spec, double p, double R, double h, const MinimizeOptions& opts) {
  const double coarse = minimize_rayleigh_on_ball(spec, p, R, h, opts).value;
  const double fine = minimize_rayleigh_on_ball(spec, p, R, 0.5 * h, opts).value;
  return 2.0 * std::abs(coarse - fine);
}

double q_infinity(std::span<const double> u, const InteractionTable& t, bool literal_support) {
  double top = 0.0;
  for (double v : u) top = std::max(top, std::abs(v));
  if (!(top > 0.0)) throw InvalidInput("q_infinity of the zero field is undefined");
  double jump = 0.0;
  for (std::size_t k = 0; k < t.pairs.size(); ++k) {
    const double a = u[t.pairs[k].i];
    const double b = u[t.pairs[k].j];
    const bool in_a = a != 0.0;
    const bool in_b = b != 0.0;
    if (literal_support ? (in_a && in_b) : (in_a || in_b)) jump = std::max(jump, std::abs(a - b));
  }
  if (!literal_support)
    for (std::size_t i = 0; i < u.size(); ++i)
      if (t.exterior[i] > 0.0 && u[i] != 0.0) jump = std::max(jump, std::abs(u[i]));
  return jump / top;
}

double q_infinity(const Field& field, const KernelSpec& spec, bool literal_support) {
  const auto table = build_interactions(spec, field.grid);
  return q_infinity(field.values, table, literal_support);
}

StaircasePlan staircase_plan(const LinearMapSpec& map, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidInput("staircase needs 0 < epsilon < 1");
  StaircasePlan plan;
  plan.epsilon = epsilon;
  plan.levels = static_cast<int>(std::floor(1.0 / epsilon)) + 1;
  plan.radii.push_back(1.0);
  constexpr double delta = 0.01;
  for (int k = 1; k < plan.levels; ++k) {
    const double r = plan.radii.back();
    plan.radii.push_back((1.0 + delta) * std::max(map.op_norm() * r + 1.0, map.inv_op_norm() * (r + 1.0)));
  }
  for (int k = 0; k < plan.levels; ++k) plan.values.push_back(std::max(1.0 - k * epsilon, 0.0));
  return plan;
}

Field staircase_witness(const KernelSpec& spec, double epsilon, std::shared_ptr<const Grid> grid) {
  if (!grid) throw InvalidInput("staircase needs a grid");
  if (grid->dimension() != spec.dimension()) throw InvalidInput("grid dimension does not match kernel");
  const auto plan = staircase_plan(spec.map, epsilon);
  if (grid->half_width() < plan.required_half_width())
    throw InvalidInput("grid too small for the staircase: half-width " + format_double(grid->half_width()) +
                       " < required " + format_double(plan.required_half_width()));
  Field f(grid);
  const auto d = static_cast<std::size_t>(grid->dimension());
  std::vector<double> x(d);
  for (std::size_t i = 0; i < f.size(); ++i) {
    grid->point(i, x);
    const double r = norm2(x);
    for (int k = 0; k < plan.levels; ++k) {
      if (r <= plan.radii[static_cast<std::size_t>(k)]) {
        f.values[i] = plan.values[static_cast<std::size_t>(k)];
        break;
      }
    }
  }
  return f;
}

std::vector<PinfRow> pinf_limit_table(const LinearMapSpec& map, const PsiProfile& psi, const std::vector<double>& p_list) {
  std::vector<PinfRow> rows;
  for (std::size_t k = 0; k < p_list.size(); ++k) {
    const double p = p_list[k];
    if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidInput("p values must be finite and >= 1");
    if (k > 0 && !(p > p_list[k - 1])) throw InvalidInput("p values must be strictly increasing");
    const double lambda = lambda_closed_form(p, map, psi).value;
    rows.push_back({p, lambda, std::pow(lambda, 1.0 / p)});
  }
  return rows;
}

}  // namespace nlpl
