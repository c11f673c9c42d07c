#include "nlpl/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nlpl/common.hpp"

namespace nlpl {

namespace {

constexpr std::size_t kChunk = 2048;

inline double flux(double s, double p) {
  if (p == 2.0) return s;
  if (s == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(s), p - 1.0), s);
}

double sum_of(std::span<const double> v) { return pairwise_sum(v); }

double weighted_outflow(std::span<const double> u, const InteractionTable& t, double p) {
  std::vector<double> part(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) part[i] = t.exterior[i] * flux(u[i], p);
  return t.cell_volume * pairwise_sum(part);
}

double boundary_l1(std::span<const double> u, const InteractionTable& t) {
  std::vector<double> part(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (t.exterior[i] > 0.0) part[i] = std::abs(u[i]);
  return t.cell_volume * pairwise_sum(part);
}

std::string time_text(double t) {
  std::ostringstream s;
  s.precision(17);
  s << t;
  return s.str();
}

}  // namespace

std::string to_string(Scheme s) { return s == Scheme::heun ? "heun" : "explicit_euler"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "explicit_euler" || s == "euler") return Scheme::explicit_euler;
  if (s == "heun") return Scheme::heun;
  throw InvalidInput("unknown scheme '" + s + "' (expected explicit_euler or heun)");
}

std::string to_string(Truncation t) { return t == Truncation::absorbing ? "absorbing" : "closed"; }

Truncation truncation_from_string(const std::string& s) {
  if (s == "closed") return Truncation::closed;
  if (s == "absorbing") return Truncation::absorbing;
  throw InvalidInput("unknown truncation '" + s + "' (expected closed or absorbing)");
}

std::string to_string(DecayRegime r) { return r == DecayRegime::exponential ? "exponential" : "polynomial"; }

const std::vector<double>& Trajectory::norm_column(double q) const {
  if (q == 1.0) return l1;
  if (q == 2.0) return l2;
  if (std::isinf(q)) return linf;
  if (q == r) return lr;
  throw InvalidInput("trajectory does not record the L^" + time_text(q) + " norm");
}

void nonlocal_rhs(std::span<const double> u, const InteractionTable& t, double p, Truncation truncation,
                  std::span<double> out) {
  if (!(p > 1.0)) throw InvalidInput("nonlocal_rhs needs p > 1");
  if (u.size() != t.size() || out.size() != t.size()) throw InvalidInput("field size does not match interaction table");
  const double w = t.cell_volume;
  const bool absorb = truncation == Truncation::absorbing;
  parallel_for(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double s = 0.0;
      const double ui = u[i];
      for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k)
        s += t.neighbour_weight[k] * flux(u[t.neighbour[k]] - ui, p);
      double v = w * s;
      if (absorb) v -= t.exterior[i] * flux(ui, p);
      out[i] = v;
    }
  });
}

Field nonlocal_rhs(const Field& field, const KernelSpec& spec, double p, Truncation truncation) {
  if (!(p > 1.0)) throw InvalidInput("nonlocal_rhs needs p > 1");
  const auto table = build_interactions(spec, field.grid);
  Field out(field.grid);
  nonlocal_rhs(field.values, table, p, truncation, out.values);
  return out;
}

double stability_dt(std::span<const double> u, const InteractionTable& t, double p, double safety,
                    Truncation truncation, double floor) {
  if (!(p >= 2.0)) throw InvalidInput("stability_dt applies to p >= 2; supply dt for p < 2");
  if (!(safety > 0.0 && safety <= 1.0)) throw InvalidInput("safety must lie in (0, 1]");
  if (u.size() != t.size()) throw InvalidInput("field size does not match interaction table");
  const double w = t.cell_volume;
  const bool absorb = truncation == Truncation::absorbing;
  std::vector<double> row(u.size());
  parallel_for(u.size(), kChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double ui = std::abs(u[i]);
      double s = 0.0;
      for (std::size_t k = t.row_start[i]; k < t.row_start[i + 1]; ++k) {
        const double M = std::max({ui, std::abs(u[t.neighbour[k]]), floor});
        s += t.neighbour_weight[k] * (p == 2.0 ? 1.0 : std::pow(M, p - 2.0));
      }
      s *= w;
      if (absorb) s += t.exterior[i] * (p == 2.0 ? 1.0 : std::pow(std::max(ui, floor), p - 2.0));
      row[i] = (p - 1.0) * s;
    }
  });
  const double worst = row.empty() ? 0.0 : *std::max_element(row.begin(), row.end());
  if (worst <= 0.0) return std::numeric_limits<double>::infinity();
  return safety / worst;
}

double stability_dt(const Field& field, const KernelSpec& spec, double p, double safety, Truncation truncation,
                    double floor) {
  const auto table = build_interactions(spec, field.grid);
  return stability_dt(field.values, table, p, safety, truncation, floor);
}

Trajectory evolve(const Field& u0, const KernelSpec& spec, const SolverConfig& cfg, double r) {
  const auto table = build_interactions(spec, u0.grid);
  return evolve(u0, table, cfg, r);
}

Trajectory evolve(const Field& u0, const InteractionTable& table, const SolverConfig& cfg, double r) {
  const double p = cfg.p;
  if (!(p > 1.0)) throw InvalidInput("evolution needs p > 1");
  if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw InvalidInput("final time T must be positive and finite");
  if (!(r >= 1.0)) throw InvalidInput("norm exponent r must be >= 1");
  if (cfg.record_every < 1) throw InvalidInput("record_every must be >= 1");
  if (cfg.snapshot_every < 0) throw InvalidInput("snapshot_every must be >= 0");
  if (cfg.dt && !(*cfg.dt > 0.0)) throw InvalidInput("dt must be positive");
  if (cfg.dt_max && !(*cfg.dt_max > 0.0)) throw InvalidInput("dt_max must be positive");
  if (!cfg.dt && p < 2.0) throw InvalidInput("p < 2 has no automatic step size; supply dt");
  if (!cfg.dt && !(cfg.safety > 0.0 && cfg.safety <= 1.0)) throw InvalidInput("safety must lie in (0, 1]");
  if (u0.size() != table.size()) throw InvalidInput("initial field does not match the interaction table");

  const std::size_t N = u0.size();
  const double w = table.cell_volume;
  std::vector<double> u = u0.values;
  const bool nonnegative = std::all_of(u.begin(), u.end(), [](double v) { return v >= 0.0; });

  Trajectory traj;
  traj.r = r;
  double outflow = 0.0;
  const double mass0 = w * sum_of(u);
  const double l1_0 = lr_norm(u, w, 1.0);
  const double mass_tol = 1e-10 * std::max(std::abs(mass0), l1_0) + 1e-14;
  const double boundary_limit = cfg.boundary_mass_threshold * l1_0;
  bool boundary_warned = false;

  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.l1.push_back(lr_norm(u, w, 1.0));
    traj.l2.push_back(lr_norm(u, w, 2.0));
    traj.lr.push_back(lr_norm(u, w, r));
    traj.linf.push_back(lr_norm(u, w, std::numeric_limits<double>::infinity()));
    traj.mass.push_back(w * sum_of(u));
    traj.outflow.push_back(outflow);
    const double bm = boundary_l1(u, table);
    traj.boundary_mass.push_back(bm);
    if (!boundary_warned && bm > boundary_limit) {
      boundary_warned = true;
      traj.warnings.push_back("boundary mass " + time_text(bm) + " exceeds " + time_text(boundary_limit) +
                              " at t = " + time_text(t) + "; truncation no longer faithful");
    }
  };
  auto snapshot = [&](double t) {
    traj.snapshots.emplace_back(u0.grid, u);
    traj.snapshot_times.push_back(t);
  };

  record(0.0);
  if (cfg.snapshot_every > 0) snapshot(0.0);

  std::vector<double> k1(N), k2(N), u1(N), next(N);
  double t = 0.0;
  while (cfg.T - t > 1e-12 * cfg.T) {
    double dt = cfg.dt ? *cfg.dt : stability_dt(u, table, p, cfg.safety, cfg.truncation, cfg.flux_floor);
    if (!cfg.dt && cfg.dt_max) dt = std::min(dt, *cfg.dt_max);
    dt = std::min(dt, cfg.T - t);

    const double l1_prev = lr_norm(u, w, 1.0);
    const double linf_prev = lr_norm(u, w, std::numeric_limits<double>::infinity());
    const bool absorb = cfg.truncation == Truncation::absorbing;

    nonlocal_rhs(u, table, p, cfg.truncation, k1);
    const double out1 = absorb ? weighted_outflow(u, table, p) : 0.0;

    bool accepted = false;
    double out_step = 0.0;
    std::string why;
    for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
      if (cfg.scheme == Scheme::explicit_euler) {
        for (std::size_t i = 0; i < N; ++i) next[i] = u[i] + dt * k1[i];
        out_step = dt * out1;
      } else {
        for (std::size_t i = 0; i < N; ++i) u1[i] = u[i] + dt * k1[i];
        nonlocal_rhs(u1, table, p, cfg.truncation, k2);
        for (std::size_t i = 0; i < N; ++i) next[i] = u[i] + 0.5 * dt * (k1[i] + k2[i]);
        out_step = 0.5 * dt * (out1 + (absorb ? weighted_outflow(u1, table, p) : 0.0));
      }
      if (!std::all_of(next.begin(), next.end(), [](double v) { return std::isfinite(v); }))
        throw NumericFailure("non-finite state after step at t = " + time_text(t) + "; last valid time " +
                             time_text(t));

      const double total = w * sum_of(next) + outflow + out_step;
      const double linf = lr_norm(next, w, std::numeric_limits<double>::infinity());
      const double l1 = lr_norm(next, w, 1.0);
      why.clear();
      if (std::abs(total - mass0) > mass_tol)
        why = "mass balance drifted by " + time_text(total - mass0);
      else if (linf > linf_prev * (1.0 + 1e-12) + 1e-300)
        why = "max norm increased from " + time_text(linf_prev) + " to " + time_text(linf);
      else if (nonnegative && l1 > l1_prev * (1.0 + 1e-12) + 1e-300)
        why = "L1 norm increased from " + time_text(l1_prev) + " to " + time_text(l1);
      if (why.empty()) {
        accepted = true;
        break;
      }
      dt *= 0.5;
      ++traj.halvings;
    }
    if (!accepted)
      throw NumericFailure("invariant violation persisted after " + std::to_string(cfg.max_halvings) +
                           " step halvings at t = " + time_text(t) + " (" + why + "); last valid time " +
                           time_text(t));

    u.swap(next);
    outflow += out_step;
    t += dt;
    if (cfg.T - t <= 1e-12 * cfg.T) t = cfg.T;
    ++traj.steps;
    if (traj.steps % cfg.record_every == 0 || t == cfg.T) record(t);
    if (cfg.snapshot_every > 0 && (traj.steps % cfg.snapshot_every == 0 || t == cfg.T)) snapshot(t);
  }
  return traj;
}

std::pair<double, double> default_fit_window(const Trajectory& traj) {
  double first = 0.0;
  for (double t : traj.times)
    if (t > 0.0) {
      first = t;
      break;
    }
  if (!(first > 0.0)) throw InvalidInput("trajectory has no positive times");
  const double last = traj.times.back();
  return {std::sqrt(first * last), last};
}

DecayLaw fit_decay(std::span<const double> times, std::span<const double> norms, DecayRegime regime,
                   std::pair<double, double> window) {
  if (times.size() != norms.size()) throw InvalidInput("times and norms differ in length");
  if (!(window.first < window.second)) throw InvalidInput("fit window must satisfy t0 < t1");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (t < window.first || t > window.second) continue;
    if (regime == DecayRegime::polynomial && !(t > 0.0)) continue;
    if (!(norms[i] > 0.0)) throw InvalidInput("nonpositive norms in fit window");
    xs.push_back(regime == DecayRegime::polynomial ? std::log(t) : t);
    ys.push_back(std::log(norms[i]));
  }
  if (xs.size() < 10) {
    std::ostringstream msg;
    msg << "fit window holds " << xs.size() << " samples; at least 10 are needed";
    throw InvalidInput(msg.str());
  }
  const double n = static_cast<double>(xs.size());
  const double mx = pairwise_sum(xs) / n;
  const double my = pairwise_sum(ys) / n;
  std::vector<double> sxy(xs.size()), sxx(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy[i] = (xs[i] - mx) * (ys[i] - my);
    sxx[i] = (xs[i] - mx) * (xs[i] - mx);
  }
  const double denom = pairwise_sum(sxx);
  if (!(denom > 0.0)) throw InvalidInput("fit window has no spread in time");
  const double slope = pairwise_sum(sxy) / denom;
  const double intercept = my - slope * mx;
  std::vector<double> res(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (intercept + slope * xs[i]);
    res[i] = e * e;
  }
  DecayLaw law;
  law.regime = regime;
  law.value = regime == DecayRegime::polynomial ? slope : -slope;
  law.constant = std::exp(intercept);
  law.window = window;
  law.residual = std::sqrt(pairwise_sum(res) / n);
  law.samples = static_cast<int>(xs.size());
  return law;
}

DecayLaw fit_decay(const Trajectory& traj, double r, DecayRegime regime,
                   std::optional<std::pair<double, double>> window) {
  const auto& col = traj.norm_column(r);
  const auto win = window ? *window : default_fit_window(traj);
  if (win.first < traj.times.front() || win.second > traj.times.back() + 1e-9 * traj.times.back())
    throw InvalidInput("fit window lies outside the trajectory times");
  return fit_decay(traj.times, col, regime, win);
}

double decay_bound_sup(const Trajectory& traj, double r, double p, std::pair<double, double> window) {
  if (!(p > 2.0)) throw InvalidInput("decay bound form applies to p > 2");
  const auto& col = traj.norm_column(r);
  const double expo = (r - 1.0) / (p - 2.0);
  double sup = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    if (t < window.first || t > window.second) continue;
    any = true;
    sup = std::max(sup, col[i] * std::pow(t, expo));
  }
  if (!any) throw InvalidInput("decay bound window holds no samples");
  return sup;
}

}  // namespace nlpl
