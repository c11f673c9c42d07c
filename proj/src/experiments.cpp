#include "nlpl/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace nlpl {

namespace fs = std::filesystem;

namespace {

const KernelSpec& need_kernel(const ExperimentConfig& cfg) {
  if (!cfg.kernel) throw ConfigError("config has no kernel section");
  return *cfg.kernel;
}

fs::path out_path(const ExperimentConfig& cfg, const std::string& name) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir / name;
}

void write_file(RunReport& report, const ExperimentConfig& cfg, const std::string& name, const std::string& body) {
  const auto path = out_path(cfg, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << body;
  if (!out) throw ConfigError("failed writing " + path.string());
  report.files.push_back(path.string());
}

std::string csv_row(std::initializer_list<double> values) {
  std::string line;
  bool first = true;
  for (double v : values) {
    if (!first) line += ',';
    line += format_double(v);
    first = false;
  }
  line += '\n';
  return line;
}

// JSON numbers must be finite; non-finite values become null.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace

RunReport cmd_eigen(const ExperimentConfig& cfg) {
  const auto& spec = need_kernel(cfg);
  if (!cfg.eigen) throw ConfigError("config has no eigen section");
  const auto& e = *cfg.eigen;
  RunReport report;

  MinimizeOptions opts;
  opts.restarts = e.restarts;
  opts.max_iters = e.max_iters;
  opts.tol = e.tol;
  opts.seed = cfg.seed;
  opts.solver = e.solver;
  if (e.warm_start_n > 0 && spec.map.has_blocks()) {
    try {
      BuildOptions b;
      b.seed = cfg.seed;
      auto tm = std::make_shared<TensorMinimizer>(minimizer_for_map(spec.map, e.p, e.warm_start_n, b));
      opts.warm_starts.push_back([tm](std::span<const double> x) { return tm->value(x); });
    } catch (const InvalidInput& err) {
      report.warnings.push_back(std::string("minimizing-sequence warm start skipped: ") + err.what());
    }
  }

  const double closed = lambda_closed_form(e.p, spec.map, spec.psi).value;
  const auto sweep = expanding_domain_sweep(spec, e.p, e.radii, e.h, opts);
  const double tol_quad = e.measure_tol_quad ? quadrature_tolerance(spec, e.p, e.radii.front(), e.h, opts)
                                             : std::numeric_limits<double>::quiet_NaN();

  std::string csv = "R,h,p,lambda_est,iterations,residual\n";
  bool nonincreasing = true;
  bool converged = true;
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    const auto& s = sweep[k];
    csv += csv_row({s.domain_radius, s.spacing, s.p, s.value, static_cast<double>(s.iterations), s.residual});
    if (k > 0 && s.value > sweep[k - 1].value + e.tol * std::max(1.0, sweep[k - 1].value)) nonincreasing = false;
    if (!s.converged) {
      converged = false;
      report.warnings.push_back("solver did not converge at R = " + format_double(s.domain_radius) +
                                " (residual " + format_double(s.residual) + ")");
    }
  }
  write_file(report, cfg, "sweep.csv", csv);

  const double final_estimate = sweep.back().value;
  report.summary = Json{{"closed_form", num(closed)},
                        {"final_estimate", num(final_estimate)},
                        {"gap", num(final_estimate - closed)},
                        {"tol_quad", num(tol_quad)},
                        {"nonincreasing", nonincreasing},
                        {"converged", converged},
                        {"method", to_string(sweep.back().method)}};
  write_file(report, cfg, "summary.json", dump(report.summary));
  return report;
}

RunReport cmd_minimizers(const ExperimentConfig& cfg) {
  const auto& spec = need_kernel(cfg);
  if (!cfg.minimizers) throw ConfigError("config has no minimizers section");
  const auto& m = *cfg.minimizers;
  RunReport report;

  VerifyOptions v;
  v.mc_samples = m.mc_samples;
  v.seed = cfg.seed;
  v.budget = m.budget;
  v.construction = m.construction;
  const auto rows = verify_upper_bound(spec, m.p, m.n_list, v);

  std::string csv = "n,quotient_closed,quotient_mc,mc_stderr,upper_bound\n";
  for (const auto& r : rows)
    csv += csv_row({static_cast<double>(r.n), r.quotient_closed, r.quotient_mc, r.mc_stderr, r.upper_bound});
  write_file(report, cfg, "convergence.csv", csv);

  const double closed = lambda_closed_form(m.p, spec.map, spec.psi).value;
  const double last = rows.back().upper_bound;
  report.summary = Json{{"lambda_closed_form", num(closed)},
                        {"last_n", rows.back().n},
                        {"last_upper_bound", num(last)},
                        {"relative_gap", closed > 0.0 ? num((last - closed) / closed) : Json(nullptr)}};
  write_file(report, cfg, "summary.json", dump(report.summary));
  return report;
}

RunReport cmd_evolve(const ExperimentConfig& cfg) {
  const auto& spec = need_kernel(cfg);
  if (!cfg.evolve) throw ConfigError("config has no evolve section");
  const auto& e = *cfg.evolve;
  RunReport report;

  std::shared_ptr<const Grid> grid;
  try {
    grid = std::make_shared<const Grid>(spec.dimension(), e.grid.half_width, e.grid.h, e.grid.shape);
  } catch (const InvalidInput& err) {
    throw ConfigError(std::string("evolve.grid: ") + err.what());
  }
  Field u0(grid);
  const auto d = static_cast<std::size_t>(grid->dimension());
  std::vector<double> x(d);
  if (e.initial.type == "indicator_ball" || e.initial.type == "constant") {
    for (std::size_t i = 0; i < grid->size(); ++i) {
      grid->point(i, x);
      const bool inside = e.initial.type == "constant" || norm2(x) <= e.initial.radius * (1.0 + 1e-12);
      u0.values[i] = inside ? e.initial.value : 0.0;
    }
  } else if (e.initial.type == "csv") {
    std::ifstream in(e.initial.path);
    if (!in) throw ConfigError("cannot read initial data " + e.initial.path);
    u0 = read_field_csv(in, grid);
  }

  const auto traj = evolve(u0, spec, e.solver, e.r);
  for (const auto& w : traj.warnings) report.warnings.push_back(w);

  std::string csv = "t,l1,l2,lr,linf,mass,boundary_mass\n";
  for (std::size_t k = 0; k < traj.size(); ++k)
    csv += csv_row({traj.times[k], traj.l1[k], traj.l2[k], traj.lr[k], traj.linf[k], traj.mass[k],
                    traj.boundary_mass[k]});
  write_file(report, cfg, "trajectory.csv", csv);
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    std::ostringstream body;
    write_field_csv(body, traj.snapshots[k]);
    std::ostringstream name;
    name << "snapshot_" << k << ".csv";
    write_file(report, cfg, name.str(), body.str());
  }

  DecayRegime regime = e.solver.p > 2.0 ? DecayRegime::polynomial : DecayRegime::exponential;
  if (e.fit.regime == "polynomial") regime = DecayRegime::polynomial;
  if (e.fit.regime == "exponential") regime = DecayRegime::exponential;

  Json decay{{"regime", to_string(regime)}, {"r", e.r}};
  std::optional<std::string> rejected;
  try {
    const auto law = fit_decay(traj, e.r, regime, e.fit.window);
    decay["value"] = num(law.value);
    decay["constant"] = num(law.constant);
    decay["window"] = {law.window.first, law.window.second};
    decay["residual"] = num(law.residual);
    decay["samples"] = law.samples;
    if (e.solver.p > 2.0) decay["bound_sup"] = num(decay_bound_sup(traj, e.r, e.solver.p, law.window));
  } catch (const InvalidInput& err) {
    rejected = err.what();
    decay["rejected"] = *rejected;
  }
  decay["steps"] = traj.steps;
  decay["halvings"] = traj.halvings;
  decay["final_outflow"] = num(traj.outflow.back());
  decay["warnings"] = traj.warnings;
  report.summary = decay;
  write_file(report, cfg, "decay.json", dump(decay));
  if (rejected) throw NumericFailure("decay fit rejected: " + *rejected);
  return report;
}

RunReport cmd_pinf(const ExperimentConfig& cfg) {
  const auto& spec = need_kernel(cfg);
  if (!cfg.pinf) throw ConfigError("config has no pinf section");
  const auto& pi = *cfg.pinf;
  RunReport report;

  const auto table = pinf_limit_table(spec.map, spec.psi, pi.p_list);
  std::string csv = "p,lambda,lambda_root\n";
  for (const auto& r : table) csv += csv_row({r.p, r.lambda, r.lambda_root});
  write_file(report, cfg, "pinf.csv", csv);

  std::string stairs = "epsilon,levels,required_half_width,grid_half_width,q_infinity\n";
  Json witnesses = Json::array();
  for (double eps : pi.epsilons) {
    const auto plan = staircase_plan(spec.map, eps);
    const double L = std::ceil(plan.required_half_width() / pi.h - 1e-9) * pi.h;
    auto grid = std::make_shared<const Grid>(spec.dimension(), L, pi.h, pi.shape);
    const auto field = staircase_witness(spec, eps, grid);
    const double q = q_infinity(field, spec, pi.literal_support);
    stairs += csv_row({eps, static_cast<double>(plan.levels), plan.required_half_width(), L, q});
    witnesses.push_back(Json{{"epsilon", eps}, {"levels", plan.levels}, {"q_infinity", num(q)}, {"ok", q <= eps}});
  }
  write_file(report, cfg, "staircase.csv", stairs);

  Json roots = Json::array();
  for (const auto& r : table) roots.push_back(num(r.lambda_root));
  report.summary = Json{{"lambda_root", roots}, {"staircase", witnesses}};
  write_file(report, cfg, "summary.json", dump(report.summary));
  return report;
}

RunReport run_command(const std::string& command, const std::string& config_text, const RunOverrides& overrides) {
  if (command != "eigen" && command != "minimizers" && command != "evolve" && command != "pinf")
    throw ConfigError("unknown command '" + command + "' (expected eigen, minimizers, evolve or pinf)");
  ExperimentConfig cfg = parse_config_text(config_text, overrides.seed);
  if (overrides.out_dir) cfg.output_dir = *overrides.out_dir;
  if (overrides.threads) cfg.threads = *overrides.threads;
  if (cfg.threads) set_thread_count(*cfg.threads);

  RunReport echo;
  write_file(echo, cfg, "effective_config.json", dump(effective_json(cfg)));

  RunReport report;
  if (command == "eigen") report = cmd_eigen(cfg);
  else if (command == "minimizers") report = cmd_minimizers(cfg);
  else if (command == "evolve") report = cmd_evolve(cfg);
  else report = cmd_pinf(cfg);
  report.files.insert(report.files.begin(), echo.files.begin(), echo.files.end());
  return report;
}

}  // namespace nlpl
