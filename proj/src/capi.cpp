#include "nlpl/nlpl.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "nlpl/config.hpp"
#include "nlpl/experiments.hpp"

struct nlpl_kernel {
  nlpl::KernelSpec spec;
};

struct nlpl_field {
  nlpl::Field field;
};

struct nlpl_minimizer {
  nlpl::TensorMinimizer tm;
};

struct nlpl_trajectory {
  nlpl::Trajectory traj;
};

struct nlpl_report {
  std::string summary;
  std::vector<std::string> warnings;
  std::vector<std::string> files;
};

namespace {

thread_local std::string g_last_error;

nlpl_status fail(nlpl_status code, const char* what) {
  g_last_error = what ? what : "";
  return code;
}

template <class F>
nlpl_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return NLPL_OK;
  } catch (const nlpl::ConfigError& e) {
    return fail(NLPL_ERR_CONFIG, e.what());
  } catch (const nlpl::InvalidInput& e) {
    return fail(NLPL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const nlpl::NumericFailure& e) {
    return fail(NLPL_ERR_NUMERIC, e.what());
  } catch (const nlpl::Json::exception& e) {
    return fail(NLPL_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NLPL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NLPL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(NLPL_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw nlpl::InvalidInput(what);
}

}  // namespace

extern "C" {

const char* nlpl_version(void) { return "0.1.0"; }

const char* nlpl_last_error(void) { return g_last_error.c_str(); }

nlpl_status nlpl_set_threads(unsigned threads) {
  return guarded([&] {
    require(threads > 0, "thread count must be positive");
    nlpl::set_thread_count(threads);
  });
}

nlpl_status nlpl_theta_constant(double eta, double p, double* theta) {
  return guarded([&] {
    require(theta, "theta is null");
    *theta = nlpl::theta_constant(eta, p).theta;
  });
}

nlpl_status nlpl_kernel_from_json(const char* json, nlpl_kernel** out) {
  return guarded([&] {
    require(json && out, "null argument");
    *out = nullptr;
    auto j = nlpl::Json::parse(json);
    *out = new nlpl_kernel{nlpl::kernel_from_json(j)};
  });
}

void nlpl_kernel_destroy(nlpl_kernel* kernel) { delete kernel; }

int nlpl_kernel_dimension(const nlpl_kernel* kernel) { return kernel ? kernel->spec.dimension() : 0; }

nlpl_status nlpl_kernel_eval(const nlpl_kernel* kernel, const double* x, const double* y, double* out) {
  return guarded([&] {
    require(kernel && x && y && out, "null argument");
    const auto d = static_cast<std::size_t>(kernel->spec.dimension());
    *out = nlpl::kernel_eval(kernel->spec, {x, d}, {y, d});
  });
}

nlpl_status nlpl_lambda_closed_form(const nlpl_kernel* kernel, double p, double* out) {
  return guarded([&] {
    require(kernel && out, "null argument");
    *out = nlpl::lambda_closed_form(p, kernel->spec.map, kernel->spec.psi).value;
  });
}

nlpl_status nlpl_field_create(int dimension, double half_width, double h, nlpl_grid_shape shape, nlpl_field** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = nullptr;
    require(shape == NLPL_GRID_BOX || shape == NLPL_GRID_BALL, "unknown grid shape");
    auto grid = std::make_shared<const nlpl::Grid>(
        dimension, half_width, h, shape == NLPL_GRID_BALL ? nlpl::GridShape::ball : nlpl::GridShape::box);
    *out = new nlpl_field{nlpl::Field(grid)};
  });
}

void nlpl_field_destroy(nlpl_field* field) { delete field; }

size_t nlpl_field_size(const nlpl_field* field) { return field ? field->field.size() : 0; }

nlpl_status nlpl_field_point(const nlpl_field* field, size_t index, double* x) {
  return guarded([&] {
    require(field && x, "null argument");
    require(index < field->field.size(), "index out of range");
    const auto& grid = *field->field.grid;
    grid.point(index, {x, static_cast<std::size_t>(grid.dimension())});
  });
}

double* nlpl_field_values(nlpl_field* field) { return field ? field->field.values.data() : nullptr; }

nlpl_status nlpl_rayleigh_quotient(const nlpl_kernel* kernel, const nlpl_field* field, double p, double* out) {
  return guarded([&] {
    require(kernel && field && out, "null argument");
    require(field->field.grid->dimension() == kernel->spec.dimension(), "field and kernel dimensions differ");
    *out = nlpl::rayleigh_quotient(field->field, kernel->spec, p);
  });
}

nlpl_status nlpl_minimizer_create(const nlpl_kernel* kernel, double p, int n, uint64_t seed, nlpl_minimizer** out) {
  return guarded([&] {
    require(kernel && out, "null argument");
    *out = nullptr;
    nlpl::BuildOptions opts;
    opts.seed = seed;
    *out = new nlpl_minimizer{nlpl::minimizer_for_map(kernel->spec.map, p, n, opts)};
  });
}

void nlpl_minimizer_destroy(nlpl_minimizer* m) { delete m; }

nlpl_status nlpl_minimizer_value(const nlpl_minimizer* m, const double* x, double* out) {
  return guarded([&] {
    require(m && x && out, "null argument");
    *out = m->tm.value({x, static_cast<std::size_t>(m->tm.dimension())});
  });
}

nlpl_status nlpl_minimizer_displacement(const nlpl_minimizer* m, double* out) {
  return guarded([&] {
    require(m && out, "null argument");
    *out = m->tm.closed_form_displacement();
  });
}

nlpl_status nlpl_minimizer_displacement_mc(const nlpl_minimizer* m, uint64_t samples, uint64_t seed, double* mean,
                                           double* standard_error) {
  return guarded([&] {
    require(m && mean && standard_error, "null argument");
    const auto est = m->tm.monte_carlo_displacement(samples, seed);
    *mean = est.value;
    *standard_error = est.standard_error;
  });
}

void nlpl_solver_options_init(nlpl_solver_options* opts) {
  if (!opts) return;
  const nlpl::SolverConfig def;
  opts->p = def.p;
  opts->T = def.T;
  opts->dt = 0.0;
  opts->dt_max = 0.0;
  opts->scheme = NLPL_SCHEME_EULER;
  opts->truncation = NLPL_TRUNC_CLOSED;
  opts->safety = def.safety;
  opts->record_every = def.record_every;
}

nlpl_status nlpl_evolve(const nlpl_kernel* kernel, const nlpl_field* u0, const nlpl_solver_options* opts, double r,
                        nlpl_trajectory** out) {
  return guarded([&] {
    require(kernel && u0 && opts && out, "null argument");
    *out = nullptr;
    require(u0->field.grid->dimension() == kernel->spec.dimension(), "field and kernel dimensions differ");
    nlpl::SolverConfig cfg;
    cfg.p = opts->p;
    cfg.T = opts->T;
    if (opts->dt > 0.0) cfg.dt = opts->dt;
    if (opts->dt_max > 0.0) cfg.dt_max = opts->dt_max;
    cfg.scheme = opts->scheme == NLPL_SCHEME_HEUN ? nlpl::Scheme::heun : nlpl::Scheme::explicit_euler;
    cfg.truncation = opts->truncation == NLPL_TRUNC_ABSORBING ? nlpl::Truncation::absorbing : nlpl::Truncation::closed;
    cfg.safety = opts->safety;
    cfg.record_every = opts->record_every;
    *out = new nlpl_trajectory{nlpl::evolve(u0->field, kernel->spec, cfg, r)};
  });
}

void nlpl_trajectory_destroy(nlpl_trajectory* traj) { delete traj; }

size_t nlpl_trajectory_size(const nlpl_trajectory* traj) { return traj ? traj->traj.size() : 0; }

nlpl_status nlpl_trajectory_column(const nlpl_trajectory* traj, const char* name, const double** data) {
  return guarded([&] {
    require(traj && name && data, "null argument");
    const auto& t = traj->traj;
    const std::string key = name;
    const std::vector<double>* col = nullptr;
    if (key == "t") col = &t.times;
    else if (key == "l1") col = &t.l1;
    else if (key == "l2") col = &t.l2;
    else if (key == "lr") col = &t.lr;
    else if (key == "linf") col = &t.linf;
    else if (key == "mass") col = &t.mass;
    else if (key == "outflow") col = &t.outflow;
    else if (key == "boundary_mass") col = &t.boundary_mass;
    else throw nlpl::InvalidInput("unknown trajectory column '" + key + "'");
    *data = col->data();
  });
}

nlpl_status nlpl_fit_decay(const nlpl_trajectory* traj, double r, nlpl_regime regime, double t0, double t1,
                           double* value, double* constant) {
  return guarded([&] {
    require(traj && value, "null argument");
    std::optional<std::pair<double, double>> window;
    if (t0 < t1) window = std::make_pair(t0, t1);
    const auto law = nlpl::fit_decay(
        traj->traj, r, regime == NLPL_EXPONENTIAL ? nlpl::DecayRegime::exponential : nlpl::DecayRegime::polynomial,
        window);
    *value = law.value;
    if (constant) *constant = law.constant;
  });
}

nlpl_status nlpl_run(const char* command, const char* config_json, const nlpl_run_options* opts, nlpl_report** out) {
  return guarded([&] {
    require(command && config_json && out, "null argument");
    *out = nullptr;
    nlpl::RunOverrides ov;
    if (opts) {
      if (opts->out_dir) ov.out_dir = std::string(opts->out_dir);
      if (opts->has_seed) ov.seed = opts->seed;
      if (opts->threads > 0) ov.threads = opts->threads;
    }
    auto rep = nlpl::run_command(command, config_json, ov);
    *out = new nlpl_report{rep.summary.dump(2), std::move(rep.warnings), std::move(rep.files)};
  });
}

void nlpl_report_destroy(nlpl_report* report) { delete report; }

const char* nlpl_report_summary(const nlpl_report* report) { return report ? report->summary.c_str() : ""; }

size_t nlpl_report_warning_count(const nlpl_report* report) { return report ? report->warnings.size() : 0; }

const char* nlpl_report_warning(const nlpl_report* report, size_t i) {
  return report && i < report->warnings.size() ? report->warnings[i].c_str() : nullptr;
}

size_t nlpl_report_file_count(const nlpl_report* report) { return report ? report->files.size() : 0; }

const char* nlpl_report_file(const nlpl_report* report, size_t i) {
  return report && i < report->files.size() ? report->files[i].c_str() : nullptr;
}

}  // extern "C"
