#ifndef NLPL_H
#define NLPL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(NLPL_BUILDING_LIBRARY)
#    define NLPL_API __declspec(dllexport)
#  else
#    define NLPL_API __declspec(dllimport)
#  endif
#else
#  define NLPL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nlpl_status {
  NLPL_OK = 0,
  NLPL_ERR_INVALID_ARGUMENT = 1,
  NLPL_ERR_CONFIG = 2,
  NLPL_ERR_NUMERIC = 3,
  NLPL_ERR_INTERNAL = 4
} nlpl_status;

typedef struct nlpl_kernel nlpl_kernel;
typedef struct nlpl_field nlpl_field;
typedef struct nlpl_minimizer nlpl_minimizer;
typedef struct nlpl_trajectory nlpl_trajectory;
typedef struct nlpl_report nlpl_report;

NLPL_API const char* nlpl_version(void);

/* Message of the last failed call on this thread; "" after a success. */
NLPL_API const char* nlpl_last_error(void);

NLPL_API nlpl_status nlpl_set_threads(unsigned threads);

/* Best theta in |a-b|^p >= eta|a|^p + theta|b|^p. */
NLPL_API nlpl_status nlpl_theta_constant(double eta, double p, double* theta);

/* ---- kernels ---------------------------------------------------------- */

/* {"psi": {"shape", "amplitude"}, "map": {"matrix", "blocks"?, "conjugation"?}} */
NLPL_API nlpl_status nlpl_kernel_from_json(const char* json, nlpl_kernel** out);
NLPL_API void nlpl_kernel_destroy(nlpl_kernel* kernel);
NLPL_API int nlpl_kernel_dimension(const nlpl_kernel* kernel);
NLPL_API nlpl_status nlpl_kernel_eval(const nlpl_kernel* kernel, const double* x, const double* y, double* out);
NLPL_API nlpl_status nlpl_lambda_closed_form(const nlpl_kernel* kernel, double p, double* out);

/* ---- grid fields ------------------------------------------------------ */

typedef enum nlpl_grid_shape { NLPL_GRID_BOX = 0, NLPL_GRID_BALL = 1 } nlpl_grid_shape;

/* Zero field on the lattice of spacing h inside half-width L. */
NLPL_API nlpl_status nlpl_field_create(int dimension, double half_width, double h, nlpl_grid_shape shape,
                                       nlpl_field** out);
NLPL_API void nlpl_field_destroy(nlpl_field* field);
NLPL_API size_t nlpl_field_size(const nlpl_field* field);
NLPL_API nlpl_status nlpl_field_point(const nlpl_field* field, size_t index, double* x);
/* Writable view of the values, valid until the field is destroyed. */
NLPL_API double* nlpl_field_values(nlpl_field* field);
NLPL_API nlpl_status nlpl_rayleigh_quotient(const nlpl_kernel* kernel, const nlpl_field* field, double p,
                                            double* out);

/* ---- minimizing sequences --------------------------------------------- */

NLPL_API nlpl_status nlpl_minimizer_create(const nlpl_kernel* kernel, double p, int n, uint64_t seed,
                                           nlpl_minimizer** out);
NLPL_API void nlpl_minimizer_destroy(nlpl_minimizer* m);
NLPL_API nlpl_status nlpl_minimizer_value(const nlpl_minimizer* m, const double* x, double* out);
/* int |phi(x) - phi(Ax)|^p from the exact block decomposition. */
NLPL_API nlpl_status nlpl_minimizer_displacement(const nlpl_minimizer* m, double* out);
NLPL_API nlpl_status nlpl_minimizer_displacement_mc(const nlpl_minimizer* m, uint64_t samples, uint64_t seed,
                                                    double* mean, double* standard_error);

/* ---- evolution -------------------------------------------------------- */

typedef enum nlpl_scheme { NLPL_SCHEME_EULER = 0, NLPL_SCHEME_HEUN = 1 } nlpl_scheme;
typedef enum nlpl_truncation { NLPL_TRUNC_CLOSED = 0, NLPL_TRUNC_ABSORBING = 1 } nlpl_truncation;

typedef struct nlpl_solver_options {
  double p;
  double T;
  double dt;     /* <= 0: automatic */
  double dt_max; /* <= 0: no cap */
  nlpl_scheme scheme;
  nlpl_truncation truncation;
  double safety;
  int record_every;
} nlpl_solver_options;

NLPL_API void nlpl_solver_options_init(nlpl_solver_options* opts);
NLPL_API nlpl_status nlpl_evolve(const nlpl_kernel* kernel, const nlpl_field* u0, const nlpl_solver_options* opts,
                                 double r, nlpl_trajectory** out);
NLPL_API void nlpl_trajectory_destroy(nlpl_trajectory* traj);
NLPL_API size_t nlpl_trajectory_size(const nlpl_trajectory* traj);
/* Columns: t, l1, l2, lr, linf, mass, outflow, boundary_mass. */
NLPL_API nlpl_status nlpl_trajectory_column(const nlpl_trajectory* traj, const char* name, const double** data);

typedef enum nlpl_regime { NLPL_POLYNOMIAL = 0, NLPL_EXPONENTIAL = 1 } nlpl_regime;

/* Window [t0, t1]; t0 >= t1 selects the default window. */
NLPL_API nlpl_status nlpl_fit_decay(const nlpl_trajectory* traj, double r, nlpl_regime regime, double t0, double t1,
                                    double* value, double* constant);

/* ---- experiment commands ---------------------------------------------- */

typedef struct nlpl_run_options {
  const char* out_dir; /* NULL: keep the config value */
  int has_seed;
  uint64_t seed;
  unsigned threads; /* 0: keep the config value */
} nlpl_run_options;

/* command: eigen | minimizers | evolve | pinf. */
NLPL_API nlpl_status nlpl_run(const char* command, const char* config_json, const nlpl_run_options* opts,
                              nlpl_report** out);
NLPL_API void nlpl_report_destroy(nlpl_report* report);
NLPL_API const char* nlpl_report_summary(const nlpl_report* report);
NLPL_API size_t nlpl_report_warning_count(const nlpl_report* report);
NLPL_API const char* nlpl_report_warning(const nlpl_report* report, size_t i);
NLPL_API size_t nlpl_report_file_count(const nlpl_report* report);
NLPL_API const char* nlpl_report_file(const nlpl_report* report, size_t i);

#ifdef __cplusplus
}
#endif

#endif
