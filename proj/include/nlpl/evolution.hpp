#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlpl/discretize.hpp"
#include "nlpl/kernel.hpp"

namespace nlpl {

enum class Scheme { explicit_euler, heun };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

// closed: nodes interact only with other grid nodes, so discrete mass is
// conserved. absorbing: the exterior is held at zero and the flux into it is
// removed and accounted as outflow.
enum class Truncation { closed, absorbing };
std::string to_string(Truncation t);
Truncation truncation_from_string(const std::string& s);

struct SolverConfig {
  double p = 2.0;
  std::optional<double> dt;  // nullopt = automatic (p >= 2 only)
  std::optional<double> dt_max;  // cap on the automatic step
  double T = 1.0;
  Scheme scheme = Scheme::explicit_euler;
  Truncation truncation = Truncation::closed;
  double safety = 0.5;
  double boundary_mass_threshold = 1e-6;  // relative to the initial L1 norm
  int record_every = 1;
  int snapshot_every = 0;  // 0 = no snapshots
  int max_halvings = 10;
  double flux_floor = 1e-12;
};

struct Trajectory {
  double r = 2.0;
  std::vector<double> times;
  std::vector<double> l1, l2, lr, linf;
  std::vector<double> mass;           // sum u_i h^d
  std::vector<double> outflow;        // cumulative mass removed through the exterior
  std::vector<double> boundary_mass;  // L1 mass on nodes that reach the exterior
  std::vector<Field> snapshots;
  std::vector<double> snapshot_times;
  std::vector<std::string> warnings;
  long long steps = 0;
  int halvings = 0;

  std::size_t size() const { return times.size(); }
  /// Norm column for r in {1, 2, inf, this->r}.
  const std::vector<double>& norm_column(double r) const;
};

/// rhs_i = sum_j h^d K(x_i,x_j) |u_j - u_i|^{p-2} (u_j - u_i), plus the
/// exterior term -m_i |u_i|^{p-2} u_i for absorbing truncation.
Field nonlocal_rhs(const Field& field, const KernelSpec& spec, double p, Truncation truncation = Truncation::closed);
void nonlocal_rhs(std::span<const double> u, const InteractionTable& table, double p, Truncation truncation,
                  std::span<double> out);

/// safety / max_i sum_j h^d K(x_i,x_j) (p-1) M_ij^{p-2}, M_ij = max(|u_i|, |u_j|, floor).
double stability_dt(const Field& field, const KernelSpec& spec, double p, double safety,
                    Truncation truncation = Truncation::closed, double floor = 1e-12);
double stability_dt(std::span<const double> u, const InteractionTable& table, double p, double safety,
                    Truncation truncation, double floor);

/// Explicit integration to cfg.T with per-step invariant checks.
Trajectory evolve(const Field& u0, const KernelSpec& spec, const SolverConfig& cfg, double r = 2.0);
Trajectory evolve(const Field& u0, const InteractionTable& table, const SolverConfig& cfg, double r = 2.0);

enum class DecayRegime { polynomial, exponential };
std::string to_string(DecayRegime r);

struct DecayLaw {
  DecayRegime regime = DecayRegime::polynomial;
  double value = 0.0;     // slope of log|u| vs log t, or the rate gamma in e^{-gamma t}
  double constant = 0.0;  // C in C t^slope or C e^{-gamma t}
  std::pair<double, double> window{0.0, 0.0};
  double residual = 0.0;  // RMS misfit of the log norms
  int samples = 0;
};

/// Default window: the last half of the run in log time, [sqrt(t_first * T), T].
std::pair<double, double> default_fit_window(const Trajectory& traj);

DecayLaw fit_decay(const Trajectory& traj, double r, DecayRegime regime,
                   std::optional<std::pair<double, double>> window = std::nullopt);
DecayLaw fit_decay(std::span<const double> times, std::span<const double> norms, DecayRegime regime,
                   std::pair<double, double> window);

/// sup over the window of ||u||_r t^{(r-1)/(p-2)} (p > 2).
double decay_bound_sup(const Trajectory& traj, double r, double p, std::pair<double, double> window);

}  // namespace nlpl
