#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlpl/discretize.hpp"
#include "nlpl/kernel.hpp"

namespace nlpl {

enum class EigenMethod { closed_form, p2_eigensolve, descent };
std::string to_string(EigenMethod m);

struct EigenEstimate {
  double value = 0.0;
  double p = 2.0;
  double domain_radius = std::numeric_limits<double>::infinity();
  double spacing = 0.0;
  EigenMethod method = EigenMethod::closed_form;
  int iterations = 0;
  double residual = 0.0;
  bool converged = true;
};

struct ThetaConstant {
  double eta;
  double p;
  double theta;
};

/// 2 (int psi) | |det A|^{-1/p} - 1 |^p.
EigenEstimate lambda_closed_form(double p, const LinearMapSpec& map, const PsiProfile& psi);

/// Best constant in |a - b|^p >= eta |a|^p + theta |b|^p.
ThetaConstant theta_constant(double eta, double p);

double rayleigh_quotient(const Field& field, const KernelSpec& spec, double p,
                         const QuadratureBackend& backend = GridQuadrature{});
double rayleigh_quotient(std::span<const double> values, const InteractionTable& table, double p);

/// Starting profile on the unit ball; the solver evaluates it at x / R.
using WarmStart = std::function<double(std::span<const double>)>;

enum class SolverChoice { automatic, eigensolve, descent };

struct MinimizeOptions {
  int restarts = 2;
  int max_iters = 20000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  SolverChoice solver = SolverChoice::automatic;
  std::vector<WarmStart> warm_starts;
};

struct BallMinimum {
  EigenEstimate estimate;
  std::shared_ptr<Field> minimizer;
};

/// Smallest discrete Rayleigh quotient over fields supported on the lattice
/// ball of radius R. `previous` (a field on a smaller nested ball grid) is
/// zero-extended and used as an extra start.
BallMinimum minimize_on_ball(const KernelSpec& spec, double p, double R, double h, const MinimizeOptions& opts,
                             const Field* previous = nullptr);
EigenEstimate minimize_rayleigh_on_ball(const KernelSpec& spec, double p, double R, double h,
                                        const MinimizeOptions& opts);

/// Minimization on strictly increasing nested radii; each radius warm-starts
/// from the previous minimizer.
std::vector<EigenEstimate> expanding_domain_sweep(const KernelSpec& spec, double p, const std::vector<double>& radii,
                                                  double h, const MinimizeOptions& opts);

/// 2 |lambda_h - lambda_{h/2}| on the ball of radius R.
double quadrature_tolerance(const KernelSpec& spec, double p, double R, double h, const MinimizeOptions& opts);

/// Largest jump across K-connected pairs relative to the max norm.
/// Default: pairs with at least one point in the support, zero-extended.
/// literal_support: both points in the support.
double q_infinity(const Field& field, const KernelSpec& spec, bool literal_support = false);
double q_infinity(std::span<const double> values, const InteractionTable& table, bool literal_support = false);

struct StaircasePlan {
  double epsilon;
  int levels;                  // floor(1/eps) + 1
  std::vector<double> radii;   // R^0 .. R^{levels-1}
  std::vector<double> values;  // per level
  double required_half_width() const { return radii.back(); }
};

StaircasePlan staircase_plan(const LinearMapSpec& map, double epsilon);
Field staircase_witness(const KernelSpec& spec, double epsilon, std::shared_ptr<const Grid> grid);

struct PinfRow {
  double p;
  double lambda;
  double lambda_root;
};

std::vector<PinfRow> pinf_limit_table(const LinearMapSpec& map, const PsiProfile& psi, const std::vector<double>& p_list);

}  // namespace nlpl
