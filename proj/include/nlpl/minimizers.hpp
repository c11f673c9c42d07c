#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlpl/common.hpp"
#include "nlpl/kernel.hpp"

namespace nlpl {

enum class FamilyKind { expansive, contractive, shear_real, shear_complex };
std::string to_string(FamilyKind k);

inline constexpr int kDefaultMembershipBudget = 200;

/// Disjoint sets generated by a block map.
///
/// expansive / contractive: level(x) = max{m >= 0 : f^m x in B}, where f = a
/// (expansive) or f = a^-1 (contractive) and B is the origin ball of radius
/// base_radius. Members are E_l = f^-l(F) \ f^-(l+1)(F), F = union f^-j(B).
///
/// shear: members S_j = 2^-n a^j(B_rho(c)), j = 0..n.
class SetFamily {
 public:
  static SetFamily expansive(const Eigen::MatrixXd& a, std::optional<double> base_radius = std::nullopt,
                             int budget = kDefaultMembershipBudget);
  static SetFamily contractive(const Eigen::MatrixXd& a, std::optional<double> base_radius = std::nullopt,
                               int budget = kDefaultMembershipBudget);
  static SetFamily shear(const JordanBlockSpec& block, int n);

  FamilyKind kind() const { return kind_; }
  int dimension() const { return static_cast<int>(a_.rows()); }
  const Eigen::MatrixXd& map() const { return a_; }
  const Eigen::MatrixXd& forward() const { return f_; }
  const Eigen::MatrixXd& forward_inverse() const { return f_inv_; }
  double base_radius() const { return rho_; }
  const std::vector<double>& base_center() const { return center_; }
  int budget() const { return budget_; }
  SetFamily with_budget(int budget) const;

  /// max(1, sup_j ||f^-j||); no orbit point beyond escape_radius() returns to B.
  double backward_sup() const { return backward_sup_; }
  double escape_radius() const { return rho_ * backward_sup_; }

  // shear only
  int n() const { return n_; }
  double separation_radius() const { return separation_; }
  /// Bounding-ball radius of the union of all members.
  double support_radius() const { return support_radius_; }

  /// Level of x, or nullopt when x is in no member. Throws NumericFailure when
  /// an expansive/contractive orbit does not escape within the budget.
  std::optional<int> level(std::span<const double> x) const;
  /// Level of f^-depth y, evaluated without forming f^-depth y.
  std::optional<int> level_at_depth(std::span<const double> y, int depth) const;
  /// Shear: number of members S_j, j in [first, last], containing x.
  int shear_count(std::span<const double> x, int first, int last) const;
  /// Shear: x = 2^-n a^j (c + rho u).
  void shear_point(int j, std::span<const double> u, std::span<double> out) const;

 private:
  static SetFamily make_level(FamilyKind kind, const Eigen::MatrixXd& a, const Eigen::MatrixXd& f,
                              std::optional<double> base_radius, int budget);

  FamilyKind kind_ = FamilyKind::expansive;
  Eigen::MatrixXd a_, f_, f_inv_;
  std::vector<double> f_rm_, f_inv_rm_;
  double rho_ = 1.0;
  std::vector<double> center_;
  double backward_sup_ = 1.0;
  int budget_ = kDefaultMembershipBudget;
  int n_ = 0;
  double separation_ = 0.0;
  double support_radius_ = 1.0;
  std::vector<std::vector<double>> powers_;      // a^j, row-major
  std::vector<std::vector<double>> inv_powers_;  // a^-j, row-major
};

std::optional<int> membership(const SetFamily& family, std::span<const double> x);

/// max(1, sup_{j >= 0} ||M^j||) for a matrix with spectral radius < 1.
double power_norm_sup(const Eigen::MatrixXd& M);

/// The point f^-depth y of a level family (depth 0 for other families).
/// Deep levels stay representable where f^-depth y would underflow.
struct BlockPoint {
  int depth = 0;
  std::vector<double> y;
};

struct DisplacementEntry {
  double value;          // normalized phi(z) on the piece, up to a common factor
  double shifted_value;  // phi(a z) on the same piece
  double mass;           // piece measure times the factor^p
};

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

enum class Construction { automatic, shear };

struct BuildOptions {
  int budget = kDefaultMembershipBudget;
  std::uint64_t seed = 0;
  std::uint64_t measure_samples = 200'000;
  Construction construction = Construction::automatic;
};

/// Piecewise-constant minimizing-sequence element for one Jordan block.
class PiecewiseConstFn {
 public:
  BlockClass block_class() const { return cls_; }
  const JordanBlockSpec& block() const { return block_; }
  const Eigen::MatrixXd& map() const { return a_; }
  int dimension() const { return static_cast<int>(a_.rows()); }
  double p() const { return p_; }
  int n() const { return n_; }
  const std::optional<SetFamily>& family() const { return family_; }

  /// sigma_n, gamma_n, or 1.
  double coefficient() const { return coef_; }
  /// |E_0|, |G_0|, |2^-n E_0| or |B_1|.
  double base_measure() const { return base_measure_; }
  bool base_measure_estimated() const { return base_measure_estimated_; }
  double norm_p() const { return std::exp(log_norm_p_); }
  double log_norm_p() const { return log_norm_p_; }

  /// Unnormalized value; log_value returns -inf where the function vanishes.
  double value(std::span<const double> z) const;
  double log_value(std::span<const double> z) const;
  double log_value(const BlockPoint& z) const;
  /// The point a z.
  BlockPoint shifted(const BlockPoint& z) const;

  /// Pieces with (value, shifted value) != (0, 0); the normalized displacement
  /// is sum mass |shifted - value|^p.
  std::vector<DisplacementEntry> displacement_entries() const;
  /// int |phi(z) - phi(a z)|^p / ||phi||^p in closed form.
  double closed_form_quotient() const;

  /// Importance sampler covering supp(phi) and a^-1 supp(phi).
  void sample(CounterRng& rng, BlockPoint& z) const;
  double log_density(const BlockPoint& z) const;

  MonteCarloEstimate monte_carlo_norm_p(std::uint64_t samples, std::uint64_t seed) const;
  /// Unnormalized int |phi(z) - phi(a z)|^p.
  MonteCarloEstimate monte_carlo_displacement(std::uint64_t samples, std::uint64_t seed) const;

  PiecewiseConstFn with_budget(int budget) const;

 private:
  friend PiecewiseConstFn build_expansive(const JordanBlockSpec&, double, int, const BuildOptions&);
  friend PiecewiseConstFn build_contractive(const JordanBlockSpec&, double, int, const BuildOptions&);
  friend PiecewiseConstFn build_unitary_diag(const JordanBlockSpec&, double);
  friend PiecewiseConstFn build_shear(const JordanBlockSpec&, int, double);

  BlockClass cls_ = BlockClass::unitary_diagonalizable;
  JordanBlockSpec block_;
  Eigen::MatrixXd a_;
  std::vector<double> a_rm_;
  double p_ = 2.0;
  int n_ = 1;
  std::optional<SetFamily> family_;
  double coef_ = 1.0;
  double base_measure_ = 0.0;
  bool base_measure_estimated_ = false;
  double log_norm_p_ = 0.0;
  double rho_sample_ = 0.0;  // geometric ratio of the level sampler
};

PiecewiseConstFn build_expansive(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts = {});
PiecewiseConstFn build_contractive(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts = {});
PiecewiseConstFn build_unitary_diag(const JordanBlockSpec& block, double p = 2.0);
PiecewiseConstFn build_shear(const JordanBlockSpec& block, int n, double p = 2.0);
/// Dispatch on the block class; Construction::shear forces the shear
/// construction for unitary blocks.
PiecewiseConstFn build_block_function(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts = {});

/// Phi(x) = c Psi(s C^-1 x) with Psi the product of the block functions,
/// s = sqrt(#blocks) ||C|| and c = (s^d / |det C|)^{1/p}: supported in B_1
/// with unit p-norm.
class TensorMinimizer {
 public:
  TensorMinimizer(std::vector<PiecewiseConstFn> blocks, const Eigen::MatrixXd& C, int n, double p);

  int dimension() const { return d_; }
  int n() const { return n_; }
  double p() const { return p_; }
  double scale() const { return s_; }
  double normalization() const { return std::exp(log_c_); }
  const std::vector<PiecewiseConstFn>& blocks() const { return blocks_; }
  const Eigen::MatrixXd& map() const { return A_; }

  double value(std::span<const double> x) const;
  double log_value(std::span<const double> x) const;

  /// int |Phi(x) - Phi(A x)|^p from the block displacement entries.
  double closed_form_displacement() const;
  /// Sampled in block coordinates y = s C^-1 x, where the integral equals
  /// int |Psi(y) - Psi(J y)|^p dy.
  MonteCarloEstimate monte_carlo_displacement(std::uint64_t samples, std::uint64_t seed) const;
  MonteCarloEstimate monte_carlo_norm_p(std::uint64_t samples, std::uint64_t seed) const;

 private:
  double log_psi(std::span<const double> y) const;

  std::vector<PiecewiseConstFn> blocks_;
  std::vector<int> offsets_;
  Eigen::MatrixXd C_, C_inv_, A_;
  std::vector<double> C_inv_rm_;
  int d_ = 0;
  int n_ = 1;
  double p_ = 2.0;
  double s_ = 1.0;
  double log_c_ = 0.0;
  double log_abs_det_c_ = 0.0;
};

TensorMinimizer tensor_assemble(std::vector<PiecewiseConstFn> blocks, const Eigen::MatrixXd& C, int n, double p);

/// Tensor minimizer built from the block structure of the map.
TensorMinimizer minimizer_for_map(const LinearMapSpec& map, double p, int n, const BuildOptions& opts = {});

enum class MinimizerKind { expansive, contractive, shear };

/// Displacement-over-norm quotient R(n) of a single block construction.
double rayleigh_closed_form(MinimizerKind kind, const LinearMapSpec& map, double p, int n);

struct ConvergenceRow {
  int n;
  double quotient_closed;
  double quotient_mc;
  double mc_stderr;
  double upper_bound;
};

struct VerifyOptions {
  std::uint64_t mc_samples = 1'000'000;
  std::uint64_t seed = 0;
  int budget = 4000;
  Construction construction = Construction::automatic;
};

/// Closed-form and sampled displacement quotients with the implied bound
/// 2 (int psi) quotient on lambda_{1,p}.
std::vector<ConvergenceRow> verify_upper_bound(const KernelSpec& spec, double p, const std::vector<int>& n_list,
                                               const VerifyOptions& opts = {});

/// log|e^a - e^b|^p for log-magnitudes a, b (either may be -inf).
double log_abs_diff_pow(double log_a, double log_b, double p);

}  // namespace nlpl
