#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlpl/grid.hpp"

namespace nlpl {

enum class PsiShape { box, cone, smooth_bump };

std::string to_string(PsiShape s);
PsiShape psi_shape_from_string(const std::string& s);

/// Radial profile supported on the closed unit ball:
///   box         c                 (|z| <= 1)
///   cone        c (1 - |z|)
///   smooth_bump c (1 - |z|^2)^2
struct PsiProfile {
  PsiShape shape = PsiShape::box;
  double amplitude = 1.0;
  int dimension = 1;

  PsiProfile() = default;
  PsiProfile(PsiShape s, double amp, int d);

  /// psi as a function of |z|^2.
  double at_r2(double r2) const {
    if (r2 > 1.0) return 0.0;
    switch (shape) {
      case PsiShape::box:
        return amplitude;
      case PsiShape::cone:
        return amplitude * (1.0 - std::sqrt(r2));
      case PsiShape::smooth_bump: {
        const double t = 1.0 - r2;
        return amplitude * t * t;
      }
    }
    return 0.0;
  }
};

double psi_eval(const PsiProfile& profile, std::span<const double> z);
double psi_integral(const PsiProfile& profile);

enum class BlockKind { real, complex };
enum class BlockClass {
  expansive,
  contractive,
  unitary_diagonalizable,
  unitary_shear_real,
  unitary_shear_complex
};

std::string to_string(BlockClass c);

/// One real Jordan block. `size` is the block's dimension, so a complex block
/// of size 2m carries m copies of [[alpha, beta], [-beta, alpha]].
struct JordanBlockSpec {
  BlockKind kind = BlockKind::real;
  double lambda = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  int size = 1;

  static JordanBlockSpec real(double lambda, int size = 1);
  static JordanBlockSpec complex(double alpha, double beta, int size = 2);

  void validate() const;
  double modulus() const;
  BlockClass classification() const;
  Eigen::MatrixXd matrix() const;
};

/// Invertible matrix A with cached determinant, inverse and operator norms.
class LinearMapSpec {
 public:
  explicit LinearMapSpec(Eigen::MatrixXd matrix);
  LinearMapSpec(Eigen::MatrixXd matrix, std::vector<JordanBlockSpec> blocks,
                Eigen::MatrixXd conjugation);

  /// Builds the map C J C^-1 directly from its block structure.
  static LinearMapSpec from_blocks(std::vector<JordanBlockSpec> blocks,
                                   std::optional<Eigen::MatrixXd> conjugation = std::nullopt);

  int dimension() const { return static_cast<int>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  double det() const { return det_; }
  double abs_det() const { return std::abs(det_); }
  double op_norm() const { return op_norm_; }
  double inv_op_norm() const { return inv_op_norm_; }

  /// Block structure, supplied by the caller or read off a diagonal matrix.
  bool has_blocks() const { return !blocks_.empty(); }
  const std::vector<JordanBlockSpec>& blocks() const { return blocks_; }
  const Eigen::MatrixXd& conjugation() const { return conjugation_; }
  bool blocks_inferred() const { return blocks_inferred_; }

  void apply(std::span<const double> x, std::span<double> out) const;
  void apply_inverse(std::span<const double> x, std::span<double> out) const;

 private:
  void finish();

  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd inverse_;
  double det_ = 0.0;
  double op_norm_ = 0.0;
  double inv_op_norm_ = 0.0;
  std::vector<JordanBlockSpec> blocks_;
  Eigen::MatrixXd conjugation_;
  bool blocks_inferred_ = false;
  std::vector<double> a_row_major_;
  std::vector<double> inv_row_major_;
};

Eigen::MatrixXd assemble_jordan(const std::vector<JordanBlockSpec>& blocks);

struct KernelSpec {
  PsiProfile psi;
  LinearMapSpec map;

  KernelSpec(PsiProfile psi, LinearMapSpec map);
  int dimension() const { return psi.dimension; }
};

/// K(x,y) = psi(y - Ax) + psi(x - Ay).
double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> y);

struct IndexPair {
  std::uint32_t i;
  std::uint32_t j;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

/// All grid pairs i < j with K(x_i, x_j) > 0, sorted lexicographically.
std::vector<IndexPair> active_pairs(const KernelSpec& spec, const Grid& grid);

}  // namespace nlpl
