#include "nlpl/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nlpl/common.hpp"

namespace nlpl {

std::string to_string(PsiShape s) {
  switch (s) {
    case PsiShape::box: return "box";
    case PsiShape::cone: return "cone";
    case PsiShape::smooth_bump: return "smooth_bump";
  }
  return "?";
}

PsiShape psi_shape_from_string(const std::string& s) {
  if (s == "box") return PsiShape::box;
  if (s == "cone") return PsiShape::cone;
  if (s == "smooth_bump" || s == "smooth-bump" || s == "bump") return PsiShape::smooth_bump;
  throw InvalidInput("unknown psi shape '" + s + "'");
}

PsiProfile::PsiProfile(PsiShape s, double amp, int d) : shape(s), amplitude(amp), dimension(d) {
  if (d < 1) throw InvalidInput("psi dimension must be positive");
  if (!std::isfinite(amp) || amp <= 0.0)
    throw InvalidInput("psi amplitude must be positive (integral of psi must be > 0)");
}

double psi_eval(const PsiProfile& profile, std::span<const double> z) {
  if (static_cast<int>(z.size()) != profile.dimension)
    throw InvalidInput("psi_eval: point dimension does not match profile");
  double r2 = 0.0;
  for (double v : z) r2 += v * v;
  return profile.at_r2(r2);
}

double psi_integral(const PsiProfile& profile) {
  const double d = profile.dimension;
  const double ball = unit_ball_volume(profile.dimension);
  switch (profile.shape) {
    case PsiShape::box: return profile.amplitude * ball;
    case PsiShape::cone: return profile.amplitude * ball / (d + 1.0);
    case PsiShape::smooth_bump: return profile.amplitude * ball * 8.0 / ((d + 2.0) * (d + 4.0));
  }
  return 0.0;
}

std::string to_string(BlockClass c) {
  switch (c) {
    case BlockClass::expansive: return "expansive";
    case BlockClass::contractive: return "contractive";
    case BlockClass::unitary_diagonalizable: return "unitary_diagonalizable";
    case BlockClass::unitary_shear_real: return "unitary_shear_real";
    case BlockClass::unitary_shear_complex: return "unitary_shear_complex";
  }
  return "?";
}

JordanBlockSpec JordanBlockSpec::real(double lambda, int size) {
  JordanBlockSpec b;
  b.kind = BlockKind::real;
  b.lambda = lambda;
  b.size = size;
  b.validate();
  return b;
}

JordanBlockSpec JordanBlockSpec::complex(double alpha, double beta, int size) {
  JordanBlockSpec b;
  b.kind = BlockKind::complex;
  b.alpha = alpha;
  b.beta = beta;
  b.size = size;
  b.validate();
  return b;
}

void JordanBlockSpec::validate() const {
  if (size < 1) throw InvalidInput("Jordan block size must be positive");
  if (kind == BlockKind::real) {
    if (!std::isfinite(lambda) || lambda == 0.0) throw InvalidInput("real Jordan block needs lambda != 0");
  } else {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InvalidInput("complex Jordan block entries must be finite");
    if (alpha * alpha + beta * beta == 0.0) throw InvalidInput("complex Jordan block needs alpha^2 + beta^2 != 0");
    if (beta == 0.0) throw InvalidInput("complex Jordan block needs beta != 0 (use real blocks otherwise)");
    if (size % 2 != 0) throw InvalidInput("complex Jordan block size must be even");
  }
}

double JordanBlockSpec::modulus() const {
  return kind == BlockKind::real ? std::abs(lambda) : std::hypot(alpha, beta);
}

BlockClass JordanBlockSpec::classification() const {
  const double m = modulus();
  if (m > 1.0 + 1e-12) return BlockClass::expansive;
  if (m < 1.0 - 1e-12) return BlockClass::contractive;
  if (kind == BlockKind::real) return size == 1 ? BlockClass::unitary_diagonalizable : BlockClass::unitary_shear_real;
  return size == 2 ? BlockClass::unitary_diagonalizable : BlockClass::unitary_shear_complex;
}

Eigen::MatrixXd JordanBlockSpec::matrix() const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(size, size);
  if (kind == BlockKind::real) {
    for (int i = 0; i < size; ++i) {
      J(i, i) = lambda;
      if (i + 1 < size) J(i, i + 1) = 1.0;
    }
  } else {
    for (int b = 0; b < size / 2; ++b) {
      const int o = 2 * b;
      J(o, o) = alpha;
      J(o, o + 1) = beta;
      J(o + 1, o) = -beta;
      J(o + 1, o + 1) = alpha;
      if (o + 2 < size) {
        J(o, o + 2) = 1.0;
        J(o + 1, o + 3) = 1.0;
      }
    }
  }
  return J;
}

Eigen::MatrixXd assemble_jordan(const std::vector<JordanBlockSpec>& blocks) {
  int d = 0;
  for (const auto& b : blocks) d += b.size;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
  int o = 0;
  for (const auto& b : blocks) {
    J.block(o, o, b.size, b.size) = b.matrix();
    o += b.size;
  }
  return J;
}

namespace {

double spectral_norm(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

std::vector<double> row_major(const Eigen::MatrixXd& M) {
  std::vector<double> out(static_cast<std::size_t>(M.size()));
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) out[static_cast<std::size_t>(r * M.cols() + c)] = M(r, c);
  return out;
}

}  // namespace

LinearMapSpec::LinearMapSpec(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  finish();
  // A diagonal matrix is its own real Jordan form.
  if (matrix_.isDiagonal(0.0)) {
    for (Eigen::Index i = 0; i < matrix_.rows(); ++i) blocks_.push_back(JordanBlockSpec::real(matrix_(i, i), 1));
    conjugation_ = Eigen::MatrixXd::Identity(matrix_.rows(), matrix_.cols());
    blocks_inferred_ = true;
  }
}

LinearMapSpec::LinearMapSpec(Eigen::MatrixXd matrix, std::vector<JordanBlockSpec> blocks,
                             Eigen::MatrixXd conjugation)
    : matrix_(std::move(matrix)), blocks_(std::move(blocks)), conjugation_(std::move(conjugation)) {
  finish();
  if (blocks_.empty()) throw InvalidInput("block list is empty");
  for (const auto& b : blocks_) b.validate();
  const Eigen::MatrixXd J = assemble_jordan(blocks_);
  if (J.rows() != matrix_.rows())
    throw InvalidInput("Jordan block sizes sum to " + std::to_string(J.rows()) + ", map dimension is " +
                       std::to_string(matrix_.rows()));
  if (conjugation_.rows() != matrix_.rows() || conjugation_.cols() != matrix_.cols())
    throw InvalidInput("conjugation matrix has the wrong shape");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(conjugation_);
  if (!lu.isInvertible()) throw InvalidInput("conjugation matrix is singular");
  const Eigen::MatrixXd rebuilt = conjugation_ * J * lu.inverse();
  const double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
  if ((rebuilt - matrix_).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidInput("C J C^-1 does not reproduce the matrix to 1e-10");
}

LinearMapSpec LinearMapSpec::from_blocks(std::vector<JordanBlockSpec> blocks,
                                         std::optional<Eigen::MatrixXd> conjugation) {
  for (const auto& b : blocks) b.validate();
  const Eigen::MatrixXd J = assemble_jordan(blocks);
  Eigen::MatrixXd C = conjugation.value_or(Eigen::MatrixXd::Identity(J.rows(), J.cols()));
  if (C.rows() != J.rows() || C.cols() != J.cols()) throw InvalidInput("conjugation matrix has the wrong shape");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  if (!lu.isInvertible()) throw InvalidInput("conjugation matrix is singular");
  Eigen::MatrixXd A = C * J * lu.inverse();
  return LinearMapSpec(std::move(A), std::move(blocks), std::move(C));
}

void LinearMapSpec::finish() {
  if (matrix_.rows() < 1 || matrix_.rows() != matrix_.cols()) throw InvalidInput("map matrix must be square and nonempty");
  if (!matrix_.allFinite()) throw InvalidInput("map matrix has non-finite entries");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(matrix_);
  det_ = lu.determinant();
  if (!std::isfinite(det_) || det_ == 0.0 || !lu.isInvertible())
    throw InvalidInput("map matrix is singular (|det A| must be > 0)");
  inverse_ = lu.inverse();
  op_norm_ = spectral_norm(matrix_);
  inv_op_norm_ = spectral_norm(inverse_);
  const Eigen::Index d = matrix_.rows();
  const double err = (inverse_ * matrix_ - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
  if (err > 1e-12 * std::max(1.0, op_norm_ * inv_op_norm_))
    throw InvalidInput("map matrix is numerically singular (inverse check failed)");
  a_row_major_ = row_major(matrix_);
  inv_row_major_ = row_major(inverse_);
}

namespace {

void matvec(const std::vector<double>& M, std::span<const double> x, std::span<double> out) {
  const std::size_t d = x.size();
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += M[r * d + c] * x[c];
    out[r] = s;
  }
}

}  // namespace

void LinearMapSpec::apply(std::span<const double> x, std::span<double> out) const { matvec(a_row_major_, x, out); }

void LinearMapSpec::apply_inverse(std::span<const double> x, std::span<double> out) const {
  matvec(inv_row_major_, x, out);
}

KernelSpec::KernelSpec(PsiProfile p, LinearMapSpec m) : psi(p), map(std::move(m)) {
  if (psi.dimension != map.dimension())
    throw InvalidInput("psi dimension " + std::to_string(psi.dimension) + " does not match map dimension " +
                       std::to_string(map.dimension()));
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> y) {
  const std::size_t d = static_cast<std::size_t>(spec.dimension());
  if (x.size() != d || y.size() != d) throw InvalidInput("kernel_eval: point dimension does not match kernel");
  double ax[16];
  double ay[16];
  std::vector<double> heap;
  double* pax = ax;
  double* pay = ay;
  if (d > 16) {
    heap.resize(2 * d);
    pax = heap.data();
    pay = heap.data() + d;
  }
  spec.map.apply(x, {pax, d});
  spec.map.apply(y, {pay, d});
  double r1 = 0.0;
  double r2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double a = y[k] - pax[k];
    const double b = x[k] - pay[k];
    r1 += a * a;
    r2 += b * b;
  }
  return spec.psi.at_r2(r1) + spec.psi.at_r2(r2);
}

std::vector<IndexPair> active_pairs(const KernelSpec& spec, const Grid& grid) {
  const int d = grid.dimension();
  if (d != spec.dimension()) throw InvalidInput("active_pairs: grid dimension does not match kernel");
  const std::size_t N = grid.size();
  const auto ud = static_cast<std::size_t>(d);

  // Cell list (unit cells) over the images A x_k.
  std::vector<double> images(N * ud);
  std::vector<std::int64_t> cells(N * ud);
  std::vector<double> x(ud);
  for (std::size_t k = 0; k < N; ++k) {
    grid.point(k, x);
    spec.map.apply(x, {images.data() + k * ud, ud});
    for (std::size_t a = 0; a < ud; ++a)
      cells[k * ud + a] = static_cast<std::int64_t>(std::floor(images[k * ud + a]));
  }
  auto key_less = [&](const std::int64_t* a, const std::int64_t* b) {
    return std::lexicographical_compare(a, a + ud, b, b + ud);
  };
  std::vector<std::uint32_t> order(N);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return key_less(cells.data() + a * ud, cells.data() + b * ud);
  });

  // Every pair (m, k) with psi(x_m - A x_k) > 0; together these cover both kernel terms.
  std::vector<IndexPair> pairs;
  std::vector<std::int64_t> probe(ud);
  std::size_t neighbours = 1;
  for (int a = 0; a < d; ++a) neighbours *= 3;
  for (std::size_t m = 0; m < N; ++m) {
    grid.point(m, x);
    for (std::size_t nb = 0; nb < neighbours; ++nb) {
      std::size_t code = nb;
      for (std::size_t a = 0; a < ud; ++a) {
        probe[a] = static_cast<std::int64_t>(std::floor(x[a])) + static_cast<std::int64_t>(code % 3) - 1;
        code /= 3;
      }
      auto lo = std::lower_bound(order.begin(), order.end(), probe.data(), [&](std::uint32_t idx, const std::int64_t* key) {
        return key_less(cells.data() + idx * ud, key);
      });
      for (auto it = lo; it != order.end() && !key_less(probe.data(), cells.data() + *it * ud); ++it) {
        const std::uint32_t k = *it;
        if (k == m) continue;
        double r2 = 0.0;
        for (std::size_t a = 0; a < ud; ++a) {
          const double z = x[a] - images[k * ud + a];
          r2 += z * z;
        }
        if (spec.psi.at_r2(r2) > 0.0) {
          const auto mm = static_cast<std::uint32_t>(m);
          pairs.push_back({std::min(mm, k), std::max(mm, k)});
        }
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

}  // namespace nlpl
