#include "nlpl/minimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace nlpl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> row_major(const Eigen::MatrixXd& M) {
  std::vector<double> out(static_cast<std::size_t>(M.size()));
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) out[static_cast<std::size_t>(r * M.cols() + c)] = M(r, c);
  return out;
}

void matvec(const std::vector<double>& M, std::span<const double> x, std::span<double> out) {
  const std::size_t d = x.size();
  for (std::size_t r = 0; r < d; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += M[r * d + c] * x[c];
    out[r] = s;
  }
}

double op_norm(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

double spectral_radius(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_modulus(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().minCoeff();
}

double log_ball_volume(int d, double r) { return std::log(unit_ball_volume(d)) + d * std::log(r); }

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(1 - e^x) for x <= 0.
double log1mexp(double x) {
  if (x == 0.0) return kNegInf;
  return x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

double dist(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

MonteCarloEstimate to_estimate(const MomentAccumulator& acc) { return {acc.mean, acc.standard_error()}; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return CounterRng(seed, stream).next_u64(); }

}  // namespace

double log_abs_diff_pow(double log_a, double log_b, double p) {
  if (log_a == kNegInf && log_b == kNegInf) return kNegInf;
  if (log_a == kNegInf) return p * log_b;
  if (log_b == kNegInf) return p * log_a;
  const double hi = std::max(log_a, log_b);
  const double lo = std::min(log_a, log_b);
  return p * (hi + log1mexp(lo - hi));
}

std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::expansive: return "expansive";
    case FamilyKind::contractive: return "contractive";
    case FamilyKind::shear_real: return "shear_real";
    case FamilyKind::shear_complex: return "shear_complex";
  }
  return "?";
}

double power_norm_sup(const Eigen::MatrixXd& M) {
  if (!(spectral_radius(M) < 1.0)) throw InvalidInput("power_norm_sup needs spectral radius < 1");
  // Once ||M^J|| <= 1, every later power is dominated by an earlier one.
  double sup = 1.0;
  Eigen::MatrixXd P = M;
  for (int j = 1; j <= 100000; ++j) {
    const double nrm = op_norm(P);
    if (nrm <= 1.0) return sup;
    sup = std::max(sup, nrm);
    P = P * M;
  }
  throw NumericFailure("power norms did not settle below 1 within 100000 steps");
}

// ---------------------------------------------------------------------------
// SetFamily

SetFamily SetFamily::make_level(FamilyKind kind, const Eigen::MatrixXd& a, const Eigen::MatrixXd& f,
                                std::optional<double> base_radius, int budget) {
  if (budget < 1) throw InvalidInput("membership budget must be positive");
  SetFamily fam;
  fam.kind_ = kind;
  fam.a_ = a;
  fam.f_ = f;
  fam.f_inv_ = f.inverse();
  fam.f_rm_ = row_major(fam.f_);
  fam.f_inv_rm_ = row_major(fam.f_inv_);
  fam.backward_sup_ = power_norm_sup(fam.f_inv_);
  fam.rho_ = base_radius.value_or(1.0 / fam.backward_sup_);
  if (!(fam.rho_ > 0.0)) throw InvalidInput("base radius must be positive");
  if (fam.rho_ * fam.backward_sup_ > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "base radius " << fam.rho_ << " lets the family leave the unit ball; need radius <= "
        << 1.0 / fam.backward_sup_;
    throw InvalidInput(msg.str());
  }
  fam.center_.assign(static_cast<std::size_t>(a.rows()), 0.0);
  fam.budget_ = budget;
  fam.support_radius_ = fam.rho_ * fam.backward_sup_;
  return fam;
}

SetFamily SetFamily::expansive(const Eigen::MatrixXd& a, std::optional<double> base_radius, int budget) {
  if (a.rows() < 1 || a.rows() != a.cols()) throw InvalidInput("family map must be square");
  if (!(min_modulus(a) > 1.0)) throw InvalidInput("expansive family needs every eigenvalue modulus > 1");
  return make_level(FamilyKind::expansive, a, a, base_radius, budget);
}

SetFamily SetFamily::contractive(const Eigen::MatrixXd& a, std::optional<double> base_radius, int budget) {
  if (a.rows() < 1 || a.rows() != a.cols()) throw InvalidInput("family map must be square");
  if (!(spectral_radius(a) < 1.0) || min_modulus(a) == 0.0)
    throw InvalidInput("contractive family needs every eigenvalue modulus in (0, 1)");
  return make_level(FamilyKind::contractive, a, a.inverse(), base_radius, budget);
}

SetFamily SetFamily::shear(const JordanBlockSpec& block, int n) {
  block.validate();
  if (n < 1) throw InvalidInput("shear construction needs n >= 1");
  if (std::abs(block.modulus() - 1.0) > 1e-12) throw InvalidInput("shear construction needs a unit-modulus block");
  const int k = block.size;
  SetFamily fam;
  fam.a_ = block.matrix();
  fam.f_ = fam.a_;
  fam.f_inv_ = fam.a_.inverse();
  fam.n_ = n;
  fam.budget_ = n + 1;
  fam.center_.assign(static_cast<std::size_t>(k), 0.0);

  std::vector<Eigen::MatrixXd> pw(static_cast<std::size_t>(n) + 1);
  pw[0] = Eigen::MatrixXd::Identity(k, k);
  for (int j = 1; j <= n; ++j) pw[static_cast<std::size_t>(j)] = fam.a_ * pw[static_cast<std::size_t>(j) - 1];
  Eigen::VectorXd center = Eigen::VectorXd::Zero(k);

  if (block.kind == BlockKind::real) {
    if (k < 2) throw InvalidInput("real shear construction needs a block of dimension >= 2");
    fam.kind_ = FamilyKind::shear_real;
    center(0) = center(1) = 0.125;
    fam.rho_ = 1.0 / 32.0;
    fam.separation_ = 0.25;
  } else {
    if (k < 4)
      throw InvalidInput("complex shear construction needs d >= 4 (at least two rotation blocks in the chain); "
                         "a lone 2-dimensional complex block has no shear construction");
    fam.kind_ = FamilyKind::shear_complex;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(k);
    q.head(4).setOnes();
    std::vector<double> gap(static_cast<std::size_t>(n)), spread(static_cast<std::size_t>(n));
    for (int m = 1; m <= n; ++m) {
      gap[static_cast<std::size_t>(m) - 1] = (pw[static_cast<std::size_t>(m)] * q - q).norm();
      spread[static_cast<std::size_t>(m) - 1] = 1.0 + op_norm(pw[static_cast<std::size_t>(m)]);
    }
    auto separated = [&](double r) {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < gap.size(); ++i) worst = std::min(worst, gap[i] - r * spread[i]);
      return worst > 0.0;
    };
    double lo = 0.0, hi = 1.0;
    if (separated(hi)) {
      lo = hi;
    } else {
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (separated(mid) ? lo : hi) = mid;
      }
    }
    const double r = 0.5 * lo;
    if (!(r > 1e-12)) {
      std::ostringstream msg;
      msg << "complex shear orbit points could not be separated for n = " << n;
      throw InvalidInput(msg.str());
    }
    fam.separation_ = r;
    center = q / 16.0;
    fam.rho_ = r / 16.0;
  }
  for (int i = 0; i < k; ++i) fam.center_[static_cast<std::size_t>(i)] = center(i);

  double support = 0.0;
  const double scale = std::ldexp(1.0, -n);
  for (int j = 0; j <= n; ++j) {
    const auto& P = pw[static_cast<std::size_t>(j)];
    support = std::max(support, scale * ((P * center).norm() + op_norm(P) * fam.rho_));
  }
  if (!(support < 1.0)) {
    std::ostringstream msg;
    msg << "shear sets leave the unit ball (radius " << support << ") for n = " << n;
    throw InvalidInput(msg.str());
  }
  fam.support_radius_ = support;

  fam.powers_.reserve(pw.size());
  fam.inv_powers_.reserve(pw.size());
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(k, k);
  for (int j = 0; j <= n; ++j) {
    fam.powers_.push_back(row_major(pw[static_cast<std::size_t>(j)]));
    fam.inv_powers_.push_back(row_major(inv));
    inv = fam.f_inv_ * inv;
  }
  fam.backward_sup_ = 1.0;
  return fam;
}

SetFamily SetFamily::with_budget(int budget) const {
  if (budget < 1) throw InvalidInput("membership budget must be positive");
  SetFamily out = *this;
  if (kind_ == FamilyKind::expansive || kind_ == FamilyKind::contractive) out.budget_ = budget;
  return out;
}

std::optional<int> SetFamily::level(std::span<const double> x) const {
  if (kind_ == FamilyKind::shear_real || kind_ == FamilyKind::shear_complex) {
    for (int j = 0; j <= n_; ++j)
      if (shear_count(x, j, j) > 0) return j;
    return std::nullopt;
  }
  return level_at_depth(x, 0);
}

std::optional<int> SetFamily::level_at_depth(std::span<const double> y, int depth) const {
  if (kind_ != FamilyKind::expansive && kind_ != FamilyKind::contractive)
    throw InvalidInput("level_at_depth applies to expansive and contractive families");
  const auto d = static_cast<std::size_t>(dimension());
  if (y.size() != d) throw InvalidInput("point dimension does not match the family");
  if (norm2(y) == 0.0) return std::nullopt;

  const double escape = escape_radius();
  std::vector<double> z(y.begin(), y.end()), next(d);
  std::optional<int> best;
  for (int m = 0;; ++m) {
    const double r = norm2(z);
    if (r < rho_) best = m;
    if (r > escape) break;
    if (m >= budget_) {
      std::ostringstream msg;
      msg << "membership orbit did not escape within " << budget_ << " iterations";
      throw NumericFailure(msg.str());
    }
    matvec(f_rm_, z, next);
    z.swap(next);
  }
  if (best) {
    if (depth + *best >= 0) return depth + *best;
    return std::nullopt;
  }
  // No forward image enters B; look for the largest backward image inside B.
  z.assign(y.begin(), y.end());
  for (int m = -1; m >= -depth; --m) {
    matvec(f_inv_rm_, z, next);
    z.swap(next);
    if (norm2(z) < rho_) return depth + m;
  }
  return std::nullopt;
}

int SetFamily::shear_count(std::span<const double> x, int first, int last) const {
  if (kind_ != FamilyKind::shear_real && kind_ != FamilyKind::shear_complex)
    throw InvalidInput("shear_count applies to shear families");
  const auto d = static_cast<std::size_t>(dimension());
  if (x.size() != d) throw InvalidInput("point dimension does not match the family");
  first = std::max(first, 0);
  last = std::min(last, n_);
  std::vector<double> y(d), z(d);
  for (std::size_t i = 0; i < d; ++i) y[i] = std::ldexp(x[i], n_);
  int count = 0;
  for (int j = first; j <= last; ++j) {
    matvec(inv_powers_[static_cast<std::size_t>(j)], y, z);
    if (dist(z, center_) <= rho_) ++count;
  }
  return count;
}

void SetFamily::shear_point(int j, std::span<const double> u, std::span<double> out) const {
  if (kind_ != FamilyKind::shear_real && kind_ != FamilyKind::shear_complex)
    throw InvalidInput("shear_point applies to shear families");
  if (j < 0 || j > n_) throw InvalidInput("shear member index out of range");
  const auto d = static_cast<std::size_t>(dimension());
  std::vector<double> w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = center_[i] + rho_ * u[i];
  matvec(powers_[static_cast<std::size_t>(j)], w, out);
  for (std::size_t i = 0; i < d; ++i) out[i] = std::ldexp(out[i], -n_);
}

std::optional<int> membership(const SetFamily& family, std::span<const double> x) { return family.level(x); }

// ---------------------------------------------------------------------------
// PiecewiseConstFn

namespace {

bool is_level(const std::optional<SetFamily>& fam) {
  return fam && (fam->kind() == FamilyKind::expansive || fam->kind() == FamilyKind::contractive);
}

// |F| for F = union f^-j(B): exact when f^-1 maps B into itself, sampled otherwise.
double union_measure(const SetFamily& fam, const BuildOptions& opts, bool& estimated) {
  const int d = fam.dimension();
  if (op_norm(fam.forward_inverse()) <= 1.0) {
    estimated = false;
    return std::exp(log_ball_volume(d, fam.base_radius()));
  }
  estimated = true;
  const double outer = fam.escape_radius();
  const auto f_rm = row_major(fam.forward());
  const double rho = fam.base_radius();
  const int budget = fam.budget();
  const auto acc = sharded_monte_carlo(opts.measure_samples, opts.seed, [&](CounterRng& rng) {
    std::vector<double> z(static_cast<std::size_t>(d)), next(z.size());
    rng.unit_ball(z);
    for (double& v : z) v *= outer;
    for (int m = 0; m <= budget; ++m) {
      const double r = norm2(z);
      if (r < rho) return 1.0;
      if (r > outer) return 0.0;
      matvec(f_rm, z, next);
      z.swap(next);
    }
    throw NumericFailure("membership orbit did not escape while measuring the generating set");
  });
  return acc.mean * std::exp(log_ball_volume(d, outer));
}

}  // namespace

double PiecewiseConstFn::log_value(const BlockPoint& z) const {
  switch (cls_) {
    case BlockClass::expansive:
    case BlockClass::contractive: {
      const auto lvl = family_->level_at_depth(z.y, z.depth);
      if (!lvl) return kNegInf;
      return *lvl * std::log(coef_);
    }
    case BlockClass::unitary_shear_real:
    case BlockClass::unitary_shear_complex: {
      const int c = family_->shear_count(z.y, 1, n_);
      return c > 0 ? std::log(static_cast<double>(c)) : kNegInf;
    }
    case BlockClass::unitary_diagonalizable:
      if (family_) {
        const int c = family_->shear_count(z.y, 1, n_);
        return c > 0 ? std::log(static_cast<double>(c)) : kNegInf;
      }
      return norm2(z.y) <= 1.0 ? 0.0 : kNegInf;
  }
  return kNegInf;
}

double PiecewiseConstFn::log_value(std::span<const double> z) const {
  if (z.size() != static_cast<std::size_t>(dimension())) throw InvalidInput("point dimension does not match the block");
  return log_value(BlockPoint{0, std::vector<double>(z.begin(), z.end())});
}

double PiecewiseConstFn::value(std::span<const double> z) const { return std::exp(log_value(z)); }

BlockPoint PiecewiseConstFn::shifted(const BlockPoint& z) const {
  BlockPoint out{z.depth, std::vector<double>(z.y.size())};
  matvec(a_rm_, z.y, out.y);
  return out;
}

std::vector<DisplacementEntry> PiecewiseConstFn::displacement_entries() const {
  if (is_level(family_)) {
    const double rho = rho_sample_;
    if (family_->kind() == FamilyKind::expansive) return {{1.0, 0.0, 1.0 - rho}, {1.0, 1.0 / coef_, rho}};
    const double D = std::abs(a_.determinant());
    return {{1.0, coef_, 1.0}, {0.0, 1.0, (1.0 - std::pow(coef_, p_) * D) / D}};
  }
  if (family_) {
    const double n = n_;
    std::vector<DisplacementEntry> out{{0.0, 1.0, 1.0 / n}, {1.0, 0.0, 1.0 / n}};
    if (n_ > 1) out.push_back({1.0, 1.0, (n - 1.0) / n});
    return out;
  }
  return {{1.0, 1.0, 1.0}};
}

double PiecewiseConstFn::closed_form_quotient() const {
  double s = 0.0;
  for (const auto& e : displacement_entries()) s += e.mass * std::pow(std::abs(e.shifted_value - e.value), p_);
  return s;
}

void PiecewiseConstFn::sample(CounterRng& rng, BlockPoint& z) const {
  const auto d = static_cast<std::size_t>(dimension());
  z.y.resize(d);
  if (is_level(family_)) {
    // P(depth = k) = (1 - rho) rho^(k+1), k >= -1.
    const double u = rng.uniform_open();
    const double k = std::floor(std::log(u) / std::log(rho_sample_));
    z.depth = static_cast<int>(std::min(k, 1e9)) - 1;
    rng.unit_ball(z.y);
    return;
  }
  z.depth = 0;
  if (family_) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_ + 1));
    std::vector<double> u(d);
    rng.unit_ball(u);
    family_->shear_point(j, u, z.y);
    return;
  }
  rng.unit_ball(z.y);
}

double PiecewiseConstFn::log_density(const BlockPoint& z) const {
  const int d = dimension();
  if (is_level(family_)) {
    const double log_rho = std::log(rho_sample_);
    const double base = std::log1p(-rho_sample_) - std::log(unit_ball_volume(d));
    const double log_det_f = std::log(std::abs(family_->forward().determinant()));
    auto term = [&](int k) { return base + (k + 1) * log_rho + k * log_det_f; };
    // Terms k >= -1 with |f^k x| <= 1, where x = f^-depth y and f^k x = f^(k-depth) y.
    const double outer = family_->backward_sup();
    const auto f_rm = row_major(family_->forward());
    const auto f_inv_rm = row_major(family_->forward_inverse());
    double acc = kNegInf;
    std::vector<double> w(z.y), next(w.size());
    int j = 0;
    for (;; ++j) {
      const double r = norm2(w);
      if (z.depth + j >= -1 && r <= 1.0) acc = log_sum_exp(acc, term(z.depth + j));
      if (r > outer) break;
      if (j >= family_->budget()) throw NumericFailure("sampler orbit did not escape within the membership budget");
      matvec(f_rm, w, next);
      w.swap(next);
    }
    w = z.y;
    for (j = -1; j >= -z.depth - 1; --j) {
      matvec(f_inv_rm, w, next);
      w.swap(next);
      if (norm2(w) <= 1.0) acc = log_sum_exp(acc, term(z.depth + j));
    }
    return acc;
  }
  if (family_) {
    const int c = family_->shear_count(z.y, 0, n_);
    if (c == 0) return kNegInf;
    return std::log(static_cast<double>(c)) - std::log(n_ + 1.0) - std::log(base_measure_);
  }
  return norm2(z.y) <= 1.0 ? -std::log(unit_ball_volume(d)) : kNegInf;
}

MonteCarloEstimate PiecewiseConstFn::monte_carlo_norm_p(std::uint64_t samples, std::uint64_t seed) const {
  return to_estimate(sharded_monte_carlo(samples, seed, [&](CounterRng& rng) {
    BlockPoint z;
    sample(rng, z);
    const double lv = log_value(z);
    if (lv == kNegInf) return 0.0;
    return std::exp(p_ * lv - log_density(z));
  }));
}

MonteCarloEstimate PiecewiseConstFn::monte_carlo_displacement(std::uint64_t samples, std::uint64_t seed) const {
  return to_estimate(sharded_monte_carlo(samples, seed, [&](CounterRng& rng) {
    BlockPoint z;
    sample(rng, z);
    const double l = log_abs_diff_pow(log_value(z), log_value(shifted(z)), p_);
    if (l == kNegInf) return 0.0;
    return std::exp(l - log_density(z));
  }));
}

PiecewiseConstFn PiecewiseConstFn::with_budget(int budget) const {
  PiecewiseConstFn out = *this;
  if (is_level(out.family_)) out.family_ = out.family_->with_budget(budget);
  return out;
}

namespace {

void check_p_n(double p, int n) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw InvalidInput("p must be a finite number >= 1");
  if (n < 1) throw InvalidInput("sequence index n must be >= 1");
}

std::string min_n_message(const char* name, double coef, double target) {
  std::ostringstream msg;
  msg << name << " = " << coef << " <= 0; smallest admissible n is " << static_cast<long long>(std::floor(1.0 / target)) + 1;
  return msg.str();
}

}  // namespace

PiecewiseConstFn build_expansive(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts) {
  block.validate();
  check_p_n(p, n);
  if (block.classification() != BlockClass::expansive) throw InvalidInput("build_expansive needs an expansive block");
  PiecewiseConstFn fn;
  fn.cls_ = BlockClass::expansive;
  fn.block_ = block;
  fn.a_ = block.matrix();
  fn.a_rm_ = row_major(fn.a_);
  fn.p_ = p;
  fn.n_ = n;
  const double D = std::abs(fn.a_.determinant());
  const double target = std::pow(D, 1.0 / p);
  fn.coef_ = target - 1.0 / n;
  if (!(fn.coef_ > 0.0)) throw InvalidInput(min_n_message("sigma_n", fn.coef_, target));
  fn.family_ = SetFamily::expansive(fn.a_, std::nullopt, opts.budget);
  const double F = union_measure(*fn.family_, opts, fn.base_measure_estimated_);
  fn.base_measure_ = F * (1.0 - 1.0 / D);
  fn.rho_sample_ = std::pow(fn.coef_, p) / D;
  fn.log_norm_p_ = std::log(fn.base_measure_) - std::log1p(-fn.rho_sample_);
  return fn;
}

PiecewiseConstFn build_contractive(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts) {
  block.validate();
  check_p_n(p, n);
  if (block.classification() != BlockClass::contractive)
    throw InvalidInput("build_contractive needs a contractive block");
  PiecewiseConstFn fn;
  fn.cls_ = BlockClass::contractive;
  fn.block_ = block;
  fn.a_ = block.matrix();
  fn.a_rm_ = row_major(fn.a_);
  fn.p_ = p;
  fn.n_ = n;
  const double D = std::abs(fn.a_.determinant());
  const double target = std::pow(D, -1.0 / p);
  fn.coef_ = target - 1.0 / n;
  if (!(fn.coef_ > 0.0)) throw InvalidInput(min_n_message("gamma_n", fn.coef_, target));
  fn.family_ = SetFamily::contractive(fn.a_, std::nullopt, opts.budget);
  const double F = union_measure(*fn.family_, opts, fn.base_measure_estimated_);
  fn.base_measure_ = F * (1.0 - D);
  fn.rho_sample_ = std::pow(fn.coef_, p) * D;
  fn.log_norm_p_ = std::log(fn.base_measure_) - std::log1p(-fn.rho_sample_);
  return fn;
}

PiecewiseConstFn build_unitary_diag(const JordanBlockSpec& block, double p) {
  block.validate();
  check_p_n(p, 1);
  if (block.classification() != BlockClass::unitary_diagonalizable)
    throw InvalidInput("build_unitary_diag needs a diagonalizable unit-modulus block");
  PiecewiseConstFn fn;
  fn.cls_ = BlockClass::unitary_diagonalizable;
  fn.block_ = block;
  fn.a_ = block.matrix();
  fn.a_rm_ = row_major(fn.a_);
  fn.p_ = p;
  fn.n_ = 1;
  fn.base_measure_ = unit_ball_volume(block.size);
  fn.log_norm_p_ = std::log(fn.base_measure_);
  return fn;
}

PiecewiseConstFn build_shear(const JordanBlockSpec& block, int n, double p) {
  block.validate();
  check_p_n(p, n);
  const BlockClass cls = block.classification();
  if (cls == BlockClass::expansive || cls == BlockClass::contractive)
    throw InvalidInput("build_shear needs a unit-modulus block");
  PiecewiseConstFn fn;
  fn.cls_ = cls;
  fn.block_ = block;
  fn.a_ = block.matrix();
  fn.a_rm_ = row_major(fn.a_);
  fn.p_ = p;
  fn.n_ = n;
  fn.family_ = SetFamily::shear(block, n);
  const int k = block.size;
  const double log_s0 = log_ball_volume(k, fn.family_->base_radius()) - n * k * std::numbers::ln2;
  fn.base_measure_ = std::exp(log_s0);
  fn.log_norm_p_ = std::log(static_cast<double>(n)) + log_s0;
  return fn;
}

PiecewiseConstFn build_block_function(const JordanBlockSpec& block, double p, int n, const BuildOptions& opts) {
  block.validate();
  switch (block.classification()) {
    case BlockClass::expansive: return build_expansive(block, p, n, opts);
    case BlockClass::contractive: return build_contractive(block, p, n, opts);
    case BlockClass::unitary_diagonalizable:
      if (opts.construction == Construction::shear) return build_shear(block, n, p);
      return build_unitary_diag(block, p);
    case BlockClass::unitary_shear_real:
    case BlockClass::unitary_shear_complex: return build_shear(block, n, p);
  }
  throw InvalidInput("unknown block class");
}

// ---------------------------------------------------------------------------
// TensorMinimizer

TensorMinimizer::TensorMinimizer(std::vector<PiecewiseConstFn> blocks, const Eigen::MatrixXd& C, int n, double p)
    : blocks_(std::move(blocks)), n_(n), p_(p) {
  if (blocks_.empty()) throw InvalidInput("tensor assembly needs at least one block");
  check_p_n(p, n);
  d_ = 0;
  std::vector<JordanBlockSpec> specs;
  for (const auto& b : blocks_) {
    if (b.p() != p) throw InvalidInput("block functions were built for a different p");
    offsets_.push_back(d_);
    d_ += b.dimension();
    specs.push_back(b.block());
  }
  if (C.rows() != d_ || C.cols() != d_) {
    std::ostringstream msg;
    msg << "conjugation is " << C.rows() << "x" << C.cols() << " but the blocks sum to dimension " << d_;
    throw InvalidInput(msg.str());
  }
  const double det = C.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) throw InvalidInput("conjugation matrix is singular");
  C_ = C;
  C_inv_ = C.inverse();
  A_ = C_ * assemble_jordan(specs) * C_inv_;
  C_inv_rm_ = row_major(C_inv_);
  s_ = std::sqrt(static_cast<double>(blocks_.size())) * op_norm(C_);
  log_abs_det_c_ = std::log(std::abs(det));
  log_c_ = (d_ * std::log(s_) - log_abs_det_c_) / p_;
}

double TensorMinimizer::log_psi(std::span<const double> y) const {
  double acc = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    const double lv =
        blk.log_value(y.subspan(static_cast<std::size_t>(offsets_[b]), static_cast<std::size_t>(blk.dimension())));
    if (lv == kNegInf) return kNegInf;
    acc += lv - blk.log_norm_p() / p_;
  }
  return acc;
}

double TensorMinimizer::log_value(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(d_)) throw InvalidInput("point dimension does not match the minimizer");
  std::vector<double> y(x.size());
  matvec(C_inv_rm_, x, y);
  for (double& v : y) v *= s_;
  const double lp = log_psi(y);
  return lp == kNegInf ? kNegInf : log_c_ + lp;
}

double TensorMinimizer::value(std::span<const double> x) const { return std::exp(log_value(x)); }

double TensorMinimizer::closed_form_displacement() const {
  std::vector<std::vector<DisplacementEntry>> entries;
  for (const auto& b : blocks_) entries.push_back(b.displacement_entries());
  std::vector<std::size_t> idx(entries.size(), 0);
  std::vector<double> terms;
  for (;;) {
    double mass = 1.0, v = 1.0, w = 1.0;
    for (std::size_t b = 0; b < entries.size(); ++b) {
      const auto& e = entries[b][idx[b]];
      mass *= e.mass;
      v *= e.value;
      w *= e.shifted_value;
    }
    terms.push_back(mass * std::pow(std::abs(w - v), p_));
    std::size_t b = 0;
    while (b < idx.size() && ++idx[b] == entries[b].size()) idx[b++] = 0;
    if (b == idx.size()) break;
  }
  return pairwise_sum(terms);
}

MonteCarloEstimate TensorMinimizer::monte_carlo_displacement(std::uint64_t samples, std::uint64_t seed) const {
  return to_estimate(sharded_monte_carlo(samples, seed, [&](CounterRng& rng) {
    double log_q = 0.0, lv = 0.0, lw = 0.0;
    BlockPoint z;
    for (const auto& blk : blocks_) {
      blk.sample(rng, z);
      log_q += blk.log_density(z);
      const double norm = blk.log_norm_p() / p_;
      lv += blk.log_value(z) - norm;
      lw += blk.log_value(blk.shifted(z)) - norm;
    }
    const double l = log_abs_diff_pow(lv, lw, p_);
    if (l == kNegInf) return 0.0;
    return std::exp(l - log_q);
  }));
}

MonteCarloEstimate TensorMinimizer::monte_carlo_norm_p(std::uint64_t samples, std::uint64_t seed) const {
  return to_estimate(sharded_monte_carlo(samples, seed, [&](CounterRng& rng) {
    double log_q = 0.0, lv = 0.0;
    BlockPoint z;
    for (const auto& blk : blocks_) {
      blk.sample(rng, z);
      log_q += blk.log_density(z);
      lv += blk.log_value(z) - blk.log_norm_p() / p_;
    }
    if (lv == kNegInf) return 0.0;
    return std::exp(p_ * lv - log_q);
  }));
}

TensorMinimizer tensor_assemble(std::vector<PiecewiseConstFn> blocks, const Eigen::MatrixXd& C, int n, double p) {
  return TensorMinimizer(std::move(blocks), C, n, p);
}

TensorMinimizer minimizer_for_map(const LinearMapSpec& map, double p, int n, const BuildOptions& opts) {
  if (!map.has_blocks())
    throw InvalidInput("map has no block structure; supply its real Jordan blocks and conjugation");
  std::vector<PiecewiseConstFn> fns;
  std::uint64_t stream = 0;
  for (const auto& b : map.blocks()) {
    BuildOptions o = opts;
    o.seed = derive_seed(opts.seed, stream++);
    fns.push_back(build_block_function(b, p, n, o));
  }
  return tensor_assemble(std::move(fns), map.conjugation(), n, p);
}

double rayleigh_closed_form(MinimizerKind kind, const LinearMapSpec& map, double p, int n) {
  check_p_n(p, n);
  const double D = map.abs_det();
  switch (kind) {
    case MinimizerKind::expansive: {
      const double target = std::pow(D, 1.0 / p);
      const double s = target - 1.0 / n;
      if (!(s > 0.0)) throw InvalidInput(min_n_message("sigma_n", s, target));
      return 1.0 - std::pow(s, p) / D + std::pow(std::abs(s - 1.0), p) / D;
    }
    case MinimizerKind::contractive: {
      const double target = std::pow(D, -1.0 / p);
      const double g = target - 1.0 / n;
      if (!(g > 0.0)) throw InvalidInput(min_n_message("gamma_n", g, target));
      return (1.0 - std::pow(g, p) * D) / D + std::pow(std::abs(1.0 - g), p);
    }
    case MinimizerKind::shear: return 2.0 / n;
  }
  throw InvalidInput("unknown minimizer kind");
}

std::vector<ConvergenceRow> verify_upper_bound(const KernelSpec& spec, double p, const std::vector<int>& n_list,
                                               const VerifyOptions& opts) {
  if (!spec.map.has_blocks()) throw InvalidInput("verify_upper_bound needs a map with block structure");
  if (n_list.empty()) throw InvalidInput("n_list is empty");
  const double two_int_psi = 2.0 * psi_integral(spec.psi);
  std::vector<ConvergenceRow> rows;
  for (int n : n_list) {
    BuildOptions b;
    b.budget = opts.budget;
    b.seed = derive_seed(opts.seed, 2 * static_cast<std::uint64_t>(n));
    b.construction = opts.construction;
    const auto tm = minimizer_for_map(spec.map, p, n, b);
    const double closed = tm.closed_form_displacement();
    const auto mc = tm.monte_carlo_displacement(opts.mc_samples, derive_seed(opts.seed, 2 * static_cast<std::uint64_t>(n) + 1));
    rows.push_back({n, closed, mc.value, mc.standard_error, two_int_psi * closed});
  }
  return rows;
}

}  // namespace nlpl
