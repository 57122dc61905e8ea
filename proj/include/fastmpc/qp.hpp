#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fastmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/**
 * @brief Dense convex QP
 *
 *   min  z' H z + z' f
 *   s.t. G z <= g,  lo <= z <= hi
 *
 * The quadratic form carries no 1/2 factor. Bounds may be infinite.
 */
class QpProblem
{
public:
  QpProblem() = default;

  QpProblem(Matrix hessian, Vector affine, Matrix ineq_matrix, Vector ineq_bound, Vector lower, Vector upper)
      : hessian_(std::move(hessian)), affine_(std::move(affine)), ineq_matrix_(std::move(ineq_matrix)),
        ineq_bound_(std::move(ineq_bound)), lower_(std::move(lower)), upper_(std::move(upper))
  {
    check_dimensions();
    check_psd(hessian_);
  }

  /// Box-only problem.
  static QpProblem box(Matrix hessian, Vector affine, Vector lower, Vector upper)
  {
    const auto n = affine.size();
    return QpProblem(std::move(hessian), std::move(affine), Matrix(0, n), Vector(0), std::move(lower),
                     std::move(upper));
  }

  /// Problem without any constraint.
  static QpProblem unconstrained(Matrix hessian, Vector affine)
  {
    const auto n = affine.size();
    return box(std::move(hessian), std::move(affine), Vector::Constant(n, -kInf), Vector::Constant(n, kInf));
  }

  /// Skips the eigenvalue test; used when the Hessian comes from a cache that was already checked.
  static QpProblem trusted(const Matrix & hessian, Vector affine, const Matrix & ineq_matrix, Vector ineq_bound,
                           const Vector & lower, const Vector & upper)
  {
    QpProblem p;
    p.hessian_ = hessian;
    p.affine_ = std::move(affine);
    p.ineq_matrix_ = ineq_matrix;
    p.ineq_bound_ = std::move(ineq_bound);
    p.lower_ = lower;
    p.upper_ = upper;
    p.check_dimensions();
    return p;
  }

  /// Throws std::invalid_argument unless `h` is symmetric PSD up to 1e-9 * ||h||.
  static void check_psd(const Matrix & h)
  {
    if (h.rows() != h.cols()) throw std::invalid_argument("QpProblem: Hessian is not square");
    if (h.size() == 0) return;
    const double scale = std::max(h.norm(), 1.0);
    if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      throw std::invalid_argument("QpProblem: Hessian is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9 * scale) {
      throw std::invalid_argument("QpProblem: Hessian is not positive semidefinite");
    }
  }

  const Matrix & hessian() const { return hessian_; }
  const Vector & affine() const { return affine_; }
  const Matrix & ineq_matrix() const { return ineq_matrix_; }
  const Vector & ineq_bound() const { return ineq_bound_; }
  const Vector & lower() const { return lower_; }
  const Vector & upper() const { return upper_; }

  Eigen::Index num_vars() const { return affine_.size(); }
  Eigen::Index num_ineq() const { return ineq_bound_.size(); }

  void check_point(const Vector & z) const
  {
    if (z.size() != num_vars()) {
      throw std::invalid_argument("QpProblem: point has dimension " + std::to_string(z.size()) + ", expected " +
                                  std::to_string(num_vars()));
    }
  }

  Vector project(const Vector & z) const
  {
    check_point(z);
    return z.cwiseMax(lower_).cwiseMin(upper_);
  }

private:
  void check_dimensions() const
  {
    const auto n = affine_.size();
    if (hessian_.rows() != n || hessian_.cols() != n) throw std::invalid_argument("QpProblem: Hessian size");
    if (ineq_matrix_.cols() != n || ineq_matrix_.rows() != ineq_bound_.size()) {
      throw std::invalid_argument("QpProblem: inequality matrix size");
    }
    if (lower_.size() != n || upper_.size() != n) throw std::invalid_argument("QpProblem: bound size");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(lower_[i] <= upper_[i])) throw std::invalid_argument("QpProblem: lower bound exceeds upper bound");
    }
  }

  Matrix hessian_;
  Vector affine_;
  Matrix ineq_matrix_;
  Vector ineq_bound_;
  Vector lower_;
  Vector upper_;
};

/// Penalty applied to constraint violations in the augmented cost.
struct PenaltyConfig
{
  double weight = 1e4;
  double exponent = 2.0;

  void validate() const
  {
    if (!(weight > 0)) throw std::invalid_argument("PenaltyConfig: weight must be positive");
    if (!(exponent >= 2)) throw std::invalid_argument("PenaltyConfig: exponent must be >= 2");
  }
};

struct KktReport
{
  double stationarity_residual = 0;
  double max_primal_violation = 0;
  double complementarity_residual = 0;
};

/// z' H z + z' f
inline double quadratic_cost(const QpProblem & prob, const Vector & z)
{
  prob.check_point(z);
  return z.dot(prob.hessian() * z) + z.dot(prob.affine());
}

namespace detail {

inline double positive_part(double r) { return r > 0 ? r : 0.0; }

inline double penalty_term(double r, double exponent)
{
  if (r <= 0) return 0.0;
  return exponent == 2.0 ? r * r : std::pow(r, exponent);
}

/// d/dr of max(r,0)^mu
inline double penalty_slope(double r, double exponent)
{
  if (r <= 0) return 0.0;
  return exponent == 2.0 ? 2.0 * r : exponent * std::pow(r, exponent - 1);
}

/// d2/dr2 of max(r,0)^mu; the inactive side (r <= 0) contributes 0.
inline double penalty_curvature(double r, double exponent)
{
  if (r <= 0) return 0.0;
  return exponent == 2.0 ? 2.0 : exponent * (exponent - 1) * std::pow(r, exponent - 2);
}

}  // namespace detail

/// Sum of the penalty terms alone (without the weight).
inline double penalty_sum(const QpProblem & prob, const PenaltyConfig & cfg, const Vector & z)
{
  prob.check_point(z);
  double s = 0;
  if (prob.num_ineq() > 0) {
    const Vector r = prob.ineq_matrix() * z - prob.ineq_bound();
    for (Eigen::Index i = 0; i < r.size(); ++i) s += detail::penalty_term(r[i], cfg.exponent);
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    s += detail::penalty_term(z[i] - prob.upper()[i], cfg.exponent);
    s += detail::penalty_term(prob.lower()[i] - z[i], cfg.exponent);
  }
  return s;
}

/**
 * @brief Penalty-augmented cost
 *
 * J(z) = z'Hz + z'f + a * sum max(G_i z - g_i, 0)^mu + a * (box violations)^mu + floor
 *
 * `floor` is the positive constant keeping J bounded away from zero.
 */
inline double augmented_cost(const QpProblem & prob, const PenaltyConfig & cfg, const Vector & z, double floor)
{
  if (!(floor >= 0)) throw std::invalid_argument("augmented_cost: floor must be non-negative");
  return quadratic_cost(prob, z) + cfg.weight * penalty_sum(prob, cfg, z) + floor;
}

inline Vector augmented_gradient(const QpProblem & prob, const PenaltyConfig & cfg, const Vector & z)
{
  cfg.validate();
  prob.check_point(z);
  Vector grad = 2.0 * (prob.hessian() * z) + prob.affine();
  if (prob.num_ineq() > 0) {
    Vector r = prob.ineq_matrix() * z - prob.ineq_bound();
    bool any = false;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      r[i] = cfg.weight * detail::penalty_slope(r[i], cfg.exponent);
      any = any || r[i] != 0.0;
    }
    if (any) grad.noalias() += prob.ineq_matrix().transpose() * r;
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    grad[i] += cfg.weight * detail::penalty_slope(z[i] - prob.upper()[i], cfg.exponent);
    grad[i] -= cfg.weight * detail::penalty_slope(prob.lower()[i] - z[i], cfg.exponent);
  }
  return grad;
}

/// Generalized Hessian of the augmented cost (exact away from constraint boundaries).
inline Matrix augmented_hessian(const QpProblem & prob, const PenaltyConfig & cfg, const Vector & z)
{
  cfg.validate();
  prob.check_point(z);
  Matrix h = 2.0 * prob.hessian();
  if (prob.num_ineq() > 0) {
    const Vector r = prob.ineq_matrix() * z - prob.ineq_bound();
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double c = cfg.weight * detail::penalty_curvature(r[i], cfg.exponent);
      if (c != 0.0) h.noalias() += c * prob.ineq_matrix().row(i).transpose() * prob.ineq_matrix().row(i);
    }
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    h(i, i) += cfg.weight * detail::penalty_curvature(z[i] - prob.upper()[i], cfg.exponent);
    h(i, i) += cfg.weight * detail::penalty_curvature(prob.lower()[i] - z[i], cfg.exponent);
  }
  return h;
}

/// Largest positive violation over all inequality rows and both box sides.
inline double max_violation(const QpProblem & prob, const Vector & z)
{
  prob.check_point(z);
  double v = 0;
  if (prob.num_ineq() > 0) {
    v = std::max(v, (prob.ineq_matrix() * z - prob.ineq_bound()).maxCoeff());
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    v = std::max({v, z[i] - prob.upper()[i], prob.lower()[i] - z[i]});
  }
  return v;
}

/**
 * @brief KKT residuals at (z, multipliers)
 *
 * Multipliers are ordered [inequality rows, upper box, lower box]. Stationarity is
 * || 2Hz + f + G'l_c + l_up - l_lo ||_inf. Multipliers attached to infinite bounds must be zero.
 */
inline KktReport kkt_report(const QpProblem & prob, const Vector & z, const Vector & multipliers)
{
  prob.check_point(z);
  const auto n = prob.num_vars();
  const auto nc = prob.num_ineq();
  if (multipliers.size() != nc + 2 * n) throw std::invalid_argument("kkt_report: multiplier vector size");
  if (n + nc > 0 && multipliers.size() > 0 && multipliers.minCoeff() < 0) {
    throw std::invalid_argument("kkt_report: negative multiplier");
  }
  const auto lc = multipliers.head(nc);
  const auto lup = multipliers.segment(nc, n);
  const auto llo = multipliers.tail(n);

  Vector station = 2.0 * (prob.hessian() * z) + prob.affine() + lup - llo;
  if (nc > 0) station += prob.ineq_matrix().transpose() * lc;

  KktReport rep;
  rep.stationarity_residual = n > 0 ? station.cwiseAbs().maxCoeff() : 0.0;
  rep.max_primal_violation = max_violation(prob, z);

  double comp = 0;
  auto accumulate = [&](double lambda, double slack) {
    if (lambda == 0.0) return;
    if (!std::isfinite(slack)) {
      comp = kInf;
      return;
    }
    comp = std::max(comp, std::abs(lambda * slack));
  };
  if (nc > 0) {
    const Vector slack = prob.ineq_bound() - prob.ineq_matrix() * z;
    for (Eigen::Index i = 0; i < nc; ++i) accumulate(lc[i], slack[i]);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    accumulate(lup[i], prob.upper()[i] - z[i]);
    accumulate(llo[i], z[i] - prob.lower()[i]);
  }
  rep.complementarity_residual = comp;
  return rep;
}

}  // namespace fastmpc
