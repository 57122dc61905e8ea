#pragma once

#include "qp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <optional>
#include <vector>

namespace fastmpc {

/**
 * @brief Gradient-flow solver settings
 *
 * Each iteration integrates z' = -dJ/dz over one TR-BDF2 step, projects onto the box and
 * accepts the result only if the augmented cost strictly decreases.
 */
struct OdeSolverConfig
{
  PenaltyConfig penalty{};
  /// Newton stopping tolerance on the step (relative to 1 + |y|_inf)
  double newton_tol = 1e-8;
  int newton_max = 10;
  /// TR-BDF2 split point
  double gamma = 2.0 - std::sqrt(2.0);
  double step_shrink = 0.5;
  int max_shrinks = 30;
  /// additive constant of the augmented cost
  double floor = 1.0;
  /// closed loop only: recompute the step size from the gradient at every update
  bool reinit_step_per_update = true;

  void validate() const
  {
    penalty.validate();
    if (!(gamma > 0 && gamma < 2)) throw std::invalid_argument("OdeSolverConfig: gamma must lie in (0, 2)");
    if (!(step_shrink > 0 && step_shrink < 1)) throw std::invalid_argument("OdeSolverConfig: step_shrink in (0,1)");
    if (newton_max < 1 || max_shrinks < 0) throw std::invalid_argument("OdeSolverConfig: counters");
    if (!(floor >= 0)) throw std::invalid_argument("OdeSolverConfig: floor must be non-negative");
  }
};

struct OdeSolverState
{
  Vector iterate;
  double step_size = 1.0;
  int iterations_done = 0;
  /// augmented cost after 0, 1, 2, ... iterations
  std::vector<double> cost_trace;
};

namespace detail {

/// Solves y + c * grad J(y) = rhs by Newton's method. Returns nullopt on a non-finite iterate.
inline std::optional<Vector> implicit_gradient_solve(const QpProblem & prob, const OdeSolverConfig & cfg, double c,
                                                     const Vector & rhs, Vector y)
{
  const auto n = y.size();
  for (int it = 0; it < cfg.newton_max; ++it) {
    const Vector residual = y + c * augmented_gradient(prob, cfg.penalty, y) - rhs;
    Matrix jac = c * augmented_hessian(prob, cfg.penalty, y);
    jac.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(jac);
    Vector step;
    if (llt.info() == Eigen::Success) {
      step = llt.solve(residual);
    } else {
      step = jac.ldlt().solve(residual);
    }
    y -= step;
    if (!y.allFinite()) return std::nullopt;
    if (n == 0 || step.cwiseAbs().maxCoeff() <= cfg.newton_tol * (1.0 + y.cwiseAbs().maxCoeff())) break;
  }
  return y;
}

/// One TR-BDF2 step of z' = -grad J(z) of length h, before projection.
inline std::optional<Vector> trbdf2_step(const QpProblem & prob, const OdeSolverConfig & cfg, const Vector & z,
                                         const Vector & grad_z, double h)
{
  const double g = cfg.gamma;
  // trapezoidal stage to t + g h
  const double c1 = 0.5 * g * h;
  const Vector rhs1 = z - c1 * grad_z;
  auto mid = implicit_gradient_solve(prob, cfg, c1, rhs1, z);
  if (!mid) return std::nullopt;
  // BDF2 stage to t + h
  const double c2 = (1.0 - g) * h / (2.0 - g);
  const double a_mid = 1.0 / (g * (2.0 - g));
  const double a_old = (1.0 - g) * (1.0 - g) / (g * (2.0 - g));
  const Vector rhs2 = a_mid * (*mid) - a_old * z;
  return implicit_gradient_solve(prob, cfg, c2, rhs2, *mid);
}

/// True when no feasible descent direction exists along the box-projected gradient.
inline bool projected_gradient_is_zero(const QpProblem & prob, const Vector & z, const Vector & grad)
{
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (grad[i] > 0 && z[i] <= prob.lower()[i]) continue;
    if (grad[i] < 0 && z[i] >= prob.upper()[i]) continue;
    if (grad[i] != 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// Projects z0 into the box and picks the initial step dt = sqrt(1 / |z'|).
inline OdeSolverState init_state(const QpProblem & prob, const OdeSolverConfig & cfg, const Vector & z0)
{
  cfg.validate();
  OdeSolverState s;
  s.iterate = prob.project(z0);
  const double speed = augmented_gradient(prob, cfg.penalty, s.iterate).norm();
  s.step_size = speed > 0 && std::isfinite(speed) ? std::sqrt(1.0 / speed) : 1.0;
  s.cost_trace.push_back(augmented_cost(prob, cfg.penalty, s.iterate, cfg.floor));
  return s;
}

/**
 * @brief One solver iteration: a TR-BDF2 step, box projection and descent check
 *
 * A step that fails to decrease the augmented cost is retried with a shorter step size, up to
 * `max_shrinks` times, after which the iterate is kept. The cost trace never increases.
 */
inline OdeSolverState iterate_once(const QpProblem & prob, const OdeSolverConfig & cfg, OdeSolverState state)
{
  if (state.cost_trace.empty()) throw std::invalid_argument("iterate_once: state was not initialized");
  prob.check_point(state.iterate);
  const double current = state.cost_trace.back();
  const Vector grad = augmented_gradient(prob, cfg.penalty, state.iterate);

  double accepted_cost = current;
  if (!detail::projected_gradient_is_zero(prob, state.iterate, grad)) {
    double h = state.step_size;
    for (int attempt = 0; attempt <= cfg.max_shrinks; ++attempt, h *= cfg.step_shrink) {
      auto next = detail::trbdf2_step(prob, cfg, state.iterate, grad, h);
      if (!next) continue;
      Vector candidate = prob.project(*next);
      if (candidate == state.iterate) break;
      const double cost = augmented_cost(prob, cfg.penalty, candidate, cfg.floor);
      if (cost < current) {
        state.iterate = std::move(candidate);
        state.step_size = h;
        accepted_cost = cost;
        break;
      }
    }
  }
  state.cost_trace.push_back(accepted_cost);
  ++state.iterations_done;
  return state;
}

/// Continues an existing state for k more iterations.
inline OdeSolverState run_from(const QpProblem & prob, const OdeSolverConfig & cfg, OdeSolverState state, int k)
{
  if (k < 0) throw std::invalid_argument("run: negative iteration count");
  for (int i = 0; i < k; ++i) state = iterate_once(prob, cfg, std::move(state));
  return state;
}

/// Exactly k iterations from z0.
inline OdeSolverState run(const QpProblem & prob, const OdeSolverConfig & cfg, const Vector & z0, int k)
{
  if (k < 1) throw std::invalid_argument("run: k must be >= 1");
  return run_from(prob, cfg, init_state(prob, cfg, z0), k);
}

}  // namespace fastmpc
