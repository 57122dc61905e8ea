#pragma once

#include "qp.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <stdexcept>

namespace fastmpc {

/**
 * @brief Discrete-time LTI model in deviation variables
 *
 *   x+ = A x + B u + F w
 *   y  = C x + D u + G w
 */
struct LtiModel
{
  Matrix a, b, f, c, d, g;
  double sample_period = 5.0;

  Eigen::Index num_states() const { return a.rows(); }
  Eigen::Index num_inputs() const { return b.cols(); }
  Eigen::Index num_disturbances() const { return f.cols(); }
  Eigen::Index num_outputs() const { return c.rows(); }

  void validate() const
  {
    const auto n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("LtiModel: A must be square");
    if (b.rows() != n || f.rows() != n) throw std::invalid_argument("LtiModel: B/F row count");
    if (c.cols() != n) throw std::invalid_argument("LtiModel: C column count");
    if (d.rows() != c.rows() || d.cols() != b.cols()) throw std::invalid_argument("LtiModel: D size");
    if (g.rows() != c.rows() || g.cols() != f.cols()) throw std::invalid_argument("LtiModel: G size");
    if (!(sample_period > 0)) throw std::invalid_argument("LtiModel: sample period must be positive");
  }

  double spectral_radius() const
  {
    if (a.size() == 0) return 0;
    return Eigen::EigenSolver<Matrix>(a, false).eigenvalues().cwiseAbs().maxCoeff();
  }

  Vector step(const Vector & x, const Vector & u, const Vector & w) const { return a * x + b * u + f * w; }
  Vector output(const Vector & x, const Vector & u, const Vector & w) const { return c * x + d * u + g * w; }
};

/// Absolute values around which the model is linearized.
struct OperatingPoint
{
  Vector x0, u0, y0, w0;

  static OperatingPoint zeros(const LtiModel & m)
  {
    return {Vector::Zero(m.num_states()), Vector::Zero(m.num_inputs()), Vector::Zero(m.num_outputs()),
            Vector::Zero(m.num_disturbances())};
  }

  void validate(const LtiModel & m) const
  {
    if (x0.size() != m.num_states() || u0.size() != m.num_inputs() || y0.size() != m.num_outputs() ||
        w0.size() != m.num_disturbances()) {
      throw std::invalid_argument("OperatingPoint: dimensions do not match the model");
    }
  }
};

/**
 * @brief j-step rollout of the model
 *
 * `profile` holds one input per column (column i is applied during period i+1) and
 * `w_forecast` one disturbance per column.
 */
inline Vector predict(const LtiModel & model, const Vector & x, const Matrix & profile, const Matrix & w_forecast,
                      Eigen::Index j)
{
  if (x.size() != model.num_states()) throw std::invalid_argument("predict: state dimension");
  if (profile.rows() != model.num_inputs() || w_forecast.rows() != model.num_disturbances()) {
    throw std::invalid_argument("predict: input/disturbance dimension");
  }
  if (j < 0 || j > profile.cols() || j > w_forecast.cols()) throw std::invalid_argument("predict: horizon index");
  Vector s = x;
  for (Eigen::Index i = 0; i < j; ++i) s = model.step(s, profile.col(i), w_forecast.col(i));
  return s;
}

/// Zero-order-hold transition over an arbitrary duration, derived from the sampled model.
struct StepMap
{
  Matrix a, b, f;
  double duration = 0;

  Vector step(const Vector & x, const Vector & u, const Vector & w) const { return a * x + b * u + f * w; }
};

/**
 * @brief Re-discretizes a sampled LTI model to step `h`
 *
 * Uses the principal logarithm of the augmented transition [[A B F]; [0 I 0]; [0 0 I]], which
 * recovers the continuous-time generator when A has no eigenvalue on the closed negative real axis.
 */
inline StepMap resample(const LtiModel & model, double h)
{
  model.validate();
  if (!(h > 0)) throw std::invalid_argument("resample: step must be positive");
  const auto n = model.num_states(), nu = model.num_inputs(), nw = model.num_disturbances();
  if (h == model.sample_period) return {model.a, model.b, model.f, h};
  const auto dim = n + nu + nw;
  Matrix aug = Matrix::Identity(dim, dim);
  aug.topLeftCorner(n, n) = model.a;
  aug.block(0, n, n, nu) = model.b;
  aug.block(0, n + nu, n, nw) = model.f;
  const Matrix gen = aug.log();
  const Matrix trans = ((h / model.sample_period) * gen).exp();
  if (!trans.allFinite()) throw std::runtime_error("resample: model has no real logarithm");
  return {trans.topLeftCorner(n, n), trans.block(0, n, n, nu), trans.block(0, n + nu, n, nw), h};
}

}  // namespace fastmpc
