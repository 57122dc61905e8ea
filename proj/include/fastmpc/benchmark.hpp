#pragma once

#include "closed_loop.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fastmpc {

/// Zero-order-hold discretization of x' = Ac x + Bc u + Fc w over `period` seconds.
inline LtiModel discretize(const Matrix & ac, const Matrix & bc, const Matrix & fc, const Matrix & c, const Matrix & d,
                           const Matrix & g, double period)
{
  if (!(period > 0)) throw std::invalid_argument("discretize: period must be positive");
  const auto n = ac.rows(), nu = bc.cols(), nw = fc.cols();
  Matrix aug = Matrix::Zero(n + nu + nw, n + nu + nw);
  aug.topLeftCorner(n, n) = ac;
  aug.block(0, n, n, nu) = bc;
  aug.block(0, n + nu, n, nw) = fc;
  const Matrix e = (aug * period).exp();
  LtiModel m;
  m.a = e.topLeftCorner(n, n);
  m.b = e.block(0, n, n, nu);
  m.f = e.block(0, n + nu, n, nw);
  m.c = c;
  m.d = d;
  m.g = g;
  m.sample_period = period;
  m.validate();
  return m;
}

/**
 * @brief Synthetic refrigerator-like plant
 *
 * States (deviations): JT flow lag, two heat-exchanger lags, bath heat lag, vapour lag, bath level,
 * turbine valve lag, turbine stage, return-gas warming, turbine outlet temperature, pressure and a
 * slow cold-box mass. Inputs: JT valve [%], bath heater [W], turbine valve [%]. Disturbance: heat
 * load [W]. Outputs: level [%], turbine outlet temperature [K], pressure [mbar], JT flow [g/s].
 * The seed perturbs time constants and couplings by up to about 15 %.
 */
struct BenchmarkPlant
{
  static constexpr int n_states = 12;
  static constexpr int level = 0;
  static constexpr int turbine_temp = 1;

  std::uint64_t seed = 7;
  double period = 5.0;

  LtiModel model() const
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto tau = [&](double nominal) { return nominal * std::exp(0.15 * unit(rng)); };
    auto gain = [&](double nominal) { return nominal * (1.0 + 0.1 * unit(rng)); };

    Matrix ac = Matrix::Zero(n_states, n_states);
    Matrix bc = Matrix::Zero(n_states, 3);
    Matrix fc = Matrix::Zero(n_states, 1);
    // first-order lag of state i towards `input` with time constant t
    auto lag = [&](int i, double t) {
      ac(i, i) = -1.0 / t;
      return 1.0 / t;
    };

    double k = lag(0, tau(15));  // JT flow
    bc(0, 0) = k * gain(1.0);
    k = lag(1, tau(40));  // exchanger stage 1
    ac(1, 0) = k;
    k = lag(2, tau(120));  // exchanger stage 2
    ac(2, 1) = k;
    ac(2, 11) = k * gain(0.05);
    k = lag(3, tau(10));  // heat deposited in the bath
    bc(3, 1) = k;
    fc(3, 0) = k;
    k = lag(4, tau(30));  // vapour production
    ac(4, 3) = k;
    k = lag(5, tau(600));  // bath level
    ac(5, 2) = k * gain(0.1);
    ac(5, 4) = -k * gain(0.02);
    k = lag(6, tau(12));  // turbine valve
    bc(6, 2) = k;
    k = lag(7, tau(45));  // turbine stage
    ac(7, 6) = k;
    k = lag(8, tau(300));  // return gas warming
    ac(8, 4) = k;
    k = lag(9, tau(20));  // turbine outlet temperature
    ac(9, 7) = -k * gain(0.04);
    ac(9, 8) = k * gain(0.02);
    ac(9, 1) = k * gain(0.02);
    k = lag(10, tau(60));  // pressure
    ac(10, 4) = k * gain(0.5);
    ac(10, 0) = -k * gain(0.2);
    k = lag(11, tau(450));  // cold-box mass
    ac(11, 9) = k * gain(0.5);

    Matrix c = Matrix::Zero(4, n_states);
    c(0, 5) = 1.0;
    c(1, 9) = 1.0;
    c(2, 10) = 1.0;
    c(3, 0) = 1.0;
    const Matrix d = Matrix::Zero(4, 3);
    const Matrix g = Matrix::Zero(4, 1);
    return discretize(ac, bc, fc, c, d, g, period);
  }

  static OperatingPoint operating_point()
  {
    OperatingPoint op;
    op.x0 = Vector::Zero(n_states);
    op.u0 = (Vector(3) << 40.0, 40.0, 75.0).finished();
    op.y0 = (Vector(4) << 60.0, 12.5, 1200.0, 20.0).finished();
    op.w0 = (Vector(1) << 100.0).finished();
    return op;
  }

  /// Actuator and rate bounds of the reference plant; the output band is [59, 61] % and [9, 16] K.
  static MpcBounds bounds()
  {
    MpcBounds b;
    b.u_min = (Vector(3) << 20.0, 20.0, 0.0).finished();
    b.u_max = (Vector(3) << 60.0, 60.0, 150.0).finished();
    b.du_max = (Vector(3) << 0.5, 10.0, 0.1).finished();
    b.du_min = -b.du_max;
    b.yc_min = (Vector(2) << 59.0, 9.0).finished();
    b.yc_max = (Vector(2) << 61.0, 16.0).finished();
    b.constrained_output_indices = {level, turbine_temp};
    return b;
  }

  static MpcWeights weights(const LtiModel & m)
  {
    const Vector out_w = (Vector(4) << 1.0, 0.5, 1e-6, 1e-4).finished();
    Matrix q = m.c.transpose() * out_w.asDiagonal() * m.c;
    q.diagonal().array() += 1e-6;
    MpcWeights w;
    w.q_state = q;
    w.r_input = Vector((Vector(3) << 1e-2, 1e-3, 5e-4).finished()).asDiagonal();
    w.rho_violation = Matrix::Identity(4, 4) * 50.0;
    return w;
  }

  ControllerConfig controller(SolverKind solver = SolverKind::ode) const
  {
    ControllerConfig cfg;
    cfg.model = model();
    cfg.op = operating_point();
    cfg.weights = weights(cfg.model);
    cfg.bounds = bounds();
    cfg.solver = solver;
    return cfg;
  }
};

/// Piecewise-constant heat-load profile from (time, load) pairs.
inline Scenario make_scenario(std::string label, double duration, const std::vector<std::pair<double, double>> & steps)
{
  Scenario s;
  s.label = std::move(label);
  s.duration = duration;
  s.values.resize(1, Eigen::Index(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    s.times.push_back(steps[i].first);
    s.values(0, Eigen::Index(i)) = steps[i].second;
  }
  s.validate();
  return s;
}

/**
 * @brief Six one-hour heat-load segments
 *
 * seg1 large step up and back, seg2 short periodic pulses, seg3 staircase, seg4 overload beyond
 * the heater range, seg5 random telegraph steps, seg6 slow small oscillation.
 */
inline std::vector<Scenario> benchmark_segments(std::uint64_t seed = 11, double nominal = 100.0)
{
  const double hour = 3600.0;
  std::vector<Scenario> out;
  out.push_back(make_scenario("seg1", hour, {{0, nominal}, {600, nominal + 60}, {2400, nominal}}));

  std::vector<std::pair<double, double>> pulses{{0, nominal}};
  for (double t = 300; t < hour; t += 300) {
    pulses.push_back({t, nominal + 80});
    pulses.push_back({t + 30, nominal});
  }
  out.push_back(make_scenario("seg2", hour, pulses));

  std::vector<std::pair<double, double>> stairs{{0, nominal}};
  for (int i = 1; i <= 5; ++i) stairs.push_back({i * 500.0, nominal + 15.0 * i});
  stairs.push_back({3000, nominal});
  out.push_back(make_scenario("seg3", hour, stairs));

  out.push_back(make_scenario("seg4", hour, {{0, nominal}, {300, nominal + 150}, {1500, nominal - 40}, {2700, nominal}}));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(-50.0, 90.0);
  std::uniform_real_distribution<double> dwell(60.0, 400.0);
  std::vector<std::pair<double, double>> tele{{0, nominal}};
  for (double t = dwell(rng); t < hour; t += dwell(rng)) tele.push_back({t, nominal + std::round(level(rng))});
  out.push_back(make_scenario("seg5", hour, tele));

  std::vector<std::pair<double, double>> wave{{0, nominal}};
  for (double t = 60; t < hour; t += 60) wave.push_back({t, nominal + std::round(25.0 * std::sin(2 * M_PI * t / 1200.0))});
  out.push_back(make_scenario("seg6", hour, wave));
  return out;
}

/// One-hour transient used for the solver comparisons: an overload at t = 600 s, then a load drop.
inline Scenario benchmark_transient(double nominal = 100.0)
{
  return make_scenario("transient", 3600.0, {{0, nominal}, {600, nominal + 180}, {1800, nominal - 40}, {2700, nominal}});
}

/// Segments back to back.
inline Scenario concatenate(const std::vector<Scenario> & parts, std::string label)
{
  if (parts.empty()) throw std::invalid_argument("concatenate: no segment");
  Scenario s;
  s.label = std::move(label);
  s.values.resize(parts.front().values.rows(), 0);
  double offset = 0;
  for (const auto & p : parts) {
    p.validate();
    for (std::size_t i = 0; i < p.times.size(); ++i) {
      s.times.push_back(offset + p.times[i]);
      s.values.conservativeResize(Eigen::NoChange, s.values.cols() + 1);
      s.values.col(s.values.cols() - 1) = p.values.col(Eigen::Index(i));
    }
    offset += p.duration;
  }
  s.duration = offset;
  s.validate();
  return s;
}

}  // namespace fastmpc
