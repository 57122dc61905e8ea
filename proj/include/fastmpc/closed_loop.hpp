#pragma once

#include "active_set.hpp"
#include "mpc_builder.hpp"
#include "ode_solver.hpp"
#include "period_adaptation.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fastmpc {

enum class SolverKind { ode, active_set };

inline const char * to_string(SolverKind k) { return k == SolverKind::ode ? "ode" : "active_set"; }

/**
 * @brief Controller compute model
 *
 * An iteration of a solver takes sec_per_iter / normalized_power seconds. In hardware-faithful
 * mode the problem preparation time is charged once per updating period.
 */
struct ComputeBudget
{
  double sec_per_iter_ode = 0.25;
  double sec_per_iter_activeset = 0.48;
  double normalized_power = 1.0;
  double prep_time = 0.5;
  bool hardware_faithful = false;

  void validate() const
  {
    if (!(sec_per_iter_ode > 0 && sec_per_iter_activeset > 0 && normalized_power > 0 && prep_time > 0)) {
      throw std::invalid_argument("ComputeBudget: all entries must be positive");
    }
  }

  double sec_per_iter(SolverKind k) const { return k == SolverKind::ode ? sec_per_iter_ode : sec_per_iter_activeset; }

  /// Wall-clock duration of one iteration on the target.
  double quantum(SolverKind k) const { return sec_per_iter(k) / normalized_power; }
};

/// Number of whole iterations that fit in an updating period of tau_u seconds.
inline int iterations_allowed(const ComputeBudget & budget, SolverKind kind, double tau_u)
{
  budget.validate();
  const double usable = budget.hardware_faithful ? tau_u - budget.prep_time : tau_u;
  const double raw = usable * budget.normalized_power / budget.sec_per_iter(kind);
  const int q = int(std::floor(raw + 1e-9));
  if (q < 1) throw std::invalid_argument("iterations_allowed: updating period is shorter than one iteration");
  return q;
}

/// Piecewise-constant disturbance profile in absolute units.
struct Scenario
{
  double duration = 0;
  std::vector<double> times;
  /// one column per entry of `times`
  Matrix values;
  std::string label;

  Vector at(double t) const
  {
    if (times.empty()) throw std::logic_error("Scenario: no samples");
    auto it = std::upper_bound(times.begin(), times.end(), t + 1e-9);
    const auto idx = it == times.begin() ? 0 : std::distance(times.begin(), it) - 1;
    return values.col(idx);
  }

  void validate() const
  {
    if (times.empty() || Eigen::Index(times.size()) != values.cols()) throw std::invalid_argument("Scenario: samples");
    if (times.front() > 0) throw std::invalid_argument("Scenario: samples must start at t = 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw std::invalid_argument("Scenario: times must increase");
    }
    if (!(duration > 0)) throw std::invalid_argument("Scenario: duration must be positive");
  }

  static Scenario constant(double duration, const Vector & value, std::string label = "constant")
  {
    Scenario s;
    s.duration = duration;
    s.times = {0.0};
    s.values = value;
    s.label = std::move(label);
    return s;
  }
};

/// The true plant, possibly different from the controller's model.
struct PlantSim
{
  LtiModel model;
  double fine_step = 0.25;
  double noise_scale = 0;
  std::uint64_t seed = 1;
};

struct ControllerConfig
{
  LtiModel model;
  OperatingPoint op;
  ControlParametrization par;
  MpcWeights weights;
  MpcBounds bounds;
  SolverKind solver = SolverKind::ode;
  OdeSolverConfig ode{};
  ActiveSetOptions active_set{};
  AdaptationConfig adaptation{};
  /// active-set only: ignore the budget and solve every problem to optimality
  bool unlimited_iterations = false;
  int unlimited_cap = 10000;
  /// controller knows the future disturbance; otherwise the last measurement is held
  bool perfect_forecast = false;
  /// predict the end-of-period state on the plant's fine grid instead of the nearest model sample
  bool fine_prediction = false;
};

struct WindowRecord
{
  double t = 0;         // end of the updating period (delivery instant)
  double duration = 0;  // length of the updating period
  int q = 0;
  int iterations_used = 0;
  std::string solver_status;
  double j_k = 0, j_k_plus = 0, j_hat_next = 0, j_next = 0;
  std::optional<AdaptationDiagnostics> adaptation;
  int q_next = 0;
  double deviation_cost = 0;  // open-loop deviation part at the true state
  double violation_cost = 0;  // open-loop slack part at the true state
  double max_row_violation = 0;
  bool clipped = false;
  Vector x_true;
  Vector y;
  Vector u_applied;  // absolute units, last input of the period
  Vector v;          // first-sample slack values of the delivered p
  Vector p;          // delivered parameter vector
  std::vector<double> cost_trace;
};

struct RunRecord
{
  std::string label;
  SolverKind solver = SolverKind::ode;
  bool adaptive = false;
  double sample_period = 5.0;
  double simulated_time = 0;
  /// time integral of the stage cost, in units of model samples
  double closed_loop_cost = 0;
  int clip_events = 0;
  std::vector<WindowRecord> windows;
};

namespace detail {

inline Vector output_violation(const ControllerConfig & cfg, const Vector & y_abs)
{
  const auto & idx = cfg.bounds.constrained_output_indices;
  const auto m = Eigen::Index(idx.size());
  Vector v = Vector::Zero(2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double y = y_abs[idx[k]];
    v[k] = std::max(y - cfg.bounds.yc_max[k], 0.0);
    v[m + k] = std::max(cfg.bounds.yc_min[k] - y, 0.0);
  }
  return v;
}

}  // namespace detail

/// ||x||_Q^2 + ||u||_R^2 + ||v||_rho^2 in deviation variables.
inline double stage_cost(const Vector & x, const Vector & u, const Vector & v, const MpcWeights & w)
{
  if (x.size() != w.q_state.rows() || u.size() != w.r_input.rows() || v.size() != w.rho_violation.rows()) {
    throw std::invalid_argument("stage_cost: dimension mismatch");
  }
  return x.dot(w.q_state * x) + u.dot(w.r_input * u) + v.dot(w.rho_violation * v);
}

/**
 * @brief Closed-loop run of the iteration-limited MPC scheme
 *
 * Per updating period of q iterations: the current profile is applied to the plant on a fine
 * grid, the controller predicts the state at the end of the period with its own model, shifts
 * the previous solution and runs exactly q solver iterations on the problem built at the
 * predicted state. With `adaptive`, q follows the period-adaptation rule (ODE solver only).
 */
inline RunRecord run_closed_loop(const PlantSim & plant, const ControllerConfig & cfg, const Scenario & scenario,
                                 const ComputeBudget & budget, bool adaptive, int q0)
{
  budget.validate();
  scenario.validate();
  cfg.adaptation.validate();
  cfg.ode.validate();
  if (adaptive && cfg.solver != SolverKind::ode) {
    throw std::invalid_argument("run_closed_loop: adaptation requires the monotonic ODE solver");
  }
  if (q0 < 1 || (adaptive && (q0 < 2 || q0 > cfg.adaptation.q_max))) {
    throw std::invalid_argument("run_closed_loop: q0 out of range");
  }
  plant.model.validate();
  if (plant.model.num_states() != cfg.model.num_states() || plant.model.num_inputs() != cfg.model.num_inputs() ||
      plant.model.num_disturbances() != cfg.model.num_disturbances() ||
      plant.model.sample_period != cfg.model.sample_period) {
    throw std::invalid_argument("run_closed_loop: plant and controller models are incompatible");
  }

  const MpcProblemBuilder builder(cfg.model, cfg.op, cfg.par, cfg.weights, cfg.bounds);
  const auto & par = builder.parametrization();
  const double tau = cfg.model.sample_period;
  const double quantum = budget.quantum(cfg.solver);
  const int substeps = std::max(1, int(std::ceil(quantum / plant.fine_step - 1e-9)));
  const double h = quantum / substeps;
  // problem preparation occupies whole fine steps at the start of every period
  const int prep_steps = budget.hardware_faithful ? int(std::lround(budget.prep_time / h)) : 0;
  const StepMap plant_step = resample(plant.model, h);
  const StepMap model_step = resample(cfg.model, h);
  const auto nphys = par.n_physical;
  const auto nw = cfg.model.num_disturbances();

  std::mt19937_64 rng(plant.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  auto w_dev = [&](double t) -> Vector { return scenario.at(t) - cfg.op.w0; };
  auto forecast = [&](double t_measure, double t_start) {
    Matrix w(nw, par.horizon);
    for (int j = 0; j < par.horizon; ++j) w.col(j) = cfg.perfect_forecast ? w_dev(t_start + j * tau) : w_dev(t_measure);
    return w;
  };
  auto sample_index = [&](double r) { return std::min(par.horizon, int(std::floor(r / tau + 1e-9)) + 1); };

  RunRecord rec;
  rec.label = scenario.label;
  rec.solver = cfg.solver;
  rec.adaptive = adaptive;
  rec.sample_period = tau;

  const OdeSolverConfig base_ode = cfg.ode;
  const double floor = base_ode.floor;
  auto j_of = [&](const CondensedQp & c, const Vector & p) {
    return augmented_cost(c.qp, base_ode.penalty, p, floor + c.constant);
  };

  Vector x = Vector::Zero(cfg.model.num_states());
  Vector u_prev = Vector::Zero(nphys);
  Vector p = Vector::Zero(par.num_params());
  std::optional<WorkingSet> warm;
  std::optional<double> carried_step;
  double t = 0;
  int q = q0;
  double j_k = j_of(builder.condense(x, u_prev, forecast(0, 0)), p);

  while (t < scenario.duration - 1e-9) {
    const double remaining = scenario.duration - t;
    const int full_steps = q * substeps + prep_steps;
    const int steps = std::min(full_steps, int(std::ceil(remaining / h - 1e-9)));
    const Matrix profile = expand_profile(p, par);

    // (a) plant over the period, (b) controller prediction of the end state
    const Vector x_start = x;
    Vector x_hat = x;
    Vector u_last = u_prev;
    bool clipped = false;
    for (int s = 0; s < steps; ++s) {
      const double r = s * h;
      Vector u = profile.col(sample_index(r) - 1).head(nphys);
      const Vector lo = cfg.bounds.u_min - cfg.op.u0, hi = cfg.bounds.u_max - cfg.op.u0;
      const Vector u_clip = u.cwiseMax(lo).cwiseMin(hi);
      if (u_clip != u) clipped = true;
      u = u_clip;
      const Vector w_true = w_dev(t + r);
      const Vector y = plant.model.output(x, u, w_true) + cfg.op.y0;
      const Vector v_true = detail::output_violation(cfg, y);
      rec.closed_loop_cost += stage_cost(x, u, v_true, cfg.weights) * (h / tau);
      x = plant_step.step(x, u, w_true);
      if (plant.noise_scale > 0) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += plant.noise_scale * std::sqrt(h) * noise(rng);
      }
      if (cfg.fine_prediction) x_hat = model_step.step(x_hat, u, cfg.perfect_forecast ? w_true : w_dev(t));
      u_last = u;
    }
    if (clipped) ++rec.clip_events;
    const double elapsed = steps * h;
    if (steps < full_steps) {
      // partial last period: the horizon ends before the next delivery
      t += elapsed;
      break;
    }
    if (!cfg.fine_prediction) {
      // model-grid prediction, rounded to the nearest whole sample
      const int m = std::min(par.horizon, int(std::lround(elapsed / tau)));
      x_hat = x_start;
      for (int j = 0; j < m; ++j) {
        const Vector lo = cfg.bounds.u_min - cfg.op.u0, hi = cfg.bounds.u_max - cfg.op.u0;
        const Vector u = profile.col(j).head(nphys).cwiseMax(lo).cwiseMin(hi);
        x_hat = cfg.model.step(x_hat, u, cfg.perfect_forecast ? w_dev(t + j * tau) : w_dev(t));
      }
    }

    // (c) hot start and q iterations at the predicted state
    const double t_next = t + elapsed;
    const Vector p_plus = hot_start_shift(p, par, elapsed / tau);
    // the first move of the next plan comes this long after the last applied change
    const double since_change = elapsed - tau * std::floor(elapsed / tau - 1e-9);
    const double rate_scale = std::clamp(since_change / tau, 1e-6, 1.0);
    const CondensedQp pred = builder.condense(x_hat, u_last, forecast(t, t_next), rate_scale);

    WindowRecord win;
    win.q = q;
    win.clipped = clipped;
    Vector p_new;
    if (cfg.solver == SolverKind::ode) {
      OdeSolverConfig oc = base_ode;
      oc.floor = floor + pred.constant;
      OdeSolverState st = init_state(pred.qp, oc, p_plus);
      if (!base_ode.reinit_step_per_update && carried_step) st.step_size = *carried_step;
      st = run_from(pred.qp, oc, std::move(st), q);
      if (st.cost_trace.size() != std::size_t(q) + 1 || st.iterations_done != q) {
        throw std::runtime_error("run_closed_loop: solver did not perform exactly q iterations");
      }
      carried_step = st.step_size;
      p_new = st.iterate;
      win.iterations_used = st.iterations_done;
      win.solver_status = "ok";
      win.cost_trace = std::move(st.cost_trace);
    } else {
      const int cap = cfg.unlimited_iterations ? cfg.unlimited_cap : q;
      const auto res = solve_active_set(pred.qp, warm, p_plus, cap, cfg.active_set);
      if (res.iterations_used > cap) throw std::runtime_error("run_closed_loop: active-set cap exceeded");
      warm = res.working_set;
      p_new = res.iterate;
      win.iterations_used = res.iterations_used;
      win.solver_status = to_string(res.status);
    }

    // (d) costs at the predicted and at the true state
    const CondensedQp truth = builder.condense(x, u_last, forecast(t_next, t_next), rate_scale);
    win.j_k = j_k;
    win.j_k_plus = j_of(pred, p_plus);
    win.j_hat_next = j_of(pred, p_new);
    win.j_next = j_of(truth, p_new);
    if (cfg.solver == SolverKind::ode) {
      win.j_k_plus = win.cost_trace.front();
      win.j_hat_next = win.cost_trace.back();
    }

    // (e) next number of iterations
    win.q_next = q;
    if (adaptive) {
      const auto inputs = collect_inputs(win.cost_trace, win.j_k, win.j_next, q);
      win.adaptation = update_q(inputs, cfg.adaptation);
      win.q_next = win.adaptation->q_next;
    }

    const auto split = builder.objective_split(p_new, x, forecast(t_next, t_next));
    win.deviation_cost = split.deviation;
    win.violation_cost = split.violation;
    win.max_row_violation =
        pred.qp.num_ineq() > 0 ? std::max(0.0, (pred.qp.ineq_matrix() * p_new - pred.qp.ineq_bound()).maxCoeff())
                               : 0.0;
    win.t = t_next;
    win.duration = elapsed;
    win.x_true = x;
    win.y = cfg.model.output(x, u_last, w_dev(t_next)) + cfg.op.y0;
    win.u_applied = u_last + cfg.op.u0;
    win.v = p_new.segment(nphys, par.n_virtual);
    win.p = p_new;
    rec.windows.push_back(std::move(win));

    p = std::move(p_new);
    u_prev = u_last;
    j_k = rec.windows.back().j_next;
    q = rec.windows.back().q_next;
    t = t_next;
  }
  rec.simulated_time = t;
  return rec;
}

/// J_{k+1} / J^_{k+1}: 1 when the model and the disturbance forecast are exact.
inline double mismatch_ratio(const RunRecord & rec, std::size_t k)
{
  if (k >= rec.windows.size()) throw std::out_of_range("mismatch_ratio: window index");
  return rec.windows[k].j_next / rec.windows[k].j_hat_next;
}

/**
 * @brief Problems found in a finished run; empty when every invariant holds
 *
 * Checks: the solver used exactly the allowed iterations (the active-set method may stop early
 * at an optimum), applied inputs lie in their boxes, every period lasts q quanta (plus the
 * preparation time in hardware-faithful mode), the run covers the scenario to one fine step,
 * and every cost is positive and finite.
 */
inline std::vector<std::string> check_run(const RunRecord & rec, const ControllerConfig & cfg, const Scenario & scenario,
                                          const ComputeBudget & budget, const PlantSim & plant)
{
  std::vector<std::string> out;
  auto fail = [&](std::size_t k, const std::string & what) { out.push_back("window " + std::to_string(k) + ": " + what); };
  const double quantum = budget.quantum(rec.solver);
  const int substeps = std::max(1, int(std::ceil(quantum / plant.fine_step - 1e-9)));
  const double h = quantum / substeps;
  const double prep = budget.hardware_faithful ? std::lround(budget.prep_time / h) * h : 0.0;
  for (std::size_t k = 0; k < rec.windows.size(); ++k) {
    const auto & w = rec.windows[k];
    const bool capped_as = rec.solver == SolverKind::active_set;
    if (!cfg.unlimited_iterations && (capped_as ? w.iterations_used > w.q : w.iterations_used != w.q)) {
      fail(k, "iterations_used " + std::to_string(w.iterations_used) + " vs allowance " + std::to_string(w.q));
    }
    if ((w.u_applied.array() < cfg.bounds.u_min.array() - 1e-9).any() ||
        (w.u_applied.array() > cfg.bounds.u_max.array() + 1e-9).any()) {
      fail(k, "applied input outside its box");
    }
    if (std::abs(w.duration - (w.q * quantum + prep)) > 1e-9 * (1.0 + w.duration)) fail(k, "period length");
    for (double j : {w.j_k, w.j_k_plus, w.j_hat_next, w.j_next}) {
      if (!(j > 0) || !std::isfinite(j)) {
        fail(k, "non-positive or non-finite cost");
        break;
      }
    }
  }
  if (std::abs(rec.simulated_time - scenario.duration) > h + 1e-9) {
    out.push_back("simulated time does not cover the scenario");
  }
  return out;
}

}  // namespace fastmpc
