#pragma once

#include "closed_loop.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <tuple>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fastmpc {

/**
 * @brief Aggregate performance of one closed-loop run
 *
 * Sums over updating periods are weighted by the period length in model samples, so runs with
 * different updating periods cover the same time span with the same weight.
 */
struct CostBreakdown
{
  double dev_total = 0;
  double cst_total = 0;
  double closed_loop_total = 0;
  double c1 = 0;
  double c2 = 0;
  int n_sim = 0;

  double open_loop_total() const { return dev_total + cst_total; }
};

struct OpenLoopSeries
{
  std::vector<double> deviation;
  std::vector<double> violation;
};

/// Per-period open-loop cost split of the delivered parameter vectors.
inline OpenLoopSeries open_loop_costs(const RunRecord & rec)
{
  OpenLoopSeries s;
  for (const auto & w : rec.windows) {
    s.deviation.push_back(w.deviation_cost);
    s.violation.push_back(w.violation_cost);
  }
  return s;
}

/// (c1, c2): maximum and mean over periods of the largest predicted constraint-row violation.
inline std::pair<double, double> violation_stats(const RunRecord & rec)
{
  if (rec.windows.empty()) return {0.0, 0.0};
  double mx = 0, sum = 0;
  for (const auto & w : rec.windows) {
    mx = std::max(mx, w.max_row_violation);
    sum += w.max_row_violation;
  }
  return {mx, sum / double(rec.windows.size())};
}

inline CostBreakdown cost_breakdown(const RunRecord & rec)
{
  CostBreakdown b;
  for (const auto & w : rec.windows) {
    const double weight = w.duration / rec.sample_period;
    b.dev_total += w.deviation_cost * weight;
    b.cst_total += w.violation_cost * weight;
  }
  b.closed_loop_total = rec.closed_loop_cost;
  std::tie(b.c1, b.c2) = violation_stats(rec);
  b.n_sim = int(rec.windows.size());
  return b;
}

struct SweepPoint
{
  std::string segment;
  double axis = 0;
  std::string mode;
  int q = 0;
  std::optional<CostBreakdown> cost;  // empty when the budget allows no iteration
  double normalized = 0;
};

struct SweepResult
{
  std::vector<double> axis;
  std::vector<SweepPoint> points;
  std::optional<double> crossover;
};

namespace detail {

/// Runs independent jobs on up to hardware_concurrency threads; results keep their input order.
template<typename T, typename F>
std::vector<T> parallel_map(std::size_t count, F && job)
{
  std::vector<T> out(count);
  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) out[i] = job(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) out[i] = job(i);
    });
  }
  for (auto & th : pool) th.join();
  return out;
}

inline void check_axis(const std::vector<double> & axis)
{
  if (axis.empty()) throw std::invalid_argument("sweep: empty axis");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!(axis[i] > 0)) throw std::invalid_argument("sweep: axis values must be positive");
    if (i > 0 && !(axis[i] > axis[i - 1])) throw std::invalid_argument("sweep: axis must be strictly increasing");
  }
}

}  // namespace detail

struct PowerSweepOptions
{
  double tau_u = 5.0;
};

/**
 * @brief Fixed-period comparison of both solvers across normalized compute power
 *
 * Each solver gets the iterations that fit in tau_u at the given power. The crossover is the
 * power where the active-set closed-loop cost first drops below the ODE one (linear
 * interpolation between axis points).
 */
inline SweepResult sweep_power(const PlantSim & plant, const ControllerConfig & base, const Scenario & scenario,
                               const std::vector<double> & axis, const ComputeBudget & budget,
                               const PowerSweepOptions & opt = {})
{
  detail::check_axis(axis);
  const std::array<SolverKind, 2> kinds{SolverKind::ode, SolverKind::active_set};
  SweepResult res;
  res.axis = axis;
  res.points = detail::parallel_map<SweepPoint>(axis.size() * 2, [&](std::size_t i) {
    const double power = axis[i / 2];
    const SolverKind kind = kinds[i % 2];
    SweepPoint pt;
    pt.segment = scenario.label;
    pt.axis = power;
    pt.mode = to_string(kind);
    ComputeBudget b = budget;
    b.normalized_power = power;
    try {
      pt.q = iterations_allowed(b, kind, opt.tau_u);
    } catch (const std::invalid_argument &) {
      return pt;
    }
    ControllerConfig cfg = base;
    cfg.solver = kind;
    cfg.unlimited_iterations = false;
    pt.cost = cost_breakdown(run_closed_loop(plant, cfg, scenario, b, false, pt.q));
    return pt;
  });

  std::optional<double> prev_axis, prev_diff;
  for (std::size_t k = 0; k < axis.size(); ++k) {
    const auto & ode = res.points[2 * k].cost;
    const auto & as = res.points[2 * k + 1].cost;
    if (!ode || !as) continue;
    const double diff = as->closed_loop_total - ode->closed_loop_total;
    if (diff < 0) {
      if (prev_diff && *prev_diff >= 0) {
        const double frac = *prev_diff / (*prev_diff - diff);
        res.crossover = *prev_axis + frac * (axis[k] - *prev_axis);
      } else {
        res.crossover = axis[k];
      }
      break;
    }
    prev_axis = axis[k];
    prev_diff = diff;
  }
  return res;
}

struct PeriodSweepOptions
{
  int adaptive_q0 = 2;
  /// reference run: active-set solved to optimality every updating period of this many seconds
  double reference_period = 5.0;
};

/// Per-segment summary of a period sweep.
struct PeriodSegmentSummary
{
  std::string segment;
  int best_fixed_q = 0;
  double best_fixed_cost = 0;
  double adaptive_cost = 0;
  double reference_cost = 0;
};

struct PeriodSweepResult
{
  SweepResult sweep;
  std::vector<PeriodSegmentSummary> segments;
};

/**
 * @brief Fixed-q versus adaptive updating periods for the ODE solver
 *
 * For every segment: one run per fixed q, one adaptive run, and one unlimited active-set run whose
 * open-loop cost normalizes the others.
 */
inline PeriodSweepResult sweep_period(const PlantSim & plant, const ControllerConfig & base,
                                      const std::vector<Scenario> & segments, const std::vector<int> & q_values,
                                      const ComputeBudget & budget, const PeriodSweepOptions & opt = {})
{
  if (q_values.empty()) throw std::invalid_argument("sweep_period: no q value");
  for (std::size_t i = 0; i < q_values.size(); ++i) {
    if (q_values[i] < 2 || q_values[i] > base.adaptation.q_max) throw std::invalid_argument("sweep_period: q range");
    if (i > 0 && q_values[i] <= q_values[i - 1]) throw std::invalid_argument("sweep_period: q must increase");
  }
  const std::size_t per_segment = q_values.size() + 2;
  auto points = detail::parallel_map<SweepPoint>(segments.size() * per_segment, [&](std::size_t i) {
    const auto & seg = segments[i / per_segment];
    const std::size_t slot = i % per_segment;
    ControllerConfig cfg = base;
    SweepPoint pt;
    pt.segment = seg.label;
    RunRecord rec;
    if (slot < q_values.size()) {
      cfg.solver = SolverKind::ode;
      pt.mode = "fixed";
      pt.q = q_values[slot];
      pt.axis = pt.q * budget.quantum(SolverKind::ode);
      rec = run_closed_loop(plant, cfg, seg, budget, false, pt.q);
    } else if (slot == q_values.size()) {
      cfg.solver = SolverKind::ode;
      pt.mode = "adaptive";
      pt.q = opt.adaptive_q0;
      rec = run_closed_loop(plant, cfg, seg, budget, true, pt.q);
    } else {
      cfg.solver = SolverKind::active_set;
      cfg.unlimited_iterations = true;
      pt.mode = "reference";
      pt.q = iterations_allowed(budget, SolverKind::active_set, opt.reference_period);
      pt.axis = pt.q * budget.quantum(SolverKind::active_set);
      rec = run_closed_loop(plant, cfg, seg, budget, false, pt.q);
    }
    pt.cost = cost_breakdown(rec);
    return pt;
  });

  PeriodSweepResult out;
  for (int q : q_values) out.sweep.axis.push_back(q * budget.quantum(SolverKind::ode));
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto first = points.begin() + std::ptrdiff_t(s * per_segment);
    const double ref = (first + std::ptrdiff_t(per_segment - 1))->cost->open_loop_total();
    const double norm = ref > 0 ? ref : 1.0;
    PeriodSegmentSummary sum;
    sum.segment = segments[s].label;
    sum.reference_cost = ref;
    for (std::size_t k = 0; k < per_segment; ++k) {
      auto & pt = *(first + std::ptrdiff_t(k));
      pt.normalized = pt.cost->open_loop_total() / norm;
      if (k < q_values.size() && (sum.best_fixed_q == 0 || pt.cost->open_loop_total() < sum.best_fixed_cost)) {
        sum.best_fixed_q = pt.q;
        sum.best_fixed_cost = pt.cost->open_loop_total();
      }
      if (k == q_values.size()) sum.adaptive_cost = pt.cost->open_loop_total();
    }
    out.segments.push_back(sum);
  }
  out.sweep.points = std::move(points);
  return out;
}

}  // namespace fastmpc
