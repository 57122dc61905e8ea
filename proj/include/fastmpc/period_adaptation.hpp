#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace fastmpc {

/**
 * @brief Cost values observed over one updating period
 *
 * j_k        J(p(t_k), x(t_k))
 * j_k_plus   J(p+(t_k), x^(t_k+1)), the hot start before any iteration
 * j_hat_next J(p(t_k+1), x^(t_k+1)), the delivered iterate at the predicted state
 * j_next     J(p(t_k+1), x(t_k+1)), the delivered iterate at the true state
 * j_first, j_prev_last, j_last: solver trace entries 0, q-1 and q at the predicted state
 */
struct AdaptationInputs
{
  int q = 2;
  double j_k = 1;
  double j_k_plus = 1;
  double j_hat_next = 1;
  double j_next = 1;
  double j_last = 1;
  double j_prev_last = 1;
  double j_first = 1;
};

struct AdaptationConfig
{
  int q_max = 20;
  int delta = 2;
  /// |log K| below this (with K < 1) uses dK/dq instead of the singular dt_r/dq
  double k_r_guard = 1e-9;

  void validate() const
  {
    if (q_max < 2) throw std::invalid_argument("AdaptationConfig: q_max must be >= 2");
    if (delta < 1 || delta > q_max) throw std::invalid_argument("AdaptationConfig: delta must lie in [1, q_max]");
    if (!(k_r_guard >= 0)) throw std::invalid_argument("AdaptationConfig: negative guard");
  }
};

struct AdaptationDiagnostics
{
  double e_r = 0, d_r = 0, k_r = 0;
  double dd_dq = 0, de_dq = 0, dk_dq = 0, dtr_dq = 0;
  double gamma = 0;
  int q_next = 2;
};

/**
 * @brief Next number of solver iterations per update
 *
 * E = J^_{k+1} / J+_k is the solver contraction over the period, D = (J_{k+1} J+_k) / (J^_{k+1} J_k)
 * the degradation from model error and horizon shift, K = E D. The sign of the estimated slope of
 * K (when K >= 1) or of the response time q / -log K (when K < 1) gives a step of size delta,
 * projected onto [2, q_max].
 */
inline AdaptationDiagnostics update_q(const AdaptationInputs & in, const AdaptationConfig & cfg)
{
  cfg.validate();
  if (in.q < 1) throw std::invalid_argument("update_q: q must be >= 1");
  for (double v : {in.j_k, in.j_k_plus, in.j_hat_next, in.j_next, in.j_last, in.j_prev_last, in.j_first}) {
    if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("update_q: cost values must be positive");
  }
  const double q = in.q;
  AdaptationDiagnostics out;
  out.e_r = in.j_hat_next / in.j_k_plus;
  out.d_r = (in.j_next * in.j_k_plus) / (in.j_hat_next * in.j_k);
  out.k_r = out.e_r * out.d_r;
  out.dd_dq = (out.d_r - 1.0) / q;
  out.de_dq = (in.j_last - in.j_prev_last) / in.j_first;
  out.dk_dq = out.e_r * out.dd_dq + out.d_r * out.de_dq;
  const double log_k = std::log(out.k_r);
  out.dtr_dq = (-log_k + (q / out.k_r) * out.dk_dq) / (log_k * log_k);

  if (out.k_r >= 1.0 || std::abs(log_k) < cfg.k_r_guard) {
    out.gamma = out.dk_dq;
  } else {
    out.gamma = out.dtr_dq;
  }
  const int sign = (out.gamma > 0) - (out.gamma < 0);
  out.q_next = std::max(2, std::min(cfg.q_max, in.q - cfg.delta * sign));
  return out;
}

/// Extracts the adaptation inputs from a solver cost trace of q + 1 entries.
inline AdaptationInputs collect_inputs(std::span<const double> trace, double j_k, double j_next, int q)
{
  if (q < 1) throw std::invalid_argument("collect_inputs: q must be >= 1");
  if (trace.size() < std::size_t(q) + 1) {
    throw std::invalid_argument("collect_inputs: cost trace is shorter than q + 1 entries");
  }
  AdaptationInputs in;
  in.q = q;
  in.j_k = j_k;
  in.j_next = j_next;
  in.j_k_plus = trace[0];
  in.j_first = trace[0];
  in.j_hat_next = trace[q];
  in.j_last = trace[q];
  in.j_prev_last = trace[q - 1];
  return in;
}

}  // namespace fastmpc
