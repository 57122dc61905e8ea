#pragma once

#include "lti_model.hpp"
#include "qp.hpp"

#include <algorithm>
#include <iostream>
#include <optional>
#include <vector>

namespace fastmpc {

/**
 * @brief Reduced control parametrization
 *
 * The profile over the horizon is piecewise affine between decision instants (1-based sample
 * indices) and held after the last one. Each instant carries `n_physical` actuator values
 * followed by `n_virtual` constraint-violation values, so p is instant-major:
 * p[i * (n_physical + n_virtual) + c].
 */
struct ControlParametrization
{
  std::vector<int> decision_instants{1, 2, 4, 8, 16, 50, 100};
  std::vector<int> check_instants{1, 2, 3, 4, 6, 8, 16, 24, 32, 48, 60, 72, 84, 100};
  int horizon = 100;
  int n_physical = 3;
  int n_virtual = 4;

  int n_inputs() const { return n_physical + n_virtual; }
  int num_params() const { return n_inputs() * int(decision_instants.size()); }

  /// Sorts and removes duplicate instants.
  ControlParametrization normalized() const
  {
    auto out = *this;
    for (auto * v : {&out.decision_instants, &out.check_instants}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    return out;
  }

  void validate() const
  {
    if (horizon < 1 || n_physical < 1 || n_virtual < 0) throw std::invalid_argument("ControlParametrization: sizes");
    if (decision_instants.empty()) throw std::invalid_argument("ControlParametrization: no decision instant");
    for (const auto * v : {&decision_instants, &check_instants}) {
      for (std::size_t i = 0; i < v->size(); ++i) {
        if ((*v)[i] < 1 || (*v)[i] > horizon) throw std::invalid_argument("ControlParametrization: instant range");
        if (i > 0 && (*v)[i] <= (*v)[i - 1]) {
          throw std::invalid_argument("ControlParametrization: instants must be strictly increasing");
        }
      }
    }
  }
};

/// Profile matrix: one row per (sample, input), rows ordered sample-major.
inline Matrix expansion_matrix(const ControlParametrization & par)
{
  par.validate();
  const int ni = par.n_inputs();
  const auto & inst = par.decision_instants;
  const int k = int(inst.size());
  Matrix e = Matrix::Zero(Eigen::Index(par.horizon) * ni, par.num_params());
  for (int j = 1; j <= par.horizon; ++j) {
    int lo = 0, hi = 0;
    double w_hi = 0;
    if (j <= inst.front()) {
      lo = hi = 0;
    } else if (j >= inst.back()) {
      lo = hi = k - 1;
    } else {
      while (inst[hi] < j) ++hi;
      lo = hi - 1;
      w_hi = double(j - inst[lo]) / double(inst[hi] - inst[lo]);
    }
    for (int c = 0; c < ni; ++c) {
      const auto row = Eigen::Index(j - 1) * ni + c;
      e(row, lo * ni + c) += 1.0 - w_hi;
      e(row, hi * ni + c) += w_hi;
    }
  }
  return e;
}

/// Full profile, one column per sample (n_inputs x horizon).
inline Matrix expand_profile(const Vector & p, const ControlParametrization & par)
{
  if (p.size() != par.num_params()) throw std::invalid_argument("expand_profile: parameter dimension");
  const Vector flat = expansion_matrix(par) * p;
  return Eigen::Map<const Matrix>(flat.data(), par.n_inputs(), par.horizon);
}

/**
 * @brief Translates the profile by `shift` samples (holding the last value) and re-samples it at
 * the decision instants. Fractional shifts interpolate the piecewise-affine profile.
 */
inline Vector hot_start_shift(const Vector & p, const ControlParametrization & par, double shift)
{
  if (p.size() != par.num_params()) throw std::invalid_argument("hot_start_shift: parameter dimension");
  if (!(shift >= 0)) throw std::invalid_argument("hot_start_shift: negative shift");
  if (shift == 0) return p;
  const Matrix prof = expand_profile(p, par);
  const int ni = par.n_inputs();
  Vector out(p.size());
  auto sample = [&](double j) -> Eigen::VectorXd {
    // profile at (possibly fractional) sample index j, 1-based, held at both ends
    j = std::clamp(j, 1.0, double(par.horizon));
    const int j0 = int(std::floor(j));
    const double frac = j - j0;
    if (frac == 0 || j0 >= par.horizon) return prof.col(j0 - 1);
    return (1.0 - frac) * prof.col(j0 - 1) + frac * prof.col(j0);
  };
  for (std::size_t i = 0; i < par.decision_instants.size(); ++i) {
    out.segment(Eigen::Index(i) * ni, ni) = sample(par.decision_instants[i] + shift);
  }
  return out;
}

inline Vector hot_start_shift(const Vector & p, const ControlParametrization & par, int shift)
{
  return hot_start_shift(p, par, double(shift));
}

/// First q physical inputs of the profile in absolute units (n_physical x q).
inline Matrix first_controls(const Vector & p, const ControlParametrization & par, int q, const Vector & u0)
{
  if (q < 0 || q > par.horizon) throw std::invalid_argument("first_controls: q out of range");
  if (u0.size() != par.n_physical) throw std::invalid_argument("first_controls: operating point size");
  Matrix out = expand_profile(p, par).topLeftCorner(par.n_physical, q);
  out.colwise() += u0;
  return out;
}

struct MpcWeights
{
  Matrix q_state;
  Matrix r_input;
  Matrix rho_violation;
};

/**
 * @brief Actuator, rate and soft output bounds in absolute units
 *
 * Rate bounds are increments per model sample. Rate rows are generated per transition between
 * consecutive decision values (the first against the previous input), earliest transitions
 * first; `rate_rows` truncates that list.
 */
struct MpcBounds
{
  Vector u_min, u_max;
  Vector du_min, du_max;
  Vector yc_min, yc_max;
  std::vector<int> constrained_output_indices;
  int rate_rows = 38;
  double virtual_upper = 1e6;

  /// Swaps inverted output bound pairs; returns how many were swapped.
  int sort_output_bounds()
  {
    int swapped = 0;
    for (Eigen::Index i = 0; i < yc_min.size(); ++i) {
      if (yc_min[i] > yc_max[i]) {
        std::swap(yc_min[i], yc_max[i]);
        ++swapped;
      }
    }
    if (swapped > 0) std::cerr << "warning: " << swapped << " inverted output bound pair(s) were sorted\n";
    return swapped;
  }
};

/// Condensed problem plus the z-independent part of the objective.
struct CondensedQp
{
  QpProblem qp;
  double constant = 0;
};

/// Deviation-cost split of the MPC objective at a given p.
struct ObjectiveSplit
{
  double deviation = 0;
  double violation = 0;
};

/**
 * @brief Condensed MPC problem generator
 *
 * The Hessian and the constraint matrix depend only on the structure (model, parametrization,
 * weights, bounds) and are built once. `condense` refreshes the affine term, the constraint
 * right-hand side and the constant for a given state, previous input and disturbance forecast,
 * all in deviation coordinates.
 */
class MpcProblemBuilder
{
public:
  MpcProblemBuilder(LtiModel model, OperatingPoint op, ControlParametrization par, MpcWeights weights,
                    MpcBounds bounds)
      : model_(std::move(model)), op_(std::move(op)), par_(std::move(par)), weights_(std::move(weights)),
        bounds_(std::move(bounds))
  {
    model_.validate();
    op_.validate(model_);
    par_.validate();
    const auto n = model_.num_states();
    const int nphys = par_.n_physical, nvirt = par_.n_virtual, ni = par_.n_inputs();
    const auto ncon = Eigen::Index(bounds_.constrained_output_indices.size());
    if (model_.num_inputs() != nphys) throw std::invalid_argument("MpcProblemBuilder: physical input count");
    if (nvirt != 2 * ncon) throw std::invalid_argument("MpcProblemBuilder: need one up and one low slack per output");
    if (weights_.q_state.rows() != n || weights_.q_state.cols() != n) throw std::invalid_argument("Q size");
    if (weights_.r_input.rows() != nphys || weights_.r_input.cols() != nphys) throw std::invalid_argument("R size");
    if (weights_.rho_violation.rows() != nvirt || weights_.rho_violation.cols() != nvirt) {
      throw std::invalid_argument("rho size");
    }
    if (bounds_.u_min.size() != nphys || bounds_.u_max.size() != nphys || bounds_.du_min.size() != nphys ||
        bounds_.du_max.size() != nphys) {
      throw std::invalid_argument("MpcBounds: input bound sizes");
    }
    if (bounds_.yc_min.size() != ncon || bounds_.yc_max.size() != ncon) throw std::invalid_argument("MpcBounds: output");
    for (int idx : bounds_.constrained_output_indices) {
      if (idx < 0 || idx >= model_.num_outputs()) throw std::invalid_argument("MpcBounds: output index");
    }
    for (Eigen::Index i = 0; i < nphys; ++i) {
      if (bounds_.u_min[i] > bounds_.u_max[i]) throw std::invalid_argument("MpcBounds: u_min > u_max");
      if (bounds_.du_min[i] > bounds_.du_max[i]) throw std::invalid_argument("MpcBounds: du_min > du_max");
    }

    const int np = par_.num_params();
    const int horizon = par_.horizon;
    const Matrix e = expansion_matrix(par_);

    c_con_.resize(ncon, n);
    d_con_.resize(ncon, nphys);
    g_con_.resize(ncon, model_.num_disturbances());
    for (Eigen::Index k = 0; k < ncon; ++k) {
      c_con_.row(k) = model_.c.row(bounds_.constrained_output_indices[k]);
      d_con_.row(k) = model_.d.row(bounds_.constrained_output_indices[k]);
      g_con_.row(k) = model_.g.row(bounds_.constrained_output_indices[k]);
    }

    // state sensitivities S_j (n x np), j = 1..N
    sens_.resize(horizon);
    eu_.resize(horizon);
    ev_.resize(horizon);
    Matrix s = Matrix::Zero(n, np);
    hessian_ = Matrix::Zero(np, np);
    q_sens_ = Matrix::Zero(n * horizon, np);
    for (int j = 0; j < horizon; ++j) {
      eu_[j] = e.middleRows(Eigen::Index(j) * ni, nphys);
      ev_[j] = e.middleRows(Eigen::Index(j) * ni + nphys, nvirt);
      s = model_.a * s + model_.b * eu_[j];
      sens_[j] = s;
      const Matrix qs = weights_.q_state * s;
      q_sens_.middleRows(Eigen::Index(j) * n, n) = qs;
      hessian_.noalias() += s.transpose() * qs;
      hessian_.noalias() += eu_[j].transpose() * weights_.r_input * eu_[j];
      hessian_.noalias() += ev_[j].transpose() * weights_.rho_violation * ev_[j];
    }
    hessian_ = 0.5 * (hessian_ + hessian_.transpose()).eval();
    QpProblem::check_psd(hessian_);

    // soft output rows: per check instant [up_0..up_m, lo_0..lo_m]
    const auto nchk = Eigen::Index(par_.check_instants.size());
    const Eigen::Index n_out_rows = 2 * ncon * nchk;
    const int n_inst = int(par_.decision_instants.size());
    const int rate_available = 2 * nphys * n_inst;
    n_rate_rows_ = std::clamp(bounds_.rate_rows, 0, rate_available);
    gamma_mat_ = Matrix::Zero(n_out_rows + n_rate_rows_, np);
    gamma_const_ = Vector::Zero(gamma_mat_.rows());
    for (Eigen::Index ci = 0; ci < nchk; ++ci) {
      const int j = par_.check_instants[ci] - 1;
      const Matrix yc = c_con_ * sens_[j] + d_con_ * eu_[j];
      for (Eigen::Index k = 0; k < ncon; ++k) {
        const Eigen::Index up = ci * 2 * ncon + k, lo = up + ncon;
        const double y0 = op_.y0[bounds_.constrained_output_indices[k]];
        gamma_mat_.row(up) = yc.row(k) - ev_[j].row(k);
        gamma_const_[up] = bounds_.yc_max[k] - y0;
        gamma_mat_.row(lo) = -yc.row(k) - ev_[j].row(ncon + k);
        gamma_const_[lo] = -(bounds_.yc_min[k] - y0);
      }
    }
    // rate rows, earliest transitions first
    int row = 0;
    for (int t = 0; t < n_inst && row < n_rate_rows_; ++t) {
      const int gap = par_.decision_instants[t] - (t == 0 ? 0 : par_.decision_instants[t - 1]);
      for (int c = 0; c < nphys && row < n_rate_rows_; ++c) {
        for (int side = 0; side < 2 && row < n_rate_rows_; ++side, ++row) {
          const double sign = side == 0 ? 1.0 : -1.0;
          const Eigen::Index r = n_out_rows + row;
          gamma_mat_(r, t * ni + c) = sign;
          if (t > 0) gamma_mat_(r, (t - 1) * ni + c) = -sign;
          gamma_const_[r] = side == 0 ? bounds_.du_max[c] * gap : -bounds_.du_min[c] * gap;
          rate_meta_.push_back({t == 0 ? c : -1, sign});
        }
      }
    }

    lower_ = Vector::Zero(np);
    upper_ = Vector::Zero(np);
    for (int i = 0; i < n_inst; ++i) {
      for (int c = 0; c < ni; ++c) {
        const auto idx = Eigen::Index(i) * ni + c;
        if (c < nphys) {
          lower_[idx] = bounds_.u_min[c] - op_.u0[c];
          upper_[idx] = bounds_.u_max[c] - op_.u0[c];
        } else {
          lower_[idx] = 0.0;
          upper_[idx] = bounds_.virtual_upper;
        }
      }
    }
  }

  const LtiModel & model() const { return model_; }
  const OperatingPoint & operating_point() const { return op_; }
  const ControlParametrization & parametrization() const { return par_; }
  const MpcWeights & weights() const { return weights_; }
  const MpcBounds & bounds() const { return bounds_; }
  const Matrix & hessian() const { return hessian_; }
  const Matrix & ineq_matrix() const { return gamma_mat_; }
  const Vector & lower() const { return lower_; }
  const Vector & upper() const { return upper_; }
  Eigen::Index num_output_rows() const { return gamma_mat_.rows() - n_rate_rows_; }
  int num_rate_rows() const { return n_rate_rows_; }

  /// Free response (p = 0) X_j for j = 1..N as columns.
  Matrix free_response(const Vector & x, const Matrix & w_forecast) const
  {
    check_inputs(x, w_forecast);
    Matrix fr(model_.num_states(), par_.horizon);
    Vector s = x;
    for (int j = 0; j < par_.horizon; ++j) {
      s = model_.a * s + model_.f * w_forecast.col(j);
      fr.col(j) = s;
    }
    return fr;
  }

  /// Predicted states X_j(p) for j = 1..N as columns.
  Matrix predicted_states(const Vector & p, const Vector & x, const Matrix & w_forecast) const
  {
    Matrix xs = free_response(x, w_forecast);
    for (int j = 0; j < par_.horizon; ++j) xs.col(j) += sens_[j] * p;
    return xs;
  }

  /// `first_rate_scale` in (0, 1] shrinks the rate bound of the first move, for re-planning
  /// after less than one model sample.
  CondensedQp condense(const Vector & x, const Vector & u_prev, const Matrix & w_forecast,
                       double first_rate_scale = 1.0) const
  {
    if (u_prev.size() != par_.n_physical) throw std::invalid_argument("condense: previous input dimension");
    if (!(first_rate_scale > 0 && first_rate_scale <= 1)) throw std::invalid_argument("condense: rate scale");
    const Matrix fr = free_response(x, w_forecast);
    const Eigen::Map<const Vector> fr_flat(fr.data(), fr.size());
    Vector affine = 2.0 * (q_sens_.transpose() * fr_flat);
    double constant = 0;
    for (int j = 0; j < par_.horizon; ++j) constant += fr.col(j).dot(weights_.q_state * fr.col(j));

    Vector bound = gamma_const_;
    const auto ncon = c_con_.rows();
    for (std::size_t ci = 0; ci < par_.check_instants.size(); ++ci) {
      const int j = par_.check_instants[ci] - 1;
      const Vector y_free = c_con_ * fr.col(j) + g_con_ * w_forecast.col(j);
      for (Eigen::Index k = 0; k < ncon; ++k) {
        const Eigen::Index up = Eigen::Index(ci) * 2 * ncon + k, lo = up + ncon;
        bound[up] -= y_free[k];
        bound[lo] += y_free[k];
      }
    }
    const auto base = num_output_rows();
    for (int r = 0; r < n_rate_rows_; ++r) {
      if (rate_meta_[r].first_input < 0) continue;
      bound[base + r] = gamma_const_[base + r] * first_rate_scale + rate_meta_[r].sign * u_prev[rate_meta_[r].first_input];
    }
    return {QpProblem::trusted(hessian_, std::move(affine), gamma_mat_, std::move(bound), lower_, upper_), constant};
  }

  /// Deviation and violation parts of the MPC objective; their sum equals J0(p) + constant.
  ObjectiveSplit objective_split(const Vector & p, const Vector & x, const Matrix & w_forecast) const
  {
    const Matrix xs = predicted_states(p, x, w_forecast);
    ObjectiveSplit out;
    for (int j = 0; j < par_.horizon; ++j) {
      const Vector u = eu_[j] * p;
      const Vector v = ev_[j] * p;
      out.deviation += xs.col(j).dot(weights_.q_state * xs.col(j)) + u.dot(weights_.r_input * u);
      out.violation += v.dot(weights_.rho_violation * v);
    }
    return out;
  }

private:
  void check_inputs(const Vector & x, const Matrix & w_forecast) const
  {
    if (x.size() != model_.num_states()) throw std::invalid_argument("MpcProblemBuilder: state dimension");
    if (w_forecast.rows() != model_.num_disturbances() || w_forecast.cols() < par_.horizon) {
      throw std::invalid_argument("MpcProblemBuilder: disturbance forecast must cover the horizon");
    }
  }

  struct RateRow
  {
    int first_input;  // >= 0 when the row compares against the previous input
    double sign;
  };

  LtiModel model_;
  OperatingPoint op_;
  ControlParametrization par_;
  MpcWeights weights_;
  MpcBounds bounds_;

  Matrix c_con_, d_con_, g_con_;
  std::vector<Matrix> sens_, eu_, ev_;
  Matrix q_sens_;
  Matrix hessian_;
  Matrix gamma_mat_;
  Vector gamma_const_;
  std::vector<RateRow> rate_meta_;
  int n_rate_rows_ = 0;
  Vector lower_, upper_;
};

/// One-shot condensing; prefer MpcProblemBuilder when the structure is reused.
inline CondensedQp condense(const LtiModel & model, const OperatingPoint & op, const ControlParametrization & par,
                            const MpcWeights & weights, const MpcBounds & bounds, const Vector & x,
                            const Vector & u_prev, const Matrix & w_forecast)
{
  return MpcProblemBuilder(model, op, par, weights, bounds).condense(x, u_prev, w_forecast);
}

}  // namespace fastmpc
