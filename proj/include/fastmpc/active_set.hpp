#pragma once

#include "qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <optional>
#include <vector>

namespace fastmpc {

/**
 * @brief Constraints treated as equalities by the active-set method
 *
 * Identifiers: [0, nc) are inequality rows, [nc, nc+n) upper bounds, [nc+n, nc+2n) lower bounds.
 * Kept sorted.
 */
struct WorkingSet
{
  std::vector<int> active_indices;

  bool contains(int id) const { return std::binary_search(active_indices.begin(), active_indices.end(), id); }
  void insert(int id) { active_indices.insert(std::lower_bound(active_indices.begin(), active_indices.end(), id), id); }
  void erase(int id)
  {
    auto it = std::lower_bound(active_indices.begin(), active_indices.end(), id);
    if (it != active_indices.end() && *it == id) active_indices.erase(it);
  }
  std::size_t size() const { return active_indices.size(); }
  bool operator==(const WorkingSet &) const = default;
};

enum class ActiveSetStatus { optimal, iteration_capped, infeasible_subproblem };

inline const char * to_string(ActiveSetStatus s)
{
  switch (s) {
    case ActiveSetStatus::optimal: return "optimal";
    case ActiveSetStatus::iteration_capped: return "iteration_capped";
    case ActiveSetStatus::infeasible_subproblem: return "infeasible_subproblem";
  }
  return "unknown";
}

struct ActiveSetResult
{
  Vector iterate;
  WorkingSet working_set;
  int iterations_used = 0;
  ActiveSetStatus status = ActiveSetStatus::iteration_capped;
  /// ordered [inequality rows, upper box, lower box]; meaningful when status is optimal
  Vector multipliers;
  /// iterate after each iteration (index 0 is the starting point)
  std::vector<Vector> path;
};

struct ActiveSetOptions
{
  double feasibility_tol = 1e-9;
  double dual_tol = 1e-9;
  double step_floor = 1e-12;
  /// smallest singular value of the row-normalized working-set matrix
  double independence_tol = 1e-8;
  bool record_path = false;
};

namespace detail {

class ConstraintView
{
public:
  explicit ConstraintView(const QpProblem & p) : prob_(p), n_(int(p.num_vars())), nc_(int(p.num_ineq())) {}

  int count() const { return nc_ + 2 * n_; }

  bool finite(int id) const { return std::isfinite(bound(id)); }

  double bound(int id) const
  {
    if (id < nc_) return prob_.ineq_bound()[id];
    if (id < nc_ + n_) return prob_.upper()[id - nc_];
    return -prob_.lower()[id - nc_ - n_];
  }

  double dot(int id, const Vector & v) const
  {
    if (id < nc_) return prob_.ineq_matrix().row(id).dot(v);
    if (id < nc_ + n_) return v[id - nc_];
    return -v[id - nc_ - n_];
  }

  void fill_row(int id, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const
  {
    if (id < nc_) {
      row = prob_.ineq_matrix().row(id);
      return;
    }
    row.setZero();
    if (id < nc_ + n_) row[id - nc_] = 1.0;
    else row[id - nc_ - n_] = -1.0;
  }

  /// b - a'z
  double slack(int id, const Vector & z) const { return bound(id) - dot(id, z); }

  double tol(int id, double rel) const { return rel * (1.0 + std::abs(bound(id))); }

private:
  const QpProblem & prob_;
  int n_;
  int nc_;
};

/// Cholesky factor of 2H (+ regularization when needed).
inline Eigen::LLT<Matrix> factor_hessian(const QpProblem & prob)
{
  const Matrix h = 2.0 * prob.hessian();
  Eigen::LLT<Matrix> llt(h);
  auto well_conditioned = [](const Eigen::LLT<Matrix> & f) {
    if (f.info() != Eigen::Success) return false;
    const Vector d = Matrix(f.matrixL()).diagonal();
    if (d.size() == 0) return true;
    const double lo = d.minCoeff(), hi = d.maxCoeff();
    return lo > 0 && (lo * lo) / (hi * hi) > 1e-14;
  };
  if (!well_conditioned(llt)) {
    const double reg = 1e-9 * std::max(1.0, h.cwiseAbs().maxCoeff());
    llt.compute(h + reg * Matrix::Identity(h.rows(), h.cols()));
  }
  return llt;
}

struct EqpSolution
{
  Vector target;
  Vector lambda;  // one per working-set entry
};

/// Minimizes the QP objective subject to the working set as equalities.
inline std::optional<EqpSolution> solve_eqp(const ConstraintView & cons, const Eigen::LLT<Matrix> & hfac,
                                            const Vector & affine, const WorkingSet & ws)
{
  const auto n = affine.size();
  const auto m = Eigen::Index(ws.size());
  const Vector hinv_f = hfac.solve(affine);
  EqpSolution sol;
  if (m == 0) {
    sol.target = -hinv_f;
    sol.lambda = Vector(0);
    return sol;
  }
  Matrix a(m, n);
  Vector b(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    cons.fill_row(ws.active_indices[r], a.row(r));
    b[r] = cons.bound(ws.active_indices[r]);
  }
  const Matrix hinv_at = hfac.solve(a.transpose());
  const Matrix schur = a * hinv_at;
  const Vector rhs = -b - a * hinv_f;
  Eigen::LLT<Matrix> sfac(schur);
  if (sfac.info() == Eigen::Success) {
    sol.lambda = sfac.solve(rhs);
  } else {
    // nearly dependent working set: minimum-norm multipliers, accepted when consistent
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(schur);
    cod.setThreshold(1e-12);
    sol.lambda = cod.solve(rhs);
    if ((schur * sol.lambda - rhs).norm() > 1e-6 * (1.0 + rhs.norm())) return std::nullopt;
  }
  sol.target = -hinv_f - hinv_at * sol.lambda;
  if (!sol.target.allFinite() || !sol.lambda.allFinite()) return std::nullopt;
  return sol;
}

/// Whether constraint `id` can join the working set: the row-normalized constraint matrix of the
/// enlarged set keeps its smallest singular value above `tol`.
inline bool independent_of(const ConstraintView & cons, const WorkingSet & ws, int id, Eigen::Index n, double tol)
{
  const auto m = Eigen::Index(ws.size());
  if (m >= n) return false;
  Matrix rows(m + 1, n);
  for (Eigen::Index r = 0; r <= m; ++r) {
    cons.fill_row(r < m ? ws.active_indices[r] : id, rows.row(r));
    const double norm = rows.row(r).norm();
    if (!(norm > 0)) return false;
    rows.row(r) /= norm;
  }
  if (m == 0) return true;
  const Eigen::JacobiSVD<Matrix> svd(rows);
  return svd.singularValues().minCoeff() > tol;
}

/// Working-set member whose row carries the largest positive share of row `id` in a least-squares
/// expansion over the working-set rows; -1 when none has a positive coefficient.
inline int exchange_partner(const ConstraintView & cons, const WorkingSet & ws, int id, Eigen::Index n)
{
  const auto m = Eigen::Index(ws.size());
  if (m == 0) return -1;
  Matrix at(n, m);
  Eigen::RowVectorXd row(n);
  for (Eigen::Index r = 0; r < m; ++r) {
    cons.fill_row(ws.active_indices[r], row);
    at.col(r) = row.transpose() / row.norm();
  }
  cons.fill_row(id, row);
  const Vector c = at.completeOrthogonalDecomposition().solve(Vector(row.transpose() / row.norm()));
  int best = -1;
  double share = 1e-8;
  for (Eigen::Index r = 0; r < m; ++r) {
    if (c[r] > share) {
      share = c[r];
      best = ws.active_indices[r];
    }
  }
  return best;
}

/// Problem over [z; t]: rows in `relaxed` read a'z - t <= b, cost adds weight * t + scale * t^2.
inline QpProblem elastic_problem(const QpProblem & prob, const std::vector<int> & relaxed, double weight)
{
  const auto n = prob.num_vars();
  const auto nc = prob.num_ineq();
  Matrix h = Matrix::Zero(n + 1, n + 1);
  h.topLeftCorner(n, n) = prob.hessian();
  const double diag_mean = n > 0 ? prob.hessian().diagonal().cwiseAbs().mean() : 0.0;
  h(n, n) = diag_mean > 0 ? diag_mean : 1.0;
  Vector f(n + 1);
  f << prob.affine(), weight;
  Matrix g = Matrix::Zero(nc, n + 1);
  g.leftCols(n) = prob.ineq_matrix();
  for (int r : relaxed) g(r, n) = -1.0;
  Vector lo(n + 1), hi(n + 1);
  lo << prob.lower(), 0.0;
  hi << prob.upper(), kInf;
  return QpProblem::trusted(std::move(h), std::move(f), std::move(g), prob.ineq_bound(), std::move(lo), std::move(hi));
}

/// Constraint identifier of the original problem in the elastic numbering (one extra variable).
inline int to_elastic_id(int id, int nc, int n) { return id < nc + n ? id : id + 1; }

/// Inverse of to_elastic_id; -1 for the bounds on t.
inline int from_elastic_id(int id, int nc, int n)
{
  if (id < nc + n) return id;
  if (id == nc + n || id == nc + 2 * n + 1) return -1;
  return id - 1;
}

}  // namespace detail

/**
 * @brief Primal active-set QP solve with an iteration cap
 *
 * One iteration is one equality-constrained KKT solve followed by at most one working-set
 * change: add the blocking constraint of the ratio test or drop the most negative multiplier.
 * Ties go to the lowest constraint index; after a degenerate step the drop follows index order.
 * A blocker that is numerically dependent on the working set replaces the member carrying most
 * of its row, or is skipped when no member does.
 *
 * Start: z0 is projected onto the box. A warm working set is first tried directly: when the
 * minimizer on it is feasible the iteration continues from there. Otherwise the warm members
 * that are tight at z0 are kept. When inequality rows are violated at z0, the method runs on an
 * elastic copy in which those rows are relaxed by one variable t >= 0 with a large linear cost;
 * t starts at the largest violation and its lower bound joins the working set, so every iterate
 * is feasible for the relaxed problem.
 */
inline ActiveSetResult solve_active_set(const QpProblem & prob, const std::optional<WorkingSet> & warm,
                                        const Vector & z0, int cap, const ActiveSetOptions & opt = {})
{
  if (cap < 1) throw std::invalid_argument("solve_active_set: cap must be >= 1");
  prob.check_point(z0);
  const int n = int(prob.num_vars());
  const int nc = int(prob.num_ineq());

  ActiveSetResult res;
  res.status = ActiveSetStatus::iteration_capped;
  Vector z = prob.project(z0);
  if (opt.record_path) res.path.push_back(z);

  // the working problem: the original one, or its elastic copy over [z; t]
  const QpProblem * work = &prob;
  std::optional<QpProblem> ext;
  std::optional<detail::ConstraintView> cons;
  cons.emplace(prob);
  auto hfac = detail::factor_hessian(prob);
  bool elastic = false;
  int nv = n;
  int t_lower = -1;
  double weight = 0;
  std::vector<int> relaxed;

  WorkingSet ws;
  auto tight = [&](int id) { return std::abs(cons->slack(id, z)) <= cons->tol(id, opt.feasibility_tol); };
  auto try_add = [&](int id) {
    if (ws.contains(id) || !cons->finite(id)) return false;
    if (!detail::independent_of(*cons, ws, id, nv, opt.independence_tol)) return false;
    ws.insert(id);
    return true;
  };
  auto feasible = [&](const Vector & v) {
    for (int id = 0; id < cons->count(); ++id) {
      if (cons->finite(id) && cons->slack(id, v) < -cons->tol(id, opt.feasibility_tol)) return false;
    }
    return true;
  };


  std::optional<detail::EqpSolution> jump;
  if (warm && !warm->active_indices.empty()) {
    for (int id : warm->active_indices) {
      if (id >= 0 && id < nc + 2 * n) try_add(id);
    }
    ++res.iterations_used;
    jump = detail::solve_eqp(*cons, hfac, prob.affine(), ws);
    if (jump && feasible(jump->target)) {
      z = jump->target;
      if (opt.record_path) res.path.push_back(z);
    } else {
      jump.reset();
      WorkingSet keep;
      for (int id : ws.active_indices) {
        if (tight(id)) keep.insert(id);
      }
      ws = keep;
    }
  }

  if (!jump) {
    double worst = 0;
    for (int r = 0; r < nc; ++r) {
      const double s = cons->slack(r, z);
      if (s < -cons->tol(r, opt.feasibility_tol)) {
        relaxed.push_back(r);
        worst = std::max(worst, -s);
      }
    }
    if (!relaxed.empty()) {
      elastic = true;
      nv = n + 1;
      t_lower = nc + 2 * nv - 1;
      const double h_scale = prob.hessian().cwiseAbs().maxCoeff();
      const double f_scale = n ? prob.affine().cwiseAbs().maxCoeff() : 0.0;
      const double z_scale = n ? z.cwiseAbs().maxCoeff() : 0.0;
      weight = 1e3 * (1.0 + f_scale + 2.0 * h_scale * (1.0 + z_scale));
      ext.emplace(detail::elastic_problem(prob, relaxed, weight));
      work = &*ext;
      cons.emplace(*ext);
      hfac = detail::factor_hessian(*ext);
      Vector ze(nv);
      ze << z, worst;
      z = std::move(ze);
      WorkingSet mapped;
      for (int id : ws.active_indices) mapped.insert(detail::to_elastic_id(id, nc, n));
      ws.active_indices.clear();
      for (int id : mapped.active_indices) {
        if (tight(id)) try_add(id);
      }
      try_add(t_lower);
    }
  }

  auto check_multipliers = [&](const detail::EqpSolution & eqp, bool degenerate) {
    int drop = -1;
    double most_negative = -opt.dual_tol;
    for (std::size_t r = 0; r < ws.size(); ++r) {
      const double l = eqp.lambda[Eigen::Index(r)];
      if (degenerate) {
        if (l < -opt.dual_tol) return ws.active_indices[r];
      } else if (l < most_negative) {
        most_negative = l;
        drop = ws.active_indices[r];
      }
    }
    return drop;
  };

  auto finish_optimal = [&](const detail::EqpSolution & eqp) {
    res.status = ActiveSetStatus::optimal;
    res.multipliers = Vector::Zero(nc + 2 * n);
    for (std::size_t r = 0; r < ws.size(); ++r) {
      const int id = elastic ? detail::from_elastic_id(ws.active_indices[r], nc, n) : ws.active_indices[r];
      if (id >= 0) res.multipliers[id] = std::max(eqp.lambda[Eigen::Index(r)], 0.0);
    }
  };

  int escalations = 0;
  bool degenerate = false;
  // after a successful jump the KKT solution at z is already known
  std::optional<detail::EqpSolution> pending = std::move(jump);
  for (;;) {
    detail::EqpSolution eqp;
    if (pending) {
      eqp = std::move(*pending);
      pending.reset();
    } else {
      if (res.iterations_used >= cap) break;
      ++res.iterations_used;
      auto sol = detail::solve_eqp(*cons, hfac, work->affine(), ws);
      if (!sol) {
        res.status = ActiveSetStatus::infeasible_subproblem;
        break;
      }
      eqp = std::move(*sol);
      const Vector d = eqp.target - z;
      const double d_scale = 1.0 + d.cwiseAbs().maxCoeff();
      double alpha = 1.0;
      int blocking = -1;
      std::vector<int> skipped;
      int leaving = -1;
      for (;;) {
        alpha = 1.0;
        blocking = -1;
        for (int id = 0; id < cons->count(); ++id) {
          if (ws.contains(id) || !cons->finite(id)) continue;
          if (std::find(skipped.begin(), skipped.end(), id) != skipped.end()) continue;
          const double ad = cons->dot(id, d);
          if (ad <= 1e-14 * d_scale) continue;
          const double s = cons->slack(id, z);
          if (s - ad >= -cons->tol(id, opt.feasibility_tol)) continue;
          const double step = std::max(s, 0.0) / ad;
          if (step < alpha) {
            alpha = step;
            blocking = id;
          }
        }
        if (blocking < 0 || detail::independent_of(*cons, ws, blocking, nv, opt.independence_tol)) break;
        // dependent blocker: swap it for the member that carries it
        leaving = detail::exchange_partner(*cons, ws, blocking, nv);
        if (leaving >= 0) {
          WorkingSet swapped = ws;
          swapped.erase(leaving);
          if (detail::independent_of(*cons, swapped, blocking, nv, opt.independence_tol)) break;
          leaving = -1;
        }
        skipped.push_back(blocking);
      }
      if (blocking >= 0) {
        z += alpha * d;
        degenerate = alpha * d.norm() < opt.step_floor;
        if (leaving >= 0) ws.erase(leaving);
        ws.insert(blocking);
        if (opt.record_path) res.path.push_back(z.head(n));
        continue;
      }
      degenerate = d.norm() < opt.step_floor;
      z = eqp.target;
      if (opt.record_path) res.path.push_back(z.head(n));
    }

    // z minimizes the objective on the working set
    const int drop = check_multipliers(eqp, degenerate);
    if (elastic && drop == t_lower) {
      // the linear cost on t is too small to enforce the relaxed rows
      if (escalations == 4) {
        res.status = ActiveSetStatus::infeasible_subproblem;
        break;
      }
      ++escalations;
      weight *= 1e3;
      ext.emplace(detail::elastic_problem(prob, relaxed, weight));
      cons.emplace(*ext);
      continue;
    }
    if (drop >= 0) {
      ws.erase(drop);
      continue;
    }
    if (elastic && z[n] > opt.feasibility_tol) {
      if (!try_add(t_lower)) {
        res.status = ActiveSetStatus::infeasible_subproblem;
        break;
      }
      continue;
    }
    if (!feasible(z)) {
      // a dependent blocker was skipped and ended up violated
      res.status = ActiveSetStatus::infeasible_subproblem;
      break;
    }
    finish_optimal(eqp);
    break;
  }

  res.iterate = prob.project(Vector(z.head(n)));
  for (int id : ws.active_indices) {
    const int orig = elastic ? detail::from_elastic_id(id, nc, n) : id;
    if (orig >= 0) res.working_set.insert(orig);
  }
  return res;
}

}  // namespace fastmpc
