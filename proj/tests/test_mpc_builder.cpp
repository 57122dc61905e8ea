#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fastmpc;

namespace {

MpcProblemBuilder benchmark_builder(MpcBounds bounds = BenchmarkPlant::bounds())
{
  const auto cfg = BenchmarkPlant{}.controller();
  return MpcProblemBuilder(cfg.model, cfg.op, cfg.par, cfg.weights, bounds);
}

Vector random_vector(std::mt19937_64 & rng, Eigen::Index n, double scale)
{
  std::normal_distribution<double> g(0, scale);
  Vector v(n);
  for (auto & x : v) x = g(rng);
  return v;
}

Matrix random_forecast(std::mt19937_64 & rng, int horizon, double scale)
{
  std::normal_distribution<double> g(0, scale);
  Matrix w(1, horizon);
  for (int j = 0; j < horizon; ++j) w(0, j) = g(rng);
  return w;
}

}  // namespace

TEST(Parametrization, ExpandProfile)
{
  ControlParametrization par;
  par.decision_instants = {1, 4};
  par.check_instants = {4};
  par.horizon = 5;
  par.n_physical = 1;
  par.n_virtual = 0;
  const Matrix prof = expand_profile(Vector{{0.0, 3.0}}, par);
  EXPECT_DOUBLE_EQ(prof(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(prof(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(prof(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(prof(0, 3), 3.0);
  EXPECT_DOUBLE_EQ(prof(0, 4), 3.0);
  const Matrix flat = expand_profile(Vector::Constant(2, 1.5), par);
  EXPECT_TRUE((flat.array() == 1.5).all());
}

TEST(Parametrization, DuplicateInstantsAreRemoved)
{
  ControlParametrization par;
  par.decision_instants = {1, 2, 4, 8, 16, 50, 50, 100};
  EXPECT_THROW(par.validate(), std::invalid_argument);
  const auto fixed = par.normalized();
  EXPECT_EQ(fixed.decision_instants, (std::vector<int>{1, 2, 4, 8, 16, 50, 100}));
  EXPECT_EQ(fixed.num_params(), 49);
}

TEST(Parametrization, HotStartShift)
{
  const ControlParametrization par;
  std::mt19937_64 rng(1);
  const Vector constant = Vector::Constant(par.num_params(), 0.7);
  EXPECT_EQ(hot_start_shift(constant, par, 3), constant);
  const Vector p = random_vector(rng, par.num_params(), 1.0);
  EXPECT_EQ(hot_start_shift(p, par, 0), p);
  const Vector collapsed = hot_start_shift(p, par, par.horizon);
  const auto ni = par.n_inputs();
  for (std::size_t i = 0; i < par.decision_instants.size(); ++i) {
    EXPECT_EQ(collapsed.segment(Eigen::Index(i) * ni, ni), p.tail(ni));
  }
  // integer shifts sample the translated profile
  const Matrix prof = expand_profile(p, par);
  const Vector s = hot_start_shift(p, par, 2);
  EXPECT_LT((s.segment(ni, ni) - prof.col(3)).norm(), 1e-14);
  EXPECT_THROW(hot_start_shift(p, par, -1.0), std::invalid_argument);
}

TEST(Parametrization, FirstControls)
{
  const ControlParametrization par;
  const Vector u0{{40.0, 40.0, 75.0}};
  const Matrix c = first_controls(Vector::Zero(par.num_params()), par, 4, u0);
  ASSERT_EQ(c.cols(), 4);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(c.col(j), u0);
  EXPECT_THROW(first_controls(Vector::Zero(par.num_params()), par, par.horizon + 1, u0), std::invalid_argument);
}

TEST(Predict, GeometricSeries)
{
  LtiModel m;
  m.a = Matrix::Constant(1, 1, 0.5);
  m.b = Matrix::Ones(1, 1);
  m.f = Matrix::Zero(1, 1);
  m.c = Matrix::Ones(1, 1);
  m.d = Matrix::Zero(1, 1);
  m.g = Matrix::Zero(1, 1);
  EXPECT_DOUBLE_EQ(predict(m, Vector::Zero(1), Matrix::Ones(1, 3), Matrix::Zero(1, 3), 3)[0], 1.75);
  EXPECT_EQ(predict(m, Vector::Zero(1), Matrix::Zero(1, 3), Matrix::Zero(1, 3), 2)[0], 0.0);
}

TEST(MpcBuilder, BenchmarkDimensions)
{
  const auto b = benchmark_builder();
  EXPECT_EQ(b.parametrization().num_params(), 49);
  EXPECT_EQ(b.num_output_rows(), 56);
  EXPECT_EQ(b.num_rate_rows(), 38);
  const auto qp = b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100)).qp;
  EXPECT_EQ(qp.num_vars(), 49);
  EXPECT_EQ(qp.num_ineq(), 56 + 38);
}

TEST(MpcBuilder, EquilibriumIsOptimal)
{
  const auto b = benchmark_builder();
  const auto c = b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100));
  EXPECT_EQ(c.qp.affine().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(c.constant, 0.0);
  const Vector p0 = Vector::Zero(49);
  EXPECT_LE(max_violation(c.qp, p0), 0.0);
  const auto r = solve_active_set(c.qp, std::nullopt, p0, 100);
  EXPECT_EQ(r.status, ActiveSetStatus::optimal);
  EXPECT_LT(r.iterate.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MpcBuilder, CondenseIsAffine)
{
  const auto b = benchmark_builder();
  std::mt19937_64 rng(2);
  const Vector u0 = Vector::Zero(3);
  const Matrix w0 = Matrix::Zero(1, 100);
  const auto base = b.condense(Vector::Zero(12), u0, w0).qp;
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x1 = random_vector(rng, 12, 1.0), x2 = random_vector(rng, 12, 1.0);
    const Vector ua = random_vector(rng, 3, 1.0), ub = random_vector(rng, 3, 1.0);
    const Matrix wa = random_forecast(rng, 100, 10.0), wb = random_forecast(rng, 100, 10.0);
    const auto a = b.condense(x1, ua, wa).qp, c = b.condense(x2, ub, wb).qp;
    const auto sum = b.condense(x1 + x2, ua + ub, wa + wb).qp;
    const Vector fa = a.affine() + c.affine() - base.affine();
    const Vector ga = a.ineq_bound() + c.ineq_bound() - base.ineq_bound();
    EXPECT_LT((fa - sum.affine()).cwiseAbs().maxCoeff(), 1e-9 * (1 + sum.affine().cwiseAbs().maxCoeff()));
    EXPECT_LT((ga - sum.ineq_bound()).cwiseAbs().maxCoeff(), 1e-9 * (1 + sum.ineq_bound().cwiseAbs().maxCoeff()));
  }
}

TEST(MpcBuilder, SoftRowsEqualPredictedViolations)
{
  const auto cfg = BenchmarkPlant{}.controller();
  const auto b = benchmark_builder();
  const auto & par = b.parametrization();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = random_vector(rng, 12, 2.0);
    const Matrix w = random_forecast(rng, 100, 20.0);
    Vector p = random_vector(rng, 49, 3.0);
    for (std::size_t i = 0; i < par.decision_instants.size(); ++i) {
      p.segment(Eigen::Index(i) * par.n_inputs() + par.n_physical, par.n_virtual).setZero();
    }
    const auto qp = b.condense(x, Vector::Zero(3), w).qp;
    const Vector resid = qp.ineq_matrix() * p - qp.ineq_bound();
    const Matrix prof = expand_profile(p, par).topRows(par.n_physical);
    const auto & idx = cfg.bounds.constrained_output_indices;
    const auto m = Eigen::Index(idx.size());
    for (std::size_t ci = 0; ci < par.check_instants.size(); ++ci) {
      const int j = par.check_instants[ci];
      const Vector xj = predict(cfg.model, x, prof, w, j);
      const Vector y = cfg.model.output(xj, prof.col(j - 1), w.col(j - 1)) + cfg.op.y0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index up = Eigen::Index(ci) * 2 * m + k;
        EXPECT_NEAR(resid[up], y[idx[k]] - cfg.bounds.yc_max[k], 1e-9 * (1 + std::abs(y[idx[k]])));
        EXPECT_NEAR(resid[up + m], cfg.bounds.yc_min[k] - y[idx[k]], 1e-9 * (1 + std::abs(y[idx[k]])));
        EXPECT_NEAR(std::max(resid[up], 0.0), std::max(y[idx[k]] - cfg.bounds.yc_max[k], 0.0), 1e-9 * (1 + std::abs(y[idx[k]])));
      }
    }
  }
}

TEST(MpcBuilder, ObjectiveSplitMatchesQp)
{
  const auto b = benchmark_builder();
  std::mt19937_64 rng(6);
  const Vector x = random_vector(rng, 12, 2.0);
  const Matrix w = random_forecast(rng, 100, 20.0);
  const Vector p = random_vector(rng, 49, 1.0);
  const auto c = b.condense(x, Vector::Zero(3), w);
  const auto split = b.objective_split(p, x, w);
  const double j0 = quadratic_cost(c.qp, p) + c.constant;
  EXPECT_NEAR(split.deviation + split.violation, j0, 1e-9 * (1 + std::abs(j0)));
  EXPECT_GE(split.violation, 0.0);
}

TEST(MpcBuilder, HessianIsCachedBitForBit)
{
  const auto b = benchmark_builder();
  const auto again = benchmark_builder();
  std::mt19937_64 rng(8);
  const auto c1 = b.condense(random_vector(rng, 12, 1.0), Vector::Zero(3), Matrix::Zero(1, 100)).qp;
  const auto c2 = b.condense(random_vector(rng, 12, 1.0), Vector::Ones(3), Matrix::Ones(1, 100)).qp;
  EXPECT_TRUE(c1.hessian() == b.hessian());
  EXPECT_TRUE(c2.hessian() == b.hessian());
  EXPECT_TRUE(again.hessian() == b.hessian());
  EXPECT_TRUE(c1.ineq_matrix() == c2.ineq_matrix());
}

TEST(MpcBuilder, LooseBoundsGiveTheUnconstrainedOptimum)
{
  auto bounds = BenchmarkPlant::bounds();
  bounds.u_min.setConstant(-1e9);
  bounds.u_max.setConstant(1e9);
  bounds.du_min.setConstant(-1e9);
  bounds.du_max.setConstant(1e9);
  bounds.yc_min.setConstant(-1e9);
  bounds.yc_max.setConstant(1e9);
  const auto b = benchmark_builder(bounds);
  std::mt19937_64 rng(10);
  const auto c = b.condense(random_vector(rng, 12, 0.5), Vector::Zero(3), Matrix::Zero(1, 100));
  const Vector ref = -0.5 * c.qp.hessian().ldlt().solve(c.qp.affine());
  const auto r = solve_active_set(c.qp, std::nullopt, Vector::Zero(49), 100);
  ASSERT_EQ(r.status, ActiveSetStatus::optimal);
  EXPECT_LT((r.iterate - ref).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MpcBuilder, FirstRateScale)
{
  const auto b = benchmark_builder();
  const auto full = b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100), 1.0).qp;
  const auto half = b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100), 0.5).qp;
  const auto base = b.num_output_rows();
  // first move of input 0, upper side
  EXPECT_DOUBLE_EQ(half.ineq_bound()[base], 0.5 * full.ineq_bound()[base]);
  EXPECT_THROW(b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100), 0.0), std::invalid_argument);
  EXPECT_THROW(b.condense(Vector::Zero(12), Vector::Zero(3), Matrix::Zero(1, 100), 1.5), std::invalid_argument);
}

TEST(MpcBounds, InvertedPairsAreSorted)
{
  MpcBounds b;
  b.yc_min = Vector{{59.0, 16.0}};
  b.yc_max = Vector{{61.0, 9.0}};
  EXPECT_EQ(b.sort_output_bounds(), 1);
  EXPECT_EQ(b.yc_min, (Vector{{59.0, 9.0}}));
  EXPECT_EQ(b.yc_max, (Vector{{61.0, 16.0}}));
}

TEST(MpcBuilder, RejectsMismatchedWeights)
{
  const auto cfg = BenchmarkPlant{}.controller();
  auto w = cfg.weights;
  w.r_input = Matrix::Identity(2, 2);
  EXPECT_THROW(MpcProblemBuilder(cfg.model, cfg.op, cfg.par, w, cfg.bounds), std::invalid_argument);
  w = cfg.weights;
  w.q_state(0, 0) = -1.0;
  EXPECT_THROW(MpcProblemBuilder(cfg.model, cfg.op, cfg.par, w, cfg.bounds), std::invalid_argument);
}
