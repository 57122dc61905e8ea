#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fastmpc;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }
Vector v1(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST(OdeInit, StepSizeAndProjection)
{
  const OdeSolverConfig cfg;
  const auto free = QpProblem::unconstrained(m1(1), v1(0));
  EXPECT_DOUBLE_EQ(init_state(free, cfg, v1(1)).step_size, std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(init_state(free, cfg, v1(0)).step_size, 1.0);
  const auto boxed = QpProblem::box(m1(1), v1(0), v1(0), v1(1));
  EXPECT_DOUBLE_EQ(init_state(boxed, cfg, v1(5)).iterate[0], 1.0);
}

TEST(OdeIterate, StationaryPointStays)
{
  const OdeSolverConfig cfg;
  const auto free = QpProblem::unconstrained(m1(1), v1(-2));
  auto s = run(free, cfg, v1(1), 3);
  EXPECT_EQ(s.iterate[0], 1.0);
  ASSERT_EQ(s.cost_trace.size(), 4u);
  for (double c : s.cost_trace) EXPECT_EQ(c, s.cost_trace.front());
  EXPECT_EQ(s.iterations_done, 3);
}

TEST(OdeRun, PenalizedOneDimensionalOptimum)
{
  // min (z-2)^2 s.t. z <= 1 with alpha = 100: stationary point (2 + alpha) / (1 + alpha)
  OdeSolverConfig cfg;
  cfg.penalty = {100.0, 2.0};
  const QpProblem p(m1(1), v1(-4), m1(1), v1(1), v1(-kInf), v1(kInf));
  const auto s = run(p, cfg, v1(0), 200);
  EXPECT_NEAR(s.iterate[0], 102.0 / 101.0, 1e-6);
}

TEST(OdeRun, MonotoneAndBoxFeasibleOnRandomProblems)
{
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> nz(2, 60), ncon(0, 120);
  OdeSolverConfig cfg;
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = testutil::random_qp(rng, {nz(rng), ncon(rng), 2.0, trial % 4 != 0});
    const auto s = run(p, cfg, Vector::Zero(p.num_vars()), 50);
    ASSERT_EQ(s.cost_trace.size(), 51u);
    for (std::size_t k = 1; k < s.cost_trace.size(); ++k) violations += s.cost_trace[k] > s.cost_trace[k - 1];
    EXPECT_TRUE((s.iterate.array() >= p.lower().array()).all() && (s.iterate.array() <= p.upper().array()).all());
  }
  EXPECT_EQ(violations, 0);
}

TEST(OdeRun, AnyTimeDeterminism)
{
  std::mt19937_64 rng(5);
  const auto p = testutil::random_qp(rng, {8, 10});
  const OdeSolverConfig cfg;
  const auto a = run(p, cfg, Vector::Zero(8), 12);
  const auto b = run_from(p, cfg, run(p, cfg, Vector::Zero(8), 5), 7);
  EXPECT_EQ(a.iterate, b.iterate);
  EXPECT_EQ(a.cost_trace, b.cost_trace);
  EXPECT_EQ(a.step_size, b.step_size);
}

TEST(OdeRun, ConvergesOnBoxConstrainedProblems)
{
  std::mt19937_64 rng(23);
  const OdeSolverConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = testutil::random_qp(rng, {6, 0, 1.0, true});
    // projected-gradient reference
    const double lmax = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(q.hessian()).eigenvalues().maxCoeff();
    Vector z = Vector::Zero(6);
    for (int k = 0; k < 200000; ++k) z = q.project(z - (2.0 * q.hessian() * z + q.affine()) / lmax);
    const double ref = augmented_cost(q, cfg.penalty, z, cfg.floor);
    const auto s = run(q, cfg, Vector::Zero(6), 500);
    EXPECT_NEAR(s.cost_trace.back(), ref, 1e-6 * std::abs(ref)) << "trial " << trial;
  }
}

TEST(OdeRun, RejectsBadArguments)
{
  const auto free = QpProblem::unconstrained(m1(1), v1(0));
  EXPECT_THROW(run(free, OdeSolverConfig{}, v1(0), 0), std::invalid_argument);
  OdeSolverConfig bad;
  bad.penalty.exponent = 1.5;
  EXPECT_THROW(init_state(free, bad, v1(0)), std::invalid_argument);
  EXPECT_THROW(iterate_once(free, OdeSolverConfig{}, OdeSolverState{}), std::invalid_argument);
}
