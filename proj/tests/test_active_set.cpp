#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fastmpc;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }
Vector v1(double v) { return Vector::Constant(1, v); }

/// min (z1-3)^2 + (z2-6)^2 s.t. z1 <= 1, z2 <= 1: from the origin it takes two additions and a check.
QpProblem two_blockers()
{
  const Matrix g = Matrix::Identity(2, 2);
  return QpProblem(Matrix::Identity(2, 2), Vector{{-6.0, -12.0}}, g, Vector::Ones(2), Vector::Constant(2, -kInf),
                   Vector::Constant(2, kInf));
}

}  // namespace

TEST(ActiveSet, LowerBoundOneDimensional)
{
  const auto p = QpProblem::box(m1(1), v1(0), v1(1), v1(kInf));
  const auto r = solve_active_set(p, std::nullopt, v1(0), 10);
  EXPECT_EQ(r.status, ActiveSetStatus::optimal);
  EXPECT_DOUBLE_EQ(r.iterate[0], 1.0);
}

TEST(ActiveSet, UnconstrainedInOneIteration)
{
  const Matrix h{{2.0, 0.5}, {0.5, 1.0}};
  const Vector f{{1.0, -3.0}};
  const auto r = solve_active_set(QpProblem::unconstrained(h, f), std::nullopt, Vector::Zero(2), 5);
  EXPECT_EQ(r.status, ActiveSetStatus::optimal);
  EXPECT_EQ(r.iterations_used, 1);
  EXPECT_LT((r.iterate + 0.5 * h.ldlt().solve(f)).norm(), 1e-12);
}

TEST(ActiveSet, CapStopsAtThePartialIterate)
{
  ActiveSetOptions opt;
  opt.record_path = true;
  const auto full = solve_active_set(two_blockers(), std::nullopt, Vector::Zero(2), 10, opt);
  ASSERT_EQ(full.status, ActiveSetStatus::optimal);
  EXPECT_EQ(full.iterations_used, 3);
  EXPECT_LT((full.iterate - Vector::Ones(2)).norm(), 1e-12);

  const auto capped = solve_active_set(two_blockers(), std::nullopt, Vector::Zero(2), 1, opt);
  EXPECT_EQ(capped.status, ActiveSetStatus::iteration_capped);
  EXPECT_EQ(capped.iterations_used, 1);
  EXPECT_GT((capped.iterate - full.iterate).norm(), 0.1);
  EXPECT_EQ(capped.iterate, full.path[1]);
}

TEST(ActiveSet, MatchesEnumerationOracle)
{
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> nz(1, 4), ncon(0, 6);
  int optimal = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = testutil::random_qp(rng, {nz(rng), ncon(rng), 2.0, true});
    const auto ref = testutil::brute_force_qp(p);
    ASSERT_TRUE(ref) << "trial " << trial;
    const auto r = solve_active_set(p, std::nullopt, Vector::Zero(p.num_vars()), 1000);
    ASSERT_EQ(r.status, ActiveSetStatus::optimal) << "trial " << trial;
    ++optimal;
    EXPECT_LT((r.iterate - *ref).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    const auto kkt = kkt_report(p, r.iterate, r.multipliers);
    EXPECT_LE(kkt.stationarity_residual, 1e-8) << "trial " << trial;
    EXPECT_LE(kkt.max_primal_violation, 1e-8) << "trial " << trial;
    EXPECT_LE(kkt.complementarity_residual, 1e-8) << "trial " << trial;
  }
  EXPECT_EQ(optimal, 200);
}

TEST(ActiveSet, InfeasibleStartIsRecovered)
{
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testutil::random_qp(rng, {4, 6});
    const auto r = solve_active_set(p, std::nullopt, Vector::Constant(4, 1.9), 1000);
    ASSERT_EQ(r.status, ActiveSetStatus::optimal);
    EXPECT_LT((r.iterate - *testutil::brute_force_qp(p)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(ActiveSet, WarmStartFromOptimalSet)
{
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testutil::random_qp(rng, {6, 10});
    const auto cold = solve_active_set(p, std::nullopt, Vector::Zero(6), 1000);
    ASSERT_EQ(cold.status, ActiveSetStatus::optimal);
    const auto warm = solve_active_set(p, cold.working_set, cold.iterate, 1000);
    EXPECT_EQ(warm.status, ActiveSetStatus::optimal);
    EXPECT_LE(warm.iterations_used, 1);
    EXPECT_LT((warm.iterate - cold.iterate).norm(), 1e-9);
  }
}

TEST(ActiveSet, CapEnforcementAndPrefixAgreement)
{
  std::mt19937_64 rng(13);
  ActiveSetOptions opt;
  opt.record_path = true;
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testutil::random_qp(rng, {10, 20});
    const Vector z0 = Vector::Zero(10);
    const auto full = solve_active_set(p, std::nullopt, z0, 1000, opt);
    for (int cap = 1; cap <= 6; ++cap) {
      const auto r = solve_active_set(p, std::nullopt, z0, cap, opt);
      EXPECT_LE(r.iterations_used, cap);
      const auto common = std::min(r.path.size(), full.path.size());
      for (std::size_t k = 0; k < common; ++k) EXPECT_EQ(r.path[k], full.path[k]);
    }
  }
}

TEST(ActiveSet, Deterministic)
{
  std::mt19937_64 rng(21);
  const auto p = testutil::random_qp(rng, {12, 30});
  const auto a = solve_active_set(p, std::nullopt, Vector::Zero(12), 7);
  const auto b = solve_active_set(p, std::nullopt, Vector::Zero(12), 7);
  EXPECT_EQ(a.iterate, b.iterate);
  EXPECT_EQ(a.working_set, b.working_set);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(ActiveSet, DuplicatedRowsDoNotStall)
{
  // the same half-plane three times plus a nearly parallel copy
  Matrix g(4, 2);
  g << 1, 1, 1, 1, 2, 2, 1, 1 + 1e-10;
  const Vector b{{1.0, 1.0, 2.0, 1.0}};
  const QpProblem p(Matrix::Identity(2, 2), Vector{{-4.0, -4.0}}, g, b, Vector::Constant(2, -10),
                    Vector::Constant(2, 10));
  const auto r = solve_active_set(p, std::nullopt, Vector::Zero(2), 50);
  ASSERT_EQ(r.status, ActiveSetStatus::optimal);
  EXPECT_NEAR(r.iterate[0], 0.5, 1e-8);
  EXPECT_NEAR(r.iterate[1], 0.5, 1e-8);
}

TEST(ActiveSet, RejectsBadArguments)
{
  const auto p = QpProblem::unconstrained(m1(1), v1(0));
  EXPECT_THROW(solve_active_set(p, std::nullopt, v1(0), 0), std::invalid_argument);
  EXPECT_THROW(solve_active_set(p, std::nullopt, Vector::Zero(2), 1), std::invalid_argument);
}
