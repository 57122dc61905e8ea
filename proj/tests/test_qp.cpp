#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fastmpc;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }
Vector v1(double v) { return Vector::Constant(1, v); }

QpProblem upper_one()
{
  return QpProblem(m1(1), v1(0), m1(1), v1(1), v1(-kInf), v1(kInf));
}

double central_difference(const QpProblem & p, const PenaltyConfig & c, Vector z, Eigen::Index i, double h)
{
  z[i] += h;
  const double up = augmented_cost(p, c, z, 0);
  z[i] -= 2 * h;
  return (up - augmented_cost(p, c, z, 0)) / (2 * h);
}

}  // namespace

TEST(QuadraticCost, HandValues)
{
  EXPECT_DOUBLE_EQ(quadratic_cost(QpProblem::unconstrained(m1(1), v1(0)), v1(2)), 4.0);
  const Matrix h2 = 2 * Matrix::Identity(2, 2);
  EXPECT_DOUBLE_EQ(quadratic_cost(QpProblem::unconstrained(h2, Vector::Ones(2)), Vector::Zero(2)), 0.0);
  Matrix h3 = Matrix::Zero(2, 2);
  h3(0, 0) = 1;
  h3(1, 1) = 3;
  EXPECT_DOUBLE_EQ(quadratic_cost(QpProblem::unconstrained(h3, Vector{{-2.0, 0.0}}), Vector::Ones(2)), 2.0);
}

TEST(QpProblem, RejectsBadInput)
{
  EXPECT_THROW(QpProblem::unconstrained(-m1(1), v1(0)), std::invalid_argument);
  Matrix asym{{1.0, 2.0}, {0.0, 1.0}};
  EXPECT_THROW(QpProblem::unconstrained(asym, Vector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(QpProblem::box(m1(1), v1(0), v1(1), v1(0)), std::invalid_argument);
  EXPECT_THROW(quadratic_cost(upper_one(), Vector::Zero(2)), std::invalid_argument);
}

TEST(AugmentedCost, PenaltyExample)
{
  PenaltyConfig c{100.0, 2.0};
  EXPECT_DOUBLE_EQ(augmented_cost(upper_one(), c, v1(2), 0.0), 104.0);
  EXPECT_DOUBLE_EQ(augmented_gradient(upper_one(), c, v1(2))[0], 204.0);
  EXPECT_NEAR(central_difference(upper_one(), c, v1(2), 0, 1e-6), 204.0, 204.0 * 1e-5);
}

TEST(AugmentedCost, InteriorAndBoundary)
{
  PenaltyConfig c{100.0, 2.0};
  EXPECT_DOUBLE_EQ(augmented_cost(upper_one(), c, v1(0.5), 3.0), 0.25 + 3.0);
  EXPECT_DOUBLE_EQ(augmented_gradient(upper_one(), c, v1(0.5))[0], 1.0);
  // at the boundary the penalty adds nothing
  EXPECT_DOUBLE_EQ(augmented_gradient(upper_one(), c, v1(1.0))[0], 2.0);
  const auto free = QpProblem::unconstrained(m1(2), v1(1));
  EXPECT_DOUBLE_EQ(augmented_cost(free, c, v1(-3), 1.0), quadratic_cost(free, v1(-3)) + 1.0);
  EXPECT_THROW(augmented_cost(free, c, v1(0), -1.0), std::invalid_argument);
}

TEST(AugmentedCost, RandomProperties)
{
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = testutil::random_qp(rng, {int(2 + trial % 7), int(trial % 9), 1.0, trial % 2 == 0});
    const PenaltyConfig c{10.0 + trial, trial % 3 == 0 ? 3.0 : 2.0};
    Vector z(p.num_vars()), w(p.num_vars());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = 2 * g(rng);
      w[i] = 2 * g(rng);
    }
    const double ja = augmented_cost(p, c, z, 1.0);
    EXPECT_GE(ja, quadratic_cost(p, z) + 1.0);
    // midpoint convexity
    EXPECT_LE(augmented_cost(p, c, 0.5 * (z + w), 1.0),
              0.5 * (ja + augmented_cost(p, c, w, 1.0)) + 1e-9 * (1 + std::abs(ja)));
    const Vector grad = augmented_gradient(p, c, z);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double fd = central_difference(p, c, z, i, 1e-6);
      EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "trial " << trial << " coord " << i;
    }
    if (max_violation(p, z) <= 0) EXPECT_NEAR(ja - 1.0, quadratic_cost(p, z), 1e-12 * (1 + std::abs(ja)));
  }
}

TEST(KktReport, HandCases)
{
  // min z^2 s.t. z >= 1
  const auto p = QpProblem::box(m1(1), v1(0), v1(1), v1(kInf));
  Vector lam = Vector::Zero(2);
  lam[1] = 2.0;
  const auto rep = kkt_report(p, v1(1), lam);
  EXPECT_EQ(rep.stationarity_residual, 0.0);
  EXPECT_EQ(rep.max_primal_violation, 0.0);
  EXPECT_EQ(rep.complementarity_residual, 0.0);

  const Matrix h{{2.0, 0.5}, {0.5, 1.0}};
  const Vector f{{1.0, -3.0}};
  const auto free = QpProblem::unconstrained(h, f);
  const Vector zs = -0.5 * h.ldlt().solve(f);
  EXPECT_LT(kkt_report(free, zs, Vector::Zero(4)).stationarity_residual, 1e-12);

  EXPECT_DOUBLE_EQ(kkt_report(QpProblem::unconstrained(m1(1), v1(2)), v1(0), Vector::Zero(2)).stationarity_residual,
                   2.0);
  Vector neg = Vector::Zero(2);
  neg[0] = -1;
  EXPECT_THROW(kkt_report(p, v1(1), neg), std::invalid_argument);
}
